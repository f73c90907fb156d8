//! Series tables, CSV ingestion, resampling, chronological splits, windows
//! and synthetic generators.

mod csv_io;
mod split;
mod synthetic;
mod table;

pub use csv_io::{export_csv, format_timestamp, ingest_csv, parse_timestamp, read_csv, write_csv, FillReport};
pub use split::{
    downsample, make_windows, split_622, split_lengths, window_count, Aggregation, Partition, PartitionKind,
    Window, WindowedDataset,
};
pub use synthetic::{gen_synthetic, random_profile, trend_value, SyntheticSpec, TrendKind};
pub use table::SeriesTable;
