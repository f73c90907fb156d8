use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::table::SeriesTable;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

/// Merges every `factor` consecutive steps. A trailing remainder shorter
/// than `factor` is dropped with a warning.
pub fn downsample(table: &SeriesTable, factor: usize, how: Aggregation) -> Result<SeriesTable> {
    if factor < 1 {
        return Err(Error::Config(format!("downsample factor must be >= 1, got {factor}")));
    }
    let n = table.n_channels();
    let groups = table.len() / factor;
    let rest = table.len() - groups * factor;
    if rest > 0 {
        warn!("downsample: dropping {rest} trailing steps not divisible by {factor}");
    }
    let mut data = Vec::with_capacity(groups * n);
    for g in 0..groups {
        for c in 0..n {
            let s: f64 = (0..factor).map(|k| table.value(g * factor + k, c)).sum();
            data.push(match how {
                Aggregation::Mean => s / factor as f64,
                Aggregation::Sum => s,
            });
        }
    }
    SeriesTable::new(
        (0..groups).map(|g| table.timestamps()[g * factor]).collect(),
        table.channels().to_vec(),
        Tensor::new(vec![groups, n], data)?,
        table.interval() * factor as i64,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Train,
    Val,
    Test,
}

impl PartitionKind {
    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Train => "train",
            PartitionKind::Val => "val",
            PartitionKind::Test => "test",
        }
    }
}

/// A contiguous time range of a source table.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub kind: PartitionKind,
    /// First step in source-table coordinates.
    pub start: usize,
    pub table: SeriesTable,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Step counts of a 6:2:2 split of `t` steps.
pub fn split_lengths(t: usize) -> Result<(usize, usize, usize)> {
    if t < 10 {
        return Err(Error::Data(format!("need at least 10 steps to split, got {t}")));
    }
    let a = t * 6 / 10;
    let b = t * 8 / 10;
    Ok((a, b - a, t - b))
}

/// Chronological 6:2:2 split on the raw timeline.
pub fn split_622(table: &SeriesTable) -> Result<[Partition; 3]> {
    let (a, b, _) = split_lengths(table.len())?;
    let bounds = [(0, a), (a, a + b), (a + b, table.len())];
    let kinds = [PartitionKind::Train, PartitionKind::Val, PartitionKind::Test];
    let mut out = Vec::with_capacity(3);
    for (kind, (s, e)) in kinds.into_iter().zip(bounds) {
        out.push(Partition {
            kind,
            start: s,
            table: table.slice(s, e)?,
        });
    }
    Ok(out.try_into().expect("three partitions"))
}

/// Sliding `(x, y)` windows of one partition, materialised on demand.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub kind: PartitionKind,
    pub t_in: usize,
    pub t_out: usize,
    /// Window start offsets in source-table coordinates.
    origins: Vec<usize>,
    partition_start: usize,
    /// Channel-major copy of the partition, `series[c][t]`.
    series: Arc<Vec<Vec<f64>>>,
}

/// One materialised window; `x` is `[n, t_in]` and `y` is `[n, t_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub origin: usize,
    pub x: Tensor,
    pub y: Tensor,
}

/// Number of windows that fit in `len` steps.
pub fn window_count(len: usize, t_in: usize, t_out: usize, stride: usize) -> usize {
    if len < t_in + t_out || stride == 0 {
        0
    } else {
        (len - t_in - t_out) / stride + 1
    }
}

pub fn make_windows(partition: &Partition, t_in: usize, t_out: usize, stride: usize) -> Result<WindowedDataset> {
    if stride == 0 || t_in == 0 || t_out == 0 {
        return Err(Error::Config(format!(
            "t_in, t_out and stride must be >= 1 (got {t_in}, {t_out}, {stride})"
        )));
    }
    let count = window_count(partition.len(), t_in, t_out, stride);
    if count == 0 {
        warn!(
            "{} partition has {} steps, fewer than t_in + t_out = {}; no windows",
            partition.kind.name(),
            partition.len(),
            t_in + t_out
        );
    }
    let series = (0..partition.table.n_channels()).map(|c| partition.table.column(c)).collect();
    Ok(WindowedDataset {
        kind: partition.kind,
        t_in,
        t_out,
        origins: (0..count).map(|i| partition.start + i * stride).collect(),
        partition_start: partition.start,
        series: Arc::new(series),
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.series.len()
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    fn fill(&self, i: usize, offset: usize, len: usize, out: &mut Vec<f64>) {
        let local = self.origins[i] - self.partition_start + offset;
        for col in self.series.iter() {
            out.extend_from_slice(&col[local..local + len]);
        }
    }

    pub fn window(&self, i: usize) -> Window {
        let n = self.n_channels();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        self.fill(i, 0, self.t_in, &mut x);
        self.fill(i, self.t_in, self.t_out, &mut y);
        Window {
            origin: self.origins[i],
            x: Tensor::new(vec![n, self.t_in], x).expect("window shape"),
            y: Tensor::new(vec![n, self.t_out], y).expect("window shape"),
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        (0..self.len()).map(|i| self.window(i))
    }

    /// Stacks the selected windows channel-by-channel into
    /// `x[B * n, t_in]` and `y[B * n, t_out]`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let rows = indices.len() * self.n_channels();
        let mut x = Vec::with_capacity(rows * self.t_in);
        let mut y = Vec::with_capacity(rows * self.t_out);
        for &i in indices {
            self.fill(i, 0, self.t_in, &mut x);
            self.fill(i, self.t_in, self.t_out, &mut y);
        }
        (
            Tensor::new(vec![rows, self.t_in], x).expect("batch shape"),
            Tensor::new(vec![rows, self.t_out], y).expect("batch shape"),
        )
    }
}
