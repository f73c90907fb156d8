use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::data::table::SeriesTable;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Gap-filling tallies from [`ingest_csv`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FillReport {
    /// Cells filled from the previous value, per channel.
    pub forward_filled: Vec<usize>,
    /// Leading cells with no previous value, set to zero, per channel.
    pub zero_filled: Vec<usize>,
}

impl FillReport {
    pub fn total(&self) -> usize {
        self.forward_filled.iter().sum::<usize>() + self.zero_filled.iter().sum::<usize>()
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
];

/// Epoch seconds from an integer or an ISO-8601 string (naive times are UTC).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for f in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null")
}

/// Parses a CSV with a header row: first column timestamps, then one column
/// per channel. Missing cells are forward-filled, leading gaps zero-filled.
pub fn read_csv<R: Read>(reader: R) -> Result<(SeriesTable, FillReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Data("header must name a timestamp column and at least one channel".into()));
    }
    let channels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let n = channels.len();
    let mut report = FillReport {
        forward_filled: vec![0; n],
        zero_filled: vec![0; n],
    };
    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    let mut last: Vec<Option<f64>> = vec![None; n];
    for (i, record) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let record = record?;
        if record.len() != n + 1 {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, found {}",
                n + 1,
                record.len()
            )));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| Error::Data(format!("row {row}: bad timestamp `{}`", &record[0])))?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Data(format!("row {row}: timestamp is not increasing")));
            }
        }
        timestamps.push(ts);
        for c in 0..n {
            let cell = &record[c + 1];
            let v = if is_missing(cell) {
                match last[c] {
                    Some(v) => {
                        report.forward_filled[c] += 1;
                        v
                    }
                    None => {
                        report.zero_filled[c] += 1;
                        0.0
                    }
                }
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Data(format!("row {row}: cannot parse `{cell}` in column `{}`", channels[c]))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("row {row}: non-finite value in `{}`", channels[c])));
                }
                last[c] = Some(v);
                v
            };
            data.push(v);
        }
    }
    let interval = match timestamps.as_slice() {
        [a, b, ..] => b - a,
        _ => 1,
    };
    for (i, pair) in timestamps.windows(2).enumerate() {
        if pair[1] - pair[0] != interval {
            return Err(Error::Data(format!(
                "row {}: step of {}s breaks the {interval}s interval",
                i + 3,
                pair[1] - pair[0]
            )));
        }
    }
    let t = timestamps.len();
    let table = SeriesTable::new(timestamps, channels, Tensor::new(vec![t, n], data)?, interval)?;
    Ok((table, report))
}

pub fn ingest_csv(path: &Path) -> Result<(SeriesTable, FillReport)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv<W: Write>(table: &SeriesTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(table.channels().iter().cloned());
    w.write_record(&header)?;
    for t in 0..table.len() {
        let mut rec = vec![format_timestamp(table.timestamps()[t])];
        rec.extend((0..table.n_channels()).map(|c| table.value(t, c).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(table: &SeriesTable, path: &Path) -> Result<()> {
    write_csv(table, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<(SeriesTable, FillReport)> {
        read_csv(s.as_bytes())
    }

    #[test]
    fn small_file() {
        let (t, r) = parse("ts,a,b\n2024-01-01T00:00:00,1,2\n2024-01-01T00:05:00,3,4\n2024-01-01T00:10:00,5,6\n").unwrap();
        assert_eq!(t.values().shape(), &[3, 2]);
        assert_eq!(t.interval(), 300);
        assert_eq!(t.channels(), &["a", "b"]);
        assert_eq!(r.total(), 0);
    }

    #[test]
    fn forward_fill_and_zero_fill() {
        let (t, r) = parse("ts,a,b\n0,1,\n60,,4\n120,5,6\n").unwrap();
        assert_eq!(t.column(0), vec![1.0, 1.0, 5.0]);
        assert_eq!(t.column(1), vec![0.0, 4.0, 6.0]);
        assert_eq!(r.forward_filled, vec![1, 0]);
        assert_eq!(r.zero_filled, vec![0, 1]);
    }

    #[test]
    fn errors_name_the_row() {
        let e = parse("ts,a\n0,1\n60,2\n30,3\n").unwrap_err().to_string();
        assert!(e.contains("row 4"), "{e}");
        let e = parse("ts,a,b\n0,1,2\n60,2\n").unwrap_err().to_string();
        assert!(e.contains("row 3"), "{e}");
        let e = parse("ts,a\n0,1\n60,x\n").unwrap_err().to_string();
        assert!(e.contains("row 3") && e.contains("`x`"), "{e}");
    }

    #[test]
    fn irregular_interval_rejected() {
        assert!(parse("ts,a\n0,1\n60,2\n200,3\n").is_err());
    }

    #[test]
    fn export_round_trip() {
        let table = SeriesTable::from_columns(&[vec![1.5, -2.25, 1e-7], vec![0.1, 0.2, 0.3]], 1_700_000_000, 900).unwrap();
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let (back, _) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("86400"), Some(86400));
        assert_eq!(parse_timestamp("1970-01-02"), Some(86400));
        assert_eq!(parse_timestamp("1970-01-01 00:01:00"), Some(60));
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00"), Some(0));
        assert_eq!(parse_timestamp("yesterday"), None);
    }
}
