use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Time-major multichannel series on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    timestamps: Vec<i64>,
    channels: Vec<String>,
    /// `[T, n]`
    values: Tensor,
    /// Seconds between consecutive steps.
    interval: i64,
}

impl SeriesTable {
    pub fn new(timestamps: Vec<i64>, channels: Vec<String>, values: Tensor, interval: i64) -> Result<Self> {
        let (t, n) = match values.shape() {
            [t, n] => (*t, *n),
            s => return Err(Error::shape("SeriesTable", format!("values must be [T, n], got {s:?}"))),
        };
        if timestamps.len() != t || channels.len() != n {
            return Err(Error::shape(
                "SeriesTable",
                format!(
                    "{} timestamps and {} channels for values {:?}",
                    timestamps.len(),
                    channels.len(),
                    values.shape()
                ),
            ));
        }
        if interval <= 0 {
            return Err(Error::Data(format!("interval must be positive, got {interval}")));
        }
        for (i, pair) in timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != interval {
                return Err(Error::Data(format!(
                    "timestamp at step {} breaks the {interval}s grid",
                    i + 1
                )));
            }
        }
        if !values.is_finite() {
            return Err(Error::Data("table contains NaN or infinite values".into()));
        }
        Ok(SeriesTable {
            timestamps,
            channels,
            values,
            interval,
        })
    }

    /// A table on the grid `start, start + interval, ...` with generated
    /// channel names `ch0, ch1, ...`.
    pub fn from_columns(columns: &[Vec<f64>], start: i64, interval: i64) -> Result<Self> {
        let n = columns.len();
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::shape("SeriesTable", "columns of unequal length"));
        }
        let mut data = vec![0.0; t * n];
        for (c, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n + c] = v;
            }
        }
        SeriesTable::new(
            (0..t as i64).map(|i| start + i * interval).collect(),
            (0..n).map(|c| format!("ch{c}")).collect(),
            Tensor::new(vec![t, n], data)?,
            interval,
        )
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn interval(&self) -> i64 {
        self.interval
    }

    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values.at2(t, c)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.value(t, c)).collect()
    }

    /// Steps `[start, end)` as a new table.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Ok(SeriesTable {
            timestamps: self.timestamps[start..end].to_vec(),
            channels: self.channels.clone(),
            values: self.values.slice_axis(0, start, end)?,
            interval: self.interval,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_grid() {
        let v = Tensor::zeros(&[3, 1]);
        assert!(SeriesTable::new(vec![0, 10, 20], vec!["a".into()], v.clone(), 10).is_ok());
        assert!(matches!(
            SeriesTable::new(vec![0, 10, 25], vec!["a".into()], v.clone(), 10),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            SeriesTable::new(vec![0, 10], vec!["a".into()], v, 10),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn columns_are_time_major() {
        let t = SeriesTable::from_columns(&[vec![1.0, 2.0], vec![3.0, 4.0]], 100, 5).unwrap();
        assert_eq!(t.values().data(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(t.timestamps(), &[100, 105]);
        assert_eq!(t.column(1), vec![3.0, 4.0]);
        assert_eq!(t.slice(1, 2).unwrap().column(0), vec![2.0]);
    }
}
