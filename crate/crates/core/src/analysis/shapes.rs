use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SeriesTable;
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};

/// Windows with standard deviation below this are skipped by the scan.
pub const CONSTANT_WINDOW_STD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeMatch {
    pub offset: usize,
    pub channel: usize,
    /// z-normalised Euclidean distance.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub block: usize,
    pub shape: usize,
    /// One row of the block's value tensor, length `w`.
    pub vector: Vec<f64>,
    pub best_match: Option<ShapeMatch>,
}

/// Every learned shape of an UltraSTF model, block-major.
pub fn extract_shapes(model: &Model) -> Result<Vec<ShapeRecord>> {
    let config = model.config();
    if config.kind != ModelKind::UltraStf {
        return Err(Error::Unsupported(format!(
            "{} models have no shape bank",
            config.kind.name()
        )));
    }
    let mut out = Vec::with_capacity(config.blocks * config.shapes);
    for block in 0..config.blocks {
        let value = model.params().get(&format!("block{block}.bank.value"))?;
        for shape in 0..value.shape()[0] {
            out.push(ShapeRecord {
                block,
                shape,
                vector: value.row(shape).to_vec(),
                best_match: None,
            });
        }
    }
    Ok(out)
}

/// Mean-zero, unit (population) standard deviation copy, or `None` when the
/// input is constant.
pub fn z_normalize(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std < CONSTANT_WINDOW_STD {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / std).collect())
}

pub fn z_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let (za, zb) = (z_normalize(a)?, z_normalize(b)?);
    Some(za.iter().zip(&zb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
}

/// Offset and z-normalised distance of the closest length-`w` window of
/// `series` to `shape`. Ties go to the smallest offset.
pub fn nearest_match(shape: &[f64], series: &[f64]) -> Result<(usize, f64)> {
    let w = shape.len();
    if w == 0 || series.len() < w {
        return Err(Error::NoMatch(format!(
            "series of length {} is shorter than the shape ({w})",
            series.len()
        )));
    }
    let query = z_normalize(shape).ok_or_else(|| Error::NoMatch("query shape is constant".into()))?;
    let mut best: Option<(usize, f64)> = None;
    for offset in 0..=series.len() - w {
        let Some(win) = z_normalize(&series[offset..offset + w]) else {
            continue;
        };
        let d = query.iter().zip(&win).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((offset, d));
        }
    }
    best.ok_or_else(|| Error::NoMatch("every window is constant".into()))
}

/// Fills `best_match` of each record with its nearest window across all
/// channels of `table`. Ties go to the lower channel.
pub fn match_shapes(records: &mut [ShapeRecord], table: &SeriesTable) -> Result<()> {
    let columns: Vec<Vec<f64>> = (0..table.n_channels()).map(|c| table.column(c)).collect();
    records.par_iter_mut().try_for_each(|rec| -> Result<()> {
        let mut best: Option<ShapeMatch> = None;
        for (channel, col) in columns.iter().enumerate() {
            match nearest_match(&rec.vector, col) {
                Ok((offset, distance)) => {
                    if best.as_ref().is_none_or(|b| distance < b.distance) {
                        best = Some(ShapeMatch {
                            offset,
                            channel,
                            distance,
                        });
                    }
                }
                Err(Error::NoMatch(_)) => {}
                Err(e) => return Err(e),
            }
        }
        rec.best_match = best;
        Ok(())
    })
}

pub fn write_shapes_csv<W: Write>(records: &[ShapeRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = records.first().map_or(0, |r| r.vector.len());
    let mut header: Vec<String> = ["block", "shape", "match_channel", "match_offset", "match_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..width).map(|l| format!("v{l}")));
    w.write_record(&header)?;
    for r in records {
        let m = r.best_match.as_ref();
        let mut rec = vec![
            r.block.to_string(),
            r.shape.to_string(),
            m.map_or(String::new(), |m| m.channel.to_string()),
            m.map_or(String::new(), |m| m.offset.to_string()),
            m.map_or(String::new(), |m| m.distance.to_string()),
        ];
        rec.extend(r.vector.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_shapes(records: &[ShapeRecord], path: &Path) -> Result<()> {
    write_shapes_csv(records, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;

    #[test]
    fn record_counts() {
        let m = Model::init(ModelConfig::default(), 0).unwrap();
        let recs = extract_shapes(&m).unwrap();
        assert_eq!(recs.len(), 64);
        assert!(recs.iter().all(|r| r.vector.len() == 12));
        assert_eq!(recs[17].block, 1);
        assert_eq!(recs[17].shape, 1);
        let small = Model::init(ModelConfig::ultrastf(24, 12, 12, 3, 1), 0).unwrap();
        assert_eq!(extract_shapes(&small).unwrap().len(), 3);
        let sparse = Model::init(ModelConfig::sparsetsf(24, 12, 12), 0).unwrap();
        assert!(matches!(extract_shapes(&sparse), Err(Error::Unsupported(_))));
    }

    #[test]
    fn planted_affine_copy_found() {
        let shape = [0.0, 1.0, 3.0, 2.0];
        let mut series = vec![5.0, 4.0, 4.5, 7.0, 1.0, 1.0];
        series.extend(shape.iter().map(|v| 2.5 * v - 1.0));
        series.extend([0.0, 9.0, 3.0]);
        let (offset, d) = nearest_match(&shape, &series).unwrap();
        assert_eq!(offset, 6);
        assert!(d < 1e-9);
    }

    #[test]
    fn series_equal_to_shape() {
        let s = [1.0, -2.0, 0.5];
        assert_eq!(nearest_match(&s, &s).unwrap().0, 0);
    }

    #[test]
    fn constant_windows_skipped_and_errors() {
        let series = [2.0, 2.0, 2.0, 2.0, 0.0, 1.0];
        assert_eq!(nearest_match(&[0.0, 1.0], &series).unwrap().0, 4);
        assert!(matches!(nearest_match(&[0.0, 1.0], &[3.0; 5]), Err(Error::NoMatch(_))));
        assert!(matches!(nearest_match(&[0.0, 1.0, 2.0], &[1.0, 2.0]), Err(Error::NoMatch(_))));
    }

    #[test]
    fn ties_pick_smallest_offset() {
        let series = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert_eq!(nearest_match(&[0.0, 1.0], &series).unwrap(), (0, 0.0));
    }

    #[test]
    fn match_across_channels_and_export() {
        let m = Model::init(ModelConfig::ultrastf(8, 4, 4, 2, 1), 0).unwrap();
        let mut recs = extract_shapes(&m).unwrap();
        let v = recs[1].vector.clone();
        let mut ch1: Vec<f64> = (0..20).map(|t| ((t * 5) % 7) as f64).collect();
        ch1[9..13].copy_from_slice(&v);
        let ch0: Vec<f64> = (0..20).map(|t| (t as f64).sin()).collect();
        let table = SeriesTable::from_columns(&[ch0, ch1], 0, 60).unwrap();
        match_shapes(&mut recs, &table).unwrap();
        let best = recs[1].best_match.as_ref().unwrap();
        assert_eq!((best.channel, best.offset), (1, 9));
        let mut buf = Vec::new();
        write_shapes_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_is_affine_invariant(
                a in prop::collection::vec(-10.0f64..10.0, 6),
                b in prop::collection::vec(-10.0f64..10.0, 6),
                scale in 0.01f64..100.0, shift in -100.0f64..100.0,
            ) {
                if let Some(d) = z_distance(&a, &b) {
                    let a2: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
                    let d2 = z_distance(&a2, &b).unwrap();
                    let d3 = z_distance(&a, &b.iter().map(|v| v * scale - shift).collect::<Vec<_>>()).unwrap();
                    prop_assert!((d - d2).abs() < 1e-7 && (d - d3).abs() < 1e-7);
                }
            }
        }
    }
}
