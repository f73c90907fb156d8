//! MAE / RMSE / MAPE and the horizon-resolved report.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Targets with `|y| <= DEFAULT_MAPE_THRESHOLD` are excluded from MAPE.
pub const DEFAULT_MAPE_THRESHOLD: f64 = 1e-4;

/// Horizons reported individually, 1-based.
pub const STANDARD_HORIZONS: [usize; 3] = [3, 6, 12];

fn check(pred: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<()> {
    if pred.len() != target.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(Error::shape(
            "metric",
            format!(
                "pred {} / target {} / mask {:?}",
                pred.len(),
                target.len(),
                mask.map(<[bool]>::len)
            ),
        ));
    }
    Ok(())
}

fn valid(mask: Option<&[bool]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i])
}

fn masked_mean(
    pred: &[f64],
    target: &[f64],
    mask: Option<&[bool]>,
    name: &str,
    keep: impl Fn(f64) -> bool,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    check(pred, target, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..pred.len() {
        if valid(mask, i) && keep(target[i]) {
            sum += f(pred[i], target[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(format!("{name}: no valid points")));
    }
    Ok(sum / n as f64)
}

pub fn mae(pred: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    masked_mean(pred, target, mask, "MAE", |_| true, |p, y| (p - y).abs())
}

pub fn rmse(pred: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    masked_mean(pred, target, mask, "RMSE", |_| true, |p, y| (p - y) * (p - y)).map(f64::sqrt)
}

/// Percentage error over points with `|target| > threshold`.
pub fn mape(pred: &[f64], target: &[f64], mask: Option<&[bool]>, threshold: f64) -> Result<f64> {
    masked_mean(
        pred,
        target,
        mask,
        "MAPE",
        |y| y.abs() > threshold,
        |p, y| (p - y).abs() / y.abs(),
    )
    .map(|v| v * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// `"horizon 3"`, ..., or `"average"`.
    pub label: String,
    /// 1-based step, `None` for the pooled row.
    pub horizon: Option<usize>,
    pub mae: f64,
    pub rmse: f64,
    /// Percent; `None` when every target was masked.
    pub mape: Option<f64>,
    pub evaluated: usize,
    /// Points excluded from MAPE by the threshold or the mask.
    pub masked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub mape_threshold: f64,
}

fn row(label: String, horizon: Option<usize>, pred: &[f64], target: &[f64], mask: &[bool], threshold: f64) -> Result<MetricsRow> {
    let mask = Some(mask);
    let evaluated = mask.map_or(pred.len(), |m| m.iter().filter(|&&v| v).count());
    let mape_points = (0..pred.len())
        .filter(|&i| valid(mask, i) && target[i].abs() > threshold)
        .count();
    let mape = match mape(pred, target, mask, threshold) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsRow {
        label,
        horizon,
        mae: mae(pred, target, mask)?,
        rmse: rmse(pred, target, mask)?,
        mape,
        evaluated,
        masked: pred.len() - mape_points,
    })
}

/// Per-horizon rows for the standard horizons that fit in `t_out`, then an
/// average row pooled over every predicted step.
///
/// `pred` and `target` are `[N, n, t_out]` (any leading shape works as long
/// as the last axis is the forecast step).
pub fn horizon_report(pred: &Tensor, target: &Tensor, mask: Option<&[bool]>, threshold: f64) -> Result<MetricsReport> {
    if pred.shape() != target.shape() || pred.ndim() == 0 {
        return Err(Error::shape(
            "horizon_report",
            format!("pred {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let t_out = *pred.shape().last().expect("non-scalar");
    let full_mask: Vec<bool> = match mask {
        Some(m) => m.to_vec(),
        None => vec![true; pred.len()],
    };
    check(pred.data(), target.data(), Some(&full_mask))?;
    let mut rows = Vec::new();
    for h in STANDARD_HORIZONS.into_iter().filter(|&h| h <= t_out) {
        let pick = |d: &[f64]| -> Vec<f64> { d.iter().skip(h - 1).step_by(t_out).copied().collect() };
        let m: Vec<bool> = full_mask.iter().skip(h - 1).step_by(t_out).copied().collect();
        rows.push(row(
            format!("horizon {h}"),
            Some(h),
            &pick(pred.data()),
            &pick(target.data()),
            &m,
            threshold,
        )?);
    }
    rows.push(row("average".into(), None, pred.data(), target.data(), &full_mask, threshold)?);
    Ok(MetricsReport {
        rows,
        mape_threshold: threshold,
    })
}

impl MetricsReport {
    pub fn average(&self) -> &MetricsRow {
        self.rows.last().expect("report always has an average row")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["label", "horizon", "mae", "rmse", "mape", "evaluated", "masked"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.horizon.map_or(String::new(), |h| h.to_string()),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.mape.map_or(String::new(), |v| v.to_string()),
                r.evaluated.to_string(),
                r.masked.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
