use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::table::SeriesTable;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    #[default]
    None,
    /// `trend(t) = magnitude * t`.
    Linear,
    /// `trend(t, l) = magnitude * (1 + l / w) * t`, with `l = t mod w`.
    PhaseDependent,
}

/// Recipe for `X[t] = P[t mod w] + trend(t, t mod w) + noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub period: usize,
    pub length: usize,
    pub channels: usize,
    /// Peak absolute value of the periodic profile.
    pub amplitude: f64,
    /// Explicit profile of length `period`, used as given for every channel.
    /// When absent each channel draws a smooth random profile.
    pub profile: Option<Vec<f64>>,
    pub trend: TrendKind,
    /// Trend slope per step.
    pub trend_magnitude: f64,
    pub noise_std: f64,
    /// Set from the run seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
    /// Seconds between steps.
    pub interval: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            period: 12,
            length: 4000,
            channels: 1,
            amplitude: 1.0,
            profile: None,
            trend: TrendKind::None,
            trend_magnitude: 0.0,
            noise_std: 0.0,
            seed: 0,
            interval: 900,
        }
    }
}

/// Three random harmonics of the period, rescaled to peak `amplitude`.
pub fn random_profile(period: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (1..=3)
        .map(|h| (rng.random_range(0.3..1.0) / h as f64, rng.random_range(0.0..TAU)))
        .collect();
    let raw: Vec<f64> = (0..period)
        .map(|l| {
            coeffs
                .iter()
                .enumerate()
                .map(|(h, (a, phi))| a * (TAU * (h + 1) as f64 * l as f64 / period as f64 + phi).sin())
                .sum()
        })
        .collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.iter().map(|v| v * amplitude / peak.max(f64::MIN_POSITIVE)).collect()
}

pub fn trend_value(kind: TrendKind, magnitude: f64, t: usize, period: usize) -> f64 {
    let t_f = t as f64;
    match kind {
        TrendKind::None => 0.0,
        TrendKind::Linear => magnitude * t_f,
        TrendKind::PhaseDependent => {
            let l = (t % period) as f64;
            magnitude * (1.0 + l / period as f64) * t_f
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SeriesTable> {
    let w = spec.period;
    if w < 2 || spec.length < 4 * w {
        return Err(Error::Config(format!(
            "synthetic series needs period >= 2 and length >= 4 * period (got {w}, {})",
            spec.length
        )));
    }
    if spec.channels < 1 {
        return Err(Error::Config("synthetic series needs at least one channel".into()));
    }
    if spec.noise_std.is_nan() || spec.noise_std < 0.0 {
        return Err(Error::Config(format!("noise_std must be >= 0, got {}", spec.noise_std)));
    }
    if let Some(p) = &spec.profile {
        if p.len() != w {
            return Err(Error::Config(format!(
                "profile has {} entries for period {w}",
                p.len()
            )));
        }
    }
    let mut profile_rng = rng::substream(spec.seed, "profile");
    let mut noise_rng = rng::substream(spec.seed, "noise");
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let columns: Vec<Vec<f64>> = (0..spec.channels)
        .map(|_| {
            let profile = spec
                .profile
                .clone()
                .unwrap_or_else(|| random_profile(w, spec.amplitude, &mut profile_rng));
            (0..spec.length)
                .map(|t| {
                    let eps = if spec.noise_std > 0.0 {
                        noise.sample(&mut noise_rng)
                    } else {
                        0.0
                    };
                    profile[t % w] + trend_value(spec.trend, spec.trend_magnitude, t, w) + eps
                })
                .collect()
        })
        .collect();
    SeriesTable::from_columns(&columns, 0, spec.interval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(trend: TrendKind, magnitude: f64, noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            period: 6,
            length: 120,
            channels: 2,
            trend,
            trend_magnitude: magnitude,
            noise_std: noise,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn untrended_noise_free_series_is_periodic() {
        let t = gen_synthetic(&spec(TrendKind::None, 0.0, 0.0)).unwrap();
        for c in 0..2 {
            let col = t.column(c);
            assert!((0..col.len() - 6).all(|i| col[i] == col[i + 6]));
            let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_trend_telescopes() {
        let c = 0.03;
        let t = gen_synthetic(&spec(TrendKind::Linear, c, 0.0)).unwrap();
        let col = t.column(1);
        for i in 0..col.len() - 6 {
            assert!((col[i + 6] - col[i] - c * 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_dependent_slope_grows_with_phase() {
        let base = 0.01;
        let t = gen_synthetic(&spec(TrendKind::PhaseDependent, base, 0.0)).unwrap();
        let col = t.column(0);
        for i in 0..col.len() - 6 {
            let l = (i % 6) as f64;
            let expect = base * (1.0 + l / 6.0) * 6.0;
            assert!((col[i + 6] - col[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(TrendKind::PhaseDependent, 0.01, 0.1);
        assert_eq!(gen_synthetic(&s).unwrap(), gen_synthetic(&s).unwrap());
        let mut other = s.clone();
        other.seed = 4;
        assert_ne!(gen_synthetic(&s).unwrap(), gen_synthetic(&other).unwrap());
    }

    #[test]
    fn explicit_profile_and_validation() {
        let mut s = spec(TrendKind::None, 0.0, 0.0);
        s.profile = Some(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(&gen_synthetic(&s).unwrap().column(1)[..7], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 1.0]);
        s.profile = Some(vec![1.0]);
        assert!(gen_synthetic(&s).is_err());
        s.profile = None;
        s.length = 23;
        assert!(gen_synthetic(&s).is_err());
    }
}
