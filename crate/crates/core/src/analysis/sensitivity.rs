use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{ForwardOptions, Model};
use crate::numerics::Tensor;

/// Identity-input response of a model, `J[i][j]` = output step `i` for the
/// `j`-th basis input.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMatrix {
    /// `[t_out, t_in]`
    pub j: Tensor,
    pub model: String,
    /// Instance normalisation was bypassed for the probe.
    pub normalization_bypassed: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    model: String,
    rows: usize,
    cols: usize,
    normalization_bypassed: bool,
    max_abs: f64,
}

pub fn sensitivity_matrix(model: &Model) -> Result<SensitivityMatrix> {
    let t_in = model.config().t_in;
    let out = model.forward_with(&Tensor::identity(t_in), ForwardOptions { normalize: false })?;
    Ok(SensitivityMatrix {
        j: out.t()?,
        model: model.config().kind.name().to_string(),
        normalization_bypassed: true,
    })
}

impl SensitivityMatrix {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.j.at2(i, j)
    }

    /// Applies the matrix to one channel's window, `J * x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let col = Tensor::new(vec![x.len(), 1], x.to_vec())?;
        Ok(self.j.matmul(&col)?.into_data())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let cols = self.j.shape()[1];
        let mut header = vec!["output_step".to_string()];
        header.extend((0..cols).map(|j| format!("in{j}")));
        w.write_record(&header)?;
        for i in 0..self.j.shape()[0] {
            let mut rec = vec![i.to_string()];
            rec.extend(self.j.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and the `<stem>.json` metadata sidecar into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let meta = Sidecar {
            model: self.model.clone(),
            rows: self.j.shape()[0],
            cols: self.j.shape()[1],
            normalization_bypassed: self.normalization_bypassed,
            max_abs: self.j.max_abs(),
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;

    fn delta(len: usize) -> Tensor {
        let mut k = vec![0.0; len];
        k[len / 2] = 1.0;
        Tensor::vector(k)
    }

    #[test]
    fn linear_model_gives_transposed_weight() {
        let model = Model::init(ModelConfig::linear(6, 3), 4).unwrap();
        let s = sensitivity_matrix(&model).unwrap();
        assert_eq!(s.j, model.params().get("linear.weight").unwrap().t().unwrap());
        assert!(s.normalization_bypassed);
    }

    #[test]
    fn delta_kernel_sparsetsf_is_phase_aligned() {
        let w = 4;
        let mut model = Model::init(ModelConfig::sparsetsf(16, 8, w), 2).unwrap();
        *model.params_mut().get_mut("aggregation.kernel").unwrap() = delta(5);
        let s = sensitivity_matrix(&model).unwrap();
        for i in 0..8 {
            for j in 0..16 {
                assert_eq!(s.at(i, j) != 0.0, i % w == j % w, "J[{i}][{j}] = {}", s.at(i, j));
            }
        }
    }

    #[test]
    fn full_kernel_support_is_within_half_period() {
        let w = 6;
        let model = {
            let mut m = Model::init(ModelConfig::sparsetsf(24, 6, w), 3).unwrap();
            *m.params_mut().get_mut("aggregation.kernel").unwrap() = Tensor::full(&[7], 0.3);
            m
        };
        let s = sensitivity_matrix(&model).unwrap();
        for i in 0..6 {
            for j in 0..24usize {
                // Input j feeds aggregated steps j-3..=j+3 inside the window.
                let lo = j.saturating_sub(3);
                let hi = (j + 3).min(23);
                let reachable = (lo..=hi).any(|t| t % w == i);
                assert_eq!(s.at(i, j) != 0.0, reachable, "J[{i}][{j}]");
            }
        }
    }

    #[test]
    fn export_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = sensitivity_matrix(&Model::init(ModelConfig::sparsetsf(8, 4, 4), 0).unwrap()).unwrap();
        s.save(dir.path(), "sens").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("sens.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 9);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("sens.json")).unwrap()).unwrap();
        assert_eq!(meta["normalization_bypassed"], true);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(30))]
            #[test]
            fn linear_models_are_their_response_matrix(seed in 0u64..500, kind in 0usize..2, xs in prop::collection::vec(-5.0f64..5.0, 20)) {
                let config = if kind == 0 { ModelConfig::linear(20, 7) } else { ModelConfig::sparsetsf(20, 7, 5) };
                let model = Model::init(config, seed).unwrap();
                let s = sensitivity_matrix(&model).unwrap();
                let x = Tensor::new(vec![1, 20], xs.clone()).unwrap();
                let y = model.forward_with(&x, ForwardOptions { normalize: false }).unwrap();
                for (a, b) in y.data().iter().zip(s.apply(&xs).unwrap()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
