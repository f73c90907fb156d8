use crate::error::{Error, Result};
use crate::models::{block_out_len, mlp_widths, param_layout, ModelConfig, ModelKind};

/// Closed-form parameter count.
///
/// UltraSTF: `K + sum_b (w^2 + 2wd + k_in * ceil(out_b / w))` with kernel
/// length `K = 2 * floor(w / 2) + 1`, inner blocks emitting `t_in` steps and
/// the last one `t_out`. SparseTSF: `K + k_in * k_out`. Linear: `t_in * t_out`.
pub fn count_params(config: &ModelConfig) -> Result<usize> {
    config.validate()?;
    let w = config.period;
    let kernel = config.kernel_len();
    let k_in = config.k_in();
    Ok(match config.kind {
        ModelKind::UltraStf => {
            if config.heads > 1 {
                return Err(Error::Unsupported(format!(
                    "closed-form count is defined for one head, got {}; use enumerate_params",
                    config.heads
                )));
            }
            let bank = w * w + 2 * w * config.shapes;
            kernel
                + (0..config.blocks)
                    .map(|b| bank + k_in * block_out_len(config, b).div_ceil(w))
                    .sum::<usize>()
        }
        ModelKind::SparseTsf => kernel + k_in * config.k_out(),
        ModelKind::SparseTsfMlp => {
            kernel
                + mlp_widths(config)
                    .iter()
                    .map(|(i, o)| i * o + o)
                    .sum::<usize>()
        }
        ModelKind::Linear => config.t_in * config.t_out,
    })
}

/// Scalar count by walking the parameter layout; works for any head count.
pub fn enumerate_params(config: &ModelConfig) -> Result<usize> {
    Ok(param_layout(config)?.iter().map(|s| s.numel()).sum())
}
