use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "ultrastf")]
    UltraStf,
    #[serde(rename = "sparsetsf")]
    SparseTsf,
    /// SparseTSF with the segment-axis linear map replaced by a ReLU
    /// perceptron of `mlp_depth` layers.
    #[serde(rename = "sparsetsf_mlp")]
    SparseTsfMlp,
    Linear,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UltraStf => "ultrastf",
            ModelKind::SparseTsf => "sparsetsf",
            ModelKind::SparseTsfMlp => "sparsetsf_mlp",
            ModelKind::Linear => "linear",
        }
    }

    pub fn is_periodic(self) -> bool {
        !matches!(self, ModelKind::Linear)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// ReLU-gated scores (the compact shape bank).
    #[default]
    Relu,
    /// Row softmax over `scores / sqrt(width)`.
    Softmax,
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Input steps.
    pub t_in: usize,
    /// Output steps.
    pub t_out: usize,
    /// Period length `w`.
    pub period: usize,
    /// Shapes per bank `d`.
    pub shapes: usize,
    /// Number of core blocks.
    pub blocks: usize,
    pub heads: usize,
    pub attention: AttentionKind,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::UltraStf,
            t_in: 720,
            t_out: 12,
            period: 12,
            shapes: 16,
            blocks: 4,
            heads: 1,
            attention: AttentionKind::Relu,
            mlp_depth: 2,
            mlp_hidden: 32,
        }
    }
}

impl ModelConfig {
    pub fn ultrastf(t_in: usize, t_out: usize, period: usize, shapes: usize, blocks: usize) -> Self {
        ModelConfig {
            t_in,
            t_out,
            period,
            shapes,
            blocks,
            ..Default::default()
        }
    }

    pub fn sparsetsf(t_in: usize, t_out: usize, period: usize) -> Self {
        ModelConfig {
            kind: ModelKind::SparseTsf,
            t_in,
            t_out,
            period,
            ..Default::default()
        }
    }

    pub fn sparsetsf_mlp(t_in: usize, t_out: usize, period: usize, depth: usize, hidden: usize) -> Self {
        ModelConfig {
            kind: ModelKind::SparseTsfMlp,
            t_in,
            t_out,
            period,
            mlp_depth: depth,
            mlp_hidden: hidden,
            ..Default::default()
        }
    }

    pub fn linear(t_in: usize, t_out: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Linear,
            t_in,
            t_out,
            ..Default::default()
        }
    }

    /// Whole input segments, `floor(t_in / w)`.
    pub fn k_in(&self) -> usize {
        self.t_in / self.period
    }

    /// Output segments, `ceil(t_out / w)`.
    pub fn k_out(&self) -> usize {
        self.t_out.div_ceil(self.period)
    }

    pub fn kernel_len(&self) -> usize {
        2 * (self.period / 2) + 1
    }

    pub fn head_width(&self) -> usize {
        self.period / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.t_in < 2 {
            return fail(format!("t_in must be at least 2, got {}", self.t_in));
        }
        if self.t_out < 1 {
            return fail("t_out must be at least 1".into());
        }
        if !self.kind.is_periodic() {
            return Ok(());
        }
        if self.period < 1 || self.period > self.t_in {
            return fail(format!(
                "period must satisfy 1 <= period <= t_in, got period={} t_in={}",
                self.period, self.t_in
            ));
        }
        match self.kind {
            ModelKind::UltraStf => {
                if self.shapes < 1 || self.blocks < 1 || self.heads < 1 {
                    return fail(format!(
                        "shapes, blocks and heads must be >= 1 (got {}, {}, {})",
                        self.shapes, self.blocks, self.heads
                    ));
                }
                if self.head_width() < 1 {
                    return fail(format!(
                        "period {} too narrow for {} heads",
                        self.period, self.heads
                    ));
                }
            }
            ModelKind::SparseTsfMlp if self.mlp_depth < 1 || self.mlp_hidden < 1 => {
                return fail("mlp_depth and mlp_hidden must be >= 1".into());
            }
            _ => {}
        }
        Ok(())
    }
}
