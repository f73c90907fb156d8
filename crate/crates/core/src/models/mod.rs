//! UltraSTF, SparseTSF and the linear baseline.

pub mod checkpoint;
mod config;
mod forward;
pub mod layers;
mod params;

pub use config::{AttentionKind, ModelConfig, ModelKind};
pub use forward::{cross_period_series, forward_on_tape, ForwardOptions, Model};
pub use params::{block_out_len, mlp_widths, param_layout, Init, ParamSet, ParamSpec, ParamVars};
