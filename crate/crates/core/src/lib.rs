pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
