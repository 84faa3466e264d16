//! Four-dimensional Hawkes model of trades and mid-price moves.

pub mod analytics;
pub mod error;
pub mod estimator;
pub mod impact;
pub mod io;
pub mod kernel;
pub mod model;
pub mod spectral;
pub mod simulator;
pub mod spectrum;

pub use error::{Error, Result};
pub use kernel::{CausalFunction, Kernel, KernelBlock, KernelShape, TransferFunction};
pub use model::{Baseline, KernelMatrix, ModelSpec, StabilityReport};
pub use spectral::FrequencyGrid;
