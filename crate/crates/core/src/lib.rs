//! Large-dimensional dynamic volatility estimation with a latent factor GARCH
//! structure, and σ-based Value-at-Risk forecasting and backtesting.

pub mod error;
pub mod backtest;
pub mod bench;
pub mod exec;
pub mod fgarch;
pub mod forecast;
pub mod linalg;
pub mod optim;
pub mod panel;
pub mod pipeline;
pub mod rolling;
pub mod shrink;
pub mod simul;
pub mod spectral;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
