//! Configuration, experiment orchestration and run persistence.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod ma;
pub mod plot;
mod verify;

pub use config::{ExperimentConfig, Overrides, RawConfig};
pub use experiment::{run_experiment, Check, Command, FitRecord, PointRecord, RunLedger};
pub use fit::{fit_power_law, PowerFit};
pub use ma::{curl_curl, curl_curl_residual, ma_residual, ma_residual_jet, subsolution_from_f, weak_residual, MaResidual, ResidualForm};
pub use plot::{Plot, Series};
