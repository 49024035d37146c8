//! Maximum likelihood estimation of Gaussian process covariance parameters,
//! with Monte Carlo experiments for increasing-domain and fixed-domain
//! asymptotics.

pub mod cli;
pub mod config;
pub mod covariance;
pub mod error;
pub mod gausslin;
pub mod harness;
pub mod mle;
pub mod optimize;
pub mod simulate;
pub mod specfun;
pub mod stats;

pub use covariance::{Family, KernelSpec, ParamBounds, ParamVector};
pub use error::{Error, Result};
pub use gausslin::{CholFactor, CovMatrix, JitterPolicy};
pub use harness::{ExperimentConfig, ExperimentKind, McReport, RegimeKind};
pub use mle::{FisherMatrix, FitResult};
pub use simulate::{Design, DomainBox, FixedMode, SeedSpec};
