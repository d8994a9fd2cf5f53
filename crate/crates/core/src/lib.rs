//! Adversarial variational optimization (AVO) for fitting the parameters of
//! non-differentiable stochastic simulators, plus ABC baselines.
//!
//! A diagonal Gaussian proposal over simulator parameters is trained against
//! an MLP discriminator that separates observed data from data simulated
//! under the proposal. Proposal gradients use the score-function estimator
//! with a variance-minimizing baseline, so the simulator is only ever
//! sampled.

pub mod abc;
pub mod avo;
pub mod discriminator;
pub mod error;
pub mod histogram;
pub mod optimizer;
pub mod proposal;
pub mod rng;
pub mod simulators;

pub use avo::{
    run_avo, AvoConfig, AvoRun, Baseline, BaselineSource, GradientEstimate, IterationRecord, RunRecord,
    RunStatus,
};
pub use discriminator::Discriminator;
pub use error::{Error, Result};
pub use histogram::{Binning, HistogramSpec};
pub use optimizer::RmsProp;
pub use proposal::ProposalParams;
pub use simulators::{Simulator, SimulatorKind};
