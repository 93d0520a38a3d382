//! Simulation library for a family of population-replacement models on [0,1]:
//! the two-branch replacement kernel, its forward chains and couplings, exact
//! moment duals on particle counts, measure-dependent (non-linear) chains,
//! finite mean-field host systems, and the limiting diffusions obtained under
//! diffusive rescaling.
//!
//! Module map:
//! - [`engine`]: deterministic per-replicate random streams and the
//!   thread-count-invariant parallel reduction they feed.
//! - [`kernel`]: one-step kernel sampling, monotone coupled updates, invariant
//!   moments, and the invariant density solver.
//! - [`chains`]: forward chains driven by a drift specification, couplings,
//!   heterozygosity, and fixation estimation.
//! - [`duals`]: block-counting dual chains whose factorial moments match the
//!   forward chains exactly, with absorption probabilities.
//! - [`nonlinear`]: chains whose replacement probability depends on the
//!   current law, law propagation on a grid, and fixed-point invariants.
//! - [`meanfield`]: interacting M-host systems, the two-level coupling against
//!   the non-linear chain, and chaos-rate experiments.
//! - [`diffusion`]: Euler-Maruyama integration of the limiting diffusions and
//!   the scaled-chain convergence checks.
//! - [`stats`]: sample summaries, Beta sampling, and exact Wasserstein-1
//!   distances between empirical, gridded, and Beta laws.
//! - [`report`]: deterministic CSV rendering of results and histograms.

pub mod chains;
pub mod diffusion;
pub mod duals;
pub mod engine;
mod exact;
pub mod kernel;
pub mod meanfield;
pub mod nonlinear;
pub mod report;
pub mod stats;

pub use chains::{ChainPath, DriftSpec};
pub use diffusion::{
    CaseStudyInvariant, CaseStudyParams, DiffusionRun, ErgodicRate, MvSystemParams, SDEParams,
    ScalingCheck, X0Law,
};
pub use duals::{DualState, FtwDualParams, FtwDualTable, LambdaTable, TransitionRow};
pub use engine::{derive_stream, lane_seed, parallel_replicates, ReplicateStream};
pub use kernel::{DensitySolve, GridDensity, GridSampler, InvariantMoments, KernelParams};
pub use meanfield::{ChaosPoint, ChaosRate, HostSystemState, ScaledRun, ScalingParams};
pub use nonlinear::{GapSeries, LawFlow, LawView, NonLinearDriftSpec};
pub use report::{DualityRow, Histogram};
pub use stats::{BetaSampler, SampleVector};

/// Library error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("no convergence after {iterations} iterations, last residual {residual:e}")]
    NonConvergence { iterations: u64, residual: f64 },
    #[error("replicate {index} failed: {message}")]
    ReplicateFailed { index: u64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
