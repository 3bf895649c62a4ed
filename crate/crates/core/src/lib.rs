//! Calibration of two- and three-axis accelerometers from stationary
//! multi-pose measurements, using only the fact that a resting sensor
//! measures a vector of unit length in gravity units.
//!
//! The crate fits per-axis bias and scale (plus a noise level) two ways:
//!
//! * a joint Bayesian model with one latent orientation per pose, sampled
//!   with Hamiltonian Monte Carlo ([`posterior::FullModel`]);
//! * a radial reduction that collapses the orientations out and fits only
//!   the back-projected vector length ([`posterior::OdrModel`]), which
//!   scales to large datasets, with a least-squares point estimate
//!   ([`mle::fit_odr_mle`]) as a fast companion.
//!
//! [`fit::fit_model`] is the one-call entry point: it builds the chosen
//! posterior, runs seeded parallel chains, and returns draws with a
//! convergence verdict. [`study`] wraps the repeatable simulation studies
//! used to validate recovery, interval width, and coverage behavior.
//!
//! Everything downstream of a seed is deterministic: same data, options,
//! and seed give bit-identical draws regardless of thread scheduling.

pub mod diagnostics;
pub mod fit;
pub mod mle;
pub mod model;
mod optim;
pub mod posterior;
pub mod priors;
pub mod sampler;
pub mod study;
pub mod transforms;

pub use diagnostics::{summarize, ParamSummary, SummaryTable, Thresholds};
pub use fit::{fit_model, FitError, FitOptions, FitOutcome, ModelKind};
pub use mle::{fit_odr_mle, OdrMle};
pub use model::{
    calibrate, circle_orientations, estimate_g, forward_mean, grid_orientations, radial_norms,
    random_orientations, simulate, AngleCoverage, CalibrationParams, Dataset, Measurement,
    ModelError, Orientation,
};
pub use posterior::{FullModel, FullState, OdrModel, OdrState, PosteriorError};
pub use priors::PriorSpec;
pub use sampler::{
    run_hmc, InitStrategy, PosteriorDraws, SamplerConfig, SamplerError, Target,
};
pub use study::{
    derive_seed, run_coverage, run_sim2d, run_sim3d, run_study, CoverageRow, StudyError,
    StudyKind, StudyOutcome, StudyRow, StudySpec,
};
