//! Log-posterior densities for the two calibration models.
//!
//! Both models share the priors from [`crate::priors`] and expose their
//! density in the sampler's unconstrained coordinates, including the
//! change-of-variables Jacobian. Gradients are derived by hand and verified
//! against finite differences in the tests.
//!
//! * [`FullModel`]: joint density over biases, scales, noise level, and one
//!   unknown pose per measurement row. The first pose is pinned to remove
//!   the rotational degeneracy.
//! * [`OdrModel`]: the cheap approximation that reduces each row to the
//!   length of its back-projected gravity estimate, which concentrates
//!   around one. Its parameter count does not grow with the data.

mod full;
mod odr;

pub use full::{FullModel, FullState};
pub use odr::{OdrModel, OdrState};

pub(crate) use odr::radius_and_partials;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("model needs at least {need} measurement rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("prior specification is invalid")]
    InvalidPriors,
}

/// Clamp applied to data-derived initial angles so they start strictly
/// inside their supports.
pub(crate) const ANGLE_INIT_CLAMP: f64 = 1e-3;
