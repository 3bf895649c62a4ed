//! One-call fitting: build a model, sample it, summarize the draws.

use crate::diagnostics::{summarize, DiagnosticsError, SummaryTable, Thresholds};
use crate::model::{Dataset, ModelError};
use crate::posterior::{FullModel, OdrModel, PosteriorError};
use crate::priors::PriorSpec;
use crate::sampler::{run_hmc, PosteriorDraws, SamplerConfig, SamplerError};
use thiserror::Error;

/// Which posterior to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Joint posterior over calibration and per-row poses.
    Full,
    /// Radial-residual posterior whose size is independent of the data.
    Odr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::Odr => "odr",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ModelKind::Full),
            "odr" => Ok(ModelKind::Odr),
            other => Err(format!("unknown model '{other}'; expected 'full' or 'odr'")),
        }
    }
}

/// Everything a fit needs besides the data.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub thresholds: Thresholds,
}

/// Draws plus their summary and any model-size warnings.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub draws: PosteriorDraws,
    pub summary: SummaryTable,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Sample `kind` against `data` and summarize the result. The outcome's
/// `summary.verdict` says whether the run satisfied the convergence
/// thresholds; warnings flag model-size problems that do not stop the fit.
pub fn fit_model(kind: ModelKind, data: &Dataset, opts: &FitOptions) -> Result<FitOutcome, FitError> {
    let mut warnings = Vec::new();
    let draws = match kind {
        ModelKind::Odr => {
            let model = OdrModel::new(data, opts.priors.clone())?;
            if let Some(w) = model.size_warning() {
                warnings.push(w);
            }
            run_hmc(&model, &opts.sampler)?
        }
        ModelKind::Full => {
            let model = FullModel::new(data, opts.priors.clone())?;
            if let Some(w) = model.size_warning() {
                warnings.push(w);
            }
            run_hmc(&model, &opts.sampler)?
        }
    };
    let summary = summarize(&draws, &opts.thresholds)?;
    Ok(FitOutcome { draws, summary, warnings })
}
