//! Prior specification shared by both posterior models.
//!
//! Biases get zero-mean normal priors, scale-like parameters (the scale
//! factors in the full model, their inverses in the radial model) get
//! lognormal priors, and the noise scale gets a half-normal prior. The
//! half-normal's constant factor of two is dropped; positivity is enforced
//! by the sampling transform, not by the density.

/// Hyperparameters of the calibration priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean normal prior on each bias component.
    pub bias_sd: f64,
    /// Scale of the half-normal prior on the noise level.
    pub sigma_sd: f64,
    /// Log-space location of the lognormal prior on scale-like parameters.
    pub scale_log_mu: f64,
    /// Log-space spread of the lognormal prior on scale-like parameters.
    pub scale_log_sd: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { bias_sd: 1.0, sigma_sd: 0.2, scale_log_mu: 0.0, scale_log_sd: 0.5 }
    }
}

impl PriorSpec {
    /// Copy with all spreads multiplied by `factor`; used to approach the
    /// flat-prior limit in tests.
    pub fn widened(self, factor: f64) -> Self {
        PriorSpec {
            bias_sd: self.bias_sd * factor,
            sigma_sd: self.sigma_sd * factor,
            scale_log_mu: self.scale_log_mu,
            scale_log_sd: self.scale_log_sd * factor,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.bias_sd > 0.0
            && self.sigma_sd > 0.0
            && self.scale_log_sd > 0.0
            && self.bias_sd.is_finite()
            && self.sigma_sd.is_finite()
            && self.scale_log_mu.is_finite()
            && self.scale_log_sd.is_finite()
    }

    /// Log prior density of the bias vector.
    pub fn log_density_bias(&self, b: &[f64]) -> f64 {
        b.iter().map(|&v| normal_lpdf(v, 0.0, self.bias_sd)).sum()
    }

    /// Log prior density of a vector of scale-like parameters (all positive).
    pub fn log_density_scale(&self, s: &[f64]) -> f64 {
        s.iter().map(|&v| lognormal_lpdf(v, self.scale_log_mu, self.scale_log_sd)).sum()
    }

    /// Log prior density of the noise level (half-normal up to a constant).
    pub fn log_density_sigma(&self, sigma: f64) -> f64 {
        normal_lpdf(sigma, 0.0, self.sigma_sd)
    }
}

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

pub(crate) fn normal_lpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub(crate) fn lognormal_lpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let lx = x.ln();
    let z = (lx - mu) / sd;
    -0.5 * z * z - lx - sd.ln() - LN_SQRT_2PI
}
