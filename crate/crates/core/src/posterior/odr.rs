//! Radial approximation of the calibration posterior.
//!
//! Back-projecting a measurement through the inverse sensor map gives a
//! gravity estimate whose length should be one; treating those lengths as
//! independent Gaussians around one yields a posterior over the biases, the
//! inverse scale factors, and a radial noise level. The pose angles drop
//! out, so the parameter count is `2 * dim + 1` regardless of how many rows
//! the dataset has.

use crate::model::Dataset;
use crate::priors::{normal_lpdf, PriorSpec, LN_SQRT_2PI};
use crate::sampler::Target;
use crate::transforms::{ParamSpace, Transform};

use super::PosteriorError;

/// Constrained parameter values of the radial model.
#[derive(Debug, Clone, PartialEq)]
pub struct OdrState {
    pub bias: Vec<f64>,
    /// Inverse scale factors, one per axis, all positive.
    pub inv_scale: Vec<f64>,
    /// Spread of the radial residuals.
    pub sigma: f64,
}

/// Radial model bound to one dataset and one prior specification.
#[derive(Debug, Clone)]
pub struct OdrModel {
    rows: Vec<f64>,
    n: usize,
    dim: usize,
    priors: PriorSpec,
    space: ParamSpace,
}

impl OdrModel {
    pub fn new(data: &Dataset, priors: PriorSpec) -> Result<Self, PosteriorError> {
        if !priors.is_valid() {
            return Err(PosteriorError::InvalidPriors);
        }
        let dim = data.dim();
        let mut names = Vec::with_capacity(2 * dim + 1);
        let mut transforms = Vec::with_capacity(2 * dim + 1);
        for j in 1..=dim {
            names.push(format!("b[{j}]"));
            transforms.push(Transform::Identity);
        }
        for j in 1..=dim {
            names.push(format!("sinv[{j}]"));
            transforms.push(Transform::Positive);
        }
        names.push("sigma".to_string());
        transforms.push(Transform::Positive);
        Ok(OdrModel {
            rows: data.flat().to_vec(),
            n: data.len(),
            dim,
            priors,
            space: ParamSpace::new(names, transforms),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn data_dim(&self) -> usize {
        self.dim
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    /// A dataset smaller than the parameter count cannot identify the model;
    /// fitting still runs, but the posterior is prior-dominated.
    pub fn size_warning(&self) -> Option<String> {
        let needed = 2 * self.dim + 1;
        (self.n < needed).then(|| {
            format!(
                "only {} measurement rows for {} radial-model parameters; \
                 the posterior will largely reflect the priors",
                self.n, needed
            )
        })
    }

    /// Constrained state and total log-Jacobian at unconstrained `u`.
    pub fn constrain(&self, u: &[f64]) -> (OdrState, f64) {
        let (c, log_jac) = self.space.constrain(u);
        let d = self.dim;
        (
            OdrState {
                bias: c[..d].to_vec(),
                inv_scale: c[d..2 * d].to_vec(),
                sigma: c[2 * d],
            },
            log_jac,
        )
    }

    pub fn unconstrain(&self, st: &OdrState) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.space.len());
        c.extend_from_slice(&st.bias);
        c.extend_from_slice(&st.inv_scale);
        c.push(st.sigma);
        self.space.unconstrain(&c)
    }

    pub fn log_prior(&self, st: &OdrState) -> f64 {
        self.priors.log_density_bias(&st.bias)
            + self.priors.log_density_scale(&st.inv_scale)
            + self.priors.log_density_sigma(st.sigma)
    }

    pub fn log_likelihood(&self, st: &OdrState) -> f64 {
        let mut out = 0.0;
        for row in self.rows.chunks_exact(self.dim) {
            let mut m = 0.0;
            for j in 0..self.dim {
                let e = st.inv_scale[j] * (row[j] - st.bias[j]);
                m += e * e;
            }
            out += normal_lpdf(1.0, m.sqrt(), st.sigma);
        }
        out
    }

    /// Log posterior in unconstrained coordinates, Jacobian included.
    pub fn log_posterior(&self, u: &[f64]) -> f64 {
        let (st, log_jac) = self.constrain(u);
        self.log_prior(&st) + self.log_likelihood(&st) + log_jac
    }

    /// Log posterior and its gradient; returns the value, fills `grad`.
    pub fn log_posterior_and_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        assert_eq!(u.len(), 2 * d + 1);
        assert_eq!(grad.len(), 2 * d + 1);
        let (st, log_jac) = self.constrain(u);
        let sigma = st.sigma;
        let inv_sig2 = 1.0 / (sigma * sigma);

        // accumulate d/d(constrained)
        let mut g_b = vec![0.0; d];
        let mut g_sinv = vec![0.0; d];
        let mut g_sigma = 0.0;
        let mut value = 0.0;

        let mut dr_db = vec![0.0; d];
        let mut dr_dsinv = vec![0.0; d];
        for row in self.rows.chunks_exact(d) {
            let r = radius_and_partials(row, &st.bias, &st.inv_scale, &mut dr_db, &mut dr_dsinv);
            let e = 1.0 - r;
            value += -sigma.ln() - LN_SQRT_2PI - 0.5 * e * e * inv_sig2;
            let w = e * inv_sig2;
            for j in 0..d {
                g_b[j] += w * dr_db[j];
                g_sinv[j] += w * dr_dsinv[j];
            }
            g_sigma += -1.0 / sigma + e * e * inv_sig2 / sigma;
        }

        // priors in constrained space
        for j in 0..d {
            value += normal_lpdf(st.bias[j], 0.0, self.priors.bias_sd);
            g_b[j] += -st.bias[j] / (self.priors.bias_sd * self.priors.bias_sd);
            let ls = st.inv_scale[j].ln();
            value += -0.5 * ((ls - self.priors.scale_log_mu) / self.priors.scale_log_sd).powi(2)
                - ls
                - self.priors.scale_log_sd.ln()
                - LN_SQRT_2PI;
            g_sinv[j] += (-1.0
                - (ls - self.priors.scale_log_mu)
                    / (self.priors.scale_log_sd * self.priors.scale_log_sd))
                / st.inv_scale[j];
        }
        value += normal_lpdf(sigma, 0.0, self.priors.sigma_sd);
        g_sigma += -sigma / (self.priors.sigma_sd * self.priors.sigma_sd);

        // chain rule into unconstrained coordinates
        for j in 0..d {
            grad[j] = g_b[j];
            grad[d + j] = g_sinv[j] * st.inv_scale[j] + 1.0;
        }
        grad[2 * d] = g_sigma * sigma + 1.0;

        value + log_jac
    }
}

/// Length of the back-projected gravity estimate of one row together with
/// its partial derivatives. Shared by the posterior gradient and the
/// maximum-likelihood fit.
///
/// `r = sqrt(sum_j (sinv_j * (a_j - b_j))^2)`; the partials are singular at
/// `r == 0`, which callers treat as a rejected point.
pub(crate) fn radius_and_partials(
    a: &[f64],
    bias: &[f64],
    inv_scale: &[f64],
    dr_dbias: &mut [f64],
    dr_dinv_scale: &mut [f64],
) -> f64 {
    let mut m = 0.0;
    for j in 0..a.len() {
        let e = inv_scale[j] * (a[j] - bias[j]);
        m += e * e;
    }
    let r = m.sqrt();
    for j in 0..a.len() {
        let c = a[j] - bias[j];
        dr_dbias[j] = -inv_scale[j] * inv_scale[j] * c / r;
        dr_dinv_scale[j] = inv_scale[j] * c * c / r;
    }
    r
}

impl Target for OdrModel {
    fn dim(&self) -> usize {
        self.space.len()
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_and_grad(position, grad)
    }

    fn report_names(&self) -> Vec<String> {
        let mut names = self.space.names().to_vec();
        for j in 1..=self.dim {
            names.push(format!("s[{j}]"));
        }
        names
    }

    fn report_len(&self) -> usize {
        self.space.len() + self.dim
    }

    // sampled values plus the derived scale factors s = 1 / sinv
    fn report(&self, position: &[f64], out: &mut [f64]) {
        let k = self.space.len();
        self.space.constrain_into(position, &mut out[..k]);
        for j in 0..self.dim {
            out[k + j] = 1.0 / out[self.dim + j];
        }
    }

    fn default_init(&self) -> Vec<f64> {
        // biases 0, scale factors 1, radial spread 0.01
        let mut u = vec![0.0; self.space.len()];
        u[2 * self.dim] = 0.01f64.ln();
        u
    }
}
