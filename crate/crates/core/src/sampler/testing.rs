//! Closed-form targets for exercising the sampler.
//!
//! These have known moments and quantiles, so sampler output can be checked
//! against theory instead of against another sampler. They are exported for
//! integration tests and benchmarks; they are not part of the calibration
//! API surface.

use super::Target;

/// Independent standard normal coordinates.
#[derive(Debug, Clone)]
pub struct StdGaussian {
    pub dim: usize,
}

impl Target for StdGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let mut logp = 0.0;
        for (g, &x) in grad.iter_mut().zip(position) {
            logp -= 0.5 * x * x;
            *g = -x;
        }
        logp
    }

    fn report_names(&self) -> Vec<String> {
        (0..self.dim).map(|i| format!("x[{i}]")).collect()
    }

    fn report_len(&self) -> usize {
        self.dim
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }

    fn default_init(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// Independent zero-mean normals with per-coordinate standard deviations.
#[derive(Debug, Clone)]
pub struct ScaledGaussian {
    pub sds: Vec<f64>,
}

impl Target for ScaledGaussian {
    fn dim(&self) -> usize {
        self.sds.len()
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let mut logp = 0.0;
        for ((g, &x), &sd) in grad.iter_mut().zip(position).zip(&self.sds) {
            let inv_var = 1.0 / (sd * sd);
            logp -= 0.5 * x * x * inv_var;
            *g = -x * inv_var;
        }
        logp
    }

    fn report_names(&self) -> Vec<String> {
        (0..self.sds.len()).map(|i| format!("x[{i}]")).collect()
    }

    fn report_len(&self) -> usize {
        self.sds.len()
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }

    fn default_init(&self) -> Vec<f64> {
        vec![0.0; self.sds.len()]
    }
}

/// Bivariate standard normal with correlation `rho`.
#[derive(Debug, Clone)]
pub struct CorrelatedGaussian {
    pub rho: f64,
}

impl Target for CorrelatedGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let (x, y) = (position[0], position[1]);
        let r = self.rho;
        let det = 1.0 - r * r;
        let logp = -0.5 * (x * x - 2.0 * r * x * y + y * y) / det;
        grad[0] = -(x - r * y) / det;
        grad[1] = -(y - r * x) / det;
        logp
    }

    fn report_names(&self) -> Vec<String> {
        vec!["x".to_string(), "y".to_string()]
    }

    fn report_len(&self) -> usize {
        2
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }

    fn default_init(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
}

/// Rosenbrock-style curved ridge: x ~ N(0,1), y | x ~ N(c x^2, 1).
#[derive(Debug, Clone)]
pub struct Banana {
    pub curvature: f64,
}

impl Target for Banana {
    fn dim(&self) -> usize {
        2
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let (x, y) = (position[0], position[1]);
        let c = self.curvature;
        let e = y - c * x * x;
        let logp = -0.5 * x * x - 0.5 * e * e;
        grad[0] = -x + 2.0 * c * x * e;
        grad[1] = -e;
        logp
    }

    fn report_names(&self) -> Vec<String> {
        vec!["x".to_string(), "y".to_string()]
    }

    fn report_len(&self) -> usize {
        2
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }

    fn default_init(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
}

/// Standard normal truncated below a wall where the density vanishes.
/// The hard boundary makes trajectories near the wall diverge, exercising
/// divergence counting without making the run unusable.
#[derive(Debug, Clone)]
pub struct Cliff;

impl Target for Cliff {
    fn dim(&self) -> usize {
        1
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        let x = position[0];
        if x <= -1.5 {
            grad[0] = f64::NAN;
            return f64::NEG_INFINITY;
        }
        grad[0] = -x;
        -0.5 * x * x
    }

    fn report_names(&self) -> Vec<String> {
        vec!["x".to_string()]
    }

    fn report_len(&self) -> usize {
        1
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        out.copy_from_slice(position);
    }

    fn default_init(&self) -> Vec<f64> {
        vec![0.0]
    }
}
