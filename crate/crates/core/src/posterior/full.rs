//! Joint calibration posterior with one unknown pose per measurement row.
//!
//! Every axis of every row is a Gaussian around `b_j + s_j * g_j(pose_i)`.
//! The pose of the first row is pinned (gravity along +z in 3D, along +x in
//! the planar case) so that the remaining angles, biases, and scales are
//! identified; the other `n - 1` poses are sampled. Parameter count is
//! `2 * dim + 1 + (dim - 1) * (n - 1)`.

use crate::model::{Dataset, Orientation};
use crate::priors::{PriorSpec, LN_SQRT_2PI};
use crate::sampler::Target;
use crate::transforms::{ParamSpace, Transform};

use super::{PosteriorError, ANGLE_INIT_CLAMP};

const PI: f64 = std::f64::consts::PI;
const TWO_PI: f64 = std::f64::consts::TAU;

/// Constrained parameter values of the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub bias: Vec<f64>,
    pub scale: Vec<f64>,
    pub sigma: f64,
    /// Poses of rows `2..=n`, in row order. Row 1 is pinned.
    pub poses: Vec<Orientation>,
}

/// Full model bound to one dataset and one prior specification.
#[derive(Debug, Clone)]
pub struct FullModel {
    rows: Vec<f64>,
    n: usize,
    dim: usize,
    priors: PriorSpec,
    space: ParamSpace,
}

impl FullModel {
    pub fn new(data: &Dataset, priors: PriorSpec) -> Result<Self, PosteriorError> {
        if !priors.is_valid() {
            return Err(PosteriorError::InvalidPriors);
        }
        if data.len() < 2 {
            return Err(PosteriorError::TooFewRows { need: 2, got: data.len() });
        }
        let dim = data.dim();
        let n = data.len();
        let mut names = Vec::new();
        let mut transforms = Vec::new();
        for j in 1..=dim {
            names.push(format!("b[{j}]"));
            transforms.push(Transform::Identity);
        }
        for j in 1..=dim {
            names.push(format!("s[{j}]"));
            transforms.push(Transform::Positive);
        }
        names.push("sigma".to_string());
        transforms.push(Transform::Positive);
        if dim == 3 {
            for i in 2..=n {
                names.push(format!("theta[{i}]"));
                transforms.push(Transform::interval(0.0, PI));
            }
        }
        for i in 2..=n {
            names.push(format!("phi[{i}]"));
            transforms.push(Transform::interval(0.0, TWO_PI));
        }
        Ok(FullModel {
            rows: data.flat().to_vec(),
            n,
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

    /// Mixing degrades once the pose count grows far beyond the information
    /// each row carries; past 30 rows the radial model is the better tool.
    pub fn size_warning(&self) -> Option<String> {
        (self.n > 30).then(|| {
            format!(
                "full model with {} rows samples {} parameters and mixes slowly; \
                 consider the radial model for datasets this large",
                self.n,
                self.space.len()
            )
        })
    }

    fn theta_offset(&self) -> usize {
        2 * self.dim + 1
    }

    fn phi_offset(&self) -> usize {
        if self.dim == 3 { 2 * self.dim + 1 + (self.n - 1) } else { 2 * self.dim + 1 }
    }

    /// Constrained state and total log-Jacobian at unconstrained `u`.
    pub fn constrain(&self, u: &[f64]) -> (FullState, f64) {
        let (c, log_jac) = self.space.constrain(u);
        let d = self.dim;
        let poses = (0..self.n - 1)
            .map(|q| {
                let phi = c[self.phi_offset() + q];
                if d == 3 {
                    Orientation::spherical(c[self.theta_offset() + q], phi)
                        .expect("interval transform keeps angles in range")
                } else {
                    Orientation::planar(phi).expect("interval transform keeps angles in range")
                }
            })
            .collect();
        (
            FullState {
                bias: c[..d].to_vec(),
                scale: c[d..2 * d].to_vec(),
                sigma: c[2 * d],
                poses,
            },
            log_jac,
        )
    }

    pub fn unconstrain(&self, st: &FullState) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.space.len());
        c.extend_from_slice(&st.bias);
        c.extend_from_slice(&st.scale);
        c.push(st.sigma);
        if self.dim == 3 {
            for p in &st.poses {
                match p {
                    Orientation::Spherical { theta, .. } => c.push(*theta),
                    Orientation::Planar { .. } => panic!("planar pose in 3d model"),
                }
            }
        }
        for p in &st.poses {
            match p {
                Orientation::Spherical { phi, .. } | Orientation::Planar { phi } => c.push(*phi),
            }
        }
        self.space.unconstrain(&c)
    }

    pub fn log_prior(&self, st: &FullState) -> f64 {
        let angle_count = (self.dim - 1) * (self.n - 1);
        let mut out = self.priors.log_density_bias(&st.bias)
            + self.priors.log_density_scale(&st.scale)
            + self.priors.log_density_sigma(st.sigma);
        // uniform pose priors over their supports
        if self.dim == 3 {
            out -= (self.n - 1) as f64 * PI.ln();
            out -= (self.n - 1) as f64 * TWO_PI.ln();
        } else {
            out -= (self.n - 1) as f64 * TWO_PI.ln();
        }
        debug_assert_eq!(angle_count, self.space.len() - 2 * self.dim - 1);
        out
    }

    /// Mean response of the pinned first row.
    fn pinned_mean(&self, st: &FullState) -> Vec<f64> {
        if self.dim == 3 {
            // gravity along +z
            vec![st.bias[0], st.bias[1], st.bias[2] + st.scale[2]]
        } else {
            // gravity along +x
            vec![st.bias[0] + st.scale[0], st.bias[1]]
        }
    }

    pub fn log_likelihood(&self, st: &FullState) -> f64 {
        let d = self.dim;
        let sigma = st.sigma;
        let inv_sig2 = 1.0 / (sigma * sigma);
        let base = -sigma.ln() - LN_SQRT_2PI;
        let mut out = 0.0;
        let first = self.pinned_mean(st);
        for j in 0..d {
            let r = self.rows[j] - first[j];
            out += base - 0.5 * r * r * inv_sig2;
        }
        for (q, row) in self.rows.chunks_exact(d).skip(1).enumerate() {
            let g = st.poses[q].gravity();
            for j in 0..d {
                let r = row[j] - (st.bias[j] + st.scale[j] * g[j]);
                out += base - 0.5 * r * r * inv_sig2;
            }
        }
        out
    }

    /// Log posterior in unconstrained coordinates, Jacobian included.
    pub fn log_posterior(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| v.is_nan()) {
            return f64::NEG_INFINITY;
        }
        let (st, log_jac) = self.constrain(u);
        self.log_prior(&st) + self.log_likelihood(&st) + log_jac
    }

    /// Log posterior and its gradient; returns the value, fills `grad`.
    pub fn log_posterior_and_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.space.len();
        assert_eq!(u.len(), k);
        assert_eq!(grad.len(), k);
        if u.iter().any(|v| v.is_nan()) {
            grad.fill(f64::NAN);
            return f64::NEG_INFINITY;
        }
        let d = self.dim;
        let (st, log_jac) = self.constrain(u);
        let sigma = st.sigma;
        let inv_sig2 = 1.0 / (sigma * sigma);
        let base = -sigma.ln() - LN_SQRT_2PI;

        let mut value = 0.0;
        let mut g_b = vec![0.0; d];
        let mut g_s = vec![0.0; d];
        let mut g_sigma = 0.0;
        for g in grad.iter_mut() {
            *g = 0.0;
        }

        // pinned first row: mean = b + s .* g0 with g0 the pinned gravity
        let first = self.pinned_mean(&st);
        for j in 0..d {
            let r = self.rows[j] - first[j];
            value += base - 0.5 * r * r * inv_sig2;
            g_b[j] += r * inv_sig2;
            g_sigma += r * r * inv_sig2 / sigma;
        }
        if d == 3 {
            g_s[2] += (self.rows[2] - first[2]) * inv_sig2;
        } else {
            g_s[0] += (self.rows[0] - first[0]) * inv_sig2;
        }
        g_sigma += -(d as f64) / sigma;

        // free-pose rows
        for (q, row) in self.rows.chunks_exact(d).skip(1).enumerate() {
            match st.poses[q] {
                Orientation::Spherical { theta, phi } => {
                    let (st_, ct) = (theta.sin(), theta.cos());
                    let (sp, cp) = (phi.sin(), phi.cos());
                    let g = [st_ * cp, st_ * sp, ct];
                    let dg_dt = [ct * cp, ct * sp, -st_];
                    let dg_dp = [-st_ * sp, st_ * cp, 0.0];
                    let mut acc_t = 0.0;
                    let mut acc_p = 0.0;
                    for j in 0..3 {
                        let r = row[j] - (st.bias[j] + st.scale[j] * g[j]);
                        value += base - 0.5 * r * r * inv_sig2;
                        let w = r * inv_sig2;
                        g_b[j] += w;
                        g_s[j] += w * g[j];
                        acc_t += w * st.scale[j] * dg_dt[j];
                        acc_p += w * st.scale[j] * dg_dp[j];
                        g_sigma += r * r * inv_sig2 / sigma;
                    }
                    g_sigma += -3.0 / sigma;
                    grad[self.theta_offset() + q] = acc_t;
                    grad[self.phi_offset() + q] = acc_p;
                }
                Orientation::Planar { phi } => {
                    let (sp, cp) = (phi.sin(), phi.cos());
                    let g = [cp, sp];
                    let dg_dp = [-sp, cp];
                    let mut acc_p = 0.0;
                    for j in 0..2 {
                        let r = row[j] - (st.bias[j] + st.scale[j] * g[j]);
                        value += base - 0.5 * r * r * inv_sig2;
                        let w = r * inv_sig2;
                        g_b[j] += w;
                        g_s[j] += w * g[j];
                        acc_p += w * st.scale[j] * dg_dp[j];
                        g_sigma += r * r * inv_sig2 / sigma;
                    }
                    g_sigma += -2.0 / sigma;
                    grad[self.phi_offset() + q] = acc_p;
                }
            }
        }

        // priors
        value += self.log_prior(&st);
        for j in 0..d {
            g_b[j] += -st.bias[j] / (self.priors.bias_sd * self.priors.bias_sd);
            let ls = st.scale[j].ln();
            g_s[j] += (-1.0
                - (ls - self.priors.scale_log_mu)
                    / (self.priors.scale_log_sd * self.priors.scale_log_sd))
                / st.scale[j];
        }
        g_sigma += -sigma / (self.priors.sigma_sd * self.priors.sigma_sd);

        // chain rule into unconstrained coordinates
        let transforms = self.space.transforms();
        for j in 0..d {
            grad[j] = g_b[j];
            grad[d + j] = g_s[j] * st.scale[j] + 1.0;
        }
        grad[2 * d] = g_sigma * sigma + 1.0;
        for q in 0..(d - 1) * (self.n - 1) {
            let k = 2 * d + 1 + q;
            let t = transforms[k];
            grad[k] = grad[k] * t.jacobian(u[k]) + t.log_jacobian_grad(u[k]);
        }

        value + log_jac
    }

    /// Data-derived starting point: biases 0, scales 1, noise 0.1, free
    /// poses pointing along their measurement rows (clamped off the angle
    /// boundaries).
    fn init_point(&self) -> Vec<f64> {
        let d = self.dim;
        let mut c = vec![0.0; self.space.len()];
        for j in 0..d {
            c[d + j] = 1.0;
        }
        c[2 * d] = 0.1;
        for (q, row) in self.rows.chunks_exact(d).skip(1).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d == 3 {
                let theta = if norm > 1e-12 {
                    (row[2] / norm).clamp(-1.0, 1.0).acos()
                } else {
                    ANGLE_INIT_CLAMP
                };
                c[self.theta_offset() + q] =
                    theta.clamp(ANGLE_INIT_CLAMP, PI - ANGLE_INIT_CLAMP);
            }
            let mut phi = row[1].atan2(row[0]);
            if phi < 0.0 {
                phi += TWO_PI;
            }
            c[self.phi_offset() + q] = phi.clamp(ANGLE_INIT_CLAMP, TWO_PI - ANGLE_INIT_CLAMP);
        }
        self.space.unconstrain(&c)
    }
}

impl Target for FullModel {
    fn dim(&self) -> usize {
        self.space.len()
    }

    fn logp_and_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_and_grad(position, grad)
    }

    fn report_names(&self) -> Vec<String> {
        self.space.names().to_vec()
    }

    fn report_len(&self) -> usize {
        self.space.len()
    }

    fn report(&self, position: &[f64], out: &mut [f64]) {
        self.space.constrain_into(position, out);
    }

    fn default_init(&self) -> Vec<f64> {
        self.init_point()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward_mean, grid_orientations, simulate, CalibrationParams};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dataset3(n_sq: usize, sigma: f64, seed: u64) -> (CalibrationParams, Dataset) {
        let p = CalibrationParams::new(vec![0.1, -0.2, 0.3], vec![0.9, 1.0, 1.1], sigma).unwrap();
        let d = simulate(&p, &grid_orientations(n_sq).unwrap(), seed).unwrap();
        (p, d)
    }

    #[test]
    fn parameter_count_grows_with_rows() {
        let (_, d) = dataset3(9, 0.02, 1);
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        assert_eq!(m.param_space().len(), 7 + 2 * 8);
    }

    #[test]
    fn single_row_is_rejected() {
        let d = Dataset::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            FullModel::new(&d, PriorSpec::default()),
            Err(PosteriorError::TooFewRows { .. })
        ));
    }

    #[test]
    fn size_warning_above_thirty_rows() {
        let p = CalibrationParams::new(vec![0.0; 3], vec![1.0; 3], 0.02).unwrap();
        let many = simulate(&p, &crate::model::random_orientations(3, 31, 4).unwrap(), 4).unwrap();
        let m = FullModel::new(&many, PriorSpec::default()).unwrap();
        assert!(m.size_warning().is_some());
        let (_, d16) = dataset3(16, 0.02, 2);
        assert!(FullModel::new(&d16, PriorSpec::default()).unwrap().size_warning().is_none());
    }

    #[test]
    fn gradient_matches_finite_differences_3d() {
        let (_, d) = dataset3(4, 0.05, 3);
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let k = m.param_space().len();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u: Vec<f64> =
                (0..k).map(|_| 0.5 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let mut grad = vec![0.0; k];
            m.log_posterior_and_grad(&u, &mut grad);
            for i in 0..k {
                let h = 1e-6;
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (m.log_posterior(&up) - m.log_posterior(&dn)) / (2.0 * h);
                assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_2d() {
        let p = CalibrationParams::new(vec![0.1, -0.05], vec![0.9, 1.1], 0.05).unwrap();
        let os = crate::model::circle_orientations(6, crate::model::AngleCoverage::FullCircle)
            .unwrap();
        let d = simulate(&p, &os, 6).unwrap();
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let k = m.param_space().len();
        assert_eq!(k, 5 + 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let u: Vec<f64> =
                (0..k).map(|_| 0.5 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let mut grad = vec![0.0; k];
            m.log_posterior_and_grad(&u, &mut grad);
            for i in 0..k {
                let h = 1e-6;
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (m.log_posterior(&up) - m.log_posterior(&dn)) / (2.0 * h);
                assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn row_permutation_with_matching_angles_leaves_posterior_unchanged() {
        // rows 2..n are exchangeable when their pose parameters move with them
        let (_, d) = dataset3(9, 0.02, 11);
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let k = m.param_space().len();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u: Vec<f64> =
            (0..k).map(|_| 0.4 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let before = m.log_posterior(&u);

        // swap data rows 2 and 5 (free poses q=1 and q=4) and their angles
        let mut rows: Vec<Vec<f64>> = d.rows().map(|r| r.to_vec()).collect();
        rows.swap(2, 5);
        let d2 = Dataset::from_rows(&rows).unwrap();
        let m2 = FullModel::new(&d2, PriorSpec::default()).unwrap();
        let mut u2 = u.clone();
        u2.swap(7 + 1, 7 + 4); // theta entries
        u2.swap(7 + 8 + 1, 7 + 8 + 4); // phi entries
        let after = m2.log_posterior(&u2);
        assert_abs_diff_eq!(before, after, epsilon = 1e-12 * before.abs().max(1.0));
    }

    #[test]
    fn noiseless_truth_leaves_only_prior_gradient_on_biases() {
        // first pose exactly at the pinned pose, no noise, state at the truth
        let p = CalibrationParams::new(vec![0.1, -0.2, 0.3], vec![0.9, 1.0, 1.1], 0.0).unwrap();
        let mut os = vec![Orientation::spherical(0.0, 0.0).unwrap()];
        os.extend(grid_orientations(4).unwrap());
        let d = simulate(&p, &os, 1).unwrap();
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();

        let sigma_val = 0.05;
        let st = FullState {
            bias: p.bias().to_vec(),
            scale: p.scale().to_vec(),
            sigma: sigma_val,
            poses: os[1..].to_vec(),
        };
        let u = m.unconstrain(&st);
        let k = m.param_space().len();
        let mut grad = vec![0.0; k];
        m.log_posterior_and_grad(&u, &mut grad);

        let priors = PriorSpec::default();
        for j in 0..3 {
            let prior_only = -p.bias()[j] / (priors.bias_sd * priors.bias_sd);
            assert_abs_diff_eq!(grad[j], prior_only, epsilon = 1e-9);
        }

        // sigma coordinate: likelihood part of the gradient collapses to -n*d
        let n_d = (d.len() * 3) as f64;
        let sigma_prior_and_jac = -sigma_val * sigma_val / (priors.sigma_sd * priors.sigma_sd) + 1.0;
        assert_abs_diff_eq!(grad[6] - sigma_prior_and_jac, -n_d, epsilon = 1e-9);
    }

    #[test]
    fn pinned_row_mean_matches_pole_response() {
        let (p, _) = dataset3(4, 0.0, 1);
        let pole = Orientation::spherical(0.0, 0.0).unwrap();
        let want = forward_mean(&p, &pole).unwrap();
        let d = simulate(&p, &[pole, Orientation::spherical(1.0, 1.0).unwrap()], 1).unwrap();
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let st = FullState {
            bias: p.bias().to_vec(),
            scale: p.scale().to_vec(),
            sigma: 0.01,
            poses: vec![Orientation::spherical(1.0, 1.0).unwrap()],
        };
        assert_eq!(m.pinned_mean(&st), want);
    }

    #[test]
    fn posterior_is_finite_on_random_interior_states() {
        let (_, d) = dataset3(9, 0.02, 17);
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let k = m.param_space().len();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut grad = vec![0.0; k];
        for _ in 0..10_000 {
            let u: Vec<f64> =
                (0..k).map(|_| 0.7 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let v = m.log_posterior_and_grad(&u, &mut grad);
            assert!(v.is_finite());
            assert!(grad.iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn init_clamps_pole_aligned_rows_off_the_boundary() {
        let rows = vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let d = Dataset::from_rows(&rows).unwrap();
        let m = FullModel::new(&d, PriorSpec::default()).unwrap();
        let (st, _) = m.constrain(&m.init_point());
        match st.poses[0] {
            Orientation::Spherical { theta, .. } => {
                assert_abs_diff_eq!(theta, ANGLE_INIT_CLAMP, epsilon = 1e-9);
            }
            _ => panic!(),
        }
        match st.poses[1] {
            Orientation::Spherical { theta, phi } => {
                assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
                assert_abs_diff_eq!(phi, ANGLE_INIT_CLAMP, epsilon = 1e-9);
            }
            _ => panic!(),
        }
    }
}
