//! Changes of variables between the sampler's unconstrained coordinates and
//! the constrained values a model actually uses.
//!
//! Every free parameter carries one [`Transform`]. Densities evaluated in the
//! unconstrained space pick up the log absolute Jacobian determinant of the
//! map, and gradients pick up the corresponding chain-rule factors. All three
//! pieces (value, Jacobian, Jacobian gradient) are closed-form here.

/// Elementwise map from an unconstrained coordinate to a constrained value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Unbounded parameter, passed through unchanged.
    Identity,
    /// Positive parameter via exponentiation: `c = exp(u)`.
    Positive,
    /// Bounded parameter via a scaled logistic map onto `(lo, hi)`.
    Interval { lo: f64, hi: f64 },
}

impl Transform {
    /// Bounded transform onto `(lo, hi)`. Requires `lo < hi`, both finite.
    pub fn interval(lo: f64, hi: f64) -> Self {
        assert!(lo.is_finite() && hi.is_finite() && lo < hi, "invalid interval bounds");
        Transform::Interval { lo, hi }
    }

    /// Map an unconstrained coordinate to its constrained value.
    ///
    /// An `Interval` value always lands strictly inside `(lo, hi)`: once the
    /// logistic saturates in floating point (|u| beyond ~37) the result is
    /// clamped to the nearest representable interior value, so downstream
    /// code may rely on the open bounds for any finite `u`.
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Positive => u.exp(),
            Transform::Interval { lo, hi } => {
                // keep the logistic away from 0 and 1 so the image stays
                // strictly interior and invertible in floating point
                let s = sigmoid(u).clamp(f64::MIN_POSITIVE, 1.0 - 0.5 * f64::EPSILON);
                (lo + (hi - lo) * s).clamp(lo.next_up(), hi.next_down())
            }
        }
    }

    /// Inverse of [`constrain`](Self::constrain) for interior points.
    pub fn unconstrain(self, c: f64) -> f64 {
        match self {
            Transform::Identity => c,
            Transform::Positive => c.ln(),
            Transform::Interval { lo, hi } => {
                let t = (c - lo) / (hi - lo);
                t.ln() - (1.0 - t).ln()
            }
        }
    }

    /// `dc/du` at the unconstrained point.
    pub fn jacobian(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Positive => u.exp(),
            Transform::Interval { lo, hi } => {
                let s = sigmoid(u);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }

    /// `log |dc/du|` at the unconstrained point.
    pub fn log_jacobian(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Positive => u,
            // log(hi-lo) + log s(u) + log s(-u), written via softplus for stability
            Transform::Interval { lo, hi } => (hi - lo).ln() - softplus(-u) - softplus(u),
        }
    }

    /// `d/du log |dc/du|`.
    pub fn log_jacobian_grad(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Positive => 1.0,
            Transform::Interval { .. } => 1.0 - 2.0 * sigmoid(u),
        }
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(x))`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() }
}

/// Names and transforms for a model's free parameters, in sampling order.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    names: Vec<String>,
    transforms: Vec<Transform>,
}

impl ParamSpace {
    pub fn new(names: Vec<String>, transforms: Vec<Transform>) -> Self {
        assert_eq!(names.len(), transforms.len(), "one transform per parameter");
        ParamSpace { names, transforms }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// Map unconstrained coordinates into `out`; returns the total log-Jacobian.
    pub fn constrain_into(&self, u: &[f64], out: &mut [f64]) -> f64 {
        assert_eq!(u.len(), self.len());
        assert_eq!(out.len(), self.len());
        let mut log_jac = 0.0;
        for (k, t) in self.transforms.iter().enumerate() {
            out[k] = t.constrain(u[k]);
            log_jac += t.log_jacobian(u[k]);
        }
        log_jac
    }

    /// Constrained values and total log-Jacobian at `u`.
    pub fn constrain(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; self.len()];
        let log_jac = self.constrain_into(u, &mut out);
        (out, log_jac)
    }

    /// Unconstrained coordinates of interior constrained values.
    pub fn unconstrain(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.len());
        self.transforms.iter().zip(c).map(|(t, &v)| t.unconstrain(v)).collect()
    }

    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.len());
        self.transforms.iter().zip(u).map(|(t, &v)| t.log_jacobian(v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    fn finite_diff(t: Transform, u: f64, h: f64) -> f64 {
        (t.constrain(u + h) - t.constrain(u - h)) / (2.0 * h)
    }

    #[test]
    fn positive_map_basics() {
        let t = Transform::Positive;
        assert_abs_diff_eq!(t.constrain(0.0), 1.0);
        assert_abs_diff_eq!(t.log_jacobian(-2.5), -2.5);
        assert_abs_diff_eq!(t.unconstrain(t.constrain(0.7)), 0.7, epsilon = 1e-14);
    }

    #[test]
    fn interval_map_hits_midpoint_at_zero() {
        let t = Transform::interval(0.0, PI);
        assert_abs_diff_eq!(t.constrain(0.0), PI / 2.0, epsilon = 1e-15);
        assert!(t.constrain(40.0) < PI);
        assert!(t.constrain(-40.0) > 0.0);
    }

    #[test]
    fn interval_map_never_reaches_its_endpoints() {
        for t in [Transform::interval(0.0, PI), Transform::interval(0.0, 2.0 * PI)] {
            let Transform::Interval { lo, hi } = t else { unreachable!() };
            for u in [-1e6, -50.0, -37.0, 37.0, 50.0, 1e6] {
                let c = t.constrain(u);
                assert!(c > lo && c < hi, "constrain({u}) = {c} escaped ({lo}, {hi})");
                assert!(t.unconstrain(c).is_finite());
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let maps = [
            Transform::Identity,
            Transform::Positive,
            Transform::interval(0.0, PI),
            Transform::interval(0.0, 2.0 * PI),
        ];
        for t in maps {
            for k in -6..=6 {
                let u = 0.77 * k as f64;
                let fd = finite_diff(t, u, 1e-6);
                let an = t.jacobian(u);
                assert_abs_diff_eq!(an, fd, epsilon = 1e-7 * (1.0 + an.abs()));
                assert_abs_diff_eq!(t.log_jacobian(u), an.ln(), epsilon = 1e-12);
                let lj_fd = (t.log_jacobian(u + 1e-6) - t.log_jacobian(u - 1e-6)) / 2e-6;
                assert_abs_diff_eq!(t.log_jacobian_grad(u), lj_fd, epsilon = 1e-7);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Domain stops at |u| = 8: inverting the logistic map amplifies
        // rounding by roughly eps * e^|u|, so a 1e-12 relative bound is only
        // meaningful while that factor stays below it.
        #[test]
        fn round_trip_from_unconstrained(u in -8.0f64..8.0) {
            for t in [Transform::Positive, Transform::interval(0.0, PI), Transform::interval(0.0, 2.0 * PI)] {
                let back = t.unconstrain(t.constrain(u));
                prop_assert!((back - u).abs() < 1e-12 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn round_trip_from_constrained(frac in 1e-6f64..(1.0 - 1e-6)) {
            let t = Transform::interval(0.0, 2.0 * PI);
            let c = frac * 2.0 * PI;
            let back = t.constrain(t.unconstrain(c));
            prop_assert!((back - c).abs() < 1e-12);
        }
    }

    #[test]
    fn param_space_accumulates_jacobian() {
        let space = ParamSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Transform::Identity, Transform::Positive, Transform::interval(0.0, 1.0)],
        );
        let u = [0.3, -1.2, 0.9];
        let (c, lj) = space.constrain(&u);
        assert_abs_diff_eq!(c[0], 0.3);
        assert_abs_diff_eq!(c[1], (-1.2f64).exp());
        let expected = Transform::Positive.log_jacobian(-1.2)
            + Transform::interval(0.0, 1.0).log_jacobian(0.9);
        assert_abs_diff_eq!(lj, expected, epsilon = 1e-14);
        let back = space.unconstrain(&c);
        for (x, y) in back.iter().zip(u.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
