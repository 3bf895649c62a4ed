//! Dense quasi-Newton minimizer used by the point-estimate fitter.
//!
//! Plain BFGS with an Armijo backtracking line search. Problem sizes here
//! are tiny (under ten coordinates), so the dense inverse-Hessian update is
//! the simple and fast choice.

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const GRAD_TOL: f64 = 1e-8;
const REL_DECREASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the initial evaluation and each accepted step.
    pub trace: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimize `f` starting from `x0`. `f` fills the gradient slice and
/// returns the objective. Convergence means a small gradient or a
/// negligible relative decrease; hitting `max_iter` or a failed line
/// search leaves `converged` false unless the gradient is already small.
pub(crate) fn minimize_bfgs<F>(mut f: F, x0: &[f64], max_iter: usize) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    // inverse Hessian approximation, row-major, starts as identity
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        let gnorm = norm(&g);
        if gnorm < GRAD_TOL {
            converged = true;
            break;
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // stale curvature produced an ascent direction; fall back to steepest descent
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -gnorm * gnorm;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + alpha * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + ARMIJO_C * alpha * slope {
                accepted = true;
                iterations += 1;
                let rel_decrease = (fx - f_new) / fx.abs().max(1e-12);
                // BFGS update of the inverse Hessian
                let sy: f64 = (0..n).map(|i| (x_new[i] - x[i]) * (g_new[i] - g[i])).sum();
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    let rho = 1.0 / sy;
                    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
                    let hy: Vec<f64> =
                        (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
                    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
                    for i in 0..n {
                        for j in 0..n {
                            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                                + rho * rho * yhy * s[i] * s[j]
                                + rho * s[i] * s[j];
                        }
                    }
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                trace.push(fx);
                if rel_decrease < REL_DECREASE_TOL {
                    converged = true;
                }
                break;
            }
            alpha *= BACKTRACK;
        }
        if !accepted {
            converged = norm(&g) < 1e-6 || fx.abs() < 1e-18;
            break;
        }
        if converged {
            break;
        }
    }
    let grad_norm = norm(&g);
    if grad_norm < GRAD_TOL {
        converged = true;
    }
    OptimResult { x, value: fx, grad_norm, iterations, converged, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_is_solved_exactly() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 20.0 * (x[1] + 2.0);
            (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2)
        };
        let r = minimize_bfgs(f, &[0.0, 0.0], 200);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-7, "x0 {}", r.x[0]);
        assert!((r.x[1] + 2.0).abs() < 1e-7, "x1 {}", r.x[1]);
    }

    #[test]
    fn rosenbrock_reaches_the_valley_floor() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize_bfgs(f, &[-1.2, 1.0], 500);
        assert!(r.converged, "grad norm {}", r.grad_norm);
        assert!((r.x[0] - 1.0).abs() < 1e-5);
        assert!((r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn trace_is_monotone_nonincreasing() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
            x[0] * x[0] + x[1] * x[1]
        };
        let r = minimize_bfgs(f, &[5.0, -7.0], 100);
        for pair in r.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
        assert_eq!(r.trace.len(), r.iterations + 1);
    }

    #[test]
    fn already_optimal_start_returns_immediately() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        let r = minimize_bfgs(f, &[0.0], 50);
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn non_finite_regions_are_backtracked_around() {
        // objective is NaN left of -1; the optimizer must stay on the valid side
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] < -1.0 {
                g[0] = f64::NAN;
                return f64::NAN;
            }
            g[0] = 2.0 * (x[0] + 0.5);
            (x[0] + 0.5).powi(2)
        };
        let r = minimize_bfgs(f, &[3.0], 100);
        assert!(r.converged);
        assert!((r.x[0] + 0.5).abs() < 1e-6);
    }
}
