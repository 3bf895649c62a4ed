//! Diagonal mass-matrix estimation from warmup draws.
//!
//! The inverse mass is the regularized per-coordinate variance of the
//! positions collected in an adaptation window; windows start short and
//! double in length so late (better-mixed) draws dominate the final
//! estimate.

/// Welford accumulator over unconstrained positions.
#[derive(Debug, Clone)]
pub(crate) struct RunningVariance {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: u64,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0 }
    }

    pub fn reset(&mut self) {
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
        self.count = 0;
    }

    pub fn add(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for k in 0..x.len() {
            let delta = x[k] - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (x[k] - self.mean[k]);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Variance estimate shrunk toward a small diagonal, so a short or
    /// degenerate window cannot produce a singular metric.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        let shrink = n / (n + 5.0);
        self.m2
            .iter()
            .map(|&m2| {
                let var = if self.count > 1 { m2 / (n - 1.0) } else { 0.0 };
                (shrink * var + (1.0 - shrink) * 1e-3).max(1e-10)
            })
            .collect()
    }
}

/// Warmup iteration layout: a step-size-only opening, doubling variance
/// windows in the middle, and a step-size-only closing stretch.
#[derive(Debug, Clone)]
pub(crate) struct WarmupSchedule {
    /// Iterations before this index only adapt the step size.
    pub init_end: usize,
    /// Absolute iteration indices at which a variance window closes.
    pub window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        let init_end = ((warmup as f64 * 0.15).round() as usize).max(1);
        let term_len = ((warmup as f64 * 0.10).round() as usize).max(1);
        let term_start = warmup.saturating_sub(term_len).max(init_end);
        let mut window_ends = Vec::new();
        let mut pos = init_end;
        let mut size = 25usize;
        while pos < term_start {
            let mut w = size.min(term_start - pos);
            // absorb a remainder too short to form the next doubled window
            if term_start - pos < 3 * size {
                w = term_start - pos;
            }
            pos += w;
            window_ends.push(pos);
            size *= 2;
        }
        WarmupSchedule { init_end, window_ends }
    }

    pub fn in_variance_phase(&self, iter: usize) -> bool {
        iter >= self.init_end && self.window_ends.last().is_some_and(|&e| iter < e)
    }

    pub fn window_closes_at(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn welford_matches_two_pass_variance() {
        let xs = [[1.0, -2.0], [2.0, 0.5], [4.0, 0.0], [0.5, 3.0], [1.5, 1.0]];
        let mut rv = RunningVariance::new(2);
        for x in &xs {
            rv.add(x);
        }
        for k in 0..2 {
            let mean: f64 = xs.iter().map(|x| x[k]).sum::<f64>() / 5.0;
            let var: f64 = xs.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / 4.0;
            let shrink = 5.0 / 10.0;
            let want = shrink * var + (1.0 - shrink) * 1e-3;
            assert_abs_diff_eq!(rv.regularized_variance()[k], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn schedule_partitions_the_warmup() {
        for warmup in [100usize, 500, 1000, 2000, 10_000] {
            let s = WarmupSchedule::new(warmup);
            assert!(s.init_end > 0);
            let mut prev = s.init_end;
            for &e in &s.window_ends {
                assert!(e > prev, "windows must advance");
                prev = e;
            }
            assert!(prev <= warmup);
            // closing stretch exists
            assert!(warmup - prev >= warmup / 20);
        }
    }

    #[test]
    fn hundred_iteration_schedule_matches_hand_layout() {
        let s = WarmupSchedule::new(100);
        assert_eq!(s.init_end, 15);
        assert_eq!(s.window_ends, vec![40, 90]);
    }
}
