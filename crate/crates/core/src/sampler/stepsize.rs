//! Dual-averaging step-size adaptation (Nesterov-style primal averaging,
//! as popularized by the no-U-turn sampler paper).
//!
//! During warmup the noisy iterate `current_step` is used for sampling and
//! the smoothed iterate `adapted_step` is carried along; at the end of
//! warmup the smoothed value is frozen.

#[derive(Debug, Clone)]
pub(crate) struct DualAverage {
    log_step: f64,
    log_step_adapted: f64,
    hbar: f64,
    mu: f64,
    count: u64,
    target_accept: f64,
}

// standard constants: shrinkage target 10x the initial step, decay 0.75,
// stabilization offset 10, regularization scale 0.05
const K_DECAY: f64 = 0.75;
const T0: f64 = 10.0;
const GAMMA: f64 = 0.05;

impl DualAverage {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAverage {
            log_step: initial_step.ln(),
            log_step_adapted: initial_step.ln(),
            hbar: 0.0,
            mu: (10.0 * initial_step).ln(),
            count: 1,
            target_accept,
        }
    }

    pub fn advance(&mut self, accept_stat: f64) {
        let w = 1.0 / (self.count as f64 + T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target_accept - accept_stat);
        self.log_step = self.mu - self.hbar * (self.count as f64).sqrt() / GAMMA;
        let mk = (self.count as f64).powf(-K_DECAY);
        self.log_step_adapted = mk * self.log_step + (1.0 - mk) * self.log_step_adapted;
        self.count += 1;
    }

    /// Noisy iterate used while warmup is still running.
    pub fn current_step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Smoothed iterate frozen for the sampling phase.
    pub fn adapted_step(&self) -> f64 {
        self.log_step_adapted.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinks_step_when_rejecting() {
        let mut da = DualAverage::new(0.5, 0.8);
        for _ in 0..50 {
            da.advance(0.0);
        }
        assert!(da.current_step() < 0.5);
        assert!(da.adapted_step() < 0.5);
    }

    #[test]
    fn grows_step_when_accepting_everything() {
        let mut da = DualAverage::new(0.01, 0.8);
        for _ in 0..50 {
            da.advance(1.0);
        }
        assert!(da.current_step() > 0.01);
    }

    #[test]
    fn settles_near_target_acceptance_on_a_synthetic_response() {
        // accept probability falls with step size like exp(-4 * step); the
        // fixed point of the adaptation should produce accept ~ 0.8
        let mut da = DualAverage::new(1.0, 0.8);
        let mut last_accept = 0.0;
        for _ in 0..2000 {
            let accept = (-4.0 * da.current_step()).exp();
            da.advance(accept);
            last_accept = accept;
        }
        assert!((last_accept - 0.8).abs() < 0.05, "accept settled at {last_accept}");
    }
}
