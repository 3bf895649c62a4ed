//! Per-chain starting points.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{InitStrategy, SamplerConfig, SamplerError, Target};

/// Jitter half-width applied around the model's default starting point.
const JITTER: f64 = 0.01;

/// Build one unconstrained starting point per chain.
///
/// With [`InitStrategy::Jitter`] every chain gets the model's default point
/// plus independent uniform jitter of `±0.01` per coordinate (all chains
/// draw from one dedicated random stream of the run seed, so chain count
/// changes do not reshuffle earlier chains' inits). Points where the target
/// or its gradient is non-finite are re-jittered up to 100 times.
pub fn make_init<T: Target + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
) -> Result<Vec<Vec<f64>>, SamplerError> {
    let dim = target.dim();
    match &cfg.init {
        InitStrategy::Given(points) => {
            if points.len() != cfg.chains || points.iter().any(|p| p.len() != dim) {
                return Err(SamplerError::BadInitList { chains: cfg.chains, dim });
            }
            let mut grad = vec![0.0; dim];
            for (chain, p) in points.iter().enumerate() {
                let v = target.logp_and_grad(p, &mut grad);
                if !v.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(SamplerError::InitializationFailed { chain });
                }
            }
            Ok(points.clone())
        }
        InitStrategy::Jitter => {
            let base = target.default_init();
            assert_eq!(base.len(), dim, "default init must match target dimension");
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(0);
            let mut grad = vec![0.0; dim];
            (0..cfg.chains)
                .map(|chain| {
                    for _ in 0..100 {
                        let point: Vec<f64> = base
                            .iter()
                            .map(|&b| b + JITTER * (2.0 * rng.random::<f64>() - 1.0))
                            .collect();
                        let v = target.logp_and_grad(&point, &mut grad);
                        if v.is_finite() && grad.iter().all(|g| g.is_finite()) {
                            return Ok(point);
                        }
                    }
                    Err(SamplerError::InitializationFailed { chain })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::testing::StdGaussian;

    fn cfg(chains: usize) -> SamplerConfig {
        SamplerConfig { chains, seed: 42, ..SamplerConfig::default() }
    }

    #[test]
    fn jittered_inits_are_distinct_and_near_default() {
        let t = StdGaussian { dim: 3 };
        let inits = make_init(&t, &cfg(4)).unwrap();
        assert_eq!(inits.len(), 4);
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(inits[i], inits[j]);
            }
            for &v in &inits[i] {
                assert!(v.abs() <= JITTER);
            }
        }
    }

    #[test]
    fn jitter_is_deterministic_in_the_seed() {
        let t = StdGaussian { dim: 5 };
        assert_eq!(make_init(&t, &cfg(4)).unwrap(), make_init(&t, &cfg(4)).unwrap());
    }

    #[test]
    fn given_points_are_validated() {
        let t = StdGaussian { dim: 2 };
        let mut c = cfg(2);
        c.init = InitStrategy::Given(vec![vec![0.0; 2]]);
        assert!(matches!(make_init(&t, &c), Err(SamplerError::BadInitList { .. })));
        c.init = InitStrategy::Given(vec![vec![0.0; 2], vec![f64::NAN; 2]]);
        assert!(matches!(make_init(&t, &c), Err(SamplerError::InitializationFailed { chain: 1 })));
    }
}
