//! Convergence diagnostics and posterior summaries.
//!
//! Mixing is judged with the split potential scale reduction factor and an
//! autocorrelation-based effective sample size. Both operate on draws in
//! reported (constrained) coordinates. A run is declared converged when
//! every parameter's split R-hat is below a threshold and its effective
//! sample size exceeds a fraction of the nominal draw count.

use crate::sampler::PosteriorDraws;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} chains, got {got}")]
    TooFewChains { need: usize, got: usize },
    #[error("need at least {need} draws per chain, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("chains have unequal lengths")]
    RaggedChains,
    #[error("all draws are a single constant; scale reduction is undefined")]
    ConstantChains,
    #[error("draws contain non-finite values")]
    NonFinite,
}

fn check_rectangular(chains: &[Vec<f64>], min_len: usize) -> Result<(usize, usize), DiagnosticsError> {
    if chains.len() < 2 {
        return Err(DiagnosticsError::TooFewChains { need: 2, got: chains.len() });
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticsError::RaggedChains);
    }
    if n < min_len {
        return Err(DiagnosticsError::TooFewSamples { need: min_len, got: n });
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite);
    }
    Ok((chains.len(), n))
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator.
fn var_of(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Within-chain variance W, between-chain variance B, and the pooled
/// variance estimate used by both diagnostics.
fn variance_components(chains: &[Vec<f64>]) -> (f64, f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean_of(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| var_of(c, mu))
        .sum::<f64>()
        / m;
    let grand = mean_of(&means);
    let b = n / (m - 1.0) * means.iter().map(|&mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let var_plus = (n - 1.0) / n * w + b / n;
    (w, b, var_plus)
}

/// Split potential scale reduction factor.
///
/// Each chain is halved (the middle draw of an odd-length chain is
/// dropped) and the classic R-hat is computed over the resulting half
/// chains, so within-chain drift shows up as apparent non-mixing. Returns
/// positive infinity when chains are internally constant but disagree, and
/// an error when every draw is one constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    let (_, n) = check_rectangular(chains, 4)?;
    let half = n / 2;
    let split: Vec<Vec<f64>> = chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()])
        .collect();
    let (w, b, var_plus) = variance_components(&split);
    if w == 0.0 {
        return if b > 0.0 { Ok(f64::INFINITY) } else { Err(DiagnosticsError::ConstantChains) };
    }
    Ok((var_plus / w).sqrt())
}

/// Autocovariance of `xs` at `lag`, normalized by the full length.
fn autocov(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n - lag {
        acc += (xs[i] - mean) * (xs[i + lag] - mean);
    }
    acc / n as f64
}

/// Effective sample size from pooled-chain autocorrelations.
///
/// Correlation at each lag is estimated from the average per-chain
/// autocovariance relative to the pooled variance. Lags are summed in
/// Geyer pairs: accumulation stops at the first pair with a non-positive
/// sum, and pair sums are forced non-increasing before summation. The
/// resulting autocorrelation time is floored at `1 / log10(total draws)`,
/// which lets antithetic chains report more effective draws than actual
/// draws without the estimate exploding.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    let (m, n) = check_rectangular(chains, 4)?;
    let (w, b, var_plus) = variance_components(chains);
    if var_plus == 0.0 || (w == 0.0 && b == 0.0) {
        return Err(DiagnosticsError::ConstantChains);
    }
    let means: Vec<f64> = chains.iter().map(|c| mean_of(c)).collect();
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // Geyer initial positive monotone sequence over lag pairs (2k, 2k+1)
    let mut pair_sums = Vec::new();
    let mut k = 0;
    while 2 * k + 1 < n {
        let even = if k == 0 { 1.0 } else { rho(2 * k) };
        let odd = rho(2 * k + 1);
        let sum = even + odd;
        if sum <= 0.0 {
            break;
        }
        pair_sums.push(sum);
        k += 1;
    }
    for i in 1..pair_sums.len() {
        pair_sums[i] = pair_sums[i].min(pair_sums[i - 1]);
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

/// Linear-interpolation quantile of pre-sorted data (the convention used
/// by most statistics environments). `q` is clamped to [0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Convergence criteria for the run verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    /// Largest acceptable split R-hat.
    pub rhat_max: f64,
    /// Required effective sample size as a fraction of total draws.
    pub ess_frac: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { rhat_max: 1.10, ess_frac: 0.5 }
    }
}

/// Per-parameter posterior summary. The diagnostics are `None` when they
/// are undefined for the draws at hand (a parameter that never moved).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Whole-run summary: per-parameter statistics plus the convergence
/// verdict and the reasons for a failing one.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub params: Vec<ParamSummary>,
    pub chains: usize,
    pub samples_per_chain: usize,
    pub divergences: usize,
    pub verdict: bool,
    pub reasons: Vec<String>,
}

impl SummaryTable {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Summarize draws and judge convergence against `thresholds`.
///
/// Needs at least two chains and eight draws per chain so the split
/// diagnostics are meaningful. A parameter with undefined diagnostics
/// (constant across all draws) fails the verdict explicitly rather than
/// being skipped.
pub fn summarize(
    draws: &PosteriorDraws,
    thresholds: &Thresholds,
) -> Result<SummaryTable, DiagnosticsError> {
    if draws.chains() < 2 {
        return Err(DiagnosticsError::TooFewChains { need: 2, got: draws.chains() });
    }
    if draws.samples_per_chain() < 8 {
        return Err(DiagnosticsError::TooFewSamples { need: 8, got: draws.samples_per_chain() });
    }
    let total = draws.total_draws() as f64;
    let min_ess = thresholds.ess_frac * total;
    let mut params = Vec::with_capacity(draws.n_params());
    let mut reasons = Vec::new();
    let mut verdict = true;
    for (idx, name) in draws.names().iter().enumerate() {
        let mut pooled = draws.pooled(idx);
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(DiagnosticsError::NonFinite);
        }
        let mean = mean_of(&pooled);
        let sd = var_of(&pooled, mean).sqrt();
        pooled.sort_by(f64::total_cmp);
        let chains = draws.param_chains(idx);
        let (rhat, ess_val) = match split_rhat(&chains) {
            Ok(r) => (Some(r), ess(&chains).ok()),
            Err(DiagnosticsError::ConstantChains) => (None, None),
            Err(e) => return Err(e),
        };
        match rhat {
            Some(r) if r > thresholds.rhat_max => {
                verdict = false;
                reasons.push(format!("{name}: split R-hat {r:.4} exceeds {:.2}", thresholds.rhat_max));
            }
            Some(_) => {}
            None => {
                verdict = false;
                reasons.push(format!("{name}: chains never moved; R-hat undefined"));
            }
        }
        match ess_val {
            Some(e) if e <= min_ess => {
                verdict = false;
                reasons.push(format!("{name}: effective sample size {e:.1} below {min_ess:.1}"));
            }
            _ => {}
        }
        params.push(ParamSummary {
            name: name.clone(),
            mean,
            sd,
            median: quantile(&pooled, 0.5),
            q05: quantile(&pooled, 0.05),
            q95: quantile(&pooled, 0.95),
            rhat,
            ess: ess_val,
        });
    }
    Ok(SummaryTable {
        params,
        chains: draws.chains(),
        samples_per_chain: draws.samples_per_chain(),
        divergences: draws.total_divergences(),
        verdict,
        reasons,
    })
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.prec$}"),
        Some(_) => "inf".to_string(),
        None => "n/a".to_string(),
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "chains: {}  samples per chain: {}  total draws: {}",
            self.chains,
            self.samples_per_chain,
            self.chains * self.samples_per_chain
        )?;
        writeln!(f, "divergent transitions: {}", self.divergences)?;
        writeln!(f, "verdict: {}", if self.verdict { "converged" } else { "not converged" })?;
        for reason in &self.reasons {
            writeln!(f, "  - {reason}")?;
        }
        writeln!(
            f,
            "{:<12} {:>13} {:>13} {:>13} {:>13} {:>13} {:>8} {:>9}",
            "parameter", "mean", "sd", "median", "q05", "q95", "rhat", "ess"
        )?;
        for p in &self.params {
            writeln!(
                f,
                "{:<12} {:>13.6} {:>13.6} {:>13.6} {:>13.6} {:>13.6} {:>8} {:>9}",
                p.name,
                p.mean,
                p.sd,
                p.median,
                p.q05,
                p.q95,
                fmt_opt(p.rhat, 4),
                fmt_opt(p.ess, 1)
            )?;
        }
        Ok(())
    }
}
