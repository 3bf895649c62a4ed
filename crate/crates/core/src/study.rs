//! Seeded simulation studies: parameter recovery, interval width versus
//! sample size, and credible-interval coverage.
//!
//! A study is a deterministic function of its spec: every cell derives its
//! data and sampler seeds from the master seed, cells run in parallel, and
//! results are assembled in cell order, so reruns reproduce each other
//! exactly (wall times excepted).

use crate::fit::{fit_model, FitOptions, FitOutcome, ModelKind};
use crate::model::{
    circle_orientations, grid_orientations, simulate, AngleCoverage, CalibrationParams, Dataset,
    ModelError,
};
use crate::priors::PriorSpec;
use crate::sampler::SamplerConfig;
use rayon::prelude::*;
use std::time::Instant;
use thiserror::Error;

/// Default row cap for joint-model cells; above it the orientation block
/// makes mixing unreliable.
pub const FULL_MODEL_DEFAULT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    /// Two-axis study contrasting the joint and radial models under full
    /// and restricted angle coverage.
    Sim2d,
    /// Three-axis study of interval width as the pose grid grows.
    Sim3d,
    /// Repeated simulate-fit cycles measuring credible-interval coverage.
    Coverage,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Sim2d => "sim2d",
            StudyKind::Sim3d => "sim3d",
            StudyKind::Coverage => "coverage",
        }
    }
}

impl std::str::FromStr for StudyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim2d" => Ok(StudyKind::Sim2d),
            "sim3d" => Ok(StudyKind::Sim3d),
            "coverage" => Ok(StudyKind::Coverage),
            other => Err(format!("unknown study '{other}'; expected sim2d, sim3d, or coverage")),
        }
    }
}

/// Full description of a study run.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub true_params: CalibrationParams,
    /// Dataset sizes, one cell group per entry. Perfect squares when the
    /// study places poses on the spherical grid.
    pub n_list: Vec<usize>,
    /// Angle coverage for two-axis studies; ignored elsewhere.
    pub angle_coverage: AngleCoverage,
    /// Simulate-fit repetitions for the coverage study.
    pub replications: usize,
    /// Joint-model cells are skipped for datasets larger than this.
    pub full_model_max_n: usize,
    /// Per-cell sampler settings; the seed field is overridden per cell.
    pub sampler: SamplerConfig,
    pub seed: u64,
}

fn desk_sampler() -> SamplerConfig {
    SamplerConfig { warmup: 2000, samples: 1000, ..SamplerConfig::default() }
}

impl StudySpec {
    /// Two-axis study: 10 poses on the chosen arc, bias (0.1, -0.05),
    /// scales (0.9, 1.1), noise 0.02.
    pub fn sim2d(angle_coverage: AngleCoverage) -> Self {
        StudySpec {
            kind: StudyKind::Sim2d,
            true_params: CalibrationParams::new(vec![0.1, -0.05], vec![0.9, 1.1], 0.02)
                .expect("constants are valid"),
            n_list: vec![10],
            angle_coverage,
            replications: 1,
            full_model_max_n: FULL_MODEL_DEFAULT_MAX_N,
            sampler: desk_sampler(),
            seed: 1,
        }
    }

    /// Three-axis study: pose grids of increasing size, bias
    /// (0.1, -0.2, 0.3), scales (0.9, 1.0, 1.1), noise 0.02.
    pub fn sim3d() -> Self {
        StudySpec {
            kind: StudyKind::Sim3d,
            true_params: CalibrationParams::new(vec![0.1, -0.2, 0.3], vec![0.9, 1.0, 1.1], 0.02)
                .expect("constants are valid"),
            n_list: vec![9, 16, 25, 100, 400],
            angle_coverage: AngleCoverage::FullCircle,
            replications: 1,
            full_model_max_n: FULL_MODEL_DEFAULT_MAX_N,
            sampler: desk_sampler(),
            seed: 1,
        }
    }

    /// Coverage study: 50 repetitions of simulate-fit at 100 poses with
    /// the three-axis truth.
    pub fn coverage() -> Self {
        StudySpec { kind: StudyKind::Coverage, n_list: vec![100], replications: 50, ..Self::sim3d() }
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("study needs {need}-axis true parameters, got {got}")]
    WrongDimension { need: usize, got: usize },
    #[error("coverage study needs at least 20 replications, got {got}")]
    TooFewReplications { got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One summary row: a study cell crossed with one model parameter.
/// `truth` is present for parameters whose generating value is known.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub cell: String,
    pub model: String,
    pub n: usize,
    pub parameter: String,
    pub truth: Option<f64>,
    pub median: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub converged: bool,
    /// Wall-clock fit time. Informational; excluded from deterministic
    /// serialized output by default.
    pub wall_secs: f64,
}

impl StudyRow {
    /// Width of the 90% credible interval.
    pub fn ci_width(&self) -> f64 {
        self.q95 - self.q05
    }

    /// Whether the 90% credible interval contains the generating value.
    pub fn covers_truth(&self) -> Option<bool> {
        self.truth.map(|t| self.q05 <= t && t <= self.q95)
    }
}

/// Empirical coverage of the 90% credible interval for one parameter
/// within one cell group, over the replications that fit successfully.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub cell: String,
    pub parameter: String,
    pub replications: usize,
    pub covered: usize,
    pub rate: f64,
}

/// All rows produced by a study, plus per-cell failures. A failed cell
/// contributes to `failures` instead of aborting the rest.
#[derive(Debug, Clone, Default)]
pub struct StudyOutcome {
    pub rows: Vec<StudyRow>,
    pub coverage: Vec<CoverageRow>,
    pub failures: Vec<String>,
}

impl StudyOutcome {
    pub fn cell_rows<'a>(&'a self, cell: &'a str) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows.iter().filter(move |r| r.cell == cell)
    }

    pub fn find(&self, cell: &str, model: &str, parameter: &str) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.cell == cell && r.model == model && r.parameter == parameter)
    }
}

/// Stateless seed derivation: mixes a master seed with a purpose tag so
/// every cell owns an independent, reproducible stream.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn coverage_name(c: AngleCoverage) -> &'static str {
    match c {
        AngleCoverage::FullCircle => "full-circle",
        AngleCoverage::HalfCircle => "half-circle",
    }
}

/// Map a reported parameter to its generating value, where one exists.
/// Component names are 1-based, matching the models' reporting.
fn truth_of(model: ModelKind, name: &str, p: &CalibrationParams) -> Option<f64> {
    let indexed = |prefix: &str| -> Option<usize> {
        name.strip_prefix(prefix)
            .and_then(|rest| rest.strip_suffix(']'))
            .and_then(|idx| idx.parse().ok())
            .filter(|&j| j >= 1 && j <= p.dim())
    };
    if let Some(j) = indexed("b[") {
        return Some(p.bias()[j - 1]);
    }
    if let Some(j) = indexed("s[") {
        return Some(p.scale()[j - 1]);
    }
    if let Some(j) = indexed("sinv[") {
        return Some(1.0 / p.scale()[j - 1]);
    }
    // the radial model's noise is the residual of the reduced model, not
    // the axis noise, so it has no generating value to compare against
    (name == "sigma" && model == ModelKind::Full).then(|| p.sigma())
}

fn is_pose_param(name: &str) -> bool {
    name.starts_with("theta[") || name.starts_with("phi[")
}

fn rows_from_fit(
    cell: &str,
    model: ModelKind,
    n: usize,
    truth: &CalibrationParams,
    out: &FitOutcome,
    wall_secs: f64,
) -> Vec<StudyRow> {
    out.summary
        .params
        .iter()
        .filter(|p| !is_pose_param(&p.name))
        .map(|p| StudyRow {
            cell: cell.to_string(),
            model: model.name().to_string(),
            n,
            parameter: p.name.clone(),
            truth: truth_of(model, &p.name, truth),
            median: p.median,
            sd: p.sd,
            q05: p.q05,
            q95: p.q95,
            rhat: p.rhat,
            ess: p.ess,
            converged: out.summary.verdict,
            wall_secs,
        })
        .collect()
}

struct CellPlan {
    name: String,
    model: ModelKind,
    n: usize,
    data: Dataset,
    fit_seed: u64,
}

/// Run all cells in parallel; collect rows in plan order and failures as
/// strings so one bad cell cannot sink the study.
fn run_cells(spec: &StudySpec, plans: &[CellPlan]) -> (Vec<StudyRow>, Vec<String>, Vec<bool>) {
    let results: Vec<Result<Vec<StudyRow>, String>> = plans
        .par_iter()
        .map(|cell| {
            let mut sampler = spec.sampler.clone();
            sampler.seed = cell.fit_seed;
            let opts = FitOptions {
                priors: PriorSpec::default(),
                sampler,
                thresholds: Default::default(),
            };
            let start = Instant::now();
            fit_model(cell.model, &cell.data, &opts)
                .map(|out| {
                    rows_from_fit(
                        &cell.name,
                        cell.model,
                        cell.n,
                        &spec.true_params,
                        &out,
                        start.elapsed().as_secs_f64(),
                    )
                })
                .map_err(|e| format!("{} ({}): {e}", cell.name, cell.model.name()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut succeeded = vec![false; plans.len()];
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(r) => {
                succeeded[i] = true;
                rows.extend(r);
            }
            Err(e) => failures.push(e),
        }
    }
    (rows, failures, succeeded)
}

/// Dispatch on the spec's study kind.
pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome, StudyError> {
    match spec.kind {
        StudyKind::Sim2d => run_sim2d(spec),
        StudyKind::Sim3d => run_sim3d(spec),
        StudyKind::Coverage => run_coverage(spec),
    }
}

/// Two-axis study: for each dataset size, simulate poses on the spec's
/// arc and fit both models to the same dataset.
pub fn run_sim2d(spec: &StudySpec) -> Result<StudyOutcome, StudyError> {
    if spec.true_params.dim() != 2 {
        return Err(StudyError::WrongDimension { need: 2, got: spec.true_params.dim() });
    }
    let arc = coverage_name(spec.angle_coverage);
    let mut plans = Vec::new();
    for (i, &n) in spec.n_list.iter().enumerate() {
        let poses = circle_orientations(n, spec.angle_coverage)?;
        let data = simulate(&spec.true_params, &poses, derive_seed(spec.seed, 100 + i as u64))?;
        let name = format!("{arc}/n{n}");
        for (m, model) in [ModelKind::Full, ModelKind::Odr].into_iter().enumerate() {
            if model == ModelKind::Full && n > spec.full_model_max_n {
                continue;
            }
            plans.push(CellPlan {
                name: name.clone(),
                model,
                n,
                data: data.clone(),
                fit_seed: derive_seed(spec.seed, (2 * i + m) as u64 + 1),
            });
        }
    }
    let (rows, failures, _) = run_cells(spec, &plans);
    Ok(StudyOutcome { rows, failures, coverage: Vec::new() })
}

/// Three-axis study: radial-model fits across the whole grid-size list,
/// joint-model fits up to the configured cap.
pub fn run_sim3d(spec: &StudySpec) -> Result<StudyOutcome, StudyError> {
    if spec.true_params.dim() != 3 {
        return Err(StudyError::WrongDimension { need: 3, got: spec.true_params.dim() });
    }
    let mut plans = Vec::new();
    for (i, &n) in spec.n_list.iter().enumerate() {
        let poses = grid_orientations(n)?;
        let data = simulate(&spec.true_params, &poses, derive_seed(spec.seed, 100 + i as u64))?;
        let name = format!("n{n}");
        for (m, model) in [ModelKind::Odr, ModelKind::Full].into_iter().enumerate() {
            if model == ModelKind::Full && n > spec.full_model_max_n {
                continue;
            }
            plans.push(CellPlan {
                name: name.clone(),
                model,
                n,
                data: data.clone(),
                fit_seed: derive_seed(spec.seed, (2 * i + m) as u64 + 1),
            });
        }
    }
    let (rows, failures, _) = run_cells(spec, &plans);
    Ok(StudyOutcome { rows, failures, coverage: Vec::new() })
}

/// Coverage study: repeat simulate-fit with fresh seeds and report, per
/// parameter with a known truth, how often the 90% interval contains it.
/// Failed replications are recorded and excluded from the denominator.
pub fn run_coverage(spec: &StudySpec) -> Result<StudyOutcome, StudyError> {
    if spec.true_params.dim() != 3 {
        return Err(StudyError::WrongDimension { need: 3, got: spec.true_params.dim() });
    }
    if spec.replications < 20 {
        return Err(StudyError::TooFewReplications { got: spec.replications });
    }
    let mut plans = Vec::new();
    for (i, &n) in spec.n_list.iter().enumerate() {
        let poses = grid_orientations(n)?;
        for r in 0..spec.replications {
            let tag = (r * spec.n_list.len() + i) as u64;
            let data = simulate(&spec.true_params, &poses, derive_seed(spec.seed, 1000 + 2 * tag))?;
            plans.push(CellPlan {
                name: format!("n{n}/rep{r:02}"),
                model: ModelKind::Odr,
                n,
                data,
                fit_seed: derive_seed(spec.seed, 1001 + 2 * tag),
            });
        }
    }
    let (rows, failures, _) = run_cells(spec, &plans);

    let mut coverage = Vec::new();
    let d = spec.true_params.dim();
    for &n in &spec.n_list {
        let group = format!("n{n}/");
        let params: Vec<String> = (1..=d)
            .map(|j| format!("b[{j}]"))
            .chain((1..=d).map(|j| format!("s[{j}]")))
            .collect();
        for param in params {
            let mut reps = 0;
            let mut covered = 0;
            for row in rows.iter().filter(|r| r.cell.starts_with(&group) && r.parameter == param) {
                reps += 1;
                if row.covers_truth() == Some(true) {
                    covered += 1;
                }
            }
            let rate = if reps > 0 { covered as f64 / reps as f64 } else { f64::NAN };
            coverage.push(CoverageRow {
                cell: format!("n{n}"),
                parameter: param,
                replications: reps,
                covered,
                rate,
            });
        }
    }
    Ok(StudyOutcome { rows, coverage, failures })
}
