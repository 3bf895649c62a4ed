//! Forward model of a triaxial (or planar) MEMS accelerometer at rest: each
//! axis reports the local gravity component through a per-axis scale factor
//! and bias, plus isotropic Gaussian noise. Gravity has unit length by
//! construction, so every stationary pose is a point on the unit sphere
//! (unit circle in the planar case).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension must be 2 or 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("scale component {index} must be positive, got {value}")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("noise level must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("angle out of range: {name} = {value}")]
    AngleOutOfRange { name: &'static str, value: f64 },
    #[error("dataset must contain at least one measurement")]
    EmptyDataset,
    #[error("row {row} has {got} components, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("grid size {0} is not a positive perfect square")]
    NotAPerfectSquare(usize),
    #[error("need at least one orientation")]
    NoOrientations,
    #[error("pose labels must be present on all rows or none")]
    PartialLabels,
    #[error("label vector has {got} entries for {expected} rows")]
    LabelLength { expected: usize, got: usize },
}

const TWO_PI: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// Stationary pose of the sensor, identified with the direction of gravity
/// in sensor coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    /// Planar pose: `g = (cos phi, sin phi)`.
    Planar { phi: f64 },
    /// Spherical pose with polar angle `theta` from the z-axis and azimuth
    /// `phi`: `g = (sin theta cos phi, sin theta sin phi, cos theta)`.
    Spherical { theta: f64, phi: f64 },
}

impl Orientation {
    /// Planar pose; `phi` must lie in `[0, 2*pi)`.
    pub fn planar(phi: f64) -> Result<Self, ModelError> {
        if !phi.is_finite() || !(0.0..TWO_PI).contains(&phi) {
            return Err(ModelError::AngleOutOfRange { name: "phi", value: phi });
        }
        Ok(Orientation::Planar { phi })
    }

    /// Spherical pose; `theta` in `[0, pi]`, `phi` in `[0, 2*pi)`.
    pub fn spherical(theta: f64, phi: f64) -> Result<Self, ModelError> {
        if !theta.is_finite() || !(0.0..=PI).contains(&theta) {
            return Err(ModelError::AngleOutOfRange { name: "theta", value: theta });
        }
        if !phi.is_finite() || !(0.0..TWO_PI).contains(&phi) {
            return Err(ModelError::AngleOutOfRange { name: "phi", value: phi });
        }
        Ok(Orientation::Spherical { theta, phi })
    }

    pub fn dim(&self) -> usize {
        match self {
            Orientation::Planar { .. } => 2,
            Orientation::Spherical { .. } => 3,
        }
    }

    /// Unit gravity vector of this pose.
    pub fn gravity(&self) -> Vec<f64> {
        match *self {
            Orientation::Planar { phi } => vec![phi.cos(), phi.sin()],
            Orientation::Spherical { theta, phi } => {
                let st = theta.sin();
                vec![st * phi.cos(), st * phi.sin(), theta.cos()]
            }
        }
    }
}

/// Per-axis scale factors and biases plus the isotropic noise level.
///
/// `sigma == 0` is allowed and means noiseless simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    bias: Vec<f64>,
    scale: Vec<f64>,
    sigma: f64,
}

impl CalibrationParams {
    pub fn new(bias: Vec<f64>, scale: Vec<f64>, sigma: f64) -> Result<Self, ModelError> {
        let d = bias.len();
        if d != 2 && d != 3 {
            return Err(ModelError::UnsupportedDimension(d));
        }
        if scale.len() != d {
            return Err(ModelError::DimensionMismatch { expected: d, got: scale.len() });
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { context: "bias" });
        }
        for (i, &s) in scale.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(ModelError::NonPositiveScale { index: i, value: s });
            }
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(ModelError::NegativeNoise(sigma));
        }
        Ok(CalibrationParams { bias, scale, sigma })
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// One accelerometer reading with optional provenance labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub a: Vec<f64>,
    pub pose_id: Option<i64>,
    pub unit_id: Option<String>,
}

impl Measurement {
    pub fn new(a: Vec<f64>) -> Self {
        Measurement { a, pose_id: None, unit_id: None }
    }
}

/// Ordered collection of measurements of one fixed dimension.
///
/// Rows are stored flat (row-major) so the likelihood loops stay cache
/// friendly. Pose and unit labels are either present for every row or absent
/// entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<f64>,
    pose_ids: Option<Vec<i64>>,
    unit_ids: Option<Vec<String>>,
}

impl Dataset {
    /// Build from a flat row-major buffer of `n * dim` finite values.
    pub fn from_flat(dim: usize, rows: Vec<f64>) -> Result<Self, ModelError> {
        if dim != 2 && dim != 3 {
            return Err(ModelError::UnsupportedDimension(dim));
        }
        if rows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        if rows.len() % dim != 0 {
            return Err(ModelError::RaggedRow {
                row: rows.len() / dim,
                expected: dim,
                got: rows.len() % dim,
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { context: "measurement" });
        }
        Ok(Dataset { dim, rows, pose_ids: None, unit_ids: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let dim = rows[0].len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(ModelError::RaggedRow { row: i, expected: dim, got: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Dataset::from_flat(dim, flat)
    }

    pub fn from_measurements(ms: &[Measurement]) -> Result<Self, ModelError> {
        if ms.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let dim = ms[0].a.len();
        let mut flat = Vec::with_capacity(ms.len() * dim);
        for (i, m) in ms.iter().enumerate() {
            if m.a.len() != dim {
                return Err(ModelError::RaggedRow { row: i, expected: dim, got: m.a.len() });
            }
            flat.extend_from_slice(&m.a);
        }
        let mut d = Dataset::from_flat(dim, flat)?;
        let n_pose = ms.iter().filter(|m| m.pose_id.is_some()).count();
        if n_pose == ms.len() {
            d.pose_ids = Some(ms.iter().map(|m| m.pose_id.unwrap()).collect());
        } else if n_pose != 0 {
            return Err(ModelError::PartialLabels);
        }
        let n_unit = ms.iter().filter(|m| m.unit_id.is_some()).count();
        if n_unit == ms.len() {
            d.unit_ids = Some(ms.iter().map(|m| m.unit_id.clone().unwrap()).collect());
        } else if n_unit != 0 {
            return Err(ModelError::PartialLabels);
        }
        Ok(d)
    }

    /// Attach one pose label per row.
    pub fn with_pose_ids(mut self, pose_ids: Vec<i64>) -> Result<Self, ModelError> {
        if pose_ids.len() != self.len() {
            return Err(ModelError::LabelLength { expected: self.len(), got: pose_ids.len() });
        }
        self.pose_ids = Some(pose_ids);
        Ok(self)
    }

    /// Attach one unit label per row.
    pub fn with_unit_ids(mut self, unit_ids: Vec<String>) -> Result<Self, ModelError> {
        if unit_ids.len() != self.len() {
            return Err(ModelError::LabelLength { expected: self.len(), got: unit_ids.len() });
        }
        self.unit_ids = Some(unit_ids);
        Ok(self)
    }

    /// Number of rows. Always at least one.
    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }

    pub(crate) fn flat(&self) -> &[f64] {
        &self.rows
    }

    pub fn pose_ids(&self) -> Option<&[i64]> {
        self.pose_ids.as_deref()
    }

    pub fn unit_ids(&self) -> Option<&[String]> {
        self.unit_ids.as_deref()
    }

    pub fn measurement(&self, i: usize) -> Measurement {
        Measurement {
            a: self.row(i).to_vec(),
            pose_id: self.pose_ids.as_ref().map(|p| p[i]),
            unit_id: self.unit_ids.as_ref().map(|u| u[i].clone()),
        }
    }

    /// Split into per-unit datasets, in order of first appearance. A dataset
    /// without unit labels yields a single `"default"` group.
    pub fn split_by_unit(&self) -> Vec<(String, Dataset)> {
        let Some(units) = &self.unit_ids else {
            return vec![("default".to_string(), self.clone())];
        };
        let mut order: Vec<&String> = Vec::new();
        for u in units {
            if !order.contains(&u) {
                order.push(u);
            }
        }
        order
            .into_iter()
            .map(|u| {
                let idx: Vec<usize> =
                    (0..self.len()).filter(|&i| &units[i] == u).collect();
                let mut flat = Vec::with_capacity(idx.len() * self.dim);
                for &i in &idx {
                    flat.extend_from_slice(self.row(i));
                }
                let mut d = Dataset::from_flat(self.dim, flat).expect("subset is non-empty");
                if let Some(poses) = &self.pose_ids {
                    d.pose_ids = Some(idx.iter().map(|&i| poses[i]).collect());
                }
                d.unit_ids = Some(vec![u.clone(); idx.len()]);
                (u.clone(), d)
            })
            .collect()
    }

    /// Average rows sharing a pose label into one row per pose, in order of
    /// first appearance. Without pose labels this is a plain copy.
    pub fn average_by_pose(&self) -> Dataset {
        let Some(poses) = &self.pose_ids else {
            return self.clone();
        };
        let mut order: Vec<i64> = Vec::new();
        for &p in poses {
            if !order.contains(&p) {
                order.push(p);
            }
        }
        let mut flat = Vec::with_capacity(order.len() * self.dim);
        let mut units = self.unit_ids.as_ref().map(|_| Vec::with_capacity(order.len()));
        for &p in &order {
            let idx: Vec<usize> = (0..self.len()).filter(|&i| poses[i] == p).collect();
            let mut mean = vec![0.0; self.dim];
            for &i in &idx {
                for (m, v) in mean.iter_mut().zip(self.row(i)) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= idx.len() as f64;
            }
            flat.extend_from_slice(&mean);
            if let (Some(us), Some(all)) = (&mut units, &self.unit_ids) {
                us.push(all[idx[0]].clone());
            }
        }
        let mut d = Dataset::from_flat(self.dim, flat).expect("at least one pose");
        d.pose_ids = Some(order);
        d.unit_ids = units;
        d
    }
}

/// Noise-free sensor response to a pose: `a_j = s_j * g_j + b_j`.
pub fn forward_mean(p: &CalibrationParams, o: &Orientation) -> Result<Vec<f64>, ModelError> {
    if o.dim() != p.dim() {
        return Err(ModelError::DimensionMismatch { expected: p.dim(), got: o.dim() });
    }
    let g = o.gravity();
    Ok(p.bias()
        .iter()
        .zip(p.scale())
        .zip(&g)
        .map(|((&b, &s), &gj)| s * gj + b)
        .collect())
}

/// Draw one noisy measurement per orientation.
///
/// Deterministic given `seed`: noise is generated row by row, axis by axis,
/// from a counter-based generator. With `sigma == 0` the rows equal the
/// forward means exactly. Rows are labelled with pose ids `1..=n`.
pub fn simulate(
    p: &CalibrationParams,
    orientations: &[Orientation],
    seed: u64,
) -> Result<Dataset, ModelError> {
    if orientations.is_empty() {
        return Err(ModelError::NoOrientations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(orientations.len() * p.dim());
    for o in orientations {
        let mean = forward_mean(p, o)?;
        if p.sigma() == 0.0 {
            flat.extend_from_slice(&mean);
        } else {
            for m in mean {
                let eps: f64 = rng.sample(StandardNormal);
                flat.push(m + p.sigma() * eps);
            }
        }
    }
    let d = Dataset::from_flat(p.dim(), flat)?;
    d.with_pose_ids((1..=orientations.len() as i64).collect())
}

/// Regular pose grid on the sphere: `sqrt(n)` evenly spaced polar angles in
/// `[0.1, pi - 0.1]` crossed with `sqrt(n)` azimuths in `[0.1, 2*pi - 0.1]`,
/// polar angle varying slowest. `n` must be a positive perfect square.
pub fn grid_orientations(n_total: usize) -> Result<Vec<Orientation>, ModelError> {
    if n_total == 0 {
        return Err(ModelError::NotAPerfectSquare(0));
    }
    let k = (n_total as f64).sqrt().round() as usize;
    if k * k != n_total {
        return Err(ModelError::NotAPerfectSquare(n_total));
    }
    let thetas = linspace(0.1, PI - 0.1, k);
    let phis = linspace(0.1, TWO_PI - 0.1, k);
    let mut out = Vec::with_capacity(n_total);
    for &theta in &thetas {
        for &phi in &phis {
            out.push(Orientation::spherical(theta, phi)?);
        }
    }
    Ok(out)
}

/// Angular coverage of a planar pose sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleCoverage {
    /// `n` angles evenly spaced over the whole circle, starting at zero.
    FullCircle,
    /// `n` angles evenly spaced over `[0, pi]` inclusive.
    HalfCircle,
}

/// Evenly spaced planar poses. The first angle is always zero, matching the
/// pose the full model pins down.
pub fn circle_orientations(n: usize, coverage: AngleCoverage) -> Result<Vec<Orientation>, ModelError> {
    if n == 0 {
        return Err(ModelError::NoOrientations);
    }
    let phis: Vec<f64> = match coverage {
        AngleCoverage::FullCircle => (0..n).map(|k| TWO_PI * k as f64 / n as f64).collect(),
        AngleCoverage::HalfCircle => linspace(0.0, PI, n),
    };
    phis.into_iter().map(Orientation::planar).collect()
}

/// Poses drawn uniformly in the angle parametrization; useful when the
/// desired count is not a perfect square.
pub fn random_orientations(dim: usize, n: usize, seed: u64) -> Result<Vec<Orientation>, ModelError> {
    if n == 0 {
        return Err(ModelError::NoOrientations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match dim {
            2 => Orientation::planar(rng.random::<f64>() * TWO_PI),
            3 => {
                let theta = rng.random::<f64>() * PI;
                let phi = rng.random::<f64>() * TWO_PI;
                Orientation::spherical(theta, phi)
            }
            d => Err(ModelError::UnsupportedDimension(d)),
        })
        .collect()
}

/// Back-project a measurement through the inverse sensor map:
/// `g_hat_j = (a_j - b_j) / s_j`.
pub fn estimate_g(p: &CalibrationParams, a: &[f64]) -> Result<Vec<f64>, ModelError> {
    if a.len() != p.dim() {
        return Err(ModelError::DimensionMismatch { expected: p.dim(), got: a.len() });
    }
    Ok(a.iter()
        .zip(p.bias())
        .zip(p.scale())
        .map(|((&aj, &bj), &sj)| (aj - bj) / sj)
        .collect())
}

/// Apply a fitted calibration to every row: `a_cal = (a - b) / s` per axis.
/// Labels are preserved.
pub fn calibrate(d: &Dataset, bias: &[f64], scale: &[f64]) -> Result<Dataset, ModelError> {
    if bias.len() != d.dim() {
        return Err(ModelError::DimensionMismatch { expected: d.dim(), got: bias.len() });
    }
    if scale.len() != d.dim() {
        return Err(ModelError::DimensionMismatch { expected: d.dim(), got: scale.len() });
    }
    if bias.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { context: "bias" });
    }
    for (i, &s) in scale.iter().enumerate() {
        if !s.is_finite() || s <= 0.0 {
            return Err(ModelError::NonPositiveScale { index: i, value: s });
        }
    }
    let mut flat = Vec::with_capacity(d.len() * d.dim());
    for row in d.rows() {
        for j in 0..d.dim() {
            flat.push((row[j] - bias[j]) / scale[j]);
        }
    }
    let mut out = Dataset::from_flat(d.dim(), flat)?;
    out.pose_ids = d.pose_ids.clone();
    out.unit_ids = d.unit_ids.clone();
    Ok(out)
}

/// Euclidean norm of every row. For calibrated data these concentrate
/// around one.
pub fn radial_norms(d: &Dataset) -> Vec<f64> {
    d.rows()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// `k` evenly spaced points from `lo` to `hi` inclusive; a single point
/// degenerates to `lo`.
fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}
