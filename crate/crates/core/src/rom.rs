//! POD surrogate with one scalar regressor per modal coefficient.
//!
//! Three regressor families are available: Gaussian processes and two
//! baselines (inverse-distance "linear" interpolation and a Gaussian RBF
//! interpolant). GPR and RBF regress each coefficient about its training
//! mean, so a constant coefficient is reproduced everywhere.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::gpr::{fit_gpr, GprError, GprModel, HyperSearch};
use crate::pod::{fit_pod, PodBasis, PodError};

#[derive(Debug, Error, PartialEq)]
pub enum RomError {
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error("coefficient {coefficient}: {source}")]
    Gpr { coefficient: usize, source: GprError },
    #[error("linear interpolation needs at least {needed} affinely independent samples, got {available}")]
    TooFewSamples { needed: usize, available: usize },
    #[error("RBF system is singular")]
    SingularRbf,
    #[error("invalid training set: {0}")]
    TrainingSet(String),
    #[error("expected a parameter vector of length {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("truth field of sample {sample} has zero norm")]
    ZeroTruth { sample: usize },
    #[error("mode count {modes} exceeds {available} training samples")]
    ModeCount { modes: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegressorKind {
    Gpr,
    Linear,
    Rbf,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 3] = [RegressorKind::Gpr, RegressorKind::Linear, RegressorKind::Rbf];

    pub fn as_str(self) -> &'static str {
        match self {
            RegressorKind::Gpr => "gpr",
            RegressorKind::Linear => "linear",
            RegressorKind::Rbf => "rbf",
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegressorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gpr" => Ok(RegressorKind::Gpr),
            "linear" => Ok(RegressorKind::Linear),
            "rbf" => Ok(RegressorKind::Rbf),
            other => Err(format!("unknown regressor kind `{other}`")),
        }
    }
}

/// Parameter/field pairs with a train/test split.
///
/// `outputs` holds one field per column, on the reference mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<Vec<f64>>,
    outputs: DMatrix<f64>,
    train: Vec<usize>,
    test: Vec<usize>,
    bounds: Option<Vec<(f64, f64)>>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: DMatrix<f64>, train: Vec<usize>, test: Vec<usize>) -> Result<Self, RomError> {
        let n = inputs.len();
        if outputs.ncols() != n {
            return Err(RomError::TrainingSet(format!("{n} inputs but {} fields", outputs.ncols())));
        }
        if let Some(p) = inputs.first().map(Vec::len) {
            if inputs.iter().any(|x| x.len() != p) {
                return Err(RomError::TrainingSet("inputs have differing lengths".into()));
            }
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n {
                return Err(RomError::TrainingSet(format!("index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(RomError::TrainingSet(format!("index {i} appears twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(RomError::TrainingSet("split does not cover every sample".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            train,
            test,
            bounds: None,
        })
    }

    /// Shuffles the sample indices with `seed` and puts the first
    /// `round(train_fraction · n)` in the training split.
    pub fn with_seeded_split(inputs: Vec<Vec<f64>>, outputs: DMatrix<f64>, train_fraction: f64, seed: u64) -> Result<Self, RomError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(RomError::TrainingSet(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        let n = inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((train_fraction * n as f64).round() as usize).min(n);
        let test = order.split_off(cut);
        Self::new(inputs, outputs, order, test)
    }

    /// Parameter-space box used to flag extrapolating queries.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn field_len(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn field(&self, i: usize) -> DVector<f64> {
        self.outputs.column(i).into_owned()
    }

    /// The same set with only the first `k` training samples kept for
    /// training. Dropped samples are not moved to the test split.
    pub fn truncated_train(&self, k: usize) -> Result<Self, RomError> {
        if k == 0 || k > self.train.len() {
            return Err(RomError::TrainingSet(format!("cannot keep {k} of {} training samples", self.train.len())));
        }
        let keep: Vec<usize> = self.train[..k].to_vec();
        let mut inputs = Vec::with_capacity(k + self.test.len());
        let mut cols = Vec::with_capacity(k + self.test.len());
        for &i in keep.iter().chain(&self.test) {
            inputs.push(self.inputs[i].clone());
            cols.push(self.outputs.column(i).into_owned());
        }
        let outputs = DMatrix::from_columns(&cols);
        let n = inputs.len();
        Ok(Self {
            inputs,
            outputs,
            train: (0..k).collect(),
            test: (k..n).collect(),
            bounds: self.bounds.clone(),
        })
    }

    fn matrix_of(&self, idx: &[usize]) -> DMatrix<f64> {
        let p = self.input_dim();
        DMatrix::from_fn(idx.len(), p, |r, c| self.inputs[idx[r]][c])
    }

    fn fields_of(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.outputs.nrows(), idx.len(), |r, c| self.outputs[(r, idx[c])])
    }
}

/// Anything that maps a parameter vector to a reference-mesh field.
pub trait FieldSurrogate {
    fn predict_field(&self, mu: &[f64]) -> Result<DVector<f64>, RomError>;
}

/// Predicts the mean training field everywhere.
#[derive(Debug, Clone)]
pub struct MeanField {
    field: DVector<f64>,
}

impl MeanField {
    pub fn from_training(set: &TrainingSet) -> Self {
        Self {
            field: set.fields_of(&set.train).column_mean(),
        }
    }
}

impl FieldSurrogate for MeanField {
    fn predict_field(&self, _mu: &[f64]) -> Result<DVector<f64>, RomError> {
        Ok(self.field.clone())
    }
}

#[derive(Debug, Clone)]
enum Coefficients {
    Gpr(Vec<(GprModel, f64)>),
    /// Shepard interpolation; one row per coefficient.
    Linear(DMatrix<f64>),
    Rbf {
        weights: DMatrix<f64>,
        offsets: DVector<f64>,
        length_scale: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RomModel {
    basis: PodBasis,
    kind: RegressorKind,
    inputs: DMatrix<f64>,
    coefficients: Coefficients,
    bounds: Option<Vec<(f64, f64)>>,
}

/// Field and, for GPR, its diagonal variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RomPrediction {
    pub field: DVector<f64>,
    pub variance: Option<DVector<f64>>,
    pub out_of_bounds: bool,
}

fn median_distance(x: &DMatrix<f64>) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.nrows() {
        for j in i + 1..x.nrows() {
            let v = (x.row(i) - x.row(j)).norm();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

fn gaussian(r2: f64, length: f64) -> f64 {
    (-0.5 * r2 / (length * length)).exp()
}

fn affine_rank(x: &DMatrix<f64>) -> usize {
    if x.nrows() < 2 {
        return 0;
    }
    let base = x.row(0).into_owned();
    let diffs = DMatrix::from_fn(x.nrows() - 1, x.ncols(), |i, j| x[(i + 1, j)] - base[j]);
    let sv = diffs.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// Fits POD on the training fields and one regressor per coefficient.
pub fn train_rom(set: &TrainingSet, n_modes: usize, kind: RegressorKind) -> Result<RomModel, RomError> {
    let train = set.train_indices();
    if n_modes > train.len() {
        return Err(RomError::ModeCount {
            modes: n_modes,
            available: train.len(),
        });
    }
    let fields = set.fields_of(train);
    let basis = fit_pod(&fields, n_modes, false)?;
    let coeffs = basis.project_matrix(&fields)?;
    let inputs = set.matrix_of(train);
    let p = inputs.ncols();
    let coefficients = match kind {
        RegressorKind::Gpr => {
            let search = HyperSearch::default();
            let fitted: Result<Vec<_>, RomError> = (0..n_modes)
                .into_par_iter()
                .map(|j| {
                    let y = coeffs.row(j).transpose();
                    let offset = y.mean();
                    let centred = y.add_scalar(-offset);
                    fit_gpr(&inputs, &centred, &search)
                        .map(|m| (m, offset))
                        .map_err(|source| RomError::Gpr { coefficient: j, source })
                })
                .collect();
            Coefficients::Gpr(fitted?)
        }
        RegressorKind::Linear => {
            let available = affine_rank(&inputs) + usize::from(inputs.nrows() > 0);
            if available < p + 1 {
                return Err(RomError::TooFewSamples { needed: p + 1, available });
            }
            Coefficients::Linear(coeffs)
        }
        RegressorKind::Rbf => {
            let length_scale = median_distance(&inputs);
            let n = inputs.nrows();
            let phi = DMatrix::from_fn(n, n, |i, j| gaussian((inputs.row(i) - inputs.row(j)).norm_squared(), length_scale));
            let offsets = coeffs.column_mean();
            let mut rhs = coeffs.transpose();
            for mut row in rhs.row_iter_mut() {
                row -= offsets.transpose();
            }
            let weights = phi.lu().solve(&rhs).ok_or(RomError::SingularRbf)?;
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(RomError::SingularRbf);
            }
            Coefficients::Rbf {
                weights,
                offsets,
                length_scale,
            }
        }
    };
    Ok(RomModel {
        basis,
        kind,
        inputs,
        coefficients,
        bounds: set.bounds.clone(),
    })
}

impl RomModel {
    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn kind(&self) -> RegressorKind {
        self.kind
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn field_len(&self) -> usize {
        self.basis.dimension()
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn gpr_models(&self) -> Option<Vec<&GprModel>> {
        match &self.coefficients {
            Coefficients::Gpr(m) => Some(m.iter().map(|(g, _)| g).collect()),
            _ => None,
        }
    }

    fn out_of_bounds(&self, mu: &[f64]) -> bool {
        self.bounds
            .as_ref()
            .is_some_and(|b| mu.iter().zip(b).any(|(v, (lo, hi))| v < lo || v > hi))
    }

    /// Regressed coefficients and, for GPR, their marginal variances.
    pub fn coefficients(&self, mu: &[f64]) -> Result<(DVector<f64>, Option<DVector<f64>>), RomError> {
        if mu.len() != self.input_dim() {
            return Err(RomError::Dimension {
                expected: self.input_dim(),
                actual: mu.len(),
            });
        }
        let q = DMatrix::from_row_slice(1, mu.len(), mu);
        let k = self.n_modes();
        match &self.coefficients {
            Coefficients::Gpr(models) => {
                let mut c = DVector::zeros(k);
                let mut v = DVector::zeros(k);
                for (j, (m, offset)) in models.iter().enumerate() {
                    let (mean, var) = m.predict_marginal(&q).map_err(|source| RomError::Gpr { coefficient: j, source })?;
                    c[j] = mean[0] + offset;
                    v[j] = var[0].max(0.0);
                }
                Ok((c, Some(v)))
            }
            Coefficients::Linear(targets) => {
                let n = self.inputs.nrows();
                let dist: Vec<f64> = (0..n).map(|i| (self.inputs.row(i) - q.row(0)).norm()).collect();
                if let Some(hit) = dist.iter().position(|&d| d == 0.0) {
                    return Ok((targets.column(hit).into_owned(), None));
                }
                let w = DVector::from_iterator(n, dist.iter().map(|d| 1.0 / d));
                Ok((targets * &w / w.sum(), None))
            }
            Coefficients::Rbf {
                weights,
                offsets,
                length_scale,
            } => {
                let n = self.inputs.nrows();
                let phi = DVector::from_fn(n, |i, _| gaussian((self.inputs.row(i) - q.row(0)).norm_squared(), *length_scale));
                Ok((weights.tr_mul(&phi) + offsets, None))
            }
        }
    }

    /// Field at `mu`, with per-face variance for GPR. Queries outside the
    /// parameter box are evaluated and flagged.
    pub fn evaluate(&self, mu: &[f64]) -> Result<RomPrediction, RomError> {
        let out_of_bounds = self.out_of_bounds(mu);
        if out_of_bounds {
            log::warn!("ROM query {mu:?} lies outside the parameter box");
        }
        let (c, var) = self.coefficients(mu)?;
        let field = self.basis.reconstruct(&c)?;
        let variance = var.map(|v| {
            let u = self.basis.modes();
            DVector::from_fn(u.nrows(), |i, _| (0..u.ncols()).map(|j| u[(i, j)] * u[(i, j)] * v[j]).sum())
        });
        Ok(RomPrediction {
            field,
            variance,
            out_of_bounds,
        })
    }
}

impl FieldSurrogate for RomModel {
    fn predict_field(&self, mu: &[f64]) -> Result<DVector<f64>, RomError> {
        let (c, _) = self.coefficients(mu)?;
        Ok(self.basis.reconstruct(&c)?)
    }
}

/// Mean of `‖ŷ - y‖ / ‖y‖` over the test split.
pub fn test_error<S: FieldSurrogate + Sync + ?Sized>(surrogate: &S, set: &TrainingSet) -> Result<f64, RomError> {
    let test = set.test_indices();
    if test.is_empty() {
        return Err(RomError::EmptyTestSplit);
    }
    let errors: Result<Vec<f64>, RomError> = test
        .par_iter()
        .map(|&i| {
            let truth = set.outputs.column(i);
            let norm = truth.norm();
            if norm == 0.0 {
                return Err(RomError::ZeroTruth { sample: i });
            }
            let pred = surrogate.predict_field(&set.inputs[i])?;
            Ok((pred - truth).norm() / norm)
        })
        .collect();
    Ok(errors?.iter().sum::<f64>() / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub count: usize,
    pub kind: RegressorKind,
    pub mean_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const HEADER: &'static str = "count,kind,mean_rel_error";

    pub fn get(&self, count: usize, kind: RegressorKind) -> Option<f64> {
        self.rows.iter().find(|r| r.count == count && r.kind == kind).map(|r| r.mean_rel_error)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{:?}\n", r.count, r.kind, r.mean_rel_error));
        }
        s
    }
}

/// Test error for each (mode count, kind) with all training samples.
pub fn sensitivity_modes(set: &TrainingSet, mode_counts: &[usize], kinds: &[RegressorKind]) -> Result<ErrorTable, RomError> {
    let mut rows = Vec::new();
    for &count in mode_counts {
        for &kind in kinds {
            let rom = train_rom(set, count, kind)?;
            rows.push(ErrorRow {
                count,
                kind,
                mean_rel_error: test_error(&rom, set)?,
            });
        }
    }
    Ok(ErrorTable { rows })
}

/// Test error for each (training-sample count, kind), keeping the first `k`
/// training samples. The mode count is capped at `k`.
pub fn sensitivity_snapshots(
    set: &TrainingSet,
    snapshot_counts: &[usize],
    kinds: &[RegressorKind],
    n_modes: usize,
) -> Result<ErrorTable, RomError> {
    let mut rows = Vec::new();
    for &count in snapshot_counts {
        let sub = set.truncated_train(count)?;
        for &kind in kinds {
            let rom = train_rom(&sub, n_modes.min(count), kind)?;
            rows.push(ErrorRow {
                count,
                kind,
                mean_rel_error: test_error(&rom, &sub)?,
            });
        }
    }
    Ok(ErrorTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Smooth synthetic fields over a 6-D box.
    fn smooth_set(n: usize, faces: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(-0.08..0.08)).collect()).collect();
        let outputs = DMatrix::from_fn(faces, n, |f, j| {
            let x = &inputs[j];
            let t = f as f64 / faces as f64;
            1.0 + (3.0 * t).sin() * (4.0 * x[0] + 2.0 * x[1]) + (5.0 * t).cos() * (6.0 * x[2] * x[3] + x[4]) + t * (3.0 * x[5]).exp()
        });
        TrainingSet::with_seeded_split(inputs, outputs, 0.8, seed).unwrap()
    }

    fn constant_set(n: usize) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(-0.08..0.08)).collect()).collect();
        let outputs = DMatrix::from_fn(30, n, |f, _| 0.5 + f as f64 * 0.1);
        TrainingSet::with_seeded_split(inputs, outputs, 0.8, 1).unwrap()
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let set = smooth_set(100, 10, 1);
        assert_eq!(set.train_indices().len(), 80);
        assert_eq!(set.test_indices().len(), 20);
        let mut all: Vec<usize> = set.train_indices().iter().chain(set.test_indices()).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(TrainingSet::new(vec![vec![0.0]; 2], DMatrix::zeros(1, 2), vec![0], vec![0]).is_err());
        assert!(TrainingSet::new(vec![vec![0.0]; 2], DMatrix::zeros(1, 2), vec![0], vec![]).is_err());
    }

    #[test]
    fn identical_fields_reproduced_for_any_mu() {
        let set = constant_set(40);
        let truth = set.field(0);
        for kind in RegressorKind::ALL {
            let rom = train_rom(&set, 1, kind).unwrap();
            for mu in [[0.0; 6], [0.08; 6], [-0.5, 0.3, 0.0, 2.0, 0.0, 0.01]] {
                let f = rom.predict_field(&mu).unwrap();
                assert!((f - &truth).amax() < 1e-8, "{kind}");
            }
        }
    }

    #[test]
    fn gpr_interpolates_training_fields() {
        let set = smooth_set(40, 60, 2);
        let n = set.train_indices().len();
        let rom = train_rom(&set, n, RegressorKind::Gpr).unwrap();
        for &i in set.train_indices() {
            let truth = set.field(i);
            let pred = rom.evaluate(&set.inputs()[i]).unwrap();
            assert!((pred.field - &truth).norm() / truth.norm() < 1e-5);
            assert!(pred.variance.unwrap().amax() < 1e-6);
        }
    }

    #[test]
    fn truncation_error_matches_pod() {
        let set = smooth_set(40, 60, 4);
        let k = 5;
        let rom = train_rom(&set, k, RegressorKind::Gpr).unwrap();
        for &i in set.train_indices() {
            let y = set.field(i);
            let pod = rom.basis().reconstruct(&rom.basis().project_coeffs(&y).unwrap()).unwrap();
            let via_rom = rom.predict_field(&set.inputs()[i]).unwrap();
            assert!(((&via_rom - &y).norm() - (&pod - &y).norm()).abs() < 1e-5 * y.norm());
        }
    }

    #[test]
    fn rbf_interpolates_exactly() {
        let set = smooth_set(50, 40, 5);
        let rom = train_rom(&set, 40, RegressorKind::Rbf).unwrap();
        for &i in set.train_indices() {
            let y = set.field(i);
            let c = rom.basis().project_coeffs(&y).unwrap();
            let (pred, var) = rom.coefficients(&set.inputs()[i]).unwrap();
            assert!(var.is_none());
            assert!((pred - &c).norm() <= 1e-6 * c.norm());
        }
    }

    #[test]
    fn linear_midpoint_is_mean_of_neighbours() {
        // 1-D parameter, two samples.
        let outputs = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 2.0, 0.0]), DVector::from_vec(vec![3.0, -1.0, 4.0])]);
        let set = TrainingSet::new(vec![vec![0.0], vec![1.0]], outputs, vec![0, 1], vec![]).unwrap();
        let rom = train_rom(&set, 2, RegressorKind::Linear).unwrap();
        let basis = rom.basis();
        let c0 = basis.project_coeffs(&set.field(0)).unwrap();
        let c1 = basis.project_coeffs(&set.field(1)).unwrap();
        let (mid, _) = rom.coefficients(&[0.5]).unwrap();
        assert!((mid - (c0 + c1) * 0.5).amax() < 1e-14);
    }

    #[test]
    fn linear_needs_affinely_independent_samples() {
        let set = smooth_set(8, 10, 6);
        assert!(matches!(
            train_rom(&set, 2, RegressorKind::Linear),
            Err(RomError::TooFewSamples { needed: 7, .. })
        ));
        // Seven collinear points in 6-D.
        let inputs: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.01; 6]).collect();
        let outputs = DMatrix::from_fn(4, 9, |r, c| (r + c) as f64 + 1.0);
        let set = TrainingSet::new(inputs, outputs, (0..9).collect(), vec![]).unwrap();
        assert!(matches!(train_rom(&set, 1, RegressorKind::Linear), Err(RomError::TooFewSamples { .. })));
    }

    #[test]
    fn test_error_oracles() {
        let set = smooth_set(30, 20, 7);
        struct Truth<'a>(&'a TrainingSet);
        impl FieldSurrogate for Truth<'_> {
            fn predict_field(&self, mu: &[f64]) -> Result<DVector<f64>, RomError> {
                let i = self.0.inputs().iter().position(|x| x == mu).unwrap();
                Ok(self.0.field(i))
            }
        }
        struct Zero(usize);
        impl FieldSurrogate for Zero {
            fn predict_field(&self, _: &[f64]) -> Result<DVector<f64>, RomError> {
                Ok(DVector::zeros(self.0))
            }
        }
        assert_eq!(test_error(&Truth(&set), &set).unwrap(), 0.0);
        assert!((test_error(&Zero(20), &set).unwrap() - 1.0).abs() < 1e-15);

        let zero_truth = TrainingSet::new(vec![vec![0.0], vec![1.0]], DMatrix::zeros(3, 2), vec![0], vec![1]).unwrap();
        assert_eq!(test_error(&Zero(3), &zero_truth).unwrap_err(), RomError::ZeroTruth { sample: 1 });
        let no_test = TrainingSet::new(vec![vec![0.0]], DMatrix::zeros(3, 1), vec![0], vec![]).unwrap();
        assert_eq!(test_error(&Zero(3), &no_test).unwrap_err(), RomError::EmptyTestSplit);
    }

    #[test]
    fn gpr_beats_constant_mean_and_shepard() {
        let set = smooth_set(100, 80, 8);
        let gpr = train_rom(&set, 20, RegressorKind::Gpr).unwrap();
        let lin = train_rom(&set, 20, RegressorKind::Linear).unwrap();
        let e_gpr = test_error(&gpr, &set).unwrap();
        let e_lin = test_error(&lin, &set).unwrap();
        let e_mean = test_error(&MeanField::from_training(&set), &set).unwrap();
        assert!(e_gpr < e_lin, "{e_gpr} vs {e_lin}");
        assert!(e_gpr < e_mean, "{e_gpr} vs {e_mean}");
    }

    #[test]
    fn variance_is_diagonal_projection() {
        let set = smooth_set(30, 15, 9);
        let rom = train_rom(&set, 4, RegressorKind::Gpr).unwrap();
        let mu = [0.01, -0.02, 0.03, 0.0, 0.05, -0.07];
        let pred = rom.evaluate(&mu).unwrap();
        let (_, v) = rom.coefficients(&mu).unwrap();
        let u = rom.basis().modes();
        let full = u * DMatrix::from_diagonal(&v.unwrap()) * u.transpose();
        assert!((full.diagonal() - pred.variance.unwrap()).amax() < 1e-14);
    }

    #[test]
    fn out_of_bounds_flagged_not_rejected() {
        let set = smooth_set(30, 15, 10).with_bounds(vec![(-0.08, 0.08); 6]);
        let rom = train_rom(&set, 3, RegressorKind::Rbf).unwrap();
        assert!(!rom.evaluate(&[0.0; 6]).unwrap().out_of_bounds);
        assert!(rom.evaluate(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap().out_of_bounds);
        assert!(matches!(rom.evaluate(&[0.0; 5]), Err(RomError::Dimension { .. })));
    }

    #[test]
    fn sensitivity_tables() {
        let set = smooth_set(60, 30, 11);
        let one = sensitivity_modes(&set, &[3], &[RegressorKind::Gpr]).unwrap();
        assert_eq!(one.rows.len(), 1);
        let csv = sensitivity_modes(&set, &[1, 2, 4], &RegressorKind::ALL).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("count,kind,mean_rel_error"));
        let counts: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(counts.len(), 9);
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));

        let full = set.train_indices().len();
        let snaps = sensitivity_snapshots(&set, &[full], &[RegressorKind::Gpr], 10).unwrap();
        let direct = test_error(&train_rom(&set, 10, RegressorKind::Gpr).unwrap(), &set).unwrap();
        assert_eq!(snaps.get(full, RegressorKind::Gpr), Some(direct));

        let again = sensitivity_modes(&set, &[1, 2, 4], &RegressorKind::ALL).unwrap().to_csv();
        assert_eq!(csv, again);
    }

    #[test]
    fn rank_one_data_errors_vanish() {
        let set = constant_set(50);
        let t = sensitivity_modes(&set, &[1], &RegressorKind::ALL).unwrap();
        assert!(t.rows.iter().all(|r| r.mean_rel_error < 1e-8));
        let s = sensitivity_snapshots(&set, &[1, 5, 40], &[RegressorKind::Gpr, RegressorKind::Rbf], 20).unwrap();
        assert!(s.rows.iter().all(|r| r.mean_rel_error < 1e-8));
    }
}
