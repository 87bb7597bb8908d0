//! Exact dynamic mode decomposition.
//!
//! Snapshots `y_0 .. y_M` are split into the shifted pair `Y = [y_0 .. y_{M-1}]`
//! and `Y' = [y_1 .. y_M]`. The linear advance operator is projected onto the
//! leading left singular vectors of `Y`, its small eigenproblem is solved in
//! complex arithmetic, and the modes are lifted back with the exact-DMD
//! formula `Φ = Y' V Σ⁻¹ W`.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::mesh::SurfaceMesh;
use crate::spatial::KdTree;
use crate::synthfom::SnapshotSeries;

pub type Complex64 = Complex<f64>;

/// Eigenvalues within this distance of `1 + 0i` form the regime state.
pub const DEFAULT_REGIME_EPSILON: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum DmdError {
    #[error("need at least two snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("rank {rank} is outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("energy threshold {0} outside (0, 1]")]
    BadEnergy(f64),
    #[error("snapshot matrix is identically zero")]
    AllZero,
    #[error("snapshot times are not equispaced (step {step} at index {index}, expected {expected})")]
    NonUniformTimes { index: usize, step: f64, expected: f64 },
    #[error("no eigenvalue within {epsilon} of 1; the series has not reached a regime")]
    NoRegimeMode { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DmdRank {
    Fixed(usize),
    /// Smallest rank whose singular values capture this fraction of `Σσ²`.
    Energy(f64),
}

#[derive(Debug, Clone)]
pub struct DmdModel {
    modes: DMatrix<Complex64>,
    eigenvalues: Vec<Complex64>,
    amplitudes: Vec<Complex64>,
    dt: f64,
}

pub fn fit_dmd(series: &SnapshotSeries, rank: DmdRank) -> Result<DmdModel, DmdError> {
    let m = series.len();
    if m < 2 {
        return Err(DmdError::TooFewSnapshots(m));
    }
    let dt = series.times[1] - series.times[0];
    for (index, w) in series.times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if !(dt > 0.0) || (step - dt).abs() > 1e-9 * dt.abs() {
            return Err(DmdError::NonUniformTimes { index, step, expected: dt });
        }
    }
    let n = series.values.nrows();
    let pairs = m - 1;
    let max_rank = n.min(pairs);
    if let DmdRank::Fixed(r) = rank {
        if r == 0 || r > max_rank {
            return Err(DmdError::RankOutOfRange { rank: r, max: max_rank });
        }
    }
    if series.values.iter().all(|&v| v == 0.0) {
        return Err(DmdError::AllZero);
    }

    let y = series.values.columns(0, pairs).into_owned();
    let y_next = series.values.columns(1, pairs).into_owned();
    let svd = y.svd(true, true);
    let (u, sigma, v_t) = (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let s0 = sigma[order[0]];
    if s0 == 0.0 {
        // Only the last snapshot is nonzero: nothing to advance from.
        return Err(DmdError::AllZero);
    }
    // Directions below round-off carry no dynamics; inverting them only
    // injects noise into the reduced operator.
    let floor = s0 * f64::EPSILON * n.max(pairs) as f64;
    let numerical = order.iter().take_while(|&&i| sigma[i] > floor).count();
    let r = match rank {
        DmdRank::Fixed(r) => r.min(numerical),
        DmdRank::Energy(e) => {
            if !(e > 0.0 && e <= 1.0) {
                return Err(DmdError::BadEnergy(e));
            }
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut r = 0;
            for &i in &order {
                acc += sigma[i] * sigma[i];
                r += 1;
                if acc >= e * total * (1.0 - 1e-15) {
                    break;
                }
            }
            r.min(numerical)
        }
    };

    let ur = DMatrix::from_fn(n, r, |i, j| u[(i, order[j])]);
    // V_r Σ_r⁻¹, built column by column.
    let v_sinv = DMatrix::from_fn(pairs, r, |i, j| v_t[(order[j], i)] / sigma[order[j]]);
    let lifted = &y_next * v_sinv;
    let reduced = ur.transpose() * &lifted;

    let eigenvalues: Vec<Complex64> = reduced.complex_eigenvalues().iter().copied().collect();
    let reduced_c = reduced.map(|v| Complex64::new(v, 0.0));
    let mut w = DMatrix::<Complex64>::zeros(r, r);
    for (j, &lambda) in eigenvalues.iter().enumerate() {
        w.set_column(j, &null_vector(&reduced_c, lambda));
    }
    let modes = lifted.map(|v| Complex64::new(v, 0.0)) * w;

    let y0 = series.values.column(0).map(|v| Complex64::new(v, 0.0));
    let amplitudes: Vec<Complex64> = modes
        .clone()
        .svd(true, true)
        .solve(&y0, 1e-14 * s0)
        .map(|a| a.iter().copied().collect())
        .unwrap_or_else(|_| vec![Complex64::new(0.0, 0.0); r]);

    // Largest |amplitude| first.
    let mut idx: Vec<usize> = (0..r).collect();
    idx.sort_by(|&a, &b| amplitudes[b].norm().total_cmp(&amplitudes[a].norm()).then(a.cmp(&b)));
    Ok(DmdModel {
        modes: DMatrix::from_fn(n, r, |i, j| modes[(i, idx[j])]),
        eigenvalues: idx.iter().map(|&j| eigenvalues[j]).collect(),
        amplitudes: idx.iter().map(|&j| amplitudes[j]).collect(),
        dt,
    })
}

/// Unit vector spanning the (numerical) null space of `a - λI`.
fn null_vector(a: &DMatrix<Complex64>, lambda: Complex64) -> DVector<Complex64> {
    let r = a.nrows();
    let shifted = a - DMatrix::<Complex64>::identity(r, r) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let k = (0..r)
        .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
        .unwrap();
    // Row k of Vᴴ is v_kᴴ.
    let v: DVector<Complex64> = v_t.row(k).transpose().map(|c| c.conj());
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn modes(&self) -> &DMatrix<Complex64> {
        &self.modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Continuous-time growth rates and frequencies, `ln(λ)/dt`.
    pub fn continuous_eigenvalues(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|l| l.ln() / self.dt).collect()
    }

    /// `Re Σ_j b_j λ_j^k φ_j`; `k` may run past the training window.
    pub fn predict_state(&self, k: u32) -> DVector<f64> {
        let weights: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .zip(&self.amplitudes)
            .map(|(l, b)| b * l.powu(k))
            .collect();
        self.combine(|j| Some(weights[j]))
    }

    /// Sum of the amplitude-weighted modes with `|λ - 1| < epsilon`.
    pub fn regime_state(&self, epsilon: f64) -> Result<DVector<f64>, DmdError> {
        let selected: Vec<bool> = self
            .eigenvalues
            .iter()
            .map(|l| (l - Complex64::new(1.0, 0.0)).norm() < epsilon)
            .collect();
        if !selected.contains(&true) {
            return Err(DmdError::NoRegimeMode { epsilon });
        }
        Ok(self.combine(|j| selected[j].then_some(self.amplitudes[j])))
    }

    fn combine(&self, weight: impl Fn(usize) -> Option<Complex64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.modes.nrows());
        for j in 0..self.rank() {
            if let Some(w) = weight(j) {
                for (o, phi) in out.iter_mut().zip(self.modes.column(j).iter()) {
                    *o += (w * phi).re;
                }
            }
        }
        out
    }
}

/// Nearest-centroid transfer of per-face fields from one mesh onto another.
pub struct FaceProjector {
    tree: KdTree,
}

impl FaceProjector {
    pub fn new(source: &SurfaceMesh) -> Self {
        Self {
            tree: KdTree::new(source.face_centroids()),
        }
    }

    /// Source face feeding each target face.
    pub fn assignment(&self, target: &SurfaceMesh) -> Vec<usize> {
        target
            .face_centroids()
            .iter()
            .map(|c| self.tree.nearest(c).expect("projector built from a non-empty mesh"))
            .collect()
    }

    pub fn project(&self, field: &[f64], target: &SurfaceMesh) -> Vec<f64> {
        self.assignment(target).into_iter().map(|i| field[i]).collect()
    }
}

/// Each target face takes the value of the source face with the nearest
/// centroid. Empty meshes give an empty field.
pub fn project_field(field: &[f64], source: &SurfaceMesh, target: &SurfaceMesh) -> Vec<f64> {
    if source.is_empty() {
        return Vec::new();
    }
    debug_assert_eq!(field.len(), source.face_count());
    FaceProjector::new(source).project(field, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{icosphere, synthetic_hull, HullParams};
    use crate::synthfom::{simulate, synthesize, transient_profiles, FomConfig, NoiseLevel, RegimeFieldParams};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: DMatrix<f64>) -> SnapshotSeries {
        let times = (0..values.ncols()).map(|k| k as f64 * 0.5).collect();
        SnapshotSeries::new(values, times).unwrap()
    }

    fn contains(eigs: &[Complex64], target: Complex64, tol: f64) -> bool {
        eigs.iter().any(|e| (e - target).norm() < tol)
    }

    #[test]
    fn constant_series_has_unit_eigenvalue() {
        let c = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.25]);
        let s = series(DMatrix::from_fn(4, 10, |i, _| c[i]));
        let model = fit_dmd(&s, DmdRank::Fixed(1)).unwrap();
        assert_eq!(model.rank(), 1);
        assert!((model.eigenvalues()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        for k in [0, 3, 50] {
            assert!((model.predict_state(k) - &c).norm() < 1e-10);
        }
        assert!((model.regime_state(DEFAULT_REGIME_EPSILON).unwrap() - &c).norm() < 1e-10);
    }

    #[test]
    fn geometric_growth() {
        let v = [0.3, -1.0, 2.0, 0.7, 1.1];
        let s = series(DMatrix::from_fn(5, 8, |i, k| 2f64.powi(k as i32) * v[i]));
        let model = fit_dmd(&s, DmdRank::Fixed(1)).unwrap();
        assert!((model.eigenvalues()[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    fn planted(config: &FomConfig) -> (SnapshotSeries, DVector<f64>) {
        let hull = synthetic_hull(&HullParams::default()).unwrap();
        let regime = crate::synthfom::regime_field(&hull, 0.0, &RegimeFieldParams::default()).unwrap();
        let s = simulate(&hull, 0.0, &RegimeFieldParams::default(), config).unwrap();
        (s, DVector::from_vec(regime))
    }

    #[test]
    fn planted_spectrum_recovered() {
        let cfg = FomConfig::default().noise_free();
        let (s, regime) = planted(&cfg);
        let model = fit_dmd(&s, DmdRank::Fixed(4)).unwrap();
        let eigs = model.eigenvalues();
        let theta = cfg.oscillation_angle;
        for target in [
            Complex64::new(1.0, 0.0),
            Complex64::new(cfg.damped_decay, 0.0),
            Complex64::new(theta.cos(), theta.sin()),
            Complex64::new(theta.cos(), -theta.sin()),
        ] {
            assert!(contains(eigs, target, 1e-8), "{target} missing from {eigs:?}");
        }
        let r = model.regime_state(DEFAULT_REGIME_EPSILON).unwrap();
        assert!((r - &regime).norm() / regime.norm() < 1e-6);
    }

    #[test]
    fn oscillation_only_series() {
        let cfg = FomConfig {
            damped_amplitude: 0.0,
            oscillation_amplitude: 0.3,
            oscillation_angle: 0.4,
            ..FomConfig::default()
        }
        .noise_free();
        let (s, _) = planted(&cfg);
        let model = fit_dmd(&s, DmdRank::Fixed(3)).unwrap();
        for target in [Complex64::new(1.0, 0.0), Complex64::new(0.4f64.cos(), 0.4f64.sin()), Complex64::new(0.4f64.cos(), -0.4f64.sin())] {
            assert!(contains(model.eigenvalues(), target, 1e-8));
        }
    }

    #[test]
    fn pure_oscillation_has_no_regime() {
        let sphere = icosphere(2, 1.0);
        let centroids = sphere.face_centroids();
        let profiles = transient_profiles(&centroids, 4);
        let cfg = FomConfig {
            damped_amplitude: 0.0,
            oscillation_amplitude: 0.3,
            ..FomConfig::default()
        }
        .noise_free();
        let s = synthesize(&vec![0.0; centroids.len()], &profiles, &cfg).unwrap();
        let model = fit_dmd(&s, DmdRank::Fixed(2)).unwrap();
        assert_eq!(
            model.regime_state(DEFAULT_REGIME_EPSILON).unwrap_err(),
            DmdError::NoRegimeMode { epsilon: DEFAULT_REGIME_EPSILON }
        );
    }

    #[test]
    fn one_step_extrapolation_and_reconstruction() {
        let cfg = FomConfig::default().noise_free();
        let (full, _) = planted(&cfg);
        let m = full.len() - 1;
        let train = SnapshotSeries::new(full.values.columns(0, m).into_owned(), full.times[..m].to_vec()).unwrap();
        let model = fit_dmd(&train, DmdRank::Fixed(4)).unwrap();
        let predicted = model.predict_state(m as u32);
        let truth = full.column(m);
        assert!((predicted - &truth).norm() / truth.norm() < 1e-6);
        for k in 0..m {
            let y = full.column(k);
            assert!((model.predict_state(k as u32) - &y).norm() / y.norm() < 1e-8);
        }
    }

    #[test]
    fn known_operator_eigenvalues() {
        // A = S D S⁻¹ with a rotation block; eigenvalues known by construction.
        let (rho, theta) = (0.95f64, 0.6f64);
        let mut d = DMatrix::<f64>::zeros(6, 6);
        d[(0, 0)] = 0.9;
        d[(1, 1)] = -0.5;
        d[(2, 2)] = 0.3;
        d[(3, 3)] = 1.0;
        d[(4, 4)] = rho * theta.cos();
        d[(4, 5)] = -rho * theta.sin();
        d[(5, 4)] = rho * theta.sin();
        d[(5, 5)] = rho * theta.cos();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.5..0.5));
        let a = &s * d * s.clone().try_inverse().unwrap();
        let mut y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let mut cols = Vec::new();
        for _ in 0..12 {
            cols.push(y.clone());
            y = &a * y;
        }
        let model = fit_dmd(&series(DMatrix::from_columns(&cols)), DmdRank::Fixed(6)).unwrap();
        for target in [
            Complex64::new(0.9, 0.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.3, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(rho, theta),
            Complex64::from_polar(rho, -theta),
        ] {
            assert!(contains(model.eigenvalues(), target, 1e-8), "{target} missing");
        }
    }

    #[test]
    fn conjugate_symmetry_and_rank_monotonicity() {
        let cfg = FomConfig {
            noise: NoiseLevel::RelativeToRegimeMax(1e-2),
            ..FomConfig::default()
        };
        let (s, _) = planted(&cfg);
        let mut prev = f64::INFINITY;
        for r in 1..=8 {
            let model = fit_dmd(&s, DmdRank::Fixed(r)).unwrap();
            for l in model.eigenvalues() {
                assert!(model.eigenvalues().iter().any(|m| (m - l.conj()).norm() < 1e-10));
            }
            // Training error of the best rank-r projection of Y.
            let y = s.values.columns(0, s.len() - 1).into_owned();
            let u = y.clone().svd(true, false).u.unwrap();
            let mut order: Vec<usize> = (0..u.ncols()).collect();
            let sv = y.clone().svd(false, false).singular_values;
            order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
            let ur = DMatrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
            let err = (&y - &ur * (ur.transpose() * &y)).norm();
            assert!(err <= prev * (1.0 + 1e-12));
            prev = err;
        }
    }

    #[test]
    fn energy_rank_and_errors() {
        let cfg = FomConfig::default().noise_free();
        let (s, _) = planted(&cfg);
        let model = fit_dmd(&s, DmdRank::Energy(1.0)).unwrap();
        assert_eq!(model.rank(), 4);
        assert!(matches!(fit_dmd(&s, DmdRank::Fixed(0)), Err(DmdError::RankOutOfRange { .. })));
        assert!(matches!(fit_dmd(&s, DmdRank::Fixed(41)), Err(DmdError::RankOutOfRange { rank: 41, max: 40 })));
        assert!(matches!(fit_dmd(&s, DmdRank::Energy(0.0)), Err(DmdError::BadEnergy(_))));
        let zero = series(DMatrix::zeros(5, 6));
        assert_eq!(fit_dmd(&zero, DmdRank::Fixed(1)).unwrap_err(), DmdError::AllZero);
        let one = series(DMatrix::from_element(5, 1, 1.0));
        assert_eq!(fit_dmd(&one, DmdRank::Fixed(1)).unwrap_err(), DmdError::TooFewSnapshots(1));
        let uneven = SnapshotSeries::new(DMatrix::from_element(3, 3, 1.0), vec![0.0, 0.5, 1.2]).unwrap();
        assert!(matches!(fit_dmd(&uneven, DmdRank::Fixed(1)), Err(DmdError::NonUniformTimes { index: 1, .. })));
    }

    #[test]
    fn projection_examples() {
        let sphere = icosphere(2, 1.0);
        let field: Vec<f64> = (0..sphere.face_count()).map(|i| i as f64 * 0.5).collect();
        assert_eq!(project_field(&field, &sphere, &sphere), field);
        let shifted = sphere.translated(Vector3::new(1e-9, 0.0, 0.0));
        assert_eq!(project_field(&field, &sphere, &shifted), field);

        let fine = icosphere(3, 1.0);
        let projected = project_field(&field, &sphere, &fine);
        assert_eq!(projected.len(), fine.face_count());
        assert!(projected.iter().all(|v| field.contains(v)));
    }
}
