//! Proper orthogonal decomposition of a snapshot matrix.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PodError {
    #[error("mode count {requested} outside 1..={max}")]
    ModeCount { requested: usize, max: usize },
    #[error("snapshot matrix is identically zero")]
    ZeroMatrix,
    #[error("expected length {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("leading singular value is zero")]
    ZeroLeadingSingularValue,
}

/// Orthonormal POD modes with their singular values, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    /// Full singular spectrum of the training matrix.
    spectrum: Vec<f64>,
    mean: Option<DVector<f64>>,
}

/// Left singular vectors of the snapshot matrix (one snapshot per column).
///
/// Each mode is signed so that its largest-magnitude entry is positive. With
/// `center` the column mean is removed first and added back on reconstruction.
pub fn fit_pod(snapshots: &DMatrix<f64>, n_modes: usize, center: bool) -> Result<PodBasis, PodError> {
    let max = snapshots.nrows().min(snapshots.ncols());
    if n_modes == 0 || n_modes > max {
        return Err(PodError::ModeCount { requested: n_modes, max });
    }
    if snapshots.iter().all(|&v| v == 0.0) {
        return Err(PodError::ZeroMatrix);
    }
    let (data, mean) = if center {
        let mean = snapshots.column_mean();
        let mut d = snapshots.clone();
        for mut c in d.column_iter_mut() {
            c -= &mean;
        }
        (d, Some(mean))
    } else {
        (snapshots.clone(), None)
    };
    let svd = data.svd(true, false);
    let u = svd.u.unwrap();
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let mut modes = DMatrix::from_fn(snapshots.nrows(), n_modes, |i, j| u[(i, order[j])]);
    for mut col in modes.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let spectrum: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    Ok(PodBasis {
        modes,
        singular_values: spectrum[..n_modes].to_vec(),
        spectrum,
        mean,
    })
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dimension(&self) -> usize {
        self.modes.nrows()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    /// `c = Uᵀ (y - mean)`.
    pub fn project_coeffs(&self, y: &DVector<f64>) -> Result<DVector<f64>, PodError> {
        self.check_len(y.len())?;
        Ok(match &self.mean {
            Some(m) => self.modes.tr_mul(&(y - m)),
            None => self.modes.tr_mul(y),
        })
    }

    /// Coefficients of every column, one column per snapshot.
    pub fn project_matrix(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>, PodError> {
        self.check_len(ys.nrows())?;
        Ok(match &self.mean {
            Some(m) => {
                let mut centred = ys.clone();
                for mut c in centred.column_iter_mut() {
                    c -= m;
                }
                self.modes.tr_mul(&centred)
            }
            None => self.modes.tr_mul(ys),
        })
    }

    /// `y = U c (+ mean)`.
    pub fn reconstruct(&self, c: &DVector<f64>) -> Result<DVector<f64>, PodError> {
        if c.len() != self.n_modes() {
            return Err(PodError::Dimension {
                expected: self.n_modes(),
                actual: c.len(),
            });
        }
        let y = &self.modes * c;
        Ok(match &self.mean {
            Some(m) => y + m,
            None => y,
        })
    }

    /// `σ_i / σ_0` over the retained modes.
    pub fn energy_ratios(&self) -> Result<Vec<f64>, PodError> {
        ratios(&self.singular_values)
    }

    /// `σ_i / σ_0` over the whole training spectrum.
    pub fn spectrum_ratios(&self) -> Result<Vec<f64>, PodError> {
        ratios(&self.spectrum)
    }

    fn check_len(&self, actual: usize) -> Result<(), PodError> {
        if actual != self.dimension() {
            return Err(PodError::Dimension {
                expected: self.dimension(),
                actual,
            });
        }
        Ok(())
    }
}

fn ratios(sv: &[f64]) -> Result<Vec<f64>, PodError> {
    let s0 = sv.first().copied().unwrap_or(0.0);
    if !(s0 > 0.0) {
        return Err(PodError::ZeroLeadingSingularValue);
    }
    Ok(sv.iter().map(|s| s / s0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_columns_give_one_mode() {
        let c = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let y = DMatrix::from_fn(3, 5, |i, _| c[i]);
        let basis = fit_pod(&y, 3, false).unwrap();
        let expected = &c / c.norm();
        let m0 = basis.modes().column(0);
        assert!((m0 - &expected).norm() < 1e-12 || (m0 + &expected).norm() < 1e-12);
        let sv = basis.singular_values();
        assert!(sv[1] / sv[0] < 1e-12);
    }

    #[test]
    fn orthogonal_columns_hand_svd() {
        let mut y = DMatrix::zeros(4, 2);
        y[(0, 0)] = 3.0;
        y[(1, 1)] = 2.0;
        let basis = fit_pod(&y, 2, false).unwrap();
        assert!((basis.singular_values()[0] - 3.0).abs() < 1e-14);
        assert!((basis.singular_values()[1] - 2.0).abs() < 1e-14);
        assert!((basis.modes()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((basis.modes()[(1, 1)] - 1.0).abs() < 1e-14);
        let ratios = basis.energy_ratios().unwrap();
        assert_eq!(ratios[0], 1.0);
        assert!((ratios[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn full_rank_reconstruction() {
        let y = random(50, 10, 1);
        let basis = fit_pod(&y, 10, false).unwrap();
        for j in 0..10 {
            let col = y.column(j).into_owned();
            let back = basis.reconstruct(&basis.project_coeffs(&col).unwrap()).unwrap();
            assert!((back - &col).norm() / col.norm() < 1e-9);
        }
    }

    #[test]
    fn coefficient_examples() {
        let basis = fit_pod(&random(20, 6, 2), 4, false).unwrap();
        let m1 = basis.modes().column(0).into_owned();
        let m2 = basis.modes().column(1).into_owned();
        let c = basis.project_coeffs(&m1).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && c.rows(1, 3).norm() < 1e-12);

        let y = &m1 * 2.0 + &m2 * 3.0;
        let c = basis.project_coeffs(&y).unwrap();
        assert!((c - DVector::from_vec(vec![2.0, 3.0, 0.0, 0.0])).norm() < 1e-12);

        // Orthogonal complement of the span.
        let mut z = DVector::from_fn(20, |i, _| (i as f64).sin());
        z -= basis.modes() * basis.modes().tr_mul(&z);
        assert!(basis.project_coeffs(&z).unwrap().norm() < 1e-12);

        assert!(basis.reconstruct(&DVector::zeros(4)).unwrap().iter().all(|&v| v == 0.0));
        let e1 = DVector::from_fn(4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert_eq!(basis.reconstruct(&e1).unwrap(), m1);
    }

    #[test]
    fn errors() {
        let y = random(5, 3, 3);
        assert_eq!(fit_pod(&y, 0, false).unwrap_err(), PodError::ModeCount { requested: 0, max: 3 });
        assert_eq!(fit_pod(&y, 4, false).unwrap_err(), PodError::ModeCount { requested: 4, max: 3 });
        assert_eq!(fit_pod(&DMatrix::zeros(5, 3), 1, false).unwrap_err(), PodError::ZeroMatrix);
        let basis = fit_pod(&y, 2, false).unwrap();
        assert!(matches!(basis.project_coeffs(&DVector::zeros(4)), Err(PodError::Dimension { .. })));
        assert!(matches!(basis.reconstruct(&DVector::zeros(3)), Err(PodError::Dimension { .. })));
    }

    #[test]
    fn orthonormal_idempotent_and_eckart_young() {
        for seed in 0..5 {
            let y = random(30, 8, 10 + seed);
            for k in 1..=8 {
                let basis = fit_pod(&y, k, false).unwrap();
                let u = basis.modes();
                let gram = u.tr_mul(u) - DMatrix::identity(k, k);
                assert!(gram.amax() < 1e-10);
                let proj = &basis.project_matrix(&y).unwrap();
                let rec = u * proj;
                let twice = u * basis.project_matrix(&rec).unwrap();
                assert!((&twice - &rec).amax() < 1e-12);
                let err = (&y - &rec).norm_squared();
                let tail: f64 = basis.spectrum()[k..].iter().map(|s| s * s).sum();
                assert!((err - tail).abs() <= 1e-8 * tail.max(1e-300) || (err < 1e-20 && tail < 1e-20));
            }
        }
    }

    #[test]
    fn beats_random_subspaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let y = random(30, 8, 40 + seed);
            for k in [1, 3, 5] {
                let basis = fit_pod(&y, k, false).unwrap();
                let pod_err = (&y - basis.modes() * basis.project_matrix(&y).unwrap()).norm();
                for _ in 0..20 {
                    let q = DMatrix::from_fn(30, k, |_, _| rng.random_range(-1.0..1.0)).qr().q();
                    let err = (&y - &q * q.tr_mul(&y)).norm();
                    assert!(pod_err <= err + 1e-12);
                }
            }
        }
    }

    #[test]
    fn centred_basis_round_trip() {
        let y = random(12, 6, 5).add_scalar(4.0);
        let basis = fit_pod(&y, 6, true).unwrap();
        assert!(basis.mean().is_some());
        for j in 0..6 {
            let col = y.column(j).into_owned();
            let back = basis.reconstruct(&basis.project_coeffs(&col).unwrap()).unwrap();
            assert!((back - &col).norm() < 1e-10);
        }
    }

    #[test]
    fn energy_ratios_start_at_one_and_decrease() {
        let basis = fit_pod(&random(40, 12, 6), 12, false).unwrap();
        let r = basis.energy_ratios().unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.iter().all(|&v| v > 0.0 && v <= 1.0));
    }
}
