//! Zero-mean Gaussian process regression with a squared-exponential kernel.
//!
//! Hyperparameters `(σ², ℓ)` are chosen by maximizing the log marginal
//! likelihood over a log-uniform grid followed by a few rounds of coordinate
//! refinement. Everything is deterministic.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GprError {
    #[error("input dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("{inputs} inputs but {targets} targets")]
    Count { inputs: usize, targets: usize },
    #[error("no training data")]
    Empty,
    #[error("targets must be finite")]
    NonFiniteTargets,
    #[error("invalid kernel hyperparameters: variance {variance}, length scale {length_scale}, jitter {jitter}")]
    BadKernel { variance: f64, length_scale: f64, jitter: f64 },
    #[error("kernel matrix not positive definite even with jitter {jitter}")]
    Factorization { jitter: f64 },
    #[error("log marginal likelihood is not finite for any candidate")]
    DegenerateLikelihood,
}

/// `σ² exp(-‖a - b‖² / (2ℓ²))`, plus `jitter` on the training diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub variance: f64,
    pub length_scale: f64,
    pub jitter: f64,
}

impl Kernel {
    pub fn new(variance: f64, length_scale: f64, jitter: f64) -> Result<Self, GprError> {
        let k = Self {
            variance,
            length_scale,
            jitter,
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<(), GprError> {
        if self.variance > 0.0 && self.length_scale > 0.0 && self.jitter >= 0.0 && self.variance.is_finite() && self.length_scale.is_finite() {
            Ok(())
        } else {
            Err(GprError::BadKernel {
                variance: self.variance,
                length_scale: self.length_scale,
                jitter: self.jitter,
            })
        }
    }

    fn eval_sq(&self, dist_sq: f64) -> f64 {
        self.variance * (-0.5 * dist_sq / (self.length_scale * self.length_scale)).exp()
    }

    /// Cross-covariance between the rows of `a` and the rows of `b`.
    pub fn kernel_matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, GprError> {
        if a.ncols() != b.ncols() {
            return Err(GprError::Dimension {
                expected: a.ncols(),
                actual: b.ncols(),
            });
        }
        Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            self.eval_sq((a.row(i) - b.row(j)).norm_squared())
        }))
    }
}

/// Grid-plus-refinement search over `(σ², ℓ)`.
///
/// Ranges are relative: the variance span multiplies the mean squared target
/// and the length span multiplies the median pairwise input distance.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSearch {
    pub grid_size: usize,
    pub variance_span: (f64, f64),
    pub length_span: (f64, f64),
    pub refine_rounds: usize,
    /// Starting jitter as a fraction of σ².
    pub jitter: f64,
    /// Largest jitter tried before giving up, as a fraction of σ².
    pub max_jitter: f64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        Self {
            grid_size: 7,
            variance_span: (1e-2, 1e2),
            length_span: (0.1, 10.0),
            refine_rounds: 3,
            jitter: 1e-10,
            max_jitter: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    kernel: Kernel,
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
    initial_log_marginal_likelihood: f64,
    warnings: Vec<String>,
}

struct Factored {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    lml: f64,
}

/// Factorizes `K + jitter I`, escalating the jitter tenfold on failure.
fn factor(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    variance: f64,
    length_scale: f64,
    jitter_rel: f64,
    max_jitter_rel: f64,
) -> Result<Factored, GprError> {
    let base = Kernel {
        variance,
        length_scale,
        jitter: 0.0,
    };
    base.validate()?;
    let k = base.kernel_matrix(inputs, inputs)?;
    let n = inputs.nrows();
    let mut jitter = jitter_rel * variance;
    let max = max_jitter_rel * variance;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = kj.cholesky() {
            let alpha = chol.solve(targets);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * targets.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok(Factored { chol, alpha, jitter, lml });
        }
        if jitter >= max {
            return Err(GprError::Factorization { jitter });
        }
        jitter = if jitter > 0.0 { (jitter * 10.0).min(max) } else { (1e-10 * variance).min(max) };
    }
}

fn check_data(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> Result<(), GprError> {
    if inputs.nrows() == 0 {
        return Err(GprError::Empty);
    }
    if inputs.nrows() != targets.len() {
        return Err(GprError::Count {
            inputs: inputs.nrows(),
            targets: targets.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) || inputs.iter().any(|t| !t.is_finite()) {
        return Err(GprError::NonFiniteTargets);
    }
    Ok(())
}

fn duplicate_warnings(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..inputs.nrows() {
        for j in i + 1..inputs.nrows() {
            if (inputs.row(i) - inputs.row(j)).norm() < 1e-12 && targets[i] != targets[j] {
                let msg = format!("inputs {i} and {j} coincide with conflicting targets");
                log::warn!("{msg}");
                out.push(msg);
            }
        }
    }
    out
}

fn median_pairwise_distance(inputs: &DMatrix<f64>) -> f64 {
    let n = inputs.nrows();
    let mut d: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((inputs.row(i) - inputs.row(j)).norm());
        }
    }
    d.retain(|&v| v > 0.0);
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Fits `(σ², ℓ)` by maximizing the log marginal likelihood.
///
/// The first candidate is `σ² = mean(y²)`, `ℓ = median distance`; the result
/// is never less likely than that starting point.
pub fn fit_gpr(inputs: &DMatrix<f64>, targets: &DVector<f64>, search: &HyperSearch) -> Result<GprModel, GprError> {
    check_data(inputs, targets)?;
    let warnings = duplicate_warnings(inputs, targets);
    let scale = targets.norm_squared() / targets.len() as f64;
    let var0 = if scale > 0.0 { scale } else { 1.0 };
    let len0 = median_pairwise_distance(inputs);

    let eval = |lv: f64, ll: f64| -> f64 {
        factor(inputs, targets, lv.exp(), ll.exp(), search.jitter, search.max_jitter)
            .map(|f| f.lml)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::NEG_INFINITY)
    };

    let (lv0, ll0) = (var0.ln(), len0.ln());
    let initial = eval(lv0, ll0);
    let mut best = (initial, lv0, ll0);
    let (vlo, vhi) = (lv0 + search.variance_span.0.ln(), lv0 + search.variance_span.1.ln());
    let (llo, lhi) = (ll0 + search.length_span.0.ln(), ll0 + search.length_span.1.ln());
    let g = search.grid_size.max(2);
    let frac = |i: usize| i as f64 / (g - 1) as f64;
    for i in 0..g {
        for j in 0..g {
            let (lv, ll) = (vlo + (vhi - vlo) * frac(i), llo + (lhi - llo) * frac(j));
            let v = eval(lv, ll);
            if v > best.0 {
                best = (v, lv, ll);
            }
        }
    }
    let mut steps = [(vhi - vlo) / (g - 1) as f64, (lhi - llo) / (g - 1) as f64];
    for _ in 0..search.refine_rounds {
        for (axis, step) in steps.iter_mut().enumerate() {
            for _ in 0..16 {
                let mut moved = false;
                for dir in [1.0, -1.0] {
                    let (mut lv, mut ll) = (best.1, best.2);
                    if axis == 0 {
                        lv = (lv + dir * *step).clamp(vlo, vhi);
                    } else {
                        ll = (ll + dir * *step).clamp(llo, lhi);
                    }
                    let v = eval(lv, ll);
                    if v > best.0 {
                        best = (v, lv, ll);
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    break;
                }
            }
            *step *= 0.5;
        }
    }
    if !best.0.is_finite() {
        return Err(GprError::DegenerateLikelihood);
    }
    let f = factor(inputs, targets, best.1.exp(), best.2.exp(), search.jitter, search.max_jitter)?;
    Ok(GprModel {
        kernel: Kernel {
            variance: best.1.exp(),
            length_scale: best.2.exp(),
            jitter: f.jitter,
        },
        inputs: inputs.clone(),
        targets: targets.clone(),
        chol: f.chol,
        alpha: f.alpha,
        log_marginal_likelihood: f.lml,
        initial_log_marginal_likelihood: initial,
        warnings,
    })
}

impl GprModel {
    /// Conditions on the data with fixed hyperparameters. The kernel's jitter
    /// is used as given and escalated tenfold (up to `1e-4 σ²`) only if the
    /// factorization fails.
    pub fn with_kernel(inputs: &DMatrix<f64>, targets: &DVector<f64>, kernel: Kernel) -> Result<Self, GprError> {
        kernel.validate()?;
        check_data(inputs, targets)?;
        let warnings = duplicate_warnings(inputs, targets);
        let rel = kernel.jitter / kernel.variance;
        let f = factor(inputs, targets, kernel.variance, kernel.length_scale, rel, rel.max(1e-4))?;
        Ok(Self {
            kernel: Kernel { jitter: f.jitter, ..kernel },
            inputs: inputs.clone(),
            targets: targets.clone(),
            chol: f.chol,
            alpha: f.alpha,
            log_marginal_likelihood: f.lml,
            initial_log_marginal_likelihood: f.lml,
            warnings,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Likelihood of the search's starting candidate.
    pub fn initial_log_marginal_likelihood(&self) -> f64 {
        self.initial_log_marginal_likelihood
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn train_targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Posterior mean and full covariance at the query rows.
    pub fn predict(&self, query: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), GprError> {
        let cross = self.kernel.kernel_matrix(&self.inputs, query)?;
        let mean = cross.tr_mul(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&cross).expect("cholesky factor is non-singular");
        let prior = self.kernel.kernel_matrix(query, query)?;
        let mut cov = prior - v.tr_mul(&v);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }

    /// Posterior mean and marginal variance at the query rows.
    pub fn predict_marginal(&self, query: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>), GprError> {
        let cross = self.kernel.kernel_matrix(&self.inputs, query)?;
        let mean = cross.tr_mul(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&cross).expect("cholesky factor is non-singular");
        let var = DVector::from_fn(query.nrows(), |j, _| self.kernel.variance - v.column(j).norm_squared());
        Ok((mean, var))
    }

    /// Mean at a single point.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64, GprError> {
        if x.len() != self.input_dim() {
            return Err(GprError::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let q = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.predict_marginal(&q)?.0[0])
    }
}
