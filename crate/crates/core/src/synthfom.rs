//! Synthetic transient full-order model.
//!
//! Stands in for a free-surface flow solver. Each run produces a time series
//! of a per-face resistance density that relaxes toward a geometry-dependent
//! regime field:
//!
//! ```text
//! y_k = r + a ρ^k φ_d + b (cos(θk + φ₀) φ_c + sin(θk + φ₀) φ_s) + ε_k
//! ```
//!
//! The noise-free series is exactly linear in `k`, with DMD spectrum
//! `{1, ρ, e^{iθ}, e^{-iθ}}`. The oscillation uses a cosine and a sine
//! profile so that the conjugate pair is realizable by a linear operator.

use nalgebra::{DMatrix, DVector, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::mesh::{MeshError, SurfaceMesh};

#[derive(Debug, Error)]
pub enum FomError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid FOM configuration: {0}")]
    Config(String),
    #[error("regime field has {regime} entries but {centroids} centroids were given")]
    Dimension { regime: usize, centroids: usize },
}

/// Proxy coefficients for the converged resistance density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeFieldParams {
    /// Weight of the stagnation-pressure term `max(0, -n_x)^2`.
    pub stagnation: f64,
    /// Uniform friction density on wetted faces.
    pub friction: f64,
}

impl Default for RegimeFieldParams {
    fn default() -> Self {
        Self {
            stagnation: 1.0,
            friction: 0.05,
        }
    }
}

/// Converged x-force density per face. Faces whose centroid is at or above
/// the waterline carry no load.
pub fn regime_field(mesh: &SurfaceMesh, waterline_z: f64, params: &RegimeFieldParams) -> Result<Vec<f64>, FomError> {
    mesh.ensure_closed()?;
    let geoms = mesh.face_geometries()?;
    Ok(geoms
        .iter()
        .map(|g| {
            if g.centroid.z < waterline_z {
                let nx = (-g.unit_normal.x).max(0.0);
                params.stagnation * nx * nx + params.friction
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    /// Standard deviation in field units.
    Absolute(f64),
    /// Standard deviation as a fraction of `max |regime field|`.
    RelativeToRegimeMax(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FomConfig {
    /// Number of saved snapshots, `M + 1`.
    pub snapshot_count: usize,
    pub t0: f64,
    pub dt: f64,
    pub damped_decay: f64,
    pub damped_amplitude: f64,
    /// Radians per snapshot interval.
    pub oscillation_angle: f64,
    pub oscillation_amplitude: f64,
    pub oscillation_phase: f64,
    pub noise: NoiseLevel,
    pub seed: u64,
}

impl Default for FomConfig {
    fn default() -> Self {
        Self {
            snapshot_count: 41,
            t0: 20.0,
            dt: 0.5,
            damped_decay: 0.85,
            damped_amplitude: 2.0,
            oscillation_angle: 0.35,
            oscillation_amplitude: 0.5,
            oscillation_phase: 0.3,
            noise: NoiseLevel::RelativeToRegimeMax(1e-3),
            seed: 0,
        }
    }
}

impl FomConfig {
    pub fn noise_free(mut self) -> Self {
        self.noise = NoiseLevel::Absolute(0.0);
        self
    }

    pub fn validate(&self) -> Result<(), FomError> {
        let bad = |m: &str| Err(FomError::Config(m.to_string()));
        if self.snapshot_count < 2 {
            return bad("need at least two snapshots");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.damped_decay > 0.0 && self.damped_decay < 1.0) {
            return bad("damped decay must lie in (0, 1)");
        }
        if !(self.oscillation_angle > 0.0 && self.oscillation_angle < std::f64::consts::PI) {
            return bad("oscillation angle must lie in (0, pi)");
        }
        let noise = match self.noise {
            NoiseLevel::Absolute(s) | NoiseLevel::RelativeToRegimeMax(s) => s,
        };
        if !(noise >= 0.0 && noise.is_finite()) {
            return bad("noise level must be non-negative");
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.snapshot_count).map(|k| self.t0 + k as f64 * self.dt).collect()
    }
}

/// Time-indexed snapshots; one column per saved time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    pub values: DMatrix<f64>,
    pub times: Vec<f64>,
}

impl SnapshotSeries {
    pub fn new(values: DMatrix<f64>, times: Vec<f64>) -> Result<Self, FomError> {
        if values.ncols() != times.len() {
            return Err(FomError::Config(format!(
                "{} columns but {} times",
                values.ncols(),
                times.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FomError::Config("snapshot values must be finite".into()));
        }
        Ok(Self { values, times })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.values.column(k).into_owned()
    }
}

/// Spatial profiles of the transient terms, unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientProfiles {
    pub damped: DVector<f64>,
    pub oscillation_cos: DVector<f64>,
    pub oscillation_sin: DVector<f64>,
}

/// Smooth seeded profiles: sums of a few plane waves over the face centroids.
pub fn transient_profiles(centroids: &[Point3<f64>], seed: u64) -> TransientProfiles {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = bounding_diagonal(centroids).max(f64::MIN_POSITIVE);
    let mut profile = || {
        let waves: Vec<([f64; 3], f64, f64)> = (0..4)
            .map(|_| {
                let k = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
                (k, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.5..1.0))
            })
            .collect();
        let v = DVector::from_iterator(
            centroids.len(),
            centroids.iter().map(|c| {
                waves
                    .iter()
                    .map(|(k, phase, amp)| amp * ((k[0] * c.x + k[1] * c.y + k[2] * c.z) / scale + phase).cos())
                    .sum::<f64>()
            }),
        );
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            v
        }
    };
    TransientProfiles {
        damped: profile(),
        oscillation_cos: profile(),
        oscillation_sin: profile(),
    }
}

fn bounding_diagonal(points: &[Point3<f64>]) -> f64 {
    let Some(first) = points.first() else { return 0.0 };
    let (lo, hi) = points.iter().fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (hi - lo).norm()
}

/// Builds the series around a given regime field.
pub fn synthesize(regime: &[f64], profiles: &TransientProfiles, config: &FomConfig) -> Result<SnapshotSeries, FomError> {
    config.validate()?;
    let n = regime.len();
    for p in [&profiles.damped, &profiles.oscillation_cos, &profiles.oscillation_sin] {
        if p.len() != n {
            return Err(FomError::Dimension {
                regime: n,
                centroids: p.len(),
            });
        }
    }
    let std = match config.noise {
        NoiseLevel::Absolute(s) => s,
        NoiseLevel::RelativeToRegimeMax(f) => f * regime.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    // Separate stream from the profiles so that noise on/off does not change them.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let normal = Normal::new(0.0, std).map_err(|e| FomError::Config(e.to_string()))?;
    let r = DVector::from_column_slice(regime);
    let mut values = DMatrix::zeros(n, config.snapshot_count);
    for k in 0..config.snapshot_count {
        let kf = k as f64;
        let angle = config.oscillation_angle * kf + config.oscillation_phase;
        let mut col = &r
            + &profiles.damped * (config.damped_amplitude * config.damped_decay.powi(k as i32))
            + &profiles.oscillation_cos * (config.oscillation_amplitude * angle.cos())
            + &profiles.oscillation_sin * (config.oscillation_amplitude * angle.sin());
        if std > 0.0 {
            col.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
        values.set_column(k, &col);
    }
    SnapshotSeries::new(values, config.times())
}

/// Runs the synthetic model on a (possibly deformed) hull.
pub fn simulate(
    mesh: &SurfaceMesh,
    waterline_z: f64,
    field: &RegimeFieldParams,
    config: &FomConfig,
) -> Result<SnapshotSeries, FomError> {
    config.validate()?;
    let regime = regime_field(mesh, waterline_z, field)?;
    let profiles = transient_profiles(&mesh.face_centroids(), config.seed);
    synthesize(&regime, &profiles, config)
}
