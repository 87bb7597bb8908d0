//! Resistance functional and the volume-constrained shape objective.

use nalgebra::DVector;
use thiserror::Error;

use crate::dmd::FaceProjector;
use crate::ffd::{FfdError, FfdLattice, ParameterBinding};
use crate::ga::Fitness;
use crate::mesh::{immersed_volume, MeshError, SurfaceMesh};
use crate::rom::{FieldSurrogate, RomError};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("field has {field} entries for {faces} faces")]
    Length { field: usize, faces: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ffd(#[from] FfdError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error("deformation produced {0} degenerate faces")]
    Degenerate(usize),
    #[error("invalid objective configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Deformed immersed volume must be at least this fraction of the baseline.
    pub volume_fraction_floor: f64,
    pub baseline_volume: f64,
    pub waterline_z: f64,
}

impl ObjectiveConfig {
    pub fn new(baseline_volume: f64, waterline_z: f64) -> Result<Self, ObjectiveError> {
        let c = Self {
            volume_fraction_floor: 0.999,
            baseline_volume,
            waterline_z,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.volume_fraction_floor > 0.0 && self.volume_fraction_floor <= 1.0) {
            return Err(ObjectiveError::Config(format!("volume floor {} outside (0, 1]", self.volume_fraction_floor)));
        }
        if !(self.baseline_volume > 0.0 && self.baseline_volume.is_finite()) {
            return Err(ObjectiveError::Config(format!("baseline volume {} must be positive", self.baseline_volume)));
        }
        Ok(())
    }

    pub fn is_feasible(&self, immersed: f64) -> bool {
        immersed >= self.volume_fraction_floor * self.baseline_volume
    }
}

/// Area-weighted sum of an x-force density over the faces whose centroid is
/// below the waterline.
pub fn resistance_integral(field: &[f64], mesh: &SurfaceMesh, waterline_z: f64) -> Result<f64, ObjectiveError> {
    if field.len() != mesh.face_count() {
        return Err(ObjectiveError::Length {
            field: field.len(),
            faces: mesh.face_count(),
        });
    }
    let mut total = 0.0;
    for (g, &v) in mesh.face_geometries()?.iter().zip(field) {
        if g.centroid.z < waterline_z {
            total += v * g.area;
        }
    }
    Ok(total)
}

/// The reference hull and its FFD parameterization.
#[derive(Debug, Clone)]
pub struct ShapeSpace {
    pub base: SurfaceMesh,
    pub lattice: FfdLattice,
    pub binding: ParameterBinding,
    pub bounds: (f64, f64),
    pub waterline_z: f64,
}

impl ShapeSpace {
    pub fn dimension(&self) -> usize {
        self.binding.parameter_count()
    }

    /// Hull at `mu`. Degenerate faces are an error.
    pub fn deform(&self, mu: &[f64]) -> Result<SurfaceMesh, ObjectiveError> {
        let lattice = self.lattice.apply_parameters(&self.binding, mu, self.bounds)?;
        let deformed = lattice.deform_mesh(&self.base);
        if !deformed.degenerate_faces.is_empty() {
            return Err(ObjectiveError::Degenerate(deformed.degenerate_faces.len()));
        }
        Ok(deformed.mesh)
    }

    pub fn immersed_volume(&self, mu: &[f64]) -> Result<f64, ObjectiveError> {
        Ok(immersed_volume(&self.deform(mu)?, self.waterline_z)?)
    }

    pub fn baseline_volume(&self) -> Result<f64, ObjectiveError> {
        Ok(immersed_volume(&self.base, self.waterline_z)?)
    }
}

/// Result of one objective evaluation with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: Fitness,
    pub volume_ratio: f64,
}

/// `μ ↦ ∫ field` on the deformed hull, or infeasible when the immersed
/// volume drops below the floor. The surrogate field lives on the reference
/// mesh and is carried to the deformed mesh by nearest centroid.
pub struct ShapeObjective<'a, S: ?Sized> {
    space: &'a ShapeSpace,
    surrogate: &'a S,
    config: ObjectiveConfig,
    projector: FaceProjector,
}

impl<'a, S: FieldSurrogate + ?Sized> ShapeObjective<'a, S> {
    pub fn new(space: &'a ShapeSpace, surrogate: &'a S, config: ObjectiveConfig) -> Result<Self, ObjectiveError> {
        config.validate()?;
        Ok(Self {
            space,
            surrogate,
            config,
            projector: FaceProjector::new(&space.base),
        })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn evaluate(&self, mu: &[f64]) -> Result<Evaluation, ObjectiveError> {
        let mesh = self.space.deform(mu)?;
        let volume = immersed_volume(&mesh, self.config.waterline_z)?;
        let volume_ratio = volume / self.config.baseline_volume;
        if !self.config.is_feasible(volume) {
            return Ok(Evaluation {
                fitness: Fitness::Infeasible,
                volume_ratio,
            });
        }
        let field: DVector<f64> = self.surrogate.predict_field(mu)?;
        let projected = self.projector.project(field.as_slice(), &mesh);
        let r = resistance_integral(&projected, &mesh, self.config.waterline_z)?;
        Ok(Evaluation {
            fitness: Fitness::Feasible(r),
            volume_ratio,
        })
    }

    /// The penalized objective value alone.
    pub fn penalized(&self, mu: &[f64]) -> Result<Fitness, ObjectiveError> {
        Ok(self.evaluate(mu)?.fitness)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffd::FfdLattice;
    use crate::mesh::primitives::{synthetic_hull, unit_cube, HullParams};
    use crate::synthfom::{regime_field, RegimeFieldParams};
    use nalgebra::{Point3, Vector3};

    fn space() -> ShapeSpace {
        let mut lattice = FfdLattice::new(Point3::new(-0.1, -0.4, -0.35), Vector3::new(1.6, 0.8, 0.6), [6, 6, 4]).unwrap();
        lattice.fix_boundary_layers(2);
        lattice.fix_layer(1, 3);
        let binding = ParameterBinding::layered(&lattice).unwrap();
        ShapeSpace {
            base: synthetic_hull(&HullParams::default()).unwrap(),
            lattice,
            binding,
            bounds: (-0.08, 0.08),
            waterline_z: 0.0,
        }
    }

    /// Regime field of the exact deformed hull, pulled back to the base mesh.
    struct Exact<'a>(&'a ShapeSpace);
    impl FieldSurrogate for Exact<'_> {
        fn predict_field(&self, mu: &[f64]) -> Result<DVector<f64>, RomError> {
            let mesh = self.0.deform(mu).unwrap();
            let f = regime_field(&mesh, 0.0, &RegimeFieldParams::default()).unwrap();
            Ok(DVector::from_vec(crate::dmd::project_field(&f, &mesh, &self.0.base)))
        }
    }

    #[test]
    fn integral_examples() {
        let cube = unit_cube().translated(Vector3::new(0.0, 0.0, -5.0));
        assert_eq!(resistance_integral(&[0.0; 12], &cube, 0.0).unwrap(), 0.0);
        assert!((resistance_integral(&[1.0; 12], &cube, 0.0).unwrap() - 6.0).abs() < 1e-14);
        // Cube straddling z = 0.5: only faces with centroids below count.
        let cube = unit_cube();
        let field: Vec<f64> = cube.face_centroids().iter().map(|c| if c.z >= 0.5 { 3.0 } else { 0.0 }).collect();
        assert_eq!(resistance_integral(&field, &cube, 0.5).unwrap(), 0.0);
        assert!(matches!(resistance_integral(&[1.0; 3], &cube, 0.5), Err(ObjectiveError::Length { .. })));
    }

    #[test]
    fn zero_mu_is_feasible_baseline() {
        let s = space();
        let surrogate = Exact(&s);
        let cfg = ObjectiveConfig::new(s.baseline_volume().unwrap(), 0.0).unwrap();
        let obj = ShapeObjective::new(&s, &surrogate, cfg).unwrap();
        let e = obj.evaluate(&[0.0; 6]).unwrap();
        assert_eq!(e.volume_ratio, 1.0);
        let expected = resistance_integral(&regime_field(&s.base, 0.0, &RegimeFieldParams::default()).unwrap(), &s.base, 0.0).unwrap();
        assert_eq!(e.fitness, Fitness::Feasible(expected));
        let mu = [0.02, -0.03, 0.01, 0.05, 0.0, -0.01];
        assert_eq!(obj.penalized(&mu).unwrap(), obj.penalized(&mu).unwrap());
    }

    #[test]
    fn shrinking_the_bow_hits_the_floor() {
        let s = space();
        let surrogate = Exact(&s);
        let base = s.baseline_volume().unwrap();
        let cfg = ObjectiveConfig::new(base, 0.0).unwrap();
        let obj = ShapeObjective::new(&s, &surrogate, cfg).unwrap();
        let narrow = |t: f64| [0.0, 0.0, 0.0, -t, -t, -t];
        let ratio = |t: f64| s.immersed_volume(&narrow(t)).unwrap() / base;
        assert!(ratio(0.08) < 0.999);
        let (mut lo, mut hi) = (0.0, 0.08);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) >= 0.999 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(obj.penalized(&narrow(lo)).unwrap().is_feasible());
        assert_eq!(obj.penalized(&narrow(hi + 1e-6)).unwrap(), Fitness::Infeasible);
    }

    #[test]
    fn bad_configs_and_bounds() {
        assert!(ObjectiveConfig::new(0.0, 0.0).is_err());
        let mut c = ObjectiveConfig::new(1.0, 0.0).unwrap();
        c.volume_fraction_floor = 1.5;
        assert!(c.validate().is_err());
        let s = space();
        assert!(matches!(s.deform(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0]), Err(ObjectiveError::Ffd(_))));
    }
}
