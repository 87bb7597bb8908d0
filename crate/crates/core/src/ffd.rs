//! Free-form deformation on a trivariate Bernstein lattice.
//!
//! The lattice lives in the unit cube; an axis-aligned affine box map takes
//! physical points into it and back. Control-point displacements are stored in
//! normalized box units, so a displacement of `0.08` along x moves the control
//! point by `0.08 * extent.x` metres.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::SurfaceMesh;

#[derive(Debug, Error, PartialEq)]
pub enum FfdError {
    #[error("bernstein index {index} outside 0..={degree}")]
    IndexOutOfRange { degree: usize, index: usize },
    #[error("unit coordinate {0} outside [0, 1]")]
    CoordinateOutOfRange(f64),
    #[error("lattice extent must be strictly positive, got {0:?}")]
    BadExtent([f64; 3]),
    #[error("lattice needs degree >= 1 on every axis, got {0:?}")]
    BadDegree([usize; 3]),
    #[error("expected {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },
    #[error("parameter {index} = {value} outside [{lo}, {hi}]")]
    BoundViolation { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("control point {point} is fixed on axis {axis}")]
    FixedPoint { point: usize, axis: usize },
    #[error("control point index {0} out of range")]
    PointOutOfRange(usize),
}

/// `C(degree, index) (1-s)^(degree-index) s^index`.
pub fn bernstein_weight(degree: usize, index: usize, s: f64) -> Result<f64, FfdError> {
    if index > degree {
        return Err(FfdError::IndexOutOfRange { degree, index });
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(FfdError::CoordinateOutOfRange(s));
    }
    Ok(binomial(degree, index) * (1.0 - s).powi((degree - index) as i32) * s.powi(index as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All `degree + 1` weights at `s`, assuming `s` in `[0, 1]`.
fn bernstein_row(degree: usize, s: f64) -> Vec<f64> {
    (0..=degree)
        .map(|i| binomial(degree, i) * (1.0 - s).powi((degree - i) as i32) * s.powi(i as i32))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfdLattice {
    origin: Point3<f64>,
    extent: Vector3<f64>,
    degrees: [usize; 3],
    displacement: Vec<Vector3<f64>>,
    free: Vec<[bool; 3]>,
}

/// Result of [`FfdLattice::map_to_unit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCoordinate {
    pub coords: Vector3<f64>,
    pub outside: bool,
}

impl FfdLattice {
    /// A lattice with `degrees[a] + 1` control points along axis `a`, all free
    /// and undisplaced.
    pub fn new(origin: Point3<f64>, extent: Vector3<f64>, degrees: [usize; 3]) -> Result<Self, FfdError> {
        if !extent.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(FfdError::BadExtent([extent.x, extent.y, extent.z]));
        }
        if degrees.contains(&0) {
            return Err(FfdError::BadDegree(degrees));
        }
        let n = degrees.iter().map(|d| d + 1).product();
        Ok(Self {
            origin,
            extent,
            degrees,
            displacement: vec![Vector3::zeros(); n],
            free: vec![[true; 3]; n],
        })
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.extent
    }

    pub fn degrees(&self) -> [usize; 3] {
        self.degrees
    }

    pub fn point_count(&self) -> usize {
        self.displacement.len()
    }

    pub fn index(&self, l: usize, m: usize, n: usize) -> usize {
        (l * (self.degrees[1] + 1) + m) * (self.degrees[2] + 1) + n
    }

    pub fn coords_of(&self, index: usize) -> [usize; 3] {
        let nn = self.degrees[2] + 1;
        let nm = self.degrees[1] + 1;
        [index / (nm * nn), (index / nn) % nm, index % nn]
    }

    pub fn displacement(&self, index: usize) -> Vector3<f64> {
        self.displacement[index]
    }

    pub fn is_free(&self, index: usize, axis: usize) -> bool {
        self.free[index][axis]
    }

    /// Fixes every control point whose layer index along `axis` is `layer`.
    pub fn fix_layer(&mut self, axis: usize, layer: usize) {
        for i in 0..self.point_count() {
            if self.coords_of(i)[axis] == layer {
                self.free[i] = [false; 3];
                self.displacement[i] = Vector3::zeros();
            }
        }
    }

    /// Fixes the `count` outermost layers on both sides of every axis.
    pub fn fix_boundary_layers(&mut self, count: usize) {
        for axis in 0..3 {
            let d = self.degrees[axis];
            for k in 0..count.min(d + 1) {
                self.fix_layer(axis, k);
                self.fix_layer(axis, d - k);
            }
        }
    }

    /// Sets one displacement component in normalized units.
    pub fn set_displacement(&mut self, index: usize, axis: usize, value: f64) -> Result<(), FfdError> {
        if index >= self.point_count() {
            return Err(FfdError::PointOutOfRange(index));
        }
        if !self.free[index][axis] {
            return Err(FfdError::FixedPoint { point: index, axis });
        }
        self.displacement[index][axis] = value;
        Ok(())
    }

    fn clear_displacements(&mut self) {
        self.displacement.iter_mut().for_each(|d| *d = Vector3::zeros());
    }

    /// Affine box map into the unit cube. Boundary points count as inside.
    pub fn map_to_unit(&self, point: &Point3<f64>) -> UnitCoordinate {
        let coords = (point - self.origin).component_div(&self.extent);
        let outside = coords.iter().any(|&c| !(0.0..=1.0).contains(&c));
        UnitCoordinate { coords, outside }
    }

    /// Deformed position of a physical point.
    ///
    /// Bernstein polynomials reproduce linear functions, so the sum over the
    /// undisplaced lattice is the identity and only the weighted displacement
    /// has to be added. Zero displacement therefore returns the input bits.
    pub fn deform_point(&self, point: &Point3<f64>) -> Point3<f64> {
        let unit = self.map_to_unit(point);
        if unit.outside {
            return *point;
        }
        let [dl, dm, dn] = self.degrees;
        let bs = bernstein_row(dl, unit.coords.x);
        let bt = bernstein_row(dm, unit.coords.y);
        let bp = bernstein_row(dn, unit.coords.z);
        let mut shift = Vector3::zeros();
        let mut idx = 0;
        for &ws in &bs {
            for &wt in &bt {
                for &wp in &bp {
                    let d = &self.displacement[idx];
                    if *d != Vector3::zeros() {
                        shift += d * (ws * wt * wp);
                    }
                    idx += 1;
                }
            }
        }
        if shift == Vector3::zeros() {
            *point
        } else {
            point + shift.component_mul(&self.extent)
        }
    }

    /// Moves every vertex; faces are untouched so the topology is shared with
    /// the input.
    pub fn deform_mesh(&self, mesh: &SurfaceMesh) -> DeformedMesh {
        let vertices: Vec<Point3<f64>> = mesh.vertices().par_iter().map(|v| self.deform_point(v)).collect();
        let mesh = mesh.with_vertices(vertices);
        let degenerate_faces = mesh.degenerate_faces();
        if !degenerate_faces.is_empty() {
            log::warn!("deformation produced {} degenerate faces", degenerate_faces.len());
        }
        DeformedMesh {
            mesh,
            degenerate_faces,
        }
    }

    /// Returns a copy with the bound displacements set from `mu` and every
    /// other displacement zeroed.
    pub fn apply_parameters(&self, binding: &ParameterBinding, mu: &[f64], bounds: (f64, f64)) -> Result<FfdLattice, FfdError> {
        if mu.len() != binding.parameter_count() {
            return Err(FfdError::ParameterCount {
                expected: binding.parameter_count(),
                actual: mu.len(),
            });
        }
        for (index, &value) in mu.iter().enumerate() {
            if !(value >= bounds.0 && value <= bounds.1) {
                return Err(FfdError::BoundViolation {
                    index,
                    value,
                    lo: bounds.0,
                    hi: bounds.1,
                });
            }
        }
        let mut out = self.clone();
        out.clear_displacements();
        for (group, &value) in binding.groups.iter().zip(mu) {
            for dof in group {
                let current = out.displacement.get(dof.point).ok_or(FfdError::PointOutOfRange(dof.point))?[dof.axis];
                out.set_displacement(dof.point, dof.axis, current + dof.sign * value)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct DeformedMesh {
    pub mesh: SurfaceMesh,
    /// Faces with zero area after the deformation.
    pub degenerate_faces: Vec<usize>,
}

/// One displaced degree of freedom of a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundDof {
    pub point: usize,
    pub axis: usize,
    pub sign: f64,
}

/// Maps each entry of a parameter vector onto a group of control-point
/// displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBinding {
    groups: Vec<Vec<BoundDof>>,
}

impl ParameterBinding {
    pub fn new(lattice: &FfdLattice, groups: Vec<Vec<BoundDof>>) -> Result<Self, FfdError> {
        for dof in groups.iter().flatten() {
            if dof.point >= lattice.point_count() {
                return Err(FfdError::PointOutOfRange(dof.point));
            }
            if !lattice.is_free(dof.point, dof.axis) {
                return Err(FfdError::FixedPoint {
                    point: dof.point,
                    axis: dof.axis,
                });
            }
        }
        Ok(Self { groups })
    }

    pub fn parameter_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<BoundDof>] {
        &self.groups
    }

    /// Bow binding: one parameter per free x-layer for x-motion, then one per
    /// free x-layer for y-motion. The y-motion is mirrored across the middle
    /// y-layer, so positive values widen the hull.
    pub fn layered(lattice: &FfdLattice) -> Result<Self, FfdError> {
        let [dl, dm, _] = lattice.degrees();
        let free_layers: Vec<usize> = (0..=dl)
            .filter(|&l| (0..lattice.point_count()).any(|i| lattice.coords_of(i)[0] == l && lattice.free[i] != [false; 3]))
            .collect();
        let mut groups = Vec::new();
        for axis in [0, 1] {
            for &l in &free_layers {
                let group = (0..lattice.point_count())
                    .filter(|&i| lattice.coords_of(i)[0] == l && lattice.is_free(i, axis))
                    .map(|i| {
                        let m = lattice.coords_of(i)[1];
                        let sign = if axis == 1 && 2 * m < dm { -1.0 } else { 1.0 };
                        BoundDof { point: i, axis, sign }
                    })
                    .collect();
                groups.push(group);
            }
        }
        Self::new(lattice, groups)
    }
}
