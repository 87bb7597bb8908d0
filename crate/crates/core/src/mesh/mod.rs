//! Triangle surface meshes.
//!
//! A [`SurfaceMesh`] is an indexed triangle list whose winding order encodes
//! the outward normal. Meshes are immutable once built; deformations produce
//! new meshes that share the face list.

mod clip;
mod io;
pub mod primitives;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

pub use clip::{clip_below_waterline, immersed_volume};
pub use io::{load_mesh, parse_simple_text, parse_stl_ascii, write_simple_text, MeshFormat};

/// Distance under which two loaded vertices are merged.
pub const WELD_TOLERANCE: f64 = 1e-9;

/// Default waterline plane.
pub const DEFAULT_WATERLINE_Z: f64 = 0.0;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face index {index} out of range for a mesh with {count} faces")]
    FaceOutOfRange { index: usize, count: usize },
    #[error("mesh is open: {open_edges} edges are not shared by exactly two faces")]
    OpenMesh { open_edges: usize },
    #[error("mesh orientation is inverted (signed volume {volume})")]
    Orientation { volume: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Area, unit normal and centroid of a single triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub area: f64,
    pub unit_normal: Vector3<f64>,
    pub centroid: Point3<f64>,
}

/// Indexed triangle mesh with outward-facing winding.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    /// Builds a mesh, checking face indices and rejecting zero-area faces.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= count {
                    return Err(MeshError::IndexOutOfRange { face: f, index, count });
                }
            }
            if is_degenerate(&vertices, face) {
                return Err(MeshError::DegenerateFace { face: f });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    /// Same topology, new vertex positions. No area check: callers that move
    /// vertices report degenerate faces themselves.
    pub(crate) fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self {
            vertices,
            faces: self.faces.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Geometry of one face. The normal follows the winding order.
    pub fn face_geometry(&self, face_index: usize) -> Result<FaceGeometry, MeshError> {
        let face = self.faces.get(face_index).ok_or(MeshError::FaceOutOfRange {
            index: face_index,
            count: self.faces.len(),
        })?;
        let [a, b, c] = face.map(|i| self.vertices[i]);
        let cross = (b - a).cross(&(c - a));
        let norm = cross.norm();
        if !(norm > 0.0) {
            return Err(MeshError::DegenerateFace { face: face_index });
        }
        Ok(FaceGeometry {
            area: 0.5 * norm,
            unit_normal: cross / norm,
            centroid: Point3::from((a.coords + b.coords + c.coords) / 3.0),
        })
    }

    pub fn face_geometries(&self) -> Result<Vec<FaceGeometry>, MeshError> {
        (0..self.faces.len()).map(|i| self.face_geometry(i)).collect()
    }

    pub fn face_centroids(&self) -> Vec<Point3<f64>> {
        self.faces
            .iter()
            .map(|f| {
                let s = self.vertices[f[0]].coords + self.vertices[f[1]].coords + self.vertices[f[2]].coords;
                Point3::from(s / 3.0)
            })
            .collect()
    }

    /// Faces whose area is zero at the current vertex positions.
    pub fn degenerate_faces(&self) -> Vec<usize> {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| is_degenerate(&self.vertices, f))
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of undirected edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    /// Every edge shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        self.open_edge_count() == 0
    }

    pub fn ensure_closed(&self) -> Result<(), MeshError> {
        match self.open_edge_count() {
            0 => Ok(()),
            open_edges => Err(MeshError::OpenMesh { open_edges }),
        }
    }

    /// Signed divergence-theorem volume, `(1/3) Σ centroid·n·area`.
    pub fn signed_volume(&self) -> f64 {
        // centroid·(a×b)/2 summed over faces; identical to (1/6) Σ a·(b×c).
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i].coords);
                let centroid = (a + b + c) / 3.0;
                centroid.dot(&(b - a).cross(&(c - a))) / 6.0
            })
            .sum()
    }

    /// Volume of a closed mesh; fails on open or inverted meshes.
    pub fn enclosed_volume(&self) -> Result<f64, MeshError> {
        self.ensure_closed()?;
        checked_volume(self)
    }

    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        self.with_vertices(self.vertices.iter().map(|v| v + offset).collect())
    }

    /// Axis-aligned bounding box, `None` for a mesh without vertices.
    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }
}

fn is_degenerate(vertices: &[Point3<f64>], face: &[usize; 3]) -> bool {
    if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
        return true;
    }
    let [a, b, c] = face.map(|i| vertices[i]);
    let area2 = (b - a).cross(&(c - a)).norm();
    let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
    !(area2 > 1e-14 * longest * longest)
}

/// Signed volume with the orientation check applied.
pub(crate) fn checked_volume(mesh: &SurfaceMesh) -> Result<f64, MeshError> {
    let volume = mesh.signed_volume();
    if volume >= 0.0 {
        return Ok(volume);
    }
    // Rounding noise around zero is not an orientation problem.
    let scale = mesh
        .bounding_box()
        .map(|(lo, hi)| (hi - lo).norm())
        .unwrap_or(0.0);
    if -volume <= 1e-12 * scale.powi(3) {
        Ok(0.0)
    } else {
        Err(MeshError::Orientation { volume })
    }
}
