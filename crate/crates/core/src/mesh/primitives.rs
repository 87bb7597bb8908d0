//! Closed reference meshes: boxes, icospheres and a synthetic hull.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Point3;

use super::{MeshError, SurfaceMesh};

/// Axis-aligned box with outward winding.
pub fn box_mesh(lo: Point3<f64>, hi: Point3<f64>) -> SurfaceMesh {
    let v = |x: bool, y: bool, z: bool| {
        Point3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let vertices = vec![
        v(false, false, false),
        v(true, false, false),
        v(true, true, false),
        v(false, true, false),
        v(false, false, true),
        v(true, false, true),
        v(true, true, true),
        v(false, true, true),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    SurfaceMesh::from_parts_unchecked(vertices, faces)
}

pub fn unit_cube() -> SurfaceMesh {
    box_mesh(Point3::origin(), Point3::new(1.0, 1.0, 1.0))
}

/// Subdivided icosahedron projected onto a sphere centred at the origin.
pub fn icosphere(subdivisions: usize, radius: f64) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(nalgebra::Vector3::from(*p).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords).normalize();
                vertices.push(Point3::from(m));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v = Point3::from(v.coords * radius);
    }
    SurfaceMesh::from_parts_unchecked(vertices, faces)
}

/// Shape and resolution of the synthetic hull.
///
/// The hull runs from the bow tip at `x = 0` to the stern at `x = length`,
/// symmetric about `y = 0`, with a vertex ring exactly on `z = 0` at every
/// station so that the default waterline never cuts a face.
#[derive(Debug, Clone, PartialEq)]
pub struct HullParams {
    pub length: f64,
    pub half_beam: f64,
    pub draft: f64,
    pub freeboard: f64,
    /// Extra fullness of the submerged forefoot, as a fraction of the draft.
    pub bulb: f64,
    /// Interior stations between the two end poles.
    pub stations: usize,
    /// Vertices around each station; must be even and at least 4.
    pub sections: usize,
}

impl Default for HullParams {
    fn default() -> Self {
        Self {
            length: 4.0,
            half_beam: 0.3,
            draft: 0.25,
            freeboard: 0.15,
            bulb: 0.35,
            stations: 40,
            sections: 24,
        }
    }
}

/// Elongated ellipsoid-like hull with a bulbous forefoot.
pub fn synthetic_hull(p: &HullParams) -> Result<SurfaceMesh, MeshError> {
    if p.sections < 4 || !p.sections.is_multiple_of(2) || p.stations < 2 {
        return Err(MeshError::Parse {
            line: 0,
            message: "hull needs >= 2 stations and an even section count >= 4".into(),
        });
    }
    let (ns, na) = (p.stations, p.sections);
    let mut vertices = Vec::with_capacity(ns * na + 2);
    vertices.push(Point3::new(0.0, 0.0, 0.0));
    for i in 1..=ns {
        // Cosine spacing refines the rounded ends.
        let u = 0.5 * (1.0 - (PI * i as f64 / (ns + 1) as f64).cos());
        let x = p.length * u;
        let envelope = (1.0 - (2.0 * u - 1.0).powi(2)).max(0.0).powf(0.45);
        let bulb = p.bulb * (-((u - 0.06) / 0.05).powi(2)).exp();
        for j in 0..na {
            let phi = 2.0 * PI * j as f64 / na as f64;
            let (s, c) = phi.sin_cos();
            // Superelliptic section: fuller than an ellipse.
            let cy = c.signum() * c.abs().powf(0.8);
            let sz = s.signum() * s.abs().powf(0.8);
            let mut y = p.half_beam * envelope * cy;
            let z = if j == 0 || 2 * j == na {
                0.0
            } else if s > 0.0 {
                p.freeboard * envelope * sz
            } else {
                // Forefoot bulge weighted toward the keel.
                let keel = s * s;
                y *= 1.0 + 0.5 * bulb * keel;
                p.draft * (envelope + bulb * keel * (1.0 - envelope)) * sz
            };
            vertices.push(Point3::new(x, y, z));
        }
    }
    vertices.push(Point3::new(p.length, 0.0, 0.0));
    let ring = |i: usize, j: usize| 1 + (i - 1) * na + (j % na);
    let stern = vertices.len() - 1;
    let mut faces = Vec::with_capacity(2 * na * ns);
    for j in 0..na {
        faces.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..ns {
        for j in 0..na {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    for j in 0..na {
        faces.push([stern, ring(ns, j), ring(ns, j + 1)]);
    }
    SurfaceMesh::new(vertices, faces)
}
