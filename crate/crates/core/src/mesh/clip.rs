use std::collections::HashMap;

use nalgebra::Point3;

use super::{checked_volume, MeshError, SurfaceMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ClipVertex {
    Original(usize),
    /// Crossing on the edge between two original vertices, `lo < hi`.
    Cut(usize, usize),
}

struct Clipper<'a> {
    mesh: &'a SurfaceMesh,
    waterline: f64,
    ids: HashMap<ClipVertex, usize>,
    vertices: Vec<Point3<f64>>,
}

impl Clipper<'_> {
    fn side(&self, i: usize) -> i8 {
        let z = self.mesh.vertices()[i].z;
        if z < self.waterline {
            -1
        } else if z > self.waterline {
            1
        } else {
            0
        }
    }

    fn on_plane(&self, v: ClipVertex) -> bool {
        match v {
            ClipVertex::Original(i) => self.side(i) == 0,
            ClipVertex::Cut(..) => true,
        }
    }

    fn id(&mut self, v: ClipVertex) -> usize {
        if let Some(&id) = self.ids.get(&v) {
            return id;
        }
        let p = match v {
            ClipVertex::Original(i) => self.mesh.vertices()[i],
            ClipVertex::Cut(lo, hi) => {
                // Endpoints in index order so both adjacent faces compute the
                // same bits for the shared crossing.
                let a = self.mesh.vertices()[lo];
                let b = self.mesh.vertices()[hi];
                let t = (self.waterline - a.z) / (b.z - a.z);
                let mut p = a + (b - a) * t;
                p.z = self.waterline;
                p
            }
        };
        self.vertices.push(p);
        self.ids.insert(v, self.vertices.len() - 1);
        self.vertices.len() - 1
    }
}

/// Submerged part of a closed mesh (`z < waterline_z`) closed off by a planar
/// cap at the waterline.
///
/// Straddling faces are clipped against the plane and re-triangulated; the cap
/// is a fan from the centroid of each waterline loop.
pub fn clip_below_waterline(mesh: &SurfaceMesh, waterline_z: f64) -> Result<SurfaceMesh, MeshError> {
    mesh.ensure_closed()?;
    let mut clipper = Clipper {
        mesh,
        waterline: waterline_z,
        ids: HashMap::new(),
        vertices: Vec::new(),
    };
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // Directed polygon edges lying in the waterline plane.
    let mut plane_edges: HashMap<(usize, usize), i32> = HashMap::new();

    for face in mesh.faces() {
        let sides = face.map(|i| clipper.side(i));
        if sides.iter().all(|&s| s > 0) {
            continue;
        }
        let mut poly: Vec<ClipVertex> = Vec::with_capacity(4);
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let (sa, sb) = (sides[k], sides[(k + 1) % 3]);
            if sa <= 0 {
                poly.push(ClipVertex::Original(a));
            }
            if sa * sb < 0 {
                poly.push(ClipVertex::Cut(a.min(b), a.max(b)));
            }
        }
        if poly.len() < 3 || poly.iter().all(|&v| clipper.on_plane(v)) {
            continue;
        }
        let ids: Vec<usize> = poly.iter().map(|&v| clipper.id(v)).collect();
        for k in 1..ids.len() - 1 {
            faces.push([ids[0], ids[k], ids[k + 1]]);
        }
        for k in 0..poly.len() {
            let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
            if clipper.on_plane(p) && clipper.on_plane(q) {
                let (a, b) = (ids[k], ids[(k + 1) % ids.len()]);
                // Opposite directions cancel: such an edge is interior to the solid.
                if let Some(c) = plane_edges.get_mut(&(b, a)) {
                    *c -= 1;
                    if *c == 0 {
                        plane_edges.remove(&(b, a));
                    }
                } else {
                    *plane_edges.entry((a, b)).or_default() += 1;
                }
            }
        }
    }

    // The cap runs each boundary edge in reverse.
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = plane_edges
        .iter()
        .flat_map(|(&(a, b), &n)| std::iter::repeat_n((b, a), n as usize))
        .collect();
    edges.sort_unstable();
    for &(s, e) in &edges {
        next.entry(s).or_default().push(e);
    }
    for list in next.values_mut() {
        list.reverse();
    }
    let mut vertices = clipper.vertices;
    for &(start, _) in &edges {
        let Some(mut cur) = next.get_mut(&start).and_then(|l| l.pop()) else {
            continue;
        };
        let mut lp = vec![start];
        while cur != start {
            lp.push(cur);
            match next.get_mut(&cur).and_then(|l| l.pop()) {
                Some(n) => cur = n,
                None => return Err(MeshError::OpenMesh { open_edges: 1 }),
            }
        }
        let centroid = lp.iter().fold(nalgebra::Vector3::zeros(), |acc, &i| acc + vertices[i].coords)
            / lp.len() as f64;
        vertices.push(Point3::from(centroid));
        let c = vertices.len() - 1;
        for k in 0..lp.len() {
            faces.push([c, lp[k], lp[(k + 1) % lp.len()]]);
        }
    }
    Ok(SurfaceMesh::from_parts_unchecked(vertices, faces))
}

/// Volume of the solid below the waterline.
pub fn immersed_volume(mesh: &SurfaceMesh, waterline_z: f64) -> Result<f64, MeshError> {
    let clipped = clip_below_waterline(mesh, waterline_z)?;
    checked_volume(&clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{icosphere, synthetic_hull, unit_cube, HullParams};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_fully_submerged() {
        let cube = unit_cube();
        let clipped = clip_below_waterline(&cube, 2.0).unwrap();
        assert_eq!(clipped.face_count(), 12);
        assert!((immersed_volume(&cube, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cube_fully_emerged() {
        let cube = unit_cube();
        assert!(clip_below_waterline(&cube, 0.0).unwrap().is_empty());
        assert_eq!(immersed_volume(&cube, 0.0).unwrap(), 0.0);
        assert_eq!(immersed_volume(&cube, -3.0).unwrap(), 0.0);
    }

    #[test]
    fn cube_half_submerged_is_closed_box() {
        let cube = unit_cube();
        let clipped = clip_below_waterline(&cube, 0.5).unwrap();
        assert!(clipped.is_closed());
        let (lo, hi) = clipped.bounding_box().unwrap();
        assert_eq!(lo, Point3::new(0.0, 0.0, 0.0));
        assert_eq!(hi, Point3::new(1.0, 1.0, 0.5));
        assert!((immersed_volume(&cube, 0.5).unwrap() - 0.5).abs() < 1e-14);
        assert!(clipped.degenerate_faces().is_empty());
    }

    /// Point-in-solid by ray parity along +x with a slightly skewed ray.
    fn inside(mesh: &SurfaceMesh, p: Point3<f64>) -> bool {
        let dir = Vector3::new(1.0, 1e-3, 2e-3).normalize();
        let mut hits = 0;
        for f in mesh.faces() {
            let [a, b, c] = f.map(|i| mesh.vertices()[i]);
            let (e1, e2) = (b - a, c - a);
            let h = dir.cross(&e2);
            let det = e1.dot(&h);
            if det.abs() < 1e-15 {
                continue;
            }
            let s = p - a;
            let u = s.dot(&h) / det;
            let q = s.cross(&e1);
            let v = dir.dot(&q) / det;
            let t = e2.dot(&q) / det;
            if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    fn monte_carlo_volume(mesh: &SurfaceMesh, below: f64, samples: usize, seed: u64) -> f64 {
        let (lo, hi) = mesh.bounding_box().unwrap();
        let hi = Point3::new(hi.x, hi.y, hi.z.min(below));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut count = 0;
        for _ in 0..samples {
            let p = Point3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            );
            if inside(mesh, p) {
                count += 1;
            }
        }
        (hi - lo).product() * count as f64 / samples as f64
    }

    #[test]
    fn icosphere_volume_matches_monte_carlo() {
        let sphere = icosphere(3, 1.0);
        let v = immersed_volume(&sphere, 10.0).unwrap();
        let mc = monte_carlo_volume(&sphere, 10.0, 40_000, 3);
        assert!((v - mc).abs() / mc < 0.01, "divergence {v} vs monte carlo {mc}");
    }

    #[test]
    fn half_sphere_clip_is_closed_and_matches_monte_carlo() {
        let sphere = icosphere(3, 1.0);
        let clipped = clip_below_waterline(&sphere, 0.1).unwrap();
        assert!(clipped.is_closed());
        let v = immersed_volume(&sphere, 0.1).unwrap();
        let mc = monte_carlo_volume(&sphere, 0.1, 40_000, 5);
        assert!((v - mc).abs() / mc < 0.015, "divergence {v} vs monte carlo {mc}");
    }

    #[test]
    fn hull_clip_at_vertex_ring_is_closed() {
        let hull = synthetic_hull(&HullParams::default()).unwrap();
        let clipped = clip_below_waterline(&hull, 0.0).unwrap();
        assert!(clipped.is_closed());
        let v = immersed_volume(&hull, 0.0).unwrap();
        assert!(v > 0.0 && v < hull.enclosed_volume().unwrap());
    }

    #[test]
    fn high_waterline_equals_full_volume() {
        for mesh in [icosphere(2, 0.7), synthetic_hull(&HullParams::default()).unwrap()] {
            let full = mesh.enclosed_volume().unwrap();
            let v = immersed_volume(&mesh, 1e6).unwrap();
            assert!((v - full).abs() <= 1e-10 * full);
        }
    }

    #[test]
    fn monotone_in_waterline() {
        let hull = synthetic_hull(&HullParams::default()).unwrap();
        let mut prev = 0.0;
        for k in 0..=40 {
            let w = -0.4 + 0.015 * k as f64;
            let v = immersed_volume(&hull, w).unwrap();
            assert!(v >= prev - 1e-12, "volume dropped at waterline {w}");
            prev = v;
        }
    }

    #[test]
    fn horizontal_translation_invariance() {
        let hull = synthetic_hull(&HullParams::default()).unwrap();
        let v0 = immersed_volume(&hull, 0.0).unwrap();
        for off in [Vector3::new(13.7, 0.0, 0.0), Vector3::new(0.0, -5.25, 0.0), Vector3::new(3.0, 2.0, 0.0)] {
            let v = immersed_volume(&hull.translated(off), 0.0).unwrap();
            assert!((v - v0).abs() <= 1e-10 * v0);
        }
    }

    #[test]
    fn open_input_rejected() {
        let cube = unit_cube();
        let open = SurfaceMesh::new(cube.vertices().to_vec(), cube.faces()[2..].to_vec()).unwrap();
        assert!(matches!(clip_below_waterline(&open, 0.5), Err(MeshError::OpenMesh { .. })));
        assert!(matches!(immersed_volume(&open, 0.5), Err(MeshError::OpenMesh { .. })));
    }
}
