//! Static 3-D kd-tree for nearest-point queries.

use nalgebra::Point3;

pub(crate) struct KdTree {
    points: Vec<Point3<f64>>,
    /// Point indices arranged as an implicit balanced tree.
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        Self { points, order }
    }

    /// Index of the nearest point; ties go to the smallest index.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<usize> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(&self.order, 0, q, &mut best);
        Some(best.1)
    }

    fn search(&self, slice: &[usize], depth: usize, q: &Point3<f64>, best: &mut (f64, usize)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = &self.points[idx];
        let d = (p - q).norm_squared();
        if d < best.0 || (d == best.0 && idx < best.1) {
            *best = (d, idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        // `<=` keeps exact ties reachable on the far side.
        if diff * diff <= best.0 {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Point3<f64>], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}
