use super::{MeshError, TriangleMesh};
use nalgebra::Point3;

const LEAF_SIZE: usize = 8;

/// Static kd-tree over a point set.
///
/// Radius queries are inclusive: a point at exactly distance `r` is returned.
/// Distances are compared as `‖p − q‖² ≤ r²` with the squared norm summed in
/// x, y, z order, so results agree exactly with a brute-force scan that uses
/// the same expression.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    /// Split axis for the node whose median sits at `order[i]`.
    axes: Vec<u8>,
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        Self::from_points(mesh.vertices())
    }

    pub fn from_points(points: &[Point3<f64>]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build_node(&points, &mut order, &mut axes, 0, points.len());
        Self { points, order, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of all points within distance `r` of `q` (inclusive), ascending.
    pub fn radius_query(&self, q: &Point3<f64>, r: f64) -> Result<Vec<usize>, MeshError> {
        let mut out = Vec::new();
        self.radius_query_into(q, r, &mut out)?;
        Ok(out)
    }

    /// Like [`radius_query`](Self::radius_query) but reuses `out`.
    pub fn radius_query_into(&self, q: &Point3<f64>, r: f64, out: &mut Vec<usize>) -> Result<(), MeshError> {
        if !(r > 0.0) {
            return Err(MeshError::NonPositiveRadius(r));
        }
        out.clear();
        let q = [q.x, q.y, q.z];
        self.collect(&q, r * r, 0, self.points.len(), out);
        out.sort_unstable();
        Ok(())
    }

    fn collect(&self, q: &[f64; 3], r2: f64, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                if dist2(&self.points[i], q) <= r2 {
                    out.push(i);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        let axis = self.axes[mid] as usize;
        if dist2(&self.points[pivot], q) <= r2 {
            out.push(pivot);
        }
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff <= 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.collect(q, r2, near.0, near.1, out);
        if diff * diff <= r2 {
            self.collect(q, r2, far.0, far.1, out);
        }
    }

    /// Nearest point to `q`; ties resolve to the lower index.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_in(&q, 0, self.points.len(), &mut best);
        Some((best.1, best.0.sqrt()))
    }

    fn nearest_in(&self, q: &[f64; 3], lo: usize, hi: usize, best: &mut (f64, usize)) {
        let consider = |i: usize, best: &mut (f64, usize)| {
            let d = dist2(&self.points[i], q);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                consider(i, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let pivot = self.order[mid];
        let axis = self.axes[mid] as usize;
        consider(pivot, best);
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff <= 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.nearest_in(q, near.0, near.1, best);
        if diff * diff <= best.0 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }
}

fn build_node(points: &[[f64; 3]], order: &mut [usize], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF_SIZE {
        return;
    }
    let mut lo_b = [f64::INFINITY; 3];
    let mut hi_b = [f64::NEG_INFINITY; 3];
    for &i in &order[lo..hi] {
        for k in 0..3 {
            lo_b[k] = lo_b[k].min(points[i][k]);
            hi_b[k] = hi_b[k].max(points[i][k]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (hi_b[a] - lo_b[a]).total_cmp(&(hi_b[b] - lo_b[b]))).unwrap();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    build_node(points, order, axes, lo, mid);
    build_node(points, order, axes, mid + 1, hi);
}
