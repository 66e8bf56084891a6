//! Vertebra-local anatomical coordinate frame and the two cutting planes
//! derived from it.
//!
//! The frame comes from principal component analysis of the raw vertex set:
//! the widest direction is left–right, the next anterior–posterior and the
//! shortest superior–inferior. PCA leaves every axis sign open, so signs are
//! fixed by two shape rules:
//!
//! * anterior points toward the bulkier end along the AP axis (more vertices
//!   in the outer quarter of the AP extent; the vertebral body outweighs the
//!   spinous process);
//! * superior is chosen so the vertices of the posterior quarter (the
//!   spinous process) sit on average below the centroid;
//!
//! and left–right completes a right-handed triad. Orientation hints override
//! ordering and signs.

use crate::linalg::jacobi_eigen;
use crate::mesh::TriangleMesh;
use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative eigenvalue gap below which two principal directions are treated
/// as indistinguishable.
pub const ISOTROPY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrameAxis {
    Ap,
    Lr,
    Si,
}

impl std::str::FromStr for FrameAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AP" => Ok(FrameAxis::Ap),
            "LR" => Ok(FrameAxis::Lr),
            "SI" => Ok(FrameAxis::Si),
            other => Err(format!("unknown frame axis `{other}` (expected AP, LR or SI)")),
        }
    }
}

/// Origin plus right-handed orthonormal anatomical axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnatomicalFrame {
    pub origin: Point3<f64>,
    pub axis_ap: Vector3<f64>,
    pub axis_lr: Vector3<f64>,
    pub axis_si: Vector3<f64>,
}

/// Coordinates of a point in a frame: `a` along AP, `l` along LR, `s` along SI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoords {
    pub a: f64,
    pub l: f64,
    pub s: f64,
}

impl AnatomicalFrame {
    /// Validates unit norms, orthogonality and handedness to 1e-9.
    pub fn new(
        origin: Point3<f64>,
        axis_ap: Vector3<f64>,
        axis_lr: Vector3<f64>,
        axis_si: Vector3<f64>,
    ) -> Result<Self, FrameError> {
        let frame = Self { origin, axis_ap, axis_lr, axis_si };
        frame.check()?;
        Ok(frame)
    }

    /// World axes: LR = +x, AP = +y, SI = +z.
    pub fn world(origin: Point3<f64>) -> Self {
        Self { origin, axis_ap: Vector3::y(), axis_lr: Vector3::x(), axis_si: Vector3::z() }
    }

    pub fn check(&self) -> Result<(), FrameError> {
        const TOL: f64 = 1e-9;
        let axes = [self.axis_ap, self.axis_lr, self.axis_si];
        if !self.origin.iter().chain(axes.iter().flat_map(|a| a.iter())).all(|c| c.is_finite()) {
            return Err(FrameError::InvalidFrame("non-finite component".into()));
        }
        for a in &axes {
            if (a.norm() - 1.0).abs() > TOL {
                return Err(FrameError::InvalidFrame(format!("axis norm {}", a.norm())));
            }
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            if axes[i].dot(&axes[j]).abs() > TOL {
                return Err(FrameError::InvalidFrame("axes are not orthogonal".into()));
            }
        }
        if self.axis_lr.cross(&self.axis_ap).dot(&self.axis_si) <= 0.0 {
            return Err(FrameError::InvalidFrame("axes are left-handed".into()));
        }
        Ok(())
    }

    pub fn axis(&self, axis: FrameAxis) -> Vector3<f64> {
        match axis {
            FrameAxis::Ap => self.axis_ap,
            FrameAxis::Lr => self.axis_lr,
            FrameAxis::Si => self.axis_si,
        }
    }

    pub fn local(&self, p: &Point3<f64>) -> LocalCoords {
        let d = p - self.origin;
        LocalCoords { a: d.dot(&self.axis_ap), l: d.dot(&self.axis_lr), s: d.dot(&self.axis_si) }
    }

    /// Applies a rotation and translation to the frame.
    pub fn rigidly_moved(&self, rotation: &Rotation3<f64>, translation: &Vector3<f64>) -> Self {
        Self {
            origin: rotation * self.origin + translation,
            axis_ap: rotation * self.axis_ap,
            axis_lr: rotation * self.axis_lr,
            axis_si: rotation * self.axis_si,
        }
    }
}

/// Plane through `point` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuttingPlane {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl CuttingPlane {
    /// Normalizes `normal`; fails on a zero or non-finite normal.
    pub fn new(point: Point3<f64>, normal: Vector3<f64>) -> Result<Self, FrameError> {
        let normal = normal
            .try_normalize(1e-300)
            .filter(|n| n.iter().all(|c| c.is_finite()))
            .ok_or_else(|| FrameError::InvalidFrame("plane normal must be non-zero".into()))?;
        Ok(Self { point, normal })
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.point).dot(&self.normal)
    }
}

/// Plane through the frame origin splitting left from right.
pub fn sagittal_plane(frame: &AnatomicalFrame) -> CuttingPlane {
    CuttingPlane { point: frame.origin, normal: frame.axis_lr }
}

/// Plane through the frame origin splitting anterior from posterior.
pub fn frontal_plane(frame: &AnatomicalFrame) -> CuttingPlane {
    CuttingPlane { point: frame.origin, normal: frame.axis_ap }
}

/// Approximate axis directions; need not be orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationHints {
    pub ap: Vector3<f64>,
    pub lr: Vector3<f64>,
    pub si: Vector3<f64>,
}

impl OrientationHints {
    /// Nearest right-handed orthonormal triad `(lr, ap, si)` in the
    /// Frobenius sense (polar decomposition).
    pub fn snapped(&self) -> Result<[Vector3<f64>; 3], FrameError> {
        let m = Matrix3::from_columns(&[self.lr, self.ap, self.si]);
        if !m.iter().all(|c| c.is_finite()) || m.norm() == 0.0 {
            return Err(FrameError::InvalidFrame("orientation hints must be finite and non-zero".into()));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        let r = u * d * v_t;
        if svd.singular_values.min() <= 1e-9 * svd.singular_values.max() {
            return Err(FrameError::InvalidFrame("orientation hints are linearly dependent".into()));
        }
        Ok([r.column(0).into(), r.column(1).into(), r.column(2).into()])
    }
}

/// Computes the anatomical frame of a vertebra mesh.
pub fn compute_frame(mesh: &TriangleMesh, hints: Option<&OrientationHints>) -> Result<AnatomicalFrame, FrameError> {
    let n = mesh.vertex_count();
    if n < 4 {
        return Err(FrameError::DegenerateGeometry(format!("need at least 4 vertices, got {n}")));
    }
    let origin = mesh.centroid().expect("non-empty mesh");
    let mut cov = [[0.0; 3]; 3];
    for v in mesh.vertices() {
        let d = v - origin;
        for r in 0..3 {
            for c in r..3 {
                cov[r][c] += d[r] * d[c];
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= n as f64;
        }
    }
    let eig = jacobi_eigen(&cov, 1e-12);
    let [l1, l2, l3] = eig.values;
    if !(l1 > 0.0) || l3 <= 1e-12 * l1 {
        return Err(FrameError::DegenerateGeometry("vertex set is coplanar or collinear".into()));
    }
    let isotropic = (l1 - l2) <= ISOTROPY_TOLERANCE * l1 || (l2 - l3) <= ISOTROPY_TOLERANCE * l1;
    let pcs: [Vector3<f64>; 3] = std::array::from_fn(|k| Vector3::from(eig.vector(k)));

    let (ap, si) = match (hints, isotropic) {
        (Some(h), true) => {
            let [_, ap, si] = h.snapped()?;
            (ap, si)
        }
        (Some(h), false) => {
            let [lr_h, ap_h, si_h] = h.snapped()?;
            let targets = [lr_h, ap_h, si_h];
            // Assignment of principal components to hinted axes maximizing total alignment.
            const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let best = PERMS
                .iter()
                .max_by(|a, b| {
                    let score = |p: &[usize; 3]| (0..3).map(|k| pcs[p[k]].dot(&targets[k]).abs()).sum::<f64>();
                    score(a).total_cmp(&score(b))
                })
                .unwrap();
            let oriented = |k: usize| {
                let v = pcs[best[k]];
                if v.dot(&targets[k]) < 0.0 {
                    -v
                } else {
                    v
                }
            };
            (oriented(1), oriented(2))
        }
        (None, true) => {
            return Err(FrameError::DegenerateGeometry(
                "principal directions are not distinct; orientation hints are required".into(),
            ))
        }
        (None, false) => {
            let ap = orient_ap(mesh, &origin, pcs[1]);
            let si = orient_si(mesh, &origin, &ap, pcs[2]);
            (ap, si)
        }
    };

    let ap = ap.normalize();
    let si = (si - ap * si.dot(&ap)).normalize();
    let lr = ap.cross(&si);
    let frame = AnatomicalFrame { origin, axis_ap: ap, axis_lr: lr, axis_si: si };
    frame.check()?;
    Ok(frame)
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let k = v.iamax();
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

fn projection_range(mesh: &TriangleMesh, origin: &Point3<f64>, axis: &Vector3<f64>) -> (f64, f64) {
    mesh.vertices().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let t = (v - origin).dot(axis);
        (lo.min(t), hi.max(t))
    })
}

fn orient_ap(mesh: &TriangleMesh, origin: &Point3<f64>, pc: Vector3<f64>) -> Vector3<f64> {
    let (lo, hi) = projection_range(mesh, origin, &pc);
    let quarter = 0.25 * (hi - lo);
    let (mut plus, mut minus) = (0usize, 0usize);
    for v in mesh.vertices() {
        let t = (v - origin).dot(&pc);
        if t >= hi - quarter {
            plus += 1;
        }
        if t <= lo + quarter {
            minus += 1;
        }
    }
    match plus.cmp(&minus) {
        std::cmp::Ordering::Greater => pc,
        std::cmp::Ordering::Less => -pc,
        std::cmp::Ordering::Equal => {
            log::warn!("anterior direction ambiguous ({plus} vertices in each end quarter); using canonical sign");
            canonical_sign(pc)
        }
    }
}

fn orient_si(mesh: &TriangleMesh, origin: &Point3<f64>, ap: &Vector3<f64>, pc: Vector3<f64>) -> Vector3<f64> {
    let (lo, hi) = projection_range(mesh, origin, ap);
    let cut = lo + 0.25 * (hi - lo);
    let (sum, count) = mesh
        .vertices()
        .iter()
        .filter(|v| (*v - origin).dot(ap) <= cut)
        .fold((0.0, 0usize), |(s, c), v| (s + (v - origin).dot(&pc), c + 1));
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    if mean < 0.0 {
        pc
    } else if mean > 0.0 {
        -pc
    } else {
        log::warn!("superior direction ambiguous; using canonical sign");
        canonical_sign(pc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Anisotropic cloud (σ = 6, 4, 2 along x, y, z) with a dense anterior
    /// cluster and a sparse posterior-inferior tail.
    fn blob() -> TriangleMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut pts: Vec<Point3<f64>> = (0..3000)
            .map(|_| Point3::new(6.0 * n.sample(&mut rng), 4.0 * n.sample(&mut rng), 2.0 * n.sample(&mut rng)))
            .collect();
        for _ in 0..600 {
            pts.push(Point3::new(rng.gen_range(-3.0..3.0), rng.gen_range(6.0..9.0), rng.gen_range(-2.0..2.0)));
        }
        for _ in 0..60 {
            pts.push(Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-14.0..-10.0), rng.gen_range(-6.0..-3.0)));
        }
        TriangleMesh::new(pts, vec![[0, 1, 2]]).unwrap()
    }

    fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(b).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn blob_frame_matches_world_axes() {
        let f = compute_frame(&blob(), None).unwrap();
        f.check().unwrap();
        assert!(angle(&f.axis_lr, &Vector3::x()) < 0.1);
        assert!(angle(&f.axis_ap, &Vector3::y()) < 0.1);
        assert!(angle(&f.axis_si, &Vector3::z()) < 0.1);
    }

    #[test]
    fn equivariant_under_rigid_motion() {
        let mesh = blob();
        let f = compute_frame(&mesh, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let r = Rotation3::from_scaled_axis(axis.normalize() * rng.gen_range(0.0..std::f64::consts::PI));
            let t = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let moved = mesh.map_vertices(|p| r * p + t);
            let g = compute_frame(&moved, None).unwrap();
            let want = f.rigidly_moved(&r, &t);
            assert!(angle(&g.axis_ap, &want.axis_ap) < 1e-6);
            assert!(angle(&g.axis_lr, &want.axis_lr) < 1e-6);
            assert!(angle(&g.axis_si, &want.axis_si) < 1e-6);
            assert!((g.origin - want.origin).norm() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let m = blob();
        assert_eq!(compute_frame(&m, None).unwrap(), compute_frame(&m, None).unwrap());
    }

    #[test]
    fn coplanar_is_degenerate() {
        let pts: Vec<Point3<f64>> = (0..20).map(|i| Point3::new(i as f64, (i * i % 7) as f64, 0.0)).collect();
        let m = TriangleMesh::new(pts, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(compute_frame(&m, None), Err(FrameError::DegenerateGeometry(_))));
    }

    #[test]
    fn too_few_vertices() {
        let m = TriangleMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(compute_frame(&m, None).is_err());
    }

    #[test]
    fn isotropic_cube_requires_hints() {
        let cube = crate::mesh::fixtures::unit_cube();
        assert!(matches!(compute_frame(&cube, None), Err(FrameError::DegenerateGeometry(_))));
        let hints = OrientationHints {
            lr: Vector3::new(1.0, 0.1, 0.0),
            ap: Vector3::new(0.0, 1.0, 0.05),
            si: Vector3::new(0.0, 0.0, 2.0),
        };
        let f = compute_frame(&cube, Some(&hints)).unwrap();
        f.check().unwrap();
        assert!(angle(&f.axis_si, &Vector3::z()) < 0.1);
    }

    #[test]
    fn hints_override_sign_and_order() {
        let hints = OrientationHints { lr: -Vector3::y(), ap: Vector3::x(), si: Vector3::z() };
        let f = compute_frame(&blob(), Some(&hints)).unwrap();
        assert!(angle(&f.axis_ap, &Vector3::x()) < 0.1);
        assert!(angle(&f.axis_lr, &-Vector3::y()) < 0.1);
    }

    #[test]
    fn planes_follow_frame() {
        let f = AnatomicalFrame::world(Point3::origin());
        assert_eq!(sagittal_plane(&f), CuttingPlane { point: Point3::origin(), normal: Vector3::x() });
        assert_eq!(frontal_plane(&f), CuttingPlane { point: Point3::origin(), normal: Vector3::y() });
        let t = Vector3::new(1.0, 2.0, 3.0);
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.4);
        let g = f.rigidly_moved(&r, &t);
        assert!((sagittal_plane(&g).point - Point3::from(t)).norm() < 1e-15);
        assert!((sagittal_plane(&g).normal - r * Vector3::x()).norm() < 1e-15);
        assert!(sagittal_plane(&g).normal.dot(&frontal_plane(&g).normal).abs() < 1e-15);
    }

    #[test]
    fn frame_validation() {
        assert!(AnatomicalFrame::new(Point3::origin(), Vector3::y(), Vector3::x(), -Vector3::z()).is_err());
        assert!(AnatomicalFrame::new(Point3::origin(), Vector3::y() * 2.0, Vector3::x(), Vector3::z()).is_err());
        assert!(AnatomicalFrame::new(Point3::origin(), Vector3::y(), Vector3::x(), Vector3::z()).is_ok());
    }
}
