//! Closed-form least-squares similarity alignment of named point sets
//! (Horn's unit-quaternion method).

use crate::linalg::jacobi_eigen;
use crate::poi::{PoiLabel, PoiScheme, PoiSet};
use nalgebra::{Matrix4, Point3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("point sets use different schemes ({0} vs {1})")]
    SchemeMismatch(PoiScheme, PoiScheme),
    #[error("point `{0}` is missing from one of the sets")]
    MissingLabel(PoiLabel),
    #[error("at least 3 correspondences are required, got {0}")]
    TooFewPairs(usize),
    #[error("source points are collinear or coincident; rotation is not unique")]
    DegenerateConfiguration,
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
}

/// `p ↦ scale · R · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    /// Normalizes the quaternion to unit length and `w ≥ 0`.
    pub fn new(rotation: Quaternion<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self, RegistrationError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(RegistrationError::InvalidTransform(format!("scale must be positive, got {scale}")));
        }
        let n = rotation.norm();
        if !(n > 0.0) || !n.is_finite() || !translation.iter().all(|c| c.is_finite()) {
            return Err(RegistrationError::InvalidTransform("non-finite or zero quaternion/translation".into()));
        }
        Ok(Self { rotation: canonical(UnitQuaternion::from_quaternion(rotation)), translation, scale })
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>, scale: f64) -> Self {
        Self { rotation: canonical(UnitQuaternion::from_rotation_matrix(&rotation)), translation, scale }
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v * self.scale
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            rotation: canonical(self.rotation * other.rotation),
            translation: self.rotation * other.translation * self.scale + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = self.rotation.inverse();
        SimilarityTransform {
            rotation: canonical(inv),
            translation: -(inv * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    /// Homogeneous 4×4 matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let m: Matrix4<f64> = self.rotation.to_homogeneous() * self.scale;
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = m[(r, c)];
            }
        }
        for r in 0..3 {
            out[r][3] = self.translation[r];
        }
        out[3] = [0.0, 0.0, 0.0, 1.0];
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TransformJson::from(self)).expect("transforms always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, RegistrationError> {
        let j: TransformJson =
            serde_json::from_str(text).map_err(|e| RegistrationError::InvalidTransform(e.to_string()))?;
        j.try_into()
    }
}

/// JSON form: `{"quat_wxyz": [...], "t": [...], "s": ..., "matrix": [[...]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformJson {
    pub quat_wxyz: [f64; 4],
    pub t: [f64; 3],
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[f64; 4]; 4]>,
}

impl From<&SimilarityTransform> for TransformJson {
    fn from(t: &SimilarityTransform) -> Self {
        let q = t.rotation.quaternion();
        TransformJson {
            quat_wxyz: [q.w, q.i, q.j, q.k],
            t: t.translation.into(),
            s: t.scale,
            matrix: Some(t.to_matrix()),
        }
    }
}

impl TryFrom<TransformJson> for SimilarityTransform {
    type Error = RegistrationError;

    fn try_from(j: TransformJson) -> Result<Self, Self::Error> {
        let [w, x, y, z] = j.quat_wxyz;
        SimilarityTransform::new(Quaternion::new(w, x, y, z), Vector3::from(j.t), j.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub label: PoiLabel,
    pub source: Point3<f64>,
    pub target: Point3<f64>,
}

/// Source/target pairs matched by point name, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    /// Builds a set from unnamed pairs (labels are placeholders).
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Point3<f64>, Point3<f64>)>) -> Self {
        Self {
            pairs: pairs
                .into_iter()
                .map(|(source, target)| Correspondence { label: PoiLabel::SagAnteriorSuperior, source, target })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Σ ‖t(source) − target‖².
    pub fn sum_squared_error(&self, t: &SimilarityTransform) -> f64 {
        self.pairs.iter().map(|c| (t.apply_point(&c.source) - c.target).norm_squared()).sum()
    }
}

pub fn match_by_name(src: &PoiSet, dst: &PoiSet) -> Result<CorrespondenceSet, RegistrationError> {
    if src.scheme != dst.scheme {
        return Err(RegistrationError::SchemeMismatch(src.scheme, dst.scheme));
    }
    let pairs = src
        .scheme
        .labels()
        .iter()
        .map(|&label| match (src.get(label), dst.get(label)) {
            (Some(source), Some(target)) => Ok(Correspondence { label, source, target }),
            _ => Err(RegistrationError::MissingLabel(label)),
        })
        .collect::<Result<_, _>>()?;
    Ok(CorrespondenceSet { pairs })
}

/// Full output of a Horn solve, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct HornSolution {
    pub transform: SimilarityTransform,
    /// The symmetric 4×4 matrix whose dominant eigenvector is the rotation.
    pub n_matrix: [[f64; 4]; 4],
    pub max_eigenvalue: f64,
    /// Dominant eigenvector as `(w, x, y, z)`, sign-normalized to `w ≥ 0`.
    pub eigenvector: [f64; 4],
}

/// Least-squares similarity (or rigid, when `with_scale` is false) transform
/// mapping the sources onto the targets.
pub fn horn_align(corr: &CorrespondenceSet, with_scale: bool) -> Result<SimilarityTransform, RegistrationError> {
    horn_solve(corr, with_scale).map(|s| s.transform)
}

pub fn horn_solve(corr: &CorrespondenceSet, with_scale: bool) -> Result<HornSolution, RegistrationError> {
    let n = corr.len();
    if n < 3 {
        return Err(RegistrationError::TooFewPairs(n));
    }
    let inv_n = 1.0 / n as f64;
    let src_c = corr.pairs.iter().fold(Vector3::zeros(), |a, c| a + c.source.coords) * inv_n;
    let dst_c = corr.pairs.iter().fold(Vector3::zeros(), |a, c| a + c.target.coords) * inv_n;

    let mut m = [[0.0; 3]; 3];
    let mut scatter = [[0.0; 3]; 3];
    let mut src_norm2 = 0.0;
    for c in &corr.pairs {
        let a = c.source.coords - src_c;
        let b = c.target.coords - dst_c;
        for r in 0..3 {
            for k in 0..3 {
                m[r][k] += a[r] * b[k];
                scatter[r][k] += a[r] * a[k];
            }
        }
        src_norm2 += a.norm_squared();
    }
    let spread = jacobi_eigen(&scatter, 0.0).values;
    if !(spread[0] > 0.0) || spread[1] <= 1e-10 * spread[0] {
        return Err(RegistrationError::DegenerateConfiguration);
    }

    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = m;
    let nm = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let eig = jacobi_eigen(&nm, 1e-14);
    let mut q = eig.vector(0);
    if q[0] < 0.0 {
        q = q.map(|x| -x);
    }
    let rotation = canonical(UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])));

    let scale = if with_scale {
        let num: f64 = corr
            .pairs
            .iter()
            .map(|c| (rotation * (c.source.coords - src_c)).dot(&(c.target.coords - dst_c)))
            .sum();
        num / src_norm2
    } else {
        1.0
    };
    if !(scale > 0.0) {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let translation = dst_c - rotation * src_c * scale;
    Ok(HornSolution {
        transform: SimilarityTransform { rotation, translation, scale },
        n_matrix: nm,
        max_eigenvalue: eig.values[0],
        eigenvector: q,
    })
}

/// Applies `t` to each point, preserving order.
pub fn apply_transform(t: &SimilarityTransform, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
    points.iter().map(|p| t.apply_point(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poi::Poi;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        let q = Quaternion::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        UnitQuaternion::from_quaternion(q)
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n).map(|_| Point3::new(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), rng.gen_range(-20.0..20.0))).collect()
    }

    fn poi_set(scheme: PoiScheme, f: impl Fn(usize) -> Point3<f64>) -> PoiSet {
        PoiSet {
            scheme,
            points: scheme.labels().iter().enumerate().map(|(i, &name)| Poi { name, position: f(i) }).collect(),
        }
    }

    #[test]
    fn match_orders_by_vocabulary() {
        let a = poi_set(PoiScheme::Poi15, |i| Point3::new(i as f64, 0.0, 0.0));
        let mut b = a.clone();
        b.points.reverse();
        let c = match_by_name(&a, &b).unwrap();
        assert_eq!(c.len(), 15);
        for (pair, &label) in c.pairs.iter().zip(PoiLabel::ALL.iter()) {
            assert_eq!(pair.label, label);
            assert_eq!(pair.source, pair.target);
        }
    }

    #[test]
    fn match_errors() {
        let a = poi_set(PoiScheme::Poi15, |i| Point3::new(i as f64, 0.0, 0.0));
        let b = poi_set(PoiScheme::Poi8, |i| Point3::new(i as f64, 0.0, 0.0));
        assert!(matches!(match_by_name(&a, &b), Err(RegistrationError::SchemeMismatch(..))));
        let mut c = b.clone();
        let removed = c.points.remove(3).name;
        assert_eq!(match_by_name(&b, &c), Err(RegistrationError::MissingLabel(removed)));
    }

    #[test]
    fn identity_and_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = random_points(&mut rng, 15);
        let t = horn_align(&CorrespondenceSet::from_pairs(src.iter().map(|p| (*p, *p))), true).unwrap();
        assert!(t.rotation.angle() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);

        let shift = Vector3::new(5.0, -3.0, 2.0);
        let t = horn_align(&CorrespondenceSet::from_pairs(src.iter().map(|p| (*p, p + shift))), true).unwrap();
        assert!(t.rotation.angle() < 1e-12);
        assert!((t.translation - shift).norm() < 1e-12);
    }

    #[test]
    fn recovers_random_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let src = random_points(&mut rng, 15);
            let r = random_rotation(&mut rng);
            let s = rng.gen_range(0.5..2.0);
            let t = Vector3::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let truth = SimilarityTransform { rotation: r, translation: t, scale: s };
            let corr = CorrespondenceSet::from_pairs(src.iter().map(|p| (*p, truth.apply_point(p))));
            let sol = horn_solve(&corr, true).unwrap();
            let got = sol.transform;
            assert!(got.rotation.angle_to(&r) < 1e-9);
            assert!((got.translation - t).norm() < 1e-9);
            assert!(((got.scale - s) / s).abs() < 1e-12);
            // Eigen-solver check N q = λ q.
            let q = sol.eigenvector;
            for row in 0..4 {
                let nq: f64 = (0..4).map(|c| sol.n_matrix[row][c] * q[c]).sum();
                assert!((nq - sol.max_eigenvalue * q[row]).abs() < 1e-10, "{}", (nq - sol.max_eigenvalue * q[row]).abs());
            }
        }
    }

    #[test]
    fn rigid_mode_keeps_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_points(&mut rng, 10);
        let r = random_rotation(&mut rng);
        let corr = CorrespondenceSet::from_pairs(src.iter().map(|p| (*p, Point3::from(r * p.coords * 1.5))));
        let t = horn_align(&corr, false).unwrap();
        assert_eq!(t.scale, 1.0);
        assert!(t.rotation.angle_to(&r) < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Point3<f64>> = (0..5).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let corr = CorrespondenceSet::from_pairs(line.iter().map(|p| (*p, *p)));
        assert_eq!(horn_align(&corr, true), Err(RegistrationError::DegenerateConfiguration));
        let corr = CorrespondenceSet::from_pairs(line[..2].iter().map(|p| (*p, *p)));
        assert_eq!(horn_align(&corr, true), Err(RegistrationError::TooFewPairs(2)));
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = 0.5f64.sqrt();
        let t = SimilarityTransform::new(Quaternion::new(h, 0.0, 0.0, h), Vector3::zeros(), 1.0).unwrap();
        let p = apply_transform(&t, &[Point3::new(1.0, 0.0, 0.0)])[0];
        assert!((p - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let m = t.to_matrix();
        assert!((m[1][0] - 1.0).abs() < 1e-12 && m[3] == [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn json_round_trip() {
        let t = SimilarityTransform::new(Quaternion::new(-0.3, 0.1, 0.7, 0.2), Vector3::new(1.0, 2.0, 3.0), 1.25).unwrap();
        assert!(t.rotation.w >= 0.0);
        let text = t.to_json();
        assert!(text.contains("quat_wxyz") && text.contains("\"s\""));
        let back = SimilarityTransform::from_json(&text).unwrap();
        assert!(back.rotation.angle_to(&t.rotation) < 1e-15);
        assert_eq!(back.translation, t.translation);
        assert_eq!(back.scale, t.scale);
        assert!(SimilarityTransform::from_json(r#"{"quat_wxyz":[1,0,0,0],"t":[0,0,0],"s":-1}"#).is_err());
    }

    /// Perturbing the optimal rotation never lowers the residual.
    #[test]
    fn residual_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_points(&mut rng, 15);
        let truth = SimilarityTransform { rotation: random_rotation(&mut rng), translation: Vector3::new(3.0, 1.0, -2.0), scale: 1.1 };
        let dst: Vec<Point3<f64>> = src
            .iter()
            .map(|p| truth.apply_point(p) + Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let corr = CorrespondenceSet::from_pairs(src.iter().copied().zip(dst.iter().copied()));
        let best = horn_align(&corr, true).unwrap();
        let e0 = corr.sum_squared_error(&best);
        for _ in 0..100 {
            let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let delta = UnitQuaternion::from_scaled_axis(axis * rng.gen_range(0.0..1e-3));
            let src_c = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / src.len() as f64;
            let dst_c = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / dst.len() as f64;
            let rotation = delta * best.rotation;
            let perturbed = SimilarityTransform { rotation, translation: dst_c - rotation * src_c * best.scale, scale: best.scale };
            assert!(corr.sum_squared_error(&perturbed) >= e0 - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn group_laws(
            q in proptest::array::uniform4(-1.0f64..1.0),
            t in proptest::array::uniform3(-50.0f64..50.0),
            s in 0.2f64..5.0,
            q2 in proptest::array::uniform4(-1.0f64..1.0),
            t2 in proptest::array::uniform3(-50.0f64..50.0),
            s2 in 0.2f64..5.0,
            p in proptest::array::uniform3(-100.0f64..100.0),
        ) {
            prop_assume!(Quaternion::new(q[0], q[1], q[2], q[3]).norm() > 0.1);
            prop_assume!(Quaternion::new(q2[0], q2[1], q2[2], q2[3]).norm() > 0.1);
            let a = SimilarityTransform::new(Quaternion::new(q[0], q[1], q[2], q[3]), t.into(), s).unwrap();
            let b = SimilarityTransform::new(Quaternion::new(q2[0], q2[1], q2[2], q2[3]), t2.into(), s2).unwrap();
            let p = Point3::from(p);
            prop_assert!((a.rotation.norm() - 1.0).abs() < 1e-12);
            let back = a.inverse().apply_point(&a.apply_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let composed = a.compose(&b).apply_point(&p);
            prop_assert!((composed - a.apply_point(&b.apply_point(&p))).norm() < 1e-9);
        }

        #[test]
        fn residual_invariant_under_global_rigid_motion(
            seed in 0u64..1000,
            angle in 0.0f64..3.0,
            t in proptest::array::uniform3(-50.0f64..50.0),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = random_points(&mut rng, 15);
            let dst: Vec<Point3<f64>> = random_points(&mut rng, 15);
            let corr = CorrespondenceSet::from_pairs(src.iter().copied().zip(dst.iter().copied()));
            let e0 = corr.sum_squared_error(&horn_align(&corr, true).unwrap());
            let g = SimilarityTransform::from_rotation(Rotation3::from_axis_angle(&Vector3::x_axis(), angle), t.into(), 1.0);
            let moved = CorrespondenceSet::from_pairs(src.iter().zip(&dst).map(|(a, b)| (g.apply_point(a), g.apply_point(b))));
            let e1 = moved.sum_squared_error(&horn_align(&moved, true).unwrap());
            prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1.0));
        }
    }
}
