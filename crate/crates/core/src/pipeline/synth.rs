//! Synthetic vertebra proxy with ground-truth landmarks and points of
//! interest.
//!
//! World axes: `x` runs to the left, `y` anteriorly, `z` superiorly. The
//! proxy is a union of closed shells:
//!
//! * a waisted elliptical-cylinder body with cupped endplates;
//! * a spinous fin (a polygon prism across the midline);
//! * two laminae and two articular boxes behind the body;
//! * two transverse fins, centred front-to-back on the mesh centroid so the
//!   frontal cross-section passes through them.
//!
//! Every ground-truth landmark sits on a mesh vertex at a sharp crease.

use crate::frame::{compute_frame, frontal_plane, AnatomicalFrame};
use crate::landmarks::{Landmark, LandmarkSet, LigamentGroup, Side, Status};
use crate::mesh::TriangleMesh;
use crate::poi::{Poi, PoiLabel, PoiScheme, PoiSet};
use crate::registration::SimilarityTransform;
use nalgebra::{Point3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use thiserror::Error;

/// Coarser tessellations lose the thin posterior parts and with them a
/// stable anatomical frame.
pub const MAX_EDGE_LENGTH: f64 = 2.5;

#[derive(Debug, Error, PartialEq)]
#[error("invalid synthetic spec: {0}")]
pub struct InvalidSpec(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyDims {
    /// Left-right semi-axis.
    pub rx: f64,
    /// Front-back semi-axis.
    pub ry: f64,
    pub half_height: f64,
    /// Relative narrowing of the cross-section at mid-height.
    pub waist: f64,
    /// Depth of the endplate concavity.
    pub cup: f64,
}

impl Default for BodyDims {
    fn default() -> Self {
        Self { rx: 22.0, ry: 17.0, half_height: 14.0, waist: 0.08, cup: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessDims {
    /// Uniform scale of the posterior elements and transverse fins.
    pub scale: f64,
}

impl Default for ProcessDims {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deformation {
    /// Isotropic Gaussian vertex noise with standard deviation `sigma` mm.
    Noise { sigma: f64 },
    /// Superior endplate pushed into the body by up to `depth` mm at its
    /// centre, tapering to zero at the rim.
    EndplateFracture { depth: f64 },
    /// Spinous process and laminae rotated about the left-right axis through
    /// their junction by `degrees` (positive tips the spinous process down).
    PosteriorTilt { degrees: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub body: BodyDims,
    pub process: ProcessDims,
    /// Target triangle edge length in mm; sets the tessellation density.
    pub edge_length: f64,
    /// Applied in order, before the pose.
    pub deformations: Vec<Deformation>,
    pub pose: SimilarityTransform,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            body: BodyDims::default(),
            process: ProcessDims::default(),
            edge_length: 1.5,
            deformations: Vec::new(),
            pose: SimilarityTransform::identity(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let b = &self.body;
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        pos("body.rx", b.rx)?;
        pos("body.ry", b.ry)?;
        pos("body.half_height", b.half_height)?;
        pos("process.scale", self.process.scale)?;
        pos("edge_length", self.edge_length)?;
        pos("pose.scale", self.pose.scale)?;
        if !(0.0..0.5).contains(&b.waist) {
            return Err(InvalidSpec(format!("body.waist must be in [0, 0.5), got {}", b.waist)));
        }
        if !(0.0..b.half_height).contains(&b.cup) {
            return Err(InvalidSpec(format!("body.cup must be in [0, half_height), got {}", b.cup)));
        }
        if self.edge_length > MAX_EDGE_LENGTH {
            return Err(InvalidSpec(format!("edge_length must be at most {MAX_EDGE_LENGTH} mm, got {}", self.edge_length)));
        }
        for d in &self.deformations {
            match *d {
                Deformation::Noise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                    return Err(InvalidSpec(format!("noise sigma must be ≥ 0, got {sigma}")))
                }
                Deformation::EndplateFracture { depth } if !(depth >= 0.0 && depth < b.half_height) => {
                    return Err(InvalidSpec(format!("fracture depth must be in [0, half_height), got {depth}")))
                }
                Deformation::PosteriorTilt { degrees } if !(degrees.abs() <= 45.0) => {
                    return Err(InvalidSpec(format!("posterior tilt must be within ±45°, got {degrees}")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Which shell a vertex belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Body,
    /// Interior vertices of the superior endplate.
    SuperiorEndplate,
    Spinous,
    Lamina,
    Articular,
    Transverse,
}

impl Part {
    fn is_posterior(self) -> bool {
        matches!(self, Part::Spinous | Part::Lamina)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticVertebra {
    pub mesh: TriangleMesh,
    pub landmarks: LandmarkSet,
    /// Ground truth for the 15-point scheme.
    pub pois: PoiSet,
    /// Shell of each vertex.
    pub parts: Vec<Part>,
}

impl SyntheticVertebra {
    /// Ground truth restricted to `scheme`.
    pub fn pois_for(&self, scheme: PoiScheme) -> PoiSet {
        PoiSet {
            scheme,
            points: scheme.labels().iter().map(|&l| Poi { name: l, position: self.pois.get(l).expect("full set") }).collect(),
        }
    }
}

// Design coordinates of the posterior elements, before `ProcessDims::scale`.
// Spinous profile in (y, z).
const SPINOUS: [[f64; 2]; 7] = [[-22.0, -5.0], [-22.0, 9.0], [-27.0, 18.0], [-32.0, 7.0], [-50.0, -4.0], [-44.0, -19.0], [-33.0, -4.0]];
const SPINOUS_CENTER: [f64; 2] = [-30.0, 1.0];
const SPINOUS_HALF_WIDTH: f64 = 3.0;
// Transverse profile in (x, z) for the left side.
const TRANSVERSE: [[f64; 2]; 7] = [[17.0, -11.0], [38.0, -10.0], [46.0, -5.0], [38.0, -1.5], [26.0, -1.5], [32.0, 9.0], [17.0, 5.0]];
const TRANSVERSE_CENTER: [f64; 2] = [24.0, 0.0];
const TRANSVERSE_HALF_DEPTH: f64 = 6.0;
const LAMINA_X: [f64; 2] = [3.0, 15.0];
const LAMINA_Y: [f64; 2] = [-27.0, -22.0];
const LAMINA_Z: f64 = 6.0;
const ARTICULAR_X: [f64; 2] = [15.0, 21.0];
const ARTICULAR_Y: [f64; 2] = [-28.0, -20.0];
const ARTICULAR_Z: f64 = 12.0;
/// Tilt pivot: the left-right line through y = -22, z = 0.
const TILT_PIVOT_Y: f64 = -22.0;

#[derive(Default)]
struct Builder {
    verts: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    parts: Vec<Part>,
}

/// Evenly spaced values from `lo` to `hi` whose step divides `unit`, so every
/// multiple of `unit` offset from `lo` is hit exactly.
fn layers(lo: f64, hi: f64, unit: f64, max_step: f64) -> Vec<f64> {
    let sub = (unit / max_step).ceil().max(1.0);
    let n = ((hi - lo) / unit * sub).round() as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

impl Builder {
    fn add(&mut self, p: Point3<f64>, part: Part) -> usize {
        self.verts.push(p);
        self.parts.push(part);
        self.verts.len() - 1
    }

    fn tri(&mut self, t: [usize; 3], flip: bool) {
        self.faces.push(if flip { [t[0], t[2], t[1]] } else { t });
    }

    /// Closed prism over a star-shaped polygon `poly` (counter-clockwise
    /// about `center` in `(u, v)`), with walls at `ws` and caps at both
    /// ends made of concentric rings. Each polygon edge is split into an
    /// even number of pieces no longer than `step`. `map` takes `(u, v, w)`
    /// plus the normalized ring radius (1 on the wall) to world space;
    /// `flip` must be set when `map` reverses orientation.
    #[allow(clippy::too_many_arguments)]
    fn prism(
        &mut self,
        poly: &[[f64; 2]],
        center: [f64; 2],
        ws: &[f64],
        step: f64,
        ring_step: f64,
        even: bool,
        flip: bool,
        map: impl Fn(f64, f64, f64, f64) -> Point3<f64>,
        part: impl Fn(f64, f64) -> Part,
    ) {
        assert!(signed_area(poly) > 0.0, "polygon must be counter-clockwise");
        let mut ring: Vec<[f64; 2]> = Vec::new();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let mut n = (len / step).ceil().max(1.0) as usize;
            if even && n % 2 == 1 {
                n += 1;
            }
            for k in 0..n {
                let t = k as f64 / n as f64;
                ring.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
            }
        }
        let m = ring.len();
        let walls: Vec<Vec<usize>> = ws
            .iter()
            .map(|&w| ring.iter().map(|&[u, v]| self.add(map(u, v, w, 1.0), part(w, 1.0))).collect())
            .collect();
        for j in 0..ws.len() - 1 {
            for i in 0..m {
                let i1 = (i + 1) % m;
                let (a, b, c, d) = (walls[j][i], walls[j][i1], walls[j + 1][i1], walls[j + 1][i]);
                self.tri([a, b, c], flip);
                self.tri([a, c, d], flip);
            }
        }
        let reach = ring.iter().map(|p| (p[0] - center[0]).hypot(p[1] - center[1])).fold(0.0, f64::max);
        let n_rings = (reach / ring_step).ceil().max(1.0) as usize;
        for (end, w) in [(0, ws[0]), (ws.len() - 1, ws[ws.len() - 1])] {
            let flip_cap = flip ^ (end == 0);
            let mut outer: Vec<(f64, usize)> = walls[end].iter().enumerate().map(|(i, &v)| (i as f64 / m as f64, v)).collect();
            for k in (1..n_rings).rev() {
                let rho = k as f64 / n_rings as f64;
                // Inner rings keep the spacing roughly constant by sampling
                // fewer boundary directions.
                let count = ((m as f64 * rho).ceil() as usize).max(3).min(m);
                let inner: Vec<(f64, usize)> = (0..count)
                    .map(|i| {
                        let idx = i * m / count;
                        let p = ring[idx];
                        let u = center[0] + (p[0] - center[0]) * rho;
                        let v = center[1] + (p[1] - center[1]) * rho;
                        (idx as f64 / m as f64, self.add(map(u, v, w, rho), part(w, rho)))
                    })
                    .collect();
                self.zip_rings(&inner, &outer, flip_cap);
                outer = inner;
            }
            let c = self.add(map(center[0], center[1], w, 0.0), part(w, 0.0));
            for i in 0..outer.len() {
                self.tri([c, outer[i].1, outer[(i + 1) % outer.len()].1], flip_cap);
            }
        }
    }

    /// Triangulates the band between two closed rings, each given as
    /// `(parameter in [0, 1), vertex)` in increasing parameter order.
    fn zip_rings(&mut self, inner: &[(f64, usize)], outer: &[(f64, usize)], flip: bool) {
        let (a, b) = (inner.len(), outer.len());
        let next = |r: &[(f64, usize)], k: usize| if k + 1 < r.len() { r[k + 1].0 } else { 1.0 + r[0].0 };
        let (mut i, mut j) = (0, 0);
        while i < a || j < b {
            let advance_outer = j < b && (i == a || next(outer, j) <= next(inner, i));
            if advance_outer {
                self.tri([inner[i % a].1, outer[j].1, outer[(j + 1) % b].1], flip);
                j += 1;
            } else {
                self.tri([inner[i].1, outer[j % b].1, inner[(i + 1) % a].1], flip);
                i += 1;
            }
        }
    }

    fn mirrored_prism(
        &mut self,
        poly: &[[f64; 2]],
        center: [f64; 2],
        ws: &[f64],
        step: f64,
        flip: bool,
        map: impl Fn(f64, f64, f64) -> Point3<f64>,
        part: Part,
    ) {
        for mirror in [false, true] {
            let m = |u, v, w, _| {
                let p = map(u, v, w);
                if mirror {
                    Point3::new(-p.x, p.y, p.z)
                } else {
                    p
                }
            };
            self.prism(poly, center, ws, step, step, false, flip ^ mirror, m, |_, _| part);
        }
    }
}

fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let h = ((a - b) / (a + b)).powi(2);
    PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

struct Layout {
    body: BodyDims,
    scale: f64,
    /// Front-back position of the transverse fins' mid-plane.
    anchor_y: f64,
    /// Vertex columns around the body.
    n_theta: usize,
}

impl Layout {
    fn spinous(&self, i: usize) -> [f64; 2] {
        SPINOUS[i].map(|c| c * self.scale)
    }

    fn transverse(&self, i: usize) -> [f64; 2] {
        TRANSVERSE[i].map(|c| c * self.scale)
    }

    fn body_rim(&self, theta_deg: f64, top: bool) -> Point3<f64> {
        let t = theta_deg.to_radians();
        let z = if top { self.body.half_height } else { -self.body.half_height };
        Point3::new(self.body.rx * t.cos(), self.body.ry * t.sin(), z)
    }
}

fn build(spec: &SyntheticSpec) -> (Builder, Layout) {
    let b = spec.body;
    let s = spec.process.scale;
    let e = spec.edge_length;
    let mut out = Builder::default();

    // Body: vertex columns every 360/n_theta degrees, n_theta a multiple of
    // 24 so that every 15° lies on a column.
    let n_theta = 24 * (ellipse_perimeter(b.rx, b.ry) / (24.0 * e)).ceil().max(1.0) as usize;
    let ellipse: Vec<[f64; 2]> = (0..n_theta)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n_theta as f64;
            [b.rx * t.cos(), b.ry * t.sin()]
        })
        .collect();
    let h = b.half_height;
    let n_z = (2.0 * h / e).ceil() as usize;
    let zs: Vec<f64> = (0..=n_z).map(|k| -h + 2.0 * h * k as f64 / n_z as f64).collect();
    let body_map = |u: f64, v: f64, w: f64, rho: f64| {
        if rho < 1.0 {
            // Endplate interior: cupped towards the body centre.
            let z = w.signum() * (h - b.cup * (1.0 - rho * rho));
            Point3::new(u, v, z)
        } else {
            let f = 1.0 - b.waist * (1.0 - (w / h).powi(2));
            Point3::new(u * f, v * f, w)
        }
    };
    out.prism(&ellipse, [0.0, 0.0], &zs, f64::INFINITY, e, false, false, body_map, |w, rho| {
        if w > 0.0 && rho < 1.0 {
            Part::SuperiorEndplate
        } else {
            Part::Body
        }
    });

    // Spinous fin: profile in (y, z), extruded along x.
    let spin: Vec<[f64; 2]> = SPINOUS.iter().map(|p| p.map(|c| c * s)).collect();
    let xs = layers(-SPINOUS_HALF_WIDTH * s, SPINOUS_HALF_WIDTH * s, 1.5 * s, e);
    let yz = |u: f64, v: f64, w: f64, _| Point3::new(w, u, v);
    out.prism(&spin, SPINOUS_CENTER.map(|c| c * s), &xs, e, e, true, false, yz, |_, _| Part::Spinous);

    // Laminae: rectangles in (y, z), extruded along x on both sides.
    let rect = |u0: f64, u1: f64, v0: f64, v1: f64| vec![[u0, v0], [u1, v0], [u1, v1], [u0, v1]];
    let lam = rect(LAMINA_Y[0] * s, LAMINA_Y[1] * s, -LAMINA_Z * s, LAMINA_Z * s);
    let lam_c = [(LAMINA_Y[0] + LAMINA_Y[1]) / 2.0 * s, 0.0];
    let lxs = layers(LAMINA_X[0] * s, LAMINA_X[1] * s, s, e);
    out.mirrored_prism(&lam, lam_c, &lxs, e, false, |u, v, w| Point3::new(w, u, v), Part::Lamina);

    // Articular boxes: rectangles in (x, y), extruded along z.
    let art = rect(ARTICULAR_X[0] * s, ARTICULAR_X[1] * s, ARTICULAR_Y[0] * s, ARTICULAR_Y[1] * s);
    let art_c = [(ARTICULAR_X[0] + ARTICULAR_X[1]) / 2.0 * s, (ARTICULAR_Y[0] + ARTICULAR_Y[1]) / 2.0 * s];
    let azs = layers(-ARTICULAR_Z * s, ARTICULAR_Z * s, 3.0 * s, e);
    out.mirrored_prism(&art, art_c, &azs, e, false, Point3::new, Part::Articular);

    // Transverse fins: profile in (x, z), extruded along y around the
    // centroid of everything else, then shifted so the full mesh centroid
    // lands exactly on the fins' mid-plane.
    let n_rest = out.verts.len() as f64;
    let rest_y = out.verts.iter().map(|p| p.y).sum::<f64>() / n_rest;
    let first_fin = out.verts.len();
    let tr: Vec<[f64; 2]> = TRANSVERSE.iter().map(|p| p.map(|c| c * s)).collect();
    let ys = layers(-TRANSVERSE_HALF_DEPTH * s, TRANSVERSE_HALF_DEPTH * s, 1.5 * s, e);
    out.mirrored_prism(&tr, TRANSVERSE_CENTER.map(|c| c * s), &ys, e, true, |u, v, w| Point3::new(u, w, v), Part::Transverse);
    let n_fin = (out.verts.len() - first_fin) as f64;
    let delta = out.verts[first_fin..].iter().map(|p| p.y).sum::<f64>() / n_fin;
    let anchor_y = rest_y + n_fin * delta / n_rest;
    for p in &mut out.verts[first_fin..] {
        p.y += anchor_y;
    }

    (out, Layout { body: b, scale: s, anchor_y, n_theta })
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Design landmark positions (before snapping to vertices).
fn design_landmarks(l: &Layout) -> Vec<(LigamentGroup, Side, Point3<f64>)> {
    use LigamentGroup::*;
    let side_of = |x: f64| {
        if x > 1e-9 {
            Side::Left
        } else if x < -1e-9 {
            Side::Right
        } else {
            Side::Midline
        }
    };
    let mut out = Vec::with_capacity(66);
    for (group, thetas) in [(All, [60.0, 75.0, 90.0, 105.0, 120.0]), (Pll, [240.0, 255.0, 270.0, 285.0, 300.0])] {
        for top in [true, false] {
            for t in thetas {
                let p = l.body_rim(t, top);
                out.push((group, side_of(p.x), p));
            }
        }
    }
    let s = l.scale;
    for sign in [1.0, -1.0] {
        let side = side_of(sign);
        for idx in [2, 5] {
            let [x, z] = l.transverse(idx);
            for off in [-4.5, -1.5, 1.5, 4.5] {
                out.push((Itl, side, Point3::new(sign * x, l.anchor_y + off * s, z)));
            }
        }
    }
    for sign in [1.0, -1.0] {
        for y in ARTICULAR_Y {
            for z in [-9.0, -6.0, 6.0, 9.0] {
                out.push((Cl, side_of(sign), Point3::new(sign * ARTICULAR_X[1] * s, y * s, z * s)));
            }
        }
    }
    for sign in [1.0, -1.0] {
        for x in [7.0, 11.0] {
            for z in [LAMINA_Z, -LAMINA_Z] {
                out.push((Lf, side_of(sign), Point3::new(sign * x * s, LAMINA_Y[1] * s, z * s)));
            }
        }
    }
    for (a, b) in [(2, 3), (5, 6)] {
        let [y, z] = midpoint(l.spinous(a), l.spinous(b));
        for sign in [1.0, -1.0] {
            out.push((Isl, side_of(sign), Point3::new(sign * SPINOUS_HALF_WIDTH * s, y, z)));
        }
    }
    let [y, z] = l.spinous(4);
    for sign in [1.0, -1.0] {
        out.push((Ssl, side_of(sign), Point3::new(sign * 1.5 * s, y, z)));
    }
    out
}

/// Design PoIs: sharp corners of the sagittal outline, plus crossings of
/// the rim polygons and the transverse ridge lines with the frontal plane of
/// the clean proxy.
fn design_pois(l: &Layout, frame: &AnatomicalFrame) -> Option<Vec<(PoiLabel, Point3<f64>)>> {
    use PoiLabel::*;
    let b = l.body;
    let h = b.half_height;
    let sag = |p: [f64; 2]| Point3::new(0.0, p[0], p[1]);
    let plane = frontal_plane(frame);
    let rim_crossing = |z: f64, left: bool| -> Option<Point3<f64>> {
        let rim: Vec<Point3<f64>> = (0..l.n_theta)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / l.n_theta as f64;
                Point3::new(b.rx * t.cos(), b.ry * t.sin(), z)
            })
            .collect();
        (0..rim.len())
            .filter_map(|k| {
                let (p, q) = (rim[k], rim[(k + 1) % rim.len()]);
                let (dp, dq) = (plane.signed_distance(&p), plane.signed_distance(&q));
                (dp.signum() != dq.signum()).then(|| p + (q - p) * (dp / (dp - dq)))
            })
            .find(|p| (p.x > 0.0) == left)
    };
    // Ridge lines run along y.
    let ridge_crossing = |x: f64, z: f64| {
        let p = Point3::new(x, 0.0, z);
        p - Vector3::y() * (plane.signed_distance(&p) / plane.normal.y)
    };
    let [tx, tz] = l.transverse(2);
    let [ux, uz] = l.transverse(5);
    Some(vec![
        (SagAnteriorSuperior, Point3::new(0.0, b.ry, h)),
        (SagAnteriorInferior, Point3::new(0.0, b.ry, -h)),
        (SagPosteriorExtreme, sag(l.spinous(4))),
        (SagSuperiorExtreme, sag(l.spinous(2))),
        (SagInferiorExtreme, sag(l.spinous(5))),
        (SagPosteriorSuperior, Point3::new(0.0, -b.ry, h)),
        (SagPosteriorInferior, Point3::new(0.0, -b.ry, -h)),
        (FrontLeftExtreme, ridge_crossing(tx, tz)),
        (FrontRightExtreme, ridge_crossing(-tx, tz)),
        (FrontSuperiorLeft, rim_crossing(h, true)?),
        (FrontSuperiorRight, rim_crossing(h, false)?),
        (FrontInferiorLeft, rim_crossing(-h, true)?),
        (FrontInferiorRight, rim_crossing(-h, false)?),
        (FrontLeftSuperiorProcess, ridge_crossing(ux, uz)),
        (FrontRightSuperiorProcess, ridge_crossing(-ux, uz)),
    ])
}

fn nearest_vertex(verts: &[Point3<f64>], p: &Point3<f64>) -> (usize, f64) {
    verts
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - p).norm()))
        .fold((usize::MAX, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

fn tilt_rotation(degrees: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), -degrees.to_radians())
}

fn tilt_point(rot: &Rotation3<f64>, s: f64, p: &Point3<f64>) -> Point3<f64> {
    let pivot = Vector3::new(0.0, TILT_PIVOT_Y * s, 0.0);
    Point3::from(rot * (p.coords - pivot) + pivot)
}

/// Generates the proxy described by `spec`. Deterministic for a given spec.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticVertebra, InvalidSpec> {
    spec.validate()?;
    let (mut b, layout) = build(spec);

    // Snap landmarks to their vertices; remember the vertex for deformations.
    let mut landmark_vertex = Vec::with_capacity(66);
    let mut landmarks = Vec::with_capacity(66);
    let mut bundles = std::collections::HashMap::new();
    for (group, side, p) in design_landmarks(&layout) {
        let (v, d) = nearest_vertex(&b.verts, &p);
        debug_assert!(d < 1e-6, "{group} landmark {p:?} is {d} mm off the mesh");
        let bundle = bundles.entry(group).or_insert(0u32);
        landmarks.push(Landmark { group, bundle: *bundle, side, position: b.verts[v], status: Status::Annotated });
        landmark_vertex.push(v);
        *bundle += 1;
    }
    let clean = TriangleMesh::new(b.verts.clone(), b.faces.clone()).map_err(|e| InvalidSpec(format!("generated mesh is invalid: {e}")))?;
    let frame = compute_frame(&clean, None).map_err(|e| InvalidSpec(format!("proxy has no stable frame: {e}")))?;
    let mut pois: Vec<(PoiLabel, Point3<f64>, Part)> = design_pois(&layout, &frame)
        .ok_or_else(|| InvalidSpec("tessellation too coarse: the proxy frame misses the body".into()))?
        .into_iter()
        .map(|(label, p)| {
            let (v, d) = nearest_vertex(&b.verts, &p);
            // Frontal points fall between vertices; keep them analytic.
            let part = b.parts[v];
            if d < 1e-6 {
                (label, b.verts[v], part)
            } else {
                (label, p, part)
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for d in &spec.deformations {
        match *d {
            Deformation::Noise { sigma } => {
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("sigma validated");
                    for p in &mut b.verts {
                        *p += Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                    }
                }
            }
            Deformation::EndplateFracture { depth } => {
                let h = layout.body.half_height;
                let cup = layout.body.cup;
                for (p, part) in b.verts.iter_mut().zip(&b.parts) {
                    if *part == Part::SuperiorEndplate {
                        // Recover the normalized radius from the cup profile.
                        let rho2 = if cup > 0.0 { 1.0 - (h - p.z) / cup } else { ((p.x / layout.body.rx).powi(2) + (p.y / layout.body.ry).powi(2)).min(1.0) };
                        p.z -= depth * (1.0 - rho2.clamp(0.0, 1.0));
                    }
                }
            }
            Deformation::PosteriorTilt { degrees } => {
                let rot = tilt_rotation(degrees);
                for (p, part) in b.verts.iter_mut().zip(&b.parts) {
                    if part.is_posterior() {
                        *p = tilt_point(&rot, layout.scale, p);
                    }
                }
                for (_, p, part) in &mut pois {
                    if part.is_posterior() {
                        *p = tilt_point(&rot, layout.scale, p);
                    }
                }
            }
        }
    }
    // Landmarks ride along with their vertices through every deformation.
    for (l, &v) in landmarks.iter_mut().zip(&landmark_vertex) {
        l.position = b.verts[v];
    }

    let pose = &spec.pose;
    let verts: Vec<Point3<f64>> = b.verts.iter().map(|p| pose.apply_point(p)).collect();
    let mesh = TriangleMesh::new(verts, b.faces).map_err(|e| InvalidSpec(format!("generated mesh is invalid: {e}")))?;
    let landmarks = LandmarkSet::new(landmarks)
        .expect("design keys are unique")
        .map_positions(Status::Annotated, |p| pose.apply_point(p));
    let pois = PoiSet {
        scheme: PoiScheme::Poi15,
        points: pois.into_iter().map(|(name, p, _)| Poi { name, position: pose.apply_point(&p) }).collect(),
    };
    Ok(SyntheticVertebra { mesh, landmarks, pois, parts: b.parts })
}

/// Random similarity pose: uniform rotation, translation within ±`max_t`
/// mm per axis, scale in `[s_lo, s_hi]`.
pub fn random_pose(rng: &mut impl Rng, max_t: f64, s_lo: f64, s_hi: f64) -> SimilarityTransform {
    let q = loop {
        let v = nalgebra::Vector4::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]);
        }
    };
    let t = Vector3::new(rng.gen_range(-max_t..=max_t), rng.gen_range(-max_t..=max_t), rng.gen_range(-max_t..=max_t));
    let scale = if s_hi > s_lo { rng.gen_range(s_lo..s_hi) } else { s_lo };
    SimilarityTransform { rotation: UnitQuaternion::from_quaternion(q), translation: t, scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poi::detect_pois;

    #[test]
    fn default_proxy_is_anatomically_oriented() {
        let v = gen_synthetic(&SyntheticSpec::default()).unwrap();
        let n = v.mesh.vertex_count();
        let c = v.mesh.centroid().unwrap();
        let mut var = [0.0; 3];
        for p in v.mesh.vertices() {
            for k in 0..3 {
                var[k] += (p[k] - c[k]).powi(2) / n as f64;
            }
        }
        assert_eq!(v.landmarks.len(), 66);
        assert!(var[0] > var[1] && var[1] > var[2], "{var:?}");
        let f = compute_frame(&v.mesh, None).unwrap();
        assert!(f.axis_lr.dot(&Vector3::x()) > 0.999);
        assert!(f.axis_ap.dot(&Vector3::y()) > 0.995);
        assert!(f.axis_si.dot(&Vector3::z()).acos().to_degrees() < 5.0);
    }

    #[test]
    fn ground_truth_pois_match_detection() {
        let v = gen_synthetic(&SyntheticSpec::default()).unwrap();
        let f = compute_frame(&v.mesh, None).unwrap();
        let pois = detect_pois(&v.mesh, &f, PoiScheme::Poi15).unwrap();
        assert_eq!(pois.points.len(), 15);
        for p in &pois.points {
            let d = (p.position - v.pois.get(p.name).unwrap()).norm();
            assert!(d < 0.5, "{} off by {d} mm", p.name.as_str());
        }
    }

    #[test]
    fn same_seed_same_mesh() {
        let spec = SyntheticSpec { deformations: vec![Deformation::Noise { sigma: 0.5 }], ..SyntheticSpec::default() };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.landmarks.to_json(), b.landmarks.to_json());
        let c = gen_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.mesh.vertices(), c.mesh.vertices());
    }

    #[test]
    fn fracture_moves_endplate_inward_only() {
        let clean = gen_synthetic(&SyntheticSpec::default()).unwrap();
        let spec = SyntheticSpec { deformations: vec![Deformation::EndplateFracture { depth: 3.0 }], ..SyntheticSpec::default() };
        let frac = gen_synthetic(&spec).unwrap();
        let mut moved = 0;
        for ((a, b), part) in clean.mesh.vertices().iter().zip(frac.mesh.vertices()).zip(&clean.parts) {
            let d = b - a;
            assert!(d.x == 0.0 && d.y == 0.0);
            assert!(d.z <= 0.0 && d.z >= -3.0 - 1e-12);
            if d.z < 0.0 {
                assert_eq!(*part, Part::SuperiorEndplate);
                moved += 1;
            }
        }
        assert!(moved > 50);
    }

    #[test]
    fn pose_is_applied_to_everything() {
        let pose = SimilarityTransform { rotation: UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1), translation: Vector3::new(5.0, -7.0, 2.0), scale: 1.2 };
        let base = gen_synthetic(&SyntheticSpec::default()).unwrap();
        let posed = gen_synthetic(&SyntheticSpec { pose, ..SyntheticSpec::default() }).unwrap();
        for (a, b) in base.mesh.vertices().iter().zip(posed.mesh.vertices()) {
            assert!((pose.apply_point(a) - b).norm() < 1e-9);
        }
        for (a, b) in base.landmarks.landmarks().iter().zip(posed.landmarks.landmarks()) {
            assert!((pose.apply_point(&a.position) - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticSpec { deformations: vec![Deformation::Noise { sigma: -1.0 }], ..SyntheticSpec::default() };
        assert!(gen_synthetic(&bad).is_err());
        assert!(gen_synthetic(&SyntheticSpec { edge_length: 0.0, ..SyntheticSpec::default() }).is_err());
    }
}
