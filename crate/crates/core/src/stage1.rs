//! Stage 1: roll from the vertical vanishing point, then pitch and focal
//! length by minimizing a geometric-consistency criterion with the camera
//! position defaulted to `(0, 0, 3 m)` and zero yaw.
//!
//! The result fixes the floor projection of the field-of-view polygon up to a
//! planar similarity (translation, rotation about the vertical, scale), which
//! stage 2 resolves.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationError, AnnotationSet, FloorGeometry};
use crate::camera::{CameraIntrinsics, CameraModel, CameraPose, PixelPoint, WorldPoint};
use crate::optimize::{brent_minimize, nelder_mead, Bounds, Minimum, NelderMeadOptions};
use crate::vanishing::{estimate_vanishing_point, roll_from_vertical_vp, ImageLine, VanishingError};

/// Mount height assumed until stage 2, meters.
pub const DEFAULT_HEIGHT: f64 = 3.0;
pub const PITCH_LIMIT: f64 = 1.45;
pub const MIN_FOCAL_RATIO: f64 = 0.2;
pub const MAX_FOCAL_RATIO: f64 = 10.0;
/// Criterion value above which a solve is reported as not converged.
pub const CRITERION_TOLERANCE: f64 = 1e-2;

const START_PITCHES: [f64; 5] = [-1.2, -0.9, -0.6, -0.3, -0.05];
const START_FOCAL_RATIOS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const REFINE_ROUNDS: usize = 4;
/// Focal bracket (log scale) relative to the pitch bracket.
const REFINE_FOCAL_SPAN: f64 = 150.0;
const MAX_FOCAL_SPAN: f64 = 0.5;
const REFINE_HALF_WIDTH: f64 = 0.02;
const PITCH_TOLERANCE: f64 = 1e-13;
const FOCAL_TOLERANCE: f64 = 1e-16;
const REFINE_EVALUATIONS: usize = 300;
/// Rise of the valley profile, above its minimum, targeted by the stencil.
const PROFILE_RISE: f64 = 1e-11;
const PROFILE_MIN_STEP: f64 = 1e-8;
const PROFILE_MAX_STEP: f64 = 1e-3;
const PROFILE_SAMPLES: i32 = 4;
/// The fitted vertex may not raise the criterion by more than this.
const PROFILE_ACCEPT: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Stage1Error {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("degenerate lines: {0}")]
    DegenerateLines(String),
    #[error("vertical vanishing point coincides with the principal point; roll is undefined")]
    AmbiguousRoll,
    #[error("annotation point has no floor intersection under these parameters")]
    ProjectionFailure,
    #[error("every optimizer start was infeasible")]
    InfeasibleGeometry,
    #[error("optimizer did not reach the criterion tolerance (best {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("EFOV vertices {vertices:?} lie at or above the horizon")]
    HorizonViolation { vertices: Vec<usize> },
}

impl From<VanishingError> for Stage1Error {
    fn from(e: VanishingError) -> Self {
        match e {
            VanishingError::AmbiguousRoll => Stage1Error::AmbiguousRoll,
            other => Stage1Error::DegenerateLines(other.to_string()),
        }
    }
}

/// Stage-1 result: roll, pitch and focal length, with the remaining pose
/// parameters at their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCalibration {
    pub roll: f64,
    pub pitch: f64,
    pub focal: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Criterion value at the optimum.
    pub residual: f64,
    /// Digest of the annotation this was computed from.
    pub annotation_digest: String,
}

impl PartialCalibration {
    pub fn default_pose(&self) -> CameraPose {
        CameraPose {
            x0: 0.0,
            y0: 0.0,
            z0: DEFAULT_HEIGHT,
            yaw: 0.0,
            pitch: self.pitch,
            roll: self.roll,
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            focal: self.focal,
            image_width: self.image_width,
            image_height: self.image_height,
        }
    }

    /// The partially determined camera with defaulted position and yaw.
    pub fn model(&self) -> CameraModel {
        CameraModel { pose: self.default_pose(), intrinsics: self.intrinsics() }
    }
}

/// Field-of-view polygon on the floor plane, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FloorPolygon {
    pub vertices: Vec<WorldPoint>,
}

/// Floor-plane direction of an annotated floor line.
///
/// The line's back-projection plane meets the floor along `n x up`, `n` the
/// plane normal; this equals the direction between the endpoints' floor
/// intersections without the rounding of intersecting far-away rays. Both
/// endpoint rays must still hit the floor in front of the camera.
fn floor_direction(line: &ImageLine, m: &CameraModel) -> Result<(f64, f64), Stage1Error> {
    let ra = m.ray_direction(&line.start);
    let rb = m.ray_direction(&line.end);
    let below = m.pose.z0 > 0.0 && ra.z < 0.0 && rb.z < 0.0;
    if !below {
        return Err(Stage1Error::ProjectionFailure);
    }
    let n = plane_normal(line, m);
    let len = n.x.hypot(n.y);
    if !(len > 0.0) || !len.is_finite() {
        return Err(Stage1Error::ProjectionFailure);
    }
    Ok((n.y / len, -n.x / len))
}

/// World-frame normal of the plane through the camera center and an image
/// line. Built from the midpoint ray and the exact in-image direction rather
/// than two nearly parallel endpoint rays.
fn plane_normal(line: &ImageLine, m: &CameraModel) -> Vector3<f64> {
    let mid = PixelPoint::new(0.5 * (line.start.u + line.end.u), 0.5 * (line.start.v + line.end.v));
    let along = Vector3::new(line.end.u - line.start.u, line.end.v - line.start.v, 0.0);
    m.rotation().transpose() * m.camera_ray(&mid).cross(&along)
}

fn floor_length(line: &ImageLine, m: &CameraModel) -> Result<f64, Stage1Error> {
    let a = m.unproject(&line.start, 0.0).map_err(|_| Stage1Error::ProjectionFailure)?;
    let b = m.unproject(&line.end, 0.0).map_err(|_| Stage1Error::ProjectionFailure)?;
    Ok(a.distance(&b))
}

/// Deviation from world-vertical of the most vertical direction compatible
/// with an image line, `1 - |cos|` of its angle to world up.
///
/// A world line imaging onto `line` lies in the plane through the camera
/// center spanned by the rays of its endpoints (the rays are the loci of the
/// endpoints' projections at any two plane heights). The in-plane direction
/// closest to vertical makes `|cos| = sqrt(1 - n_z^2)` with world up, `n` the
/// unit plane normal. Evaluated as `n_z^2 / (1 + |cos|)` to avoid
/// cancellation near the optimum.
fn verticality(line: &ImageLine, m: &CameraModel) -> f64 {
    let n = plane_normal(line, m);
    let nz = n.dot(&Vector3::z()) / n.norm();
    let sin2 = nz * nz;
    sin2 / (1.0 + (1.0 - sin2).max(0.0).sqrt())
}

/// `|1 - |dot(a, b)||` for unit vectors, as `cross^2 / (1 + |dot|)`.
fn antiparallelism(a: (f64, f64), b: (f64, f64)) -> f64 {
    let cross = a.0 * b.1 - a.1 * b.0;
    cross * cross / (1.0 + dot2(a, b).abs())
}

fn dot2(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Geometric-consistency criterion: zero exactly when the projected
/// annotation satisfies every stated world relation.
///
/// * verticality: mean over vertical lines of `1 - |cos|` to world up;
/// * option 1: mean over parallel-line pairs of `|1 - |dot||` of their floor
///   directions, plus `|dot|` of the perpendicular pair;
/// * option 2: `(max - min) / mean` of the projected segment lengths.
///
/// Terms are summed with equal weight.
pub fn evaluate_criterion(annotation: &AnnotationSet, params: &CameraModel) -> Result<f64, Stage1Error> {
    let verticals = &annotation.vertical_lines;
    let v_term = verticals.iter().map(|l| verticality(l, params)).sum::<f64>() / verticals.len() as f64;

    let floor_term = match &annotation.floor {
        FloorGeometry::Option1 { parallel_lines, perpendicular_pair } => {
            let dirs = parallel_lines
                .iter()
                .map(|l| floor_direction(l, params))
                .collect::<Result<Vec<_>, _>>()?;
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..dirs.len() {
                for j in (i + 1)..dirs.len() {
                    sum += antiparallelism(dirs[i], dirs[j]);
                    pairs += 1;
                }
            }
            let parallel = if pairs > 0 { sum / pairs as f64 } else { 0.0 };
            let a = floor_direction(&perpendicular_pair[0], params)?;
            let b = floor_direction(&perpendicular_pair[1], params)?;
            parallel + dot2(a, b).abs()
        }
        FloorGeometry::Option2 { equal_segments } => {
            let lengths = equal_segments
                .iter()
                .map(|l| floor_length(l, params))
                .collect::<Result<Vec<_>, _>>()?;
            let max = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
            if !(mean > 0.0) {
                return Err(Stage1Error::ProjectionFailure);
            }
            (max - min) / mean
        }
    };
    Ok(v_term + floor_term)
}

fn candidate_model(roll: f64, pitch: f64, focal: f64, width: u32, height: u32) -> CameraModel {
    CameraModel {
        pose: CameraPose {
            x0: 0.0,
            y0: 0.0,
            z0: DEFAULT_HEIGHT,
            yaw: 0.0,
            pitch,
            roll,
        },
        intrinsics: CameraIntrinsics { focal, image_width: width, image_height: height },
    }
}

/// Recovers roll from the verticals, then minimizes the criterion over
/// `(pitch, ln focal)` from a fixed grid of starts, polishing the best.
/// Vertex of a least-squares parabola through samples of `g` around `x0`,
/// or `None` when the profile is not convincingly quadratic there.
fn profile_vertex(mut g: impl FnMut(f64) -> f64, x0: f64, g0: f64) -> Option<f64> {
    let mut h = PROFILE_MIN_STEP;
    while h <= PROFILE_MAX_STEP {
        if g(x0 - h).min(g(x0 + h)) - g0 > PROFILE_RISE {
            break;
        }
        h *= 2.0;
    }
    if h > PROFILE_MAX_STEP {
        return None;
    }
    let samples: Vec<(f64, f64)> = (-PROFILE_SAMPLES..=PROFILE_SAMPLES)
        .map(|i| {
            let t = i as f64 / PROFILE_SAMPLES as f64;
            (t, g(x0 + t * h))
        })
        .collect();
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(t, y) in &samples {
        let row = Vector3::new(1.0, t, t * t);
        ata += row * row.transpose();
        atb += row * y;
    }
    let coef = ata.lu().solve(&atb)?;
    let (b, c) = (coef[1], coef[2]);
    if !(c > 0.0) {
        return None;
    }
    let spread = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max) - g0;
    let misfit = samples
        .iter()
        .map(|&(t, y)| (coef[0] + b * t + c * t * t - y).abs())
        .fold(0.0, f64::max);
    let vertex = -b / (2.0 * c);
    (misfit < 1e-2 * spread && vertex.abs() < 1.0).then_some(x0 + vertex * h)
}

pub fn solve_partial(annotation: &AnnotationSet, width: u32, height: u32) -> Result<PartialCalibration, Stage1Error> {
    annotation.validate(width, height)?;
    let vp = estimate_vanishing_point(&annotation.vertical_lines)?;
    let center = PixelPoint::new(width as f64 / 2.0, height as f64 / 2.0);
    let roll = roll_from_vertical_vp(&vp.point, &center)?;

    let w = width as f64;
    let objective = |x: &[f64]| -> f64 {
        let m = candidate_model(roll, x[0], x[1].exp(), width, height);
        evaluate_criterion(annotation, &m).unwrap_or(f64::INFINITY)
    };
    let bounds = Bounds::new(
        vec![-PITCH_LIMIT, (MIN_FOCAL_RATIO * w).ln()],
        vec![PITCH_LIMIT, (MAX_FOCAL_RATIO * w).ln()],
    );
    let search = NelderMeadOptions {
        max_evaluations: 600,
        f_tolerance: 1e-13,
        x_tolerance: 1e-9,
        initial_step: vec![0.05, 0.1],
    };

    let mut best: Option<Minimum> = None;
    for &pitch in &START_PITCHES {
        for &ratio in &START_FOCAL_RATIOS {
            let start = [pitch, (ratio * w).ln()];
            let m = nelder_mead(objective, &start, Some(&bounds), &search);
            if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.value) {
                best = Some(m);
            }
        }
    }
    let mut best = best.ok_or(Stage1Error::InfeasibleGeometry)?;

    // The criterion's zero set is a narrow curved valley in which simplex
    // search stalls. Refine with a nested line search: for each trial pitch
    // the focal length is minimized exactly, so the outer search walks the
    // valley floor.
    let (lo, hi) = (&bounds.lower, &bounds.upper);
    // Best focal for a fixed pitch, searched within `span` (log scale) of
    // `centre`.
    let valley = |pitch: f64, centre: f64, span: f64| {
        let m = brent_minimize(
            |lf| objective(&[pitch, lf]),
            (centre - span).max(lo[1]),
            (centre + span).min(hi[1]),
            FOCAL_TOLERANCE,
            REFINE_EVALUATIONS,
        );
        (m.x, m.value)
    };
    let mut x = best.x.clone();
    let mut value = best.value;
    for round in 0..REFINE_ROUNDS {
        let half_width = REFINE_HALF_WIDTH * 0.1f64.powi(round as i32);
        let span = (REFINE_FOCAL_SPAN * half_width).min(MAX_FOCAL_SPAN);
        let centre = x[1];
        let outer = brent_minimize(
            |pitch| valley(pitch, centre, span).1,
            (x[0] - half_width).max(lo[0]),
            (x[0] + half_width).min(hi[0]),
            PITCH_TOLERANCE,
            REFINE_EVALUATIONS,
        );
        let (lf, v) = valley(outer.x, centre, span);
        if v < value {
            x = vec![outer.x, lf];
            value = v;
        }
    }
    // Along the valley floor the criterion rises only quadratically, so
    // rounding noise in its evaluation leaves the minimum loosely located.
    // A parabola fitted to the floor profile over a stencil where the rise
    // dominates the noise pins it down.
    let centre = x[1];
    let span = (REFINE_FOCAL_SPAN * PROFILE_MAX_STEP).min(MAX_FOCAL_SPAN);
    let profile = |pitch: f64| valley(pitch.clamp(lo[0], hi[0]), centre, span);
    if let Some(pitch) = profile_vertex(|p| profile(p).1, x[0], value) {
        let (lf, v) = profile(pitch);
        if v <= value + PROFILE_ACCEPT {
            x = vec![pitch, lf];
            value = v;
        }
    }
    best.x = x;
    best.value = value;

    if best.value > CRITERION_TOLERANCE {
        return Err(Stage1Error::NonConvergence { residual: best.value });
    }
    Ok(PartialCalibration {
        roll,
        pitch: best.x[0],
        focal: best.x[1].exp(),
        image_width: width,
        image_height: height,
        residual: best.value,
        annotation_digest: annotation.digest(),
    })
}

/// Projects image-space polygon vertices onto the floor with `model`,
/// listing every vertex whose ray misses the floor in front of the camera.
pub fn project_polygon_to_floor(pixels: &[PixelPoint], model: &CameraModel) -> Result<FloorPolygon, Stage1Error> {
    let mut vertices = Vec::with_capacity(pixels.len());
    let mut bad = Vec::new();
    for (i, q) in pixels.iter().enumerate() {
        match model.unproject(q, 0.0) {
            Ok(p) => vertices.push(p),
            Err(_) => bad.push(i),
        }
    }
    if !bad.is_empty() {
        return Err(Stage1Error::HorizonViolation { vertices: bad });
    }
    Ok(FloorPolygon { vertices })
}

pub fn project_efov(annotation: &AnnotationSet, partial: &PartialCalibration) -> Result<FloorPolygon, Stage1Error> {
    project_polygon_to_floor(&annotation.efov_polygon, &partial.model())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn l(a: (f64, f64), b: (f64, f64)) -> ImageLine {
        ImageLine { start: PixelPoint::new(a.0, a.1), end: PixelPoint::new(b.0, b.1) }
    }

    fn partial(pitch: f64) -> PartialCalibration {
        PartialCalibration {
            roll: 0.0,
            pitch,
            focal: 1000.0,
            image_width: 1920,
            image_height: 1080,
            residual: 0.0,
            annotation_digest: String::new(),
        }
    }

    fn annotation_with_efov(efov: Vec<PixelPoint>) -> AnnotationSet {
        AnnotationSet {
            floor: FloorGeometry::Option2 {
                equal_segments: vec![l((100.0, 900.0), (400.0, 900.0)), l((600.0, 900.0), (900.0, 900.0))],
            },
            vertical_lines: vec![l((200.0, 300.0), (200.0, 600.0)), l((1700.0, 300.0), (1700.0, 600.0))],
            efov_polygon: efov,
            polylines: vec![],
        }
    }

    #[test]
    fn nadir_efov_keeps_rectangle_aspect() {
        let efov = vec![
            PixelPoint::new(760.0, 440.0),
            PixelPoint::new(1160.0, 440.0),
            PixelPoint::new(1160.0, 640.0),
            PixelPoint::new(760.0, 640.0),
        ];
        let poly = project_efov(&annotation_with_efov(efov), &partial(-FRAC_PI_2)).unwrap();
        let v = &poly.vertices;
        let w = v[0].distance(&v[1]);
        let h = v[1].distance(&v[2]);
        assert!((w / h - 2.0).abs() < 1e-9, "{w} {h}");
        assert!((w - 400.0 * 3.0 / 1000.0).abs() < 1e-9);
        assert!(v.iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn efov_above_horizon_is_reported() {
        let efov = vec![
            PixelPoint::new(100.0, 1000.0),
            PixelPoint::new(1800.0, 1000.0),
            PixelPoint::new(1800.0, 300.0),
            PixelPoint::new(100.0, 800.0),
        ];
        // Level camera: horizon at v = 540.
        let err = project_efov(&annotation_with_efov(efov), &partial(0.0)).unwrap_err();
        assert_eq!(err, Stage1Error::HorizonViolation { vertices: vec![2] });
    }

    #[test]
    fn parallel_perpendicular_pair_scores_one() {
        let m = partial(-FRAC_PI_2).model();
        let a = AnnotationSet {
            floor: FloorGeometry::Option1 {
                parallel_lines: vec![l((100.0, 100.0), (300.0, 100.0)), l((100.0, 300.0), (300.0, 300.0))],
                perpendicular_pair: vec![l((100.0, 500.0), (300.0, 500.0)), l((100.0, 700.0), (400.0, 700.0))],
            },
            vertical_lines: vec![l((900.0, 100.0), (950.0, 300.0)), l((1100.0, 100.0), (1050.0, 300.0))],
            efov_polygon: vec![],
            polylines: vec![],
        };
        let c = evaluate_criterion(&a, &m).unwrap();
        // Parallel term is zero, perpendicular term is exactly one; the
        // verticality term of a nadir camera is nonnegative.
        let v = a.vertical_lines.iter().map(|l| verticality(l, &m)).sum::<f64>() / 2.0;
        assert!((c - v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_floor_line_reports_projection_failure() {
        let m = partial(0.0).model();
        let a = annotation_with_efov(vec![]);
        let mut b = a.clone();
        b.floor = FloorGeometry::Option2 {
            equal_segments: vec![l((100.0, 100.0), (400.0, 100.0)), l((600.0, 900.0), (900.0, 900.0))],
        };
        assert_eq!(evaluate_criterion(&b, &m), Err(Stage1Error::ProjectionFailure));
        assert!(evaluate_criterion(&a, &m).is_ok());
    }
}
