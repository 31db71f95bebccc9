//! Synthetic scenes with known ground truth.
//!
//! World primitives (floor lines, verticals, a floor footprint) are chosen
//! in view of a known camera and forward-projected into an annotation. Used
//! by the verification suite, the CLI fixture generator, and tests.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationSet, FloorGeometry};
use crate::camera::{CameraIntrinsics, CameraModel, CameraPose, PixelPoint, WorldPoint};
use crate::project::{CameraRecord, ImageRef, Project};
use crate::stage1::FloorPolygon;
use crate::stage2::PlacementTransform;
use crate::store::blob_id;
use crate::vanishing::ImageLine;

const MAX_ATTEMPTS: usize = 5000;
/// Floor points farther than this from the camera are not sampled, meters.
const MAX_RANGE: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("could not place {0} in view of the camera")]
    NoView(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationOption {
    Option1,
    Option2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub camera: CameraModel,
    pub annotation: AnnotationSet,
    /// True floor polygon whose image is the annotated EFOV.
    pub footprint: Vec<WorldPoint>,
}

/// Ranges used by [`random_camera`].
#[derive(Debug, Clone)]
pub struct CameraRanges {
    pub pitch: (f64, f64),
    /// Focal length as a multiple of image width.
    pub focal_ratio: (f64, f64),
    pub roll: (f64, f64),
    pub height: (f64, f64),
    pub position: (f64, f64),
}

impl Default for CameraRanges {
    fn default() -> Self {
        Self {
            pitch: (-1.2, -0.2),
            focal_ratio: (0.5, 3.0),
            roll: (-0.4, 0.4),
            height: (2.0, 8.0),
            position: (-20.0, 20.0),
        }
    }
}

pub fn random_camera<R: Rng>(rng: &mut R, width: u32, height: u32, ranges: &CameraRanges) -> CameraModel {
    let pose = CameraPose::new(
        rng.random_range(ranges.position.0..=ranges.position.1),
        rng.random_range(ranges.position.0..=ranges.position.1),
        rng.random_range(ranges.height.0..=ranges.height.1),
        rng.random_range(-PI..PI),
        rng.random_range(ranges.pitch.0..=ranges.pitch.1),
        rng.random_range(ranges.roll.0..=ranges.roll.1),
    )
    .expect("ranges produce a valid pose");
    let focal = rng.random_range(ranges.focal_ratio.0..=ranges.focal_ratio.1) * width as f64;
    CameraModel::new(pose, CameraIntrinsics::new(focal, width, height).expect("valid intrinsics"))
        .expect("valid model")
}

fn in_image(m: &CameraModel, q: &PixelPoint) -> bool {
    let (w, h) = (m.intrinsics.image_width as f64, m.intrinsics.image_height as f64);
    q.u >= 0.0 && q.u <= w && q.v >= 0.0 && q.v <= h
}

/// Random floor point seen in the lower part of the image.
fn floor_point<R: Rng>(rng: &mut R, m: &CameraModel) -> Option<WorldPoint> {
    let (w, h) = (m.intrinsics.image_width as f64, m.intrinsics.image_height as f64);
    for _ in 0..MAX_ATTEMPTS {
        let q = PixelPoint::new(rng.random_range(0.1 * w..0.9 * w), rng.random_range(0.3 * h..0.95 * h));
        if let Ok(p) = m.unproject(&q, 0.0) {
            if (p.x - m.pose.x0).hypot(p.y - m.pose.y0) < MAX_RANGE {
                return Some(p);
            }
        }
    }
    None
}

fn render_segment(m: &CameraModel, a: &WorldPoint, b: &WorldPoint, min_px: f64) -> Option<ImageLine> {
    let qa = m.project(a).ok()?;
    let qb = m.project(b).ok()?;
    if !in_image(m, &qa) || !in_image(m, &qb) || qa.distance(&qb) < min_px {
        return None;
    }
    Some(ImageLine { start: qa, end: qb })
}

/// A floor segment with the given heading, centered on a random visible
/// floor point.
fn floor_segment<R: Rng>(rng: &mut R, m: &CameraModel, heading: f64, length: Option<f64>, min_px: f64) -> Option<ImageLine> {
    for _ in 0..MAX_ATTEMPTS {
        let c = floor_point(rng, m)?;
        let len = match length {
            Some(len) => len,
            None => rng.random_range(0.3..1.0) * view_scale(rng, m)?,
        };
        let (s, co) = heading.sin_cos();
        let a = WorldPoint::floor(c.x - 0.5 * len * co, c.y - 0.5 * len * s);
        let b = WorldPoint::floor(c.x + 0.5 * len * co, c.y + 0.5 * len * s);
        if let Some(l) = render_segment(m, &a, &b, min_px) {
            return Some(l);
        }
    }
    None
}

/// Distance between two random visible floor points: a length that fits the
/// visible floor regardless of focal length and mount height.
fn view_scale<R: Rng>(rng: &mut R, m: &CameraModel) -> Option<f64> {
    let a = floor_point(rng, m)?;
    let b = floor_point(rng, m)?;
    Some(a.distance(&b).max(0.1))
}

fn vertical_segment<R: Rng>(rng: &mut R, m: &CameraModel) -> Option<ImageLine> {
    for _ in 0..MAX_ATTEMPTS {
        let f = floor_point(rng, m)?;
        let top = WorldPoint::new(f.x, f.y, rng.random_range(0.5..2.5));
        if let Some(l) = render_segment(m, &f, &top, 30.0) {
            return Some(l);
        }
    }
    None
}

/// Heading offset from the camera heading that keeps floor vanishing points
/// finite and away from the principal column.
fn oblique_heading<R: Rng>(rng: &mut R, yaw: f64) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    yaw + sign * rng.random_range(0.35..1.2)
}

/// Footprint of a trapezoid in the lower image, pushed down until all of
/// its corners land on the floor within range.
fn footprint(m: &CameraModel) -> Option<Vec<WorldPoint>> {
    let (w, h) = (m.intrinsics.image_width as f64, m.intrinsics.image_height as f64);
    let mut top = 0.35;
    while top < 0.85 {
        let quad = [
            PixelPoint::new(0.12 * w, 0.93 * h),
            PixelPoint::new(0.88 * w, 0.93 * h),
            PixelPoint::new(0.72 * w, top * h),
            PixelPoint::new(0.28 * w, top * h),
        ];
        let pts: Option<Vec<WorldPoint>> = quad.iter().map(|q| m.unproject(q, 0.0).ok()).collect();
        if let Some(pts) = pts {
            if pts.iter().all(|p| (p.x - m.pose.x0).hypot(p.y - m.pose.y0) < MAX_RANGE) {
                return Some(pts);
            }
        }
        top += 0.05;
    }
    None
}

/// Forward-renders a noiseless annotation of the chosen option.
pub fn render_scene<R: Rng>(rng: &mut R, camera: &CameraModel, option: AnnotationOption) -> Result<SyntheticScene, SynthError> {
    let yaw = camera.pose.yaw;
    let floor = match option {
        AnnotationOption::Option1 => {
            let heading = oblique_heading(rng, yaw);
            let parallel_lines = (0..3)
                .map(|_| floor_segment(rng, camera, heading, None, 60.0))
                .collect::<Option<Vec<_>>>()
                .ok_or(SynthError::NoView("parallel lines"))?;
            let heading = oblique_heading(rng, yaw);
            let perpendicular_pair = [heading, heading + PI / 2.0]
                .iter()
                .map(|&h| floor_segment(rng, camera, h, None, 60.0))
                .collect::<Option<Vec<_>>>()
                .ok_or(SynthError::NoView("perpendicular pair"))?;
            FloorGeometry::Option1 { parallel_lines, perpendicular_pair }
        }
        AnnotationOption::Option2 => {
            // A common length must fit everywhere the segments land; redraw
            // it when one of them cannot be placed.
            let mut equal_segments = None;
            for _ in 0..MAX_ATTEMPTS {
                let length = rng.random_range(0.2..0.5) * view_scale(rng, camera).ok_or(SynthError::NoView("floor"))?;
                equal_segments = (0..4)
                    .map(|_| {
                        let heading = rng.random_range(-PI..PI);
                        floor_segment(rng, camera, heading, Some(length), 40.0)
                    })
                    .collect::<Option<Vec<_>>>();
                if equal_segments.is_some() {
                    break;
                }
            }
            let equal_segments = equal_segments.ok_or(SynthError::NoView("equal segments"))?;
            FloorGeometry::Option2 { equal_segments }
        }
    };
    let vertical_lines = (0..3)
        .map(|_| vertical_segment(rng, camera))
        .collect::<Option<Vec<_>>>()
        .ok_or(SynthError::NoView("vertical lines"))?;
    let footprint = footprint(camera).ok_or(SynthError::NoView("field of view"))?;
    let efov_polygon = footprint
        .iter()
        .map(|p| camera.project(p).ok())
        .collect::<Option<Vec<_>>>()
        .ok_or(SynthError::NoView("field of view"))?;
    Ok(SyntheticScene {
        camera: *camera,
        annotation: AnnotationSet { floor, vertical_lines, efov_polygon, polylines: vec![] },
        footprint,
    })
}

/// Adds independent Gaussian noise of `sigma` pixels to every line endpoint.
pub fn perturb_lines<R: Rng>(rng: &mut R, annotation: &AnnotationSet, sigma: f64) -> AnnotationSet {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    let mut jitter = |l: &ImageLine| ImageLine {
        start: PixelPoint::new(l.start.u + normal.sample(rng), l.start.v + normal.sample(rng)),
        end: PixelPoint::new(l.end.u + normal.sample(rng), l.end.v + normal.sample(rng)),
    };
    let floor = match &annotation.floor {
        FloorGeometry::Option1 { parallel_lines, perpendicular_pair } => FloorGeometry::Option1 {
            parallel_lines: parallel_lines.iter().map(&mut jitter).collect(),
            perpendicular_pair: perpendicular_pair.iter().map(&mut jitter).collect(),
        },
        FloorGeometry::Option2 { equal_segments } => FloorGeometry::Option2 {
            equal_segments: equal_segments.iter().map(&mut jitter).collect(),
        },
    };
    let vertical_lines = annotation.vertical_lines.iter().map(&mut jitter).collect();
    AnnotationSet { floor, vertical_lines, ..annotation.clone() }
}

/// Cameras spread around `target` on the floor, each aimed at it so that
/// it images at the principal point.
pub fn cameras_around<R: Rng>(rng: &mut R, count: usize, target: (f64, f64), width: u32, height: u32) -> Vec<CameraModel> {
    (0..count)
        .map(|i| {
            let bearing = 2.0 * PI * i as f64 / count as f64 + rng.random_range(-0.3..0.3);
            let distance = rng.random_range(6.0..12.0);
            let z0 = rng.random_range(3.0..6.0);
            let pose = CameraPose::new(
                target.0 - distance * bearing.cos(),
                target.1 - distance * bearing.sin(),
                z0,
                bearing,
                -(z0 / distance).atan(),
                rng.random_range(-0.1..0.1),
            )
            .expect("valid pose");
            let focal = rng.random_range(1.0..2.0) * width as f64;
            CameraModel::new(pose, CameraIntrinsics::new(focal, width, height).expect("valid intrinsics"))
                .expect("valid model")
        })
        .collect()
}

/// A project with one annotated (not yet solved) camera per model, plus
/// the scenes it was rendered from.
pub fn fixture_project<R: Rng>(
    rng: &mut R,
    name: &str,
    cameras: &[CameraModel],
    option: AnnotationOption,
) -> Result<(Project, Vec<SyntheticScene>), SynthError> {
    let mut project = Project::new(name);
    let mut scenes = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        let scene = render_scene(rng, cam, option)?;
        let id = format!("cam{}", i + 1);
        let image = ImageRef {
            blob: blob_id(format!("synthetic image {id}").as_bytes()),
            width: cam.intrinsics.image_width,
            height: cam.intrinsics.image_height,
        };
        let mut record = CameraRecord::new(id, image);
        record.annotation = Some(crate::canonical::round_trip(&scene.annotation));
        project.cameras.push(record);
        scenes.push(scene);
    }
    Ok((project, scenes))
}

/// The placement that carries a stage-1 floor polygon onto the true
/// footprint, by least-squares similarity.
pub fn oracle_placement(efov: &FloorPolygon, footprint: &[WorldPoint]) -> PlacementTransform {
    let src: Vec<(f64, f64)> = efov.vertices.iter().map(|p| (p.x, p.y)).collect();
    let dst: Vec<(f64, f64)> = footprint.iter().map(|p| (p.x, p.y)).collect();
    let fit = fit_similarity(&src, &dst);
    PlacementTransform { dx: fit.tx, dy: fit.ty, scale: fit.scale, theta: fit.theta }
}

/// Least-squares planar similarity `dst ~ scale * Rot(theta) * src + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFit {
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    /// Largest vertex distance after alignment.
    pub max_residual: f64,
}

pub fn fit_similarity(src: &[(f64, f64)], dst: &[(f64, f64)]) -> SimilarityFit {
    assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let mean = |p: &[(f64, f64)]| {
        let (a, b) = p.iter().fold((0.0, 0.0), |(a, b), q| (a + q.0, b + q.1));
        (a / n, b / n)
    };
    let (ms, md) = (mean(src), mean(dst));
    // Complex least squares: a = sum(conj(s) d) / sum(|s|^2).
    let (mut re, mut im, mut ss) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.0 - ms.0, s.1 - ms.1);
        let (dx, dy) = (d.0 - md.0, d.1 - md.1);
        re += sx * dx + sy * dy;
        im += sx * dy - sy * dx;
        ss += sx * sx + sy * sy;
    }
    let (ar, ai) = (re / ss, im / ss);
    let tx = md.0 - (ar * ms.0 - ai * ms.1);
    let ty = md.1 - (ai * ms.0 + ar * ms.1);
    let max_residual = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (ar * s.0 - ai * s.1 + tx - d.0).hypot(ai * s.0 + ar * s.1 + ty - d.1))
        .fold(0.0, f64::max);
    SimilarityFit {
        scale: ar.hypot(ai),
        theta: ai.atan2(ar),
        tx,
        ty,
        max_residual,
    }
}
