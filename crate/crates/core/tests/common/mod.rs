//! Conversions from the reference geometry into library types.
#![allow(dead_code)]

use calib_core::annotation::{AnnotationSet, FloorGeometry};
use calib_core::camera::{CameraIntrinsics, CameraModel, CameraPose, PixelPoint, WorldPoint};
use calib_core::vanishing::ImageLine;
use calib_oracle::{OracleCamera, Ranges, Scene, Seg};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(c: &OracleCamera) -> CameraModel {
    CameraModel::new(
        CameraPose::new(c.x0, c.y0, c.z0, c.yaw, c.pitch, c.roll).unwrap(),
        CameraIntrinsics::new(c.focal, c.width, c.height).unwrap(),
    )
    .unwrap()
}

pub fn px(p: [f64; 2]) -> PixelPoint {
    PixelPoint::new(p[0], p[1])
}

pub fn line(s: &Seg) -> ImageLine {
    ImageLine { start: px(s[0]), end: px(s[1]) }
}

pub fn lines(s: &[Seg]) -> Vec<ImageLine> {
    s.iter().map(line).collect()
}

pub fn option1(scene: &Scene) -> AnnotationSet {
    AnnotationSet {
        floor: FloorGeometry::Option1 { parallel_lines: lines(&scene.parallel), perpendicular_pair: lines(&scene.perpendicular) },
        vertical_lines: lines(&scene.verticals),
        efov_polygon: scene.efov.iter().copied().map(px).collect(),
        polylines: vec![],
    }
}

pub fn option2(scene: &Scene) -> AnnotationSet {
    AnnotationSet {
        floor: FloorGeometry::Option2 { equal_segments: lines(&scene.equal) },
        ..option1(scene)
    }
}

/// A random camera from `ranges` together with a scene it renders.
pub fn random_scene(rng: &mut ChaCha8Rng, ranges: &Ranges) -> Scene {
    loop {
        let cam = calib_oracle::random_camera(rng, 1920, 1080, ranges);
        if let Some(s) = calib_oracle::render(rng, &cam) {
            return s;
        }
    }
}

pub fn floor(p: [f64; 2]) -> WorldPoint {
    WorldPoint::floor(p[0], p[1])
}
