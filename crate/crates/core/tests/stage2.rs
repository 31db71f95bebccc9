mod common;

use std::f64::consts::PI;

use calib_core::camera::{normalize_angle, CameraModel, PixelPoint, WorldPoint};
use calib_core::stage1::{project_efov, project_polygon_to_floor, solve_partial, FloorPolygon, PartialCalibration};
use calib_core::stage2::{
    apply_placement, assemble_full_calibration, backproject_prism, marker_overlay, placement_from_pose, project_virtual_marker,
    transform_floor_polygon, MarkerShape, PlacementTransform, VirtualMarker,
};
use calib_oracle::{procrustes, OracleCamera, Ranges};
use common::{model, option1, rng};
use proptest::prelude::*;
use rand::Rng;

/// Placement aligning the stage-1 polygon with the true footprint.
fn aligning_placement(efov: &FloorPolygon, footprint: &[[f64; 2]]) -> PlacementTransform {
    let src: Vec<[f64; 2]> = efov.vertices.iter().map(|p| [p.x, p.y]).collect();
    let s = procrustes(&src, footprint);
    PlacementTransform::new(s.tx, s.ty, s.scale, s.theta).unwrap()
}

/// Both stages on an oracle scene.
fn calibrate(cam: &OracleCamera, seed: u64) -> CameraModel {
    calibrate_scene(&calib_oracle::render(&mut rng(seed), cam).unwrap())
}

fn calibrate_scene(scene: &calib_oracle::Scene) -> CameraModel {
    let a = option1(scene);
    let partial = solve_partial(&a, scene.camera.width, scene.camera.height).unwrap();
    let t = aligning_placement(&project_efov(&a, &partial).unwrap(), &scene.footprint);
    assemble_full_calibration(&partial, &apply_placement(&partial, &t)).unwrap()
}

#[test]
fn aligning_similarity_recovers_the_pose() {
    let cam = OracleCamera { x0: 4.0, y0: -2.0, z0: 3.9, yaw: 0.8, pitch: -0.5, roll: 0.1, focal: 1300.0, width: 1920, height: 1080 };
    let m = calibrate(&cam, 21);
    let p = m.pose;
    for (got, want) in [(p.x0, 4.0), (p.y0, -2.0), (p.z0, 3.9), (p.yaw, 0.8)] {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn calibrated_model_reproduces_truth_projections() {
    let mut r = rng(22);
    for _ in 0..5 {
        let scene = common::random_scene(&mut r, &Ranges::default());
        let cam = scene.camera;
        let m = calibrate_scene(&scene);
        let mut checked = 0;
        while checked < 100 {
            let q = [r.random_range(0.0..1920.0), r.random_range(0.0..1080.0)];
            let Some(p) = cam.hit(q, 0.0) else { continue };
            let got = m.project(&WorldPoint::new(p[0], p[1], 0.0)).unwrap();
            let want = cam.project(p).unwrap();
            assert!((got.u - want[0]).hypot(got.v - want[1]) < 1e-3);
            checked += 1;
        }
    }
}

#[test]
fn two_cameras_agree_on_a_shared_floor_point() {
    let target = [3.0, -1.0, 0.0];
    let a = OracleCamera { x0: -6.0, y0: -4.0, z0: 4.5, yaw: 0.5, pitch: -0.45, roll: 0.05, focal: 1400.0, width: 1920, height: 1080 };
    let b = OracleCamera { x0: 10.0, y0: 5.0, z0: 3.2, yaw: -2.4, pitch: -0.35, roll: -0.08, focal: 1100.0, width: 1920, height: 1080 };
    let (ma, mb) = (calibrate(&a, 23), calibrate(&b, 24));
    let qa = a.project(target).unwrap();
    let qb = b.project(target).unwrap();
    assert!(a.in_frame(qa) && b.in_frame(qb));
    let pa = ma.unproject(&common::px(qa), 0.0).unwrap();
    let pb = mb.unproject(&common::px(qb), 0.0).unwrap();
    assert!(pa.distance(&pb) < 1e-3, "{pa:?} {pb:?}");
}

#[test]
fn nadir_prism_top_is_scaled_base() {
    let partial = PartialCalibration {
        roll: 0.0,
        pitch: -PI / 2.0,
        focal: 900.0,
        image_width: 1600,
        image_height: 1200,
        residual: 0.0,
        annotation_digest: String::new(),
    };
    let pose = apply_placement(&partial, &PlacementTransform::new(1.0, 2.0, 1.4, 0.3).unwrap());
    let m = assemble_full_calibration(&partial, &pose).unwrap();
    let base = FloorPolygon {
        vertices: vec![WorldPoint::floor(0.0, 1.0), WorldPoint::floor(2.5, 1.5), WorldPoint::floor(2.0, 3.5), WorldPoint::floor(0.5, 3.0)],
    };
    let h = 2.0;
    let prism = backproject_prism(&base, &m, h);
    let k = pose.z0 / (pose.z0 - h);
    for (b, t) in prism.base.iter().zip(&prism.top) {
        let (b, t) = (b.unwrap(), t.unwrap());
        assert!((t.u - (800.0 + k * (b.u - 800.0))).abs() < 1e-9);
        assert!((t.v - (600.0 + k * (b.v - 600.0))).abs() < 1e-9);
    }
    assert!(prism.visible.iter().all(|v| *v));
}

#[test]
fn marker_at_nadir_hits_the_principal_point() {
    let cam = OracleCamera { x0: 5.0, y0: 1.0, z0: 3.0, yaw: 0.4, pitch: -PI / 2.0, roll: 0.0, focal: 800.0, width: 1280, height: 720 };
    let marker = VirtualMarker { id: "m".into(), shape: MarkerShape::Point, position: WorldPoint::floor(5.0, 1.0), height: 0.0 };
    let q = marker_overlay(&marker, &model(&cam)).unwrap()[0];
    assert!(q.distance(&PixelPoint::new(640.0, 360.0)) < 1e-9);
}

#[test]
fn marker_shows_in_exactly_the_cameras_that_see_it() {
    let target = [2.0, 2.0, 0.0];
    let cams = [
        OracleCamera { x0: -5.0, y0: 2.0, z0: 4.0, yaw: 0.0, pitch: -0.5, roll: 0.0, focal: 1200.0, width: 1920, height: 1080 },
        OracleCamera { x0: 2.0, y0: 10.0, z0: 3.0, yaw: -PI / 2.0, pitch: -0.3, roll: 0.1, focal: 1000.0, width: 1920, height: 1080 },
        // Faces away from the marker.
        OracleCamera { x0: 0.0, y0: 0.0, z0: 3.0, yaw: PI, pitch: -0.6, roll: 0.0, focal: 1000.0, width: 1920, height: 1080 },
    ];
    let visible = |c: &OracleCamera| {
        c.project(target).is_some_and(|q| (-960.0..=2880.0).contains(&q[0]) && (-540.0..=1620.0).contains(&q[1]))
    };
    let expected: Vec<bool> = cams.iter().map(visible).collect();
    assert_eq!(expected, [true, true, false]);
    let marker = VirtualMarker { id: "m".into(), shape: MarkerShape::Point, position: WorldPoint::floor(2.0, 2.0), height: 0.0 };
    let models: Vec<CameraModel> = cams.iter().map(model).collect();
    let got: Vec<bool> = project_virtual_marker(&marker, &models).iter().map(Option::is_some).collect();
    assert_eq!(got, expected);
}

/// A partial calibration and an EFOV it can project: four pixels in the
/// lower image, moved down until all of them hit the floor.
fn partial_and_efov(roll: f64, pitch: f64, focal: f64) -> Option<(PartialCalibration, Vec<PixelPoint>)> {
    let partial =
        PartialCalibration { roll, pitch, focal, image_width: 1920, image_height: 1080, residual: 0.0, annotation_digest: String::new() };
    let m = partial.model();
    let mut top = 0.3;
    while top < 0.95 {
        let efov = vec![
            PixelPoint::new(150.0, 1050.0),
            PixelPoint::new(1770.0, 1050.0),
            PixelPoint::new(1300.0, top * 1080.0),
            PixelPoint::new(620.0, top * 1080.0),
        ];
        if efov.iter().all(|q| m.unproject(q, 0.0).is_ok_and(|p| p.x.hypot(p.y) < 200.0)) {
            return Some((partial, efov));
        }
        top += 0.05;
    }
    None
}

fn transform() -> impl Strategy<Value = PlacementTransform> {
    (-50.0..50.0f64, -50.0..50.0f64, 0.2..5.0f64, -PI..PI).prop_map(|(dx, dy, s, th)| PlacementTransform::new(dx, dy, s, th).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn placing_the_polygon_equals_projecting_under_the_new_pose(
        (roll, pitch, focal) in (-0.4..0.4f64, -1.2..-0.2f64, 500.0..6000.0f64),
        t in transform(),
    ) {
        let (partial, efov) = partial_and_efov(roll, pitch, focal).unwrap();
        let moved = transform_floor_polygon(&project_polygon_to_floor(&efov, &partial.model()).unwrap(), &t);
        let m = assemble_full_calibration(&partial, &apply_placement(&partial, &t)).unwrap();
        let direct = project_polygon_to_floor(&efov, &m).unwrap();
        for (a, b) in moved.vertices.iter().zip(&direct.vertices) {
            prop_assert!(a.distance(b) < 1e-9, "{a:?} {b:?}");
        }
    }

    #[test]
    fn placement_and_pose_are_in_bijection((roll, pitch) in (-0.4..0.4f64, -1.2..-0.2f64), t in transform()) {
        let (partial, _) = partial_and_efov(roll, pitch, 1500.0).unwrap();
        let back = placement_from_pose(&partial, &apply_placement(&partial, &t)).unwrap();
        prop_assert_eq!(back.dx, t.dx);
        prop_assert_eq!(back.dy, t.dy);
        prop_assert!((back.scale - t.scale).abs() <= 4.0 * f64::EPSILON * t.scale);
        prop_assert_eq!(back.theta, normalize_angle(t.theta));
    }

    #[test]
    fn successive_placements_compose(a in transform(), b in transform(), (x, y) in (-20.0..20.0f64, -20.0..20.0f64)) {
        let (x1, y1) = a.apply(x, y);
        let (x2, y2) = b.apply(x1, y1);
        let (x3, y3) = a.then(&b).apply(x, y);
        prop_assert!((x2 - x3).abs() < 1e-9 && (y2 - y3).abs() < 1e-9);
        let (x4, y4) = a.inverse().apply(x1, y1);
        prop_assert!((x4 - x).abs() < 1e-9 && (y4 - y).abs() < 1e-9);
    }
}

#[test]
fn prism_over_placed_polygon_keeps_vertex_order() {
    let (partial, efov) = partial_and_efov(0.05, -0.7, 1300.0).unwrap();
    let t = PlacementTransform::new(3.0, -1.0, 1.5, 0.7).unwrap();
    let m = assemble_full_calibration(&partial, &apply_placement(&partial, &t)).unwrap();
    let poly = project_polygon_to_floor(&efov, &m).unwrap();
    let prism = backproject_prism(&poly, &m, 2.0);
    for (b, q) in prism.base.iter().zip(&efov) {
        assert!(b.unwrap().distance(q) < 1e-6);
    }
}
