mod common;

use calib_core::distortion::{fit_distortion, image_center, straightness, DistortionModel, StraighteningPolyline};
use calib_core::workflow::run_stage1;
use calib_core::project::{CameraRecord, ImageRef};
use calib_oracle::{Lens, OracleCamera};
use common::{option1, px, rng};
use rand::Rng;

fn polylines(raw: &[Vec<[f64; 2]>]) -> Vec<StraighteningPolyline> {
    raw.iter().map(|pl| StraighteningPolyline::new(pl.iter().copied().map(px).collect())).collect()
}

#[test]
fn recovers_known_coefficients_from_four_ten_point_polylines() {
    let mut r = rng(31);
    for _ in 0..40 {
        let lens = Lens { k1: r.random_range(-0.3..0.3), k2: r.random_range(-0.1..0.1), width: 1920, height: 1080 };
        let pls = polylines(&calib_oracle::distorted_polylines(&mut r, &lens, 10));
        let fit = fit_distortion(&pls, 1920, 1080).unwrap();
        assert!((fit.model.k1 - lens.k1).abs() < 1e-3, "k1 {} vs {}", fit.model.k1, lens.k1);
        assert!((fit.model.k2 - lens.k2).abs() < 1e-3, "k2 {} vs {}", fit.model.k2, lens.k2);
    }
}

#[test]
fn fitted_model_straightens_better_than_none() {
    let mut r = rng(32);
    for _ in 0..20 {
        let lens = Lens { k1: r.random_range(-0.3..0.3), k2: r.random_range(-0.1..0.1), width: 1280, height: 960 };
        let pls = polylines(&calib_oracle::distorted_polylines(&mut r, &lens, 12));
        let refs: Vec<&StraighteningPolyline> = pls.iter().collect();
        let c = image_center(1280, 960);
        let fit = fit_distortion(&pls, 1280, 960).unwrap();
        let before = straightness(&refs, &DistortionModel::identity(1280, 960), &c);
        let after = straightness(&refs, &fit.model, &c);
        assert!(after <= before, "{after} > {before}");
        assert!(after < 1e-6);
    }
}

#[test]
fn distortion_is_removed_before_stage_one() {
    let cam = OracleCamera { x0: 0.0, y0: 0.0, z0: 4.0, yaw: 0.2, pitch: -0.55, roll: 0.07, focal: 1000.0, width: 1920, height: 1080 };
    let mut r = rng(33);
    let scene = calib_oracle::render(&mut r, &cam).unwrap();
    let lens = Lens { k1: 0.12, k2: -0.03, width: 1920, height: 1080 };
    let ideal = option1(&scene);
    let d = |q: &calib_core::camera::PixelPoint| px(lens.distort([q.u, q.v]));
    let mut raw = ideal.clone();
    let distort_lines = |ls: &mut Vec<calib_core::vanishing::ImageLine>| {
        for l in ls.iter_mut() {
            *l = calib_core::vanishing::ImageLine { start: d(&l.start), end: d(&l.end) };
        }
    };
    distort_lines(&mut raw.vertical_lines);
    if let calib_core::annotation::FloorGeometry::Option1 { parallel_lines, perpendicular_pair } = &mut raw.floor {
        distort_lines(parallel_lines);
        distort_lines(perpendicular_pair);
    }
    raw.efov_polygon = raw.efov_polygon.iter().map(d).collect();
    raw.polylines = polylines(&calib_oracle::distorted_polylines(&mut r, &lens, 10));

    let mut record = CameraRecord::new("c", ImageRef { blob: "b".into(), width: 1920, height: 1080 });
    record.annotation = Some(raw);
    let out = run_stage1(&mut record).unwrap();
    let k = out.distortion.unwrap().model;
    assert!((k.k1 - 0.12).abs() < 1e-3 && (k.k2 + 0.03).abs() < 1e-3);
    assert!((out.partial.roll - 0.07).abs() < 1e-4);
    assert!((out.partial.pitch + 0.55).abs() < 1e-3, "pitch {}", out.partial.pitch);
    assert!((out.partial.focal - 1000.0).abs() < 2.0, "focal {}", out.partial.focal);
    assert_eq!(record.distortion, Some(k));
}
