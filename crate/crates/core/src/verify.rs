//! Self-checks of a calibrated project: projection round trips, agreement
//! of cached stage-1 results with their annotations, placement consistency
//! and cross-camera marker agreement.

use serde::Serialize;

use crate::camera::{CameraModel, PixelPoint, WorldPoint};
use crate::project::{current_partial, Project};
use crate::stage1::{project_efov, project_polygon_to_floor, solve_partial};
use crate::stage2::{marker_overlay, transform_floor_polygon};
use crate::workflow::{calibrated_models, WorkflowError};

pub const ROUND_TRIP_PX: f64 = 1e-6;
pub const ROUND_TRIP_M: f64 = 1e-6;
/// Cached stage-1 parameters are stored to nine significant digits.
pub const STAGE1_AGREEMENT: f64 = 1e-6;
pub const PLACEMENT_CONSISTENCY_M: f64 = 1e-9;
pub const MARKER_AGREEMENT_M: f64 = 1e-6;

const GRID: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub property: &'static str,
    pub subject: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(property: &'static str, subject: &str, measured: f64, tolerance: f64) -> Check {
    Check {
        property,
        subject: subject.to_owned(),
        passed: measured <= tolerance,
        measured,
        tolerance,
    }
}

/// Largest pixel->floor->pixel and floor->pixel->floor errors over a grid
/// of pixels whose rays reach the floor.
fn round_trip_errors(m: &CameraModel) -> (f64, f64) {
    let (w, h) = (m.intrinsics.image_width as f64, m.intrinsics.image_height as f64);
    let (mut px, mut meters) = (0.0f64, 0.0f64);
    for i in 0..GRID {
        for j in 0..GRID {
            let q = PixelPoint::new(w * (i as f64 + 0.5) / GRID as f64, h * (j as f64 + 0.5) / GRID as f64);
            let Ok(p) = m.unproject(&q, 0.0) else { continue };
            let back = m.project(&p).map_or(f64::INFINITY, |b| b.distance(&q));
            px = px.max(back);
            let world = WorldPoint::floor(p.x.round(), p.y.round());
            if let Ok(image) = m.project(&world) {
                let again = m.unproject(&image, 0.0).map_or(f64::INFINITY, |a| a.distance(&world));
                meters = meters.max(again);
            }
        }
    }
    (px, meters)
}

pub fn verify_project(project: &Project) -> Result<VerifyReport, WorkflowError> {
    let models = calibrated_models(project)?;
    if models.is_empty() {
        return Err(WorkflowError::NoCalibratedCameras);
    }
    let mut checks = Vec::new();
    for (id, model) in &models {
        let record = project.camera(id).expect("model derived from this record");
        let (px, meters) = round_trip_errors(model);
        checks.push(check("projection_round_trip_pixel", id, px, ROUND_TRIP_PX));
        checks.push(check("projection_round_trip_world", id, meters, ROUND_TRIP_M));

        let annotation = record.annotation.as_ref().expect("calibrated camera has an annotation");
        let cached = current_partial(record)?;
        let solved = solve_partial(annotation, record.image.width, record.image.height)?;
        let gap = (solved.roll - cached.roll)
            .abs()
            .max((solved.pitch - cached.pitch).abs())
            .max((solved.focal - cached.focal).abs() / solved.focal);
        checks.push(check("stage1_round_trip", id, gap, STAGE1_AGREEMENT));

        let placement = record.placement.as_ref().expect("calibrated camera has a placement");
        let moved = transform_floor_polygon(&project_efov(annotation, &cached)?, placement);
        let reprojected = project_polygon_to_floor(&annotation.efov_polygon, model)?;
        let gap = moved
            .vertices
            .iter()
            .zip(&reprojected.vertices)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max);
        checks.push(check("placement_consistency", id, gap, PLACEMENT_CONSISTENCY_M));
    }

    for marker in &project.markers {
        let hits: Vec<WorldPoint> = models
            .values()
            .filter(|m| marker_overlay(marker, m).is_some())
            .filter_map(|m| {
                let q = m.project(&marker.position).ok()?;
                m.unproject(&q, marker.position.z).ok()
            })
            .collect();
        if hits.is_empty() {
            continue;
        }
        let spread = hits.iter().map(|p| p.distance(&marker.position)).fold(0.0, f64::max);
        checks.push(check("marker_agreement", &marker.id, spread, MARKER_AGREEMENT_M));
    }

    Ok(VerifyReport { passed: checks.iter().all(|c| c.passed), checks })
}
