//! Calibration steps on project records, shared by the command-line tool
//! and the HTTP service so that both produce identical results.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::annotation::AnnotationSet;
use crate::camera::{CameraModel, CameraPose, PixelPoint};
use crate::canonical;
use crate::distortion::{fit_distortion, image_center, DistortionError, DistortionFit};
use crate::project::{current_partial, derive_model, CameraRecord, DeriveError, Project};
use crate::stage1::{project_efov, solve_partial, FloorPolygon, PartialCalibration, Stage1Error};
use crate::stage2::{
    apply_placement, assemble_full_calibration, backproject_prism, marker_overlay, transform_floor_polygon,
    PlacementTransform, PrismOverlay, Stage2Error, DEFAULT_PRISM_HEIGHT,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("camera {0:?} not found")]
    UnknownCamera(String),
    #[error("camera {0:?} has no annotation")]
    MissingAnnotation(String),
    #[error("camera {0:?} has no partial calibration")]
    MissingPartial(String),
    #[error("project has no fully calibrated camera")]
    NoCalibratedCameras,
    #[error(transparent)]
    Distortion(#[from] DistortionError),
    #[error(transparent)]
    Stage1(#[from] Stage1Error),
    #[error(transparent)]
    Stage2(#[from] Stage2Error),
}

/// Broad failure classes, mapped to exit codes and HTTP statuses by the
/// front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or insufficient input.
    Validation,
    /// The optimizer could not satisfy the annotation.
    Convergence,
    /// The request needs a prerequisite the record lacks.
    Precondition,
    NotFound,
}

impl WorkflowError {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::UnknownCamera(_) => "unknown_camera",
            WorkflowError::MissingAnnotation(_) => "missing_annotation",
            WorkflowError::MissingPartial(_) => "missing_partial",
            WorkflowError::NoCalibratedCameras => "no_calibrated_cameras",
            WorkflowError::Distortion(e) => match e {
                DistortionError::InsufficientData => "insufficient_data",
                DistortionError::NonConvergence { .. } => "distortion_non_convergence",
                DistortionError::InvalidPolyline { .. } => "invalid_polyline",
                DistortionError::NotMonotone | DistortionError::NonFinite => "invalid_distortion",
            },
            WorkflowError::Stage1(e) => match e {
                Stage1Error::Annotation(crate::annotation::AnnotationError::DegenerateLines(_)) => "degenerate_lines",
                Stage1Error::Annotation(_) => "invalid_annotation",
                Stage1Error::DegenerateLines(_) => "degenerate_lines",
                Stage1Error::AmbiguousRoll => "ambiguous_roll",
                Stage1Error::ProjectionFailure => "projection_failure",
                Stage1Error::InfeasibleGeometry => "infeasible_geometry",
                Stage1Error::NonConvergence { .. } => "non_convergence",
                Stage1Error::HorizonViolation { .. } => "horizon_violation",
            },
            WorkflowError::Stage2(e) => match e {
                Stage2Error::InvalidTransform(_) => "invalid_transform",
                Stage2Error::InconsistentPartial(_) => "inconsistent_partial",
                Stage2Error::InvalidMarker(_) => "invalid_marker",
                Stage2Error::Model(_) => "invalid_model",
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            WorkflowError::UnknownCamera(_) => ErrorClass::NotFound,
            WorkflowError::MissingPartial(_) | WorkflowError::NoCalibratedCameras => ErrorClass::Precondition,
            WorkflowError::Distortion(DistortionError::NonConvergence { .. })
            | WorkflowError::Stage1(Stage1Error::NonConvergence { .. } | Stage1Error::InfeasibleGeometry) => {
                ErrorClass::Convergence
            }
            _ => ErrorClass::Validation,
        }
    }

    /// Structured detail for error envelopes.
    pub fn details(&self) -> serde_json::Value {
        match self {
            WorkflowError::Stage1(Stage1Error::HorizonViolation { vertices }) => serde_json::json!({ "vertices": vertices }),
            WorkflowError::Stage1(Stage1Error::NonConvergence { residual }) => serde_json::json!({ "residual": residual }),
            WorkflowError::Stage1(Stage1Error::Annotation(crate::annotation::AnnotationError::Invalid { field, .. })) => {
                serde_json::json!({ "field": field })
            }
            WorkflowError::Distortion(DistortionError::InvalidPolyline { index, .. }) => serde_json::json!({ "polyline": index }),
            WorkflowError::UnknownCamera(id) | WorkflowError::MissingAnnotation(id) | WorkflowError::MissingPartial(id) => {
                serde_json::json!({ "camera": id })
            }
            _ => serde_json::Value::Null,
        }
    }
}

impl From<DeriveError> for WorkflowError {
    fn from(e: DeriveError) -> Self {
        match e {
            DeriveError::Incomplete(_) => WorkflowError::NoCalibratedCameras,
            DeriveError::Stage1(e) => e.into(),
            DeriveError::Stage2(e) => e.into(),
        }
    }
}

pub fn camera_mut<'a>(project: &'a mut Project, id: &str) -> Result<&'a mut CameraRecord, WorkflowError> {
    project.camera_mut(id).ok_or_else(|| WorkflowError::UnknownCamera(id.to_owned()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage1Outcome {
    pub partial: PartialCalibration,
    /// Field-of-view polygon on the floor under the partial calibration.
    pub efov: FloorPolygon,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distortion: Option<DistortionFit>,
}

/// Runs stage 1 on the record's stored annotation and caches the result.
///
/// When the annotation carries polylines and no distortion model is stored
/// yet, the model is fitted first and the stored primitives are replaced by
/// their undistorted positions. All inputs are brought to their canonical
/// precision before solving, so the result does not depend on whether they
/// arrived through a document or a request.
pub fn run_stage1(record: &mut CameraRecord) -> Result<Stage1Outcome, WorkflowError> {
    let (w, h) = (record.image.width, record.image.height);
    let mut annotation: AnnotationSet = canonical::round_trip(
        record
            .annotation
            .as_ref()
            .ok_or_else(|| WorkflowError::MissingAnnotation(record.id.clone()))?,
    );
    annotation.validate(w, h).map_err(Stage1Error::from)?;
    let mut fit = None;
    if record.distortion.is_none() && !annotation.polylines.is_empty() {
        let f: DistortionFit = canonical::round_trip(&fit_distortion(&annotation.polylines, w, h)?);
        annotation = canonical::round_trip(&annotation.undistorted(&f.model, &image_center(w, h)));
        annotation.validate(w, h).map_err(Stage1Error::from)?;
        record.distortion = Some(f.model);
        fit = Some(f);
    }
    let partial: PartialCalibration = canonical::round_trip(&solve_partial(&annotation, w, h)?);
    let efov = project_efov(&annotation, &partial)?;
    record.annotation = Some(annotation);
    record.partial = Some(partial.clone());
    Ok(Stage1Outcome { partial, efov, distortion: fit })
}

/// Replaces the record's annotation (raw image coordinates) and runs
/// stage 1 on it.
pub fn submit_annotation(record: &mut CameraRecord, annotation: AnnotationSet) -> Result<Stage1Outcome, WorkflowError> {
    record.annotation = Some(annotation);
    record.distortion = None;
    record.partial = None;
    run_stage1(record)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementOutcome {
    pub pose: CameraPose,
    pub model: CameraModel,
    /// The field-of-view polygon moved into place.
    pub efov: FloorPolygon,
    pub prism: PrismOverlay,
}

/// Records a placement for a camera that has completed stage 1. The
/// transform is stored at document precision and the outcome computed from
/// the stored value.
pub fn place_camera(record: &mut CameraRecord, t: &PlacementTransform) -> Result<PlacementOutcome, WorkflowError> {
    t.validate()?;
    let t: &PlacementTransform = &canonical::round_trip(t);
    if record.partial.is_none() {
        return Err(WorkflowError::MissingPartial(record.id.clone()));
    }
    let partial = current_partial(record)?;
    let annotation = record.annotation.as_ref().expect("partial implies annotation");
    let pose = apply_placement(&partial, t);
    let model = assemble_full_calibration(&partial, &pose)?;
    let efov = transform_floor_polygon(&project_efov(annotation, &partial)?, t);
    let prism = backproject_prism(&efov, &model, DEFAULT_PRISM_HEIGHT);
    record.partial = Some(partial);
    record.placement = Some(*t);
    Ok(PlacementOutcome { pose, model, efov, prism })
}

/// Models of every fully calibrated camera, keyed by camera id.
pub fn calibrated_models(project: &Project) -> Result<BTreeMap<String, CameraModel>, WorkflowError> {
    let mut out = BTreeMap::new();
    for c in &project.cameras {
        match derive_model(c) {
            Ok(m) => {
                out.insert(c.id.clone(), m);
            }
            Err(DeriveError::Incomplete(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Marker id -> camera id -> projected outline, for cameras where the
/// marker is present.
pub type MarkerOverlays = BTreeMap<String, BTreeMap<String, Vec<PixelPoint>>>;

pub fn marker_overlays(project: &Project) -> Result<MarkerOverlays, WorkflowError> {
    let models = calibrated_models(project)?;
    if models.is_empty() {
        return Err(WorkflowError::NoCalibratedCameras);
    }
    Ok(project
        .markers
        .iter()
        .map(|m| {
            let per_camera = models
                .iter()
                .filter_map(|(id, model)| marker_overlay(m, model).map(|pts| (id.clone(), pts)))
                .collect();
            (m.id.clone(), per_camera)
        })
        .collect())
}

/// Marker id -> outline for one calibrated camera.
pub fn camera_marker_overlays(project: &Project, model: &CameraModel) -> BTreeMap<String, Vec<PixelPoint>> {
    project
        .markers
        .iter()
        .filter_map(|m| marker_overlay(m, model).map(|pts| (m.id.clone(), pts)))
        .collect()
}
