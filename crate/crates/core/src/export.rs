//! Calibration exports.

use serde::Serialize;
use serde_json::Value;

use crate::camera::CameraModel;
use crate::canonical;
use crate::project::{CameraRecord, SCHEMA_VERSION};
use crate::project::Project;
use crate::workflow::{calibrated_models, WorkflowError};

/// The seven pinhole parameters. Angles in radians, lengths in meters,
/// focal length in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parameters {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub focal: f64,
}

impl From<&CameraModel> for Parameters {
    fn from(m: &CameraModel) -> Self {
        Self {
            x0: m.pose.x0,
            y0: m.pose.y0,
            z0: m.pose.z0,
            roll: m.pose.roll,
            pitch: m.pose.pitch,
            yaw: m.pose.yaw,
            focal: m.intrinsics.focal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixExport {
    pub id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub parameters: Parameters,
    /// Row-major 3x4 world-to-image homogeneous matrix `K [R | -R C]`.
    pub matrix: [[f64; 4]; 3],
}

pub fn matrix_export(id: &str, m: &CameraModel) -> MatrixExport {
    let p = m.projection_matrix();
    let mut matrix = [[0.0; 4]; 3];
    for (r, row) in matrix.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = p[(r, c)];
        }
    }
    MatrixExport {
        id: id.to_owned(),
        image_width: m.intrinsics.image_width,
        image_height: m.intrinsics.image_height,
        parameters: m.into(),
        matrix,
    }
}

/// Matrices of every calibrated camera. Values are written at full
/// precision so the matrix reproduces projections exactly.
pub fn export_matrices(project: &Project) -> Result<Vec<MatrixExport>, WorkflowError> {
    let models = calibrated_models(project)?;
    if models.is_empty() {
        return Err(WorkflowError::NoCalibratedCameras);
    }
    Ok(models.iter().map(|(id, m)| matrix_export(id, m)).collect())
}

#[derive(Serialize)]
struct CalibrationRecord<'a> {
    id: &'a str,
    image: &'a crate::project::ImageRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    distortion: &'a Option<crate::distortion::DistortionModel>,
    partial: &'a Option<crate::stage1::PartialCalibration>,
    placement: &'a Option<crate::stage2::PlacementTransform>,
}

/// The calibration-bearing subset of the project document: schema version,
/// name, and for each calibrated camera its image reference, distortion,
/// stage-1 result and placement.
pub fn export_document(project: &Project) -> Result<Value, WorkflowError> {
    let models = calibrated_models(project)?;
    if models.is_empty() {
        return Err(WorkflowError::NoCalibratedCameras);
    }
    let cameras: Vec<CalibrationRecord> = project
        .cameras
        .iter()
        .filter(|c| models.contains_key(&c.id))
        .map(|c: &CameraRecord| CalibrationRecord {
            id: &c.id,
            image: &c.image,
            distortion: &c.distortion,
            partial: &c.partial,
            placement: &c.placement,
        })
        .collect();
    Ok(canonical::to_value(&serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "name": project.name,
        "cameras": cameras,
    })))
}
