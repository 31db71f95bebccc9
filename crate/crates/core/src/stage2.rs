//! Stage 2: operator placement of the stage-1 floor polygon fixes the
//! remaining pose parameters.
//!
//! A placement is a planar similarity about the partial frame's origin
//! (the camera's floor projection, which stage 1 puts at `(0, 0)`): scale,
//! then rotate, then translate. Scaling by `s` lifts the camera to
//! `DEFAULT_HEIGHT * s`, rotating by `theta` sets its yaw, and the
//! translation is its floor position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{normalize_angle, CameraModel, CameraPose, ModelError, PixelPoint, WorldPoint};
use crate::stage1::{FloorPolygon, PartialCalibration, DEFAULT_HEIGHT};

/// Roll and pitch of a pose must match the partial calibration to this.
pub const ANGLE_MATCH_TOLERANCE: f64 = 1e-12;
/// Prism height used for placement previews, meters.
pub const DEFAULT_PRISM_HEIGHT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Stage2Error {
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("pose inconsistent with partial calibration: {0}")]
    InconsistentPartial(String),
    #[error("invalid marker: {0}")]
    InvalidMarker(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementTransform {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    pub theta: f64,
}

impl PlacementTransform {
    pub const IDENTITY: PlacementTransform = PlacementTransform { dx: 0.0, dy: 0.0, scale: 1.0, theta: 0.0 };

    pub fn new(dx: f64, dy: f64, scale: f64, theta: f64) -> Result<Self, Stage2Error> {
        let t = Self { dx, dy, scale, theta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), Stage2Error> {
        if ![self.dx, self.dy, self.scale, self.theta].iter().all(|v| v.is_finite()) {
            return Err(Stage2Error::InvalidTransform("all fields must be finite".into()));
        }
        if self.scale <= 0.0 {
            return Err(Stage2Error::InvalidTransform(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (
            self.dx + self.scale * (c * x - s * y),
            self.dy + self.scale * (s * x + c * y),
        )
    }

    /// The transform equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &PlacementTransform) -> PlacementTransform {
        let (dx, dy) = next.apply(self.dx, self.dy);
        PlacementTransform {
            dx,
            dy,
            scale: self.scale * next.scale,
            theta: normalize_angle(self.theta + next.theta),
        }
    }

    pub fn inverse(&self) -> PlacementTransform {
        let scale = 1.0 / self.scale;
        let theta = -self.theta;
        let (s, c) = theta.sin_cos();
        PlacementTransform {
            dx: -scale * (c * self.dx - s * self.dy),
            dy: -scale * (s * self.dx + c * self.dy),
            scale,
            theta,
        }
    }

    /// Rotation by `theta` and scale about an arbitrary pivot, expressed
    /// about the origin.
    pub fn about_pivot(pivot: (f64, f64), scale: f64, theta: f64) -> PlacementTransform {
        let to_origin = PlacementTransform { dx: -pivot.0, dy: -pivot.1, scale: 1.0, theta: 0.0 };
        let turn = PlacementTransform { dx: 0.0, dy: 0.0, scale, theta };
        let back = PlacementTransform { dx: pivot.0, dy: pivot.1, scale: 1.0, theta: 0.0 };
        to_origin.then(&turn).then(&back)
    }
}

/// Pose implied by placing the stage-1 polygon with `t`.
pub fn apply_placement(partial: &PartialCalibration, t: &PlacementTransform) -> CameraPose {
    CameraPose {
        x0: t.dx,
        y0: t.dy,
        z0: DEFAULT_HEIGHT * t.scale,
        yaw: normalize_angle(t.theta),
        pitch: partial.pitch,
        roll: partial.roll,
    }
}

/// Inverse of [`apply_placement`].
pub fn placement_from_pose(partial: &PartialCalibration, pose: &CameraPose) -> Result<PlacementTransform, Stage2Error> {
    check_consistent(partial, pose)?;
    PlacementTransform::new(pose.x0, pose.y0, pose.z0 / DEFAULT_HEIGHT, pose.yaw)
}

pub fn transform_floor_polygon(poly: &FloorPolygon, t: &PlacementTransform) -> FloorPolygon {
    FloorPolygon {
        vertices: poly
            .vertices
            .iter()
            .map(|p| {
                let (x, y) = t.apply(p.x, p.y);
                WorldPoint::new(x, y, p.z)
            })
            .collect(),
    }
}

fn check_consistent(partial: &PartialCalibration, pose: &CameraPose) -> Result<(), Stage2Error> {
    let diff = |a: f64, b: f64| normalize_angle(a - b).abs();
    if diff(pose.roll, partial.roll) > ANGLE_MATCH_TOLERANCE {
        return Err(Stage2Error::InconsistentPartial(format!(
            "roll {} differs from {}",
            pose.roll, partial.roll
        )));
    }
    if diff(pose.pitch, partial.pitch) > ANGLE_MATCH_TOLERANCE {
        return Err(Stage2Error::InconsistentPartial(format!(
            "pitch {} differs from {}",
            pose.pitch, partial.pitch
        )));
    }
    Ok(())
}

pub fn assemble_full_calibration(partial: &PartialCalibration, pose: &CameraPose) -> Result<CameraModel, Stage2Error> {
    check_consistent(partial, pose)?;
    Ok(CameraModel::new(*pose, partial.intrinsics())?)
}

/// Image outline of a floor polygon extruded upward. `base[i]` and `top[i]`
/// belong to the same polygon vertex; either is `None` when that point is
/// behind the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrismOverlay {
    pub base: Vec<Option<PixelPoint>>,
    pub top: Vec<Option<PixelPoint>>,
    pub visible: Vec<bool>,
}

pub fn backproject_prism(efov3d: &FloorPolygon, model: &CameraModel, height: f64) -> PrismOverlay {
    let project = |p: WorldPoint| model.project(&p).ok();
    let base: Vec<_> = efov3d.vertices.iter().map(|p| project(*p)).collect();
    let top: Vec<_> = efov3d
        .vertices
        .iter()
        .map(|p| project(WorldPoint::new(p.x, p.y, p.z + height)))
        .collect();
    let visible = base.iter().zip(&top).map(|(b, t)| b.is_some() && t.is_some()).collect();
    PrismOverlay { base, top, visible }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkerShape {
    Point,
    /// Two floor segments of length `size` crossing at the position.
    Cross { size: f64 },
    /// Axis-aligned floor square centered on the position.
    Square { side: f64 },
    /// Segment from the position straight up by the marker height.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualMarker {
    pub id: String,
    pub shape: MarkerShape,
    pub position: WorldPoint,
    #[serde(default)]
    pub height: f64,
}

impl VirtualMarker {
    pub fn validate(&self) -> Result<(), Stage2Error> {
        if self.id.is_empty() {
            return Err(Stage2Error::InvalidMarker("id must not be empty".into()));
        }
        if !self.position.is_finite() {
            return Err(Stage2Error::InvalidMarker("position must be finite".into()));
        }
        let extent = match self.shape {
            MarkerShape::Cross { size } => size,
            MarkerShape::Square { side } => side,
            MarkerShape::Point | MarkerShape::Vertical => 0.0,
        };
        if !(extent >= 0.0 && extent.is_finite()) {
            return Err(Stage2Error::InvalidMarker("size must be finite and non-negative".into()));
        }
        if !(self.height >= 0.0 && self.height.is_finite()) {
            return Err(Stage2Error::InvalidMarker("height must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// World points whose projections draw the marker. Crosses list their
    /// two segments' endpoints in pairs; squares their corners in order.
    pub fn outline(&self) -> Vec<WorldPoint> {
        let WorldPoint { x, y, z } = self.position;
        match self.shape {
            MarkerShape::Point => vec![self.position],
            MarkerShape::Cross { size } => {
                let r = 0.5 * size;
                vec![
                    WorldPoint::new(x - r, y, z),
                    WorldPoint::new(x + r, y, z),
                    WorldPoint::new(x, y - r, z),
                    WorldPoint::new(x, y + r, z),
                ]
            }
            MarkerShape::Square { side } => {
                let r = 0.5 * side;
                vec![
                    WorldPoint::new(x - r, y - r, z),
                    WorldPoint::new(x + r, y - r, z),
                    WorldPoint::new(x + r, y + r, z),
                    WorldPoint::new(x - r, y + r, z),
                ]
            }
            MarkerShape::Vertical => vec![self.position, WorldPoint::new(x, y, z + self.height)],
        }
    }
}

/// Fraction of the image size by which a marker may lie outside the frame
/// and still be reported.
pub const MARKER_FRAME_MARGIN: f64 = 0.5;

/// Marker outline in one camera, or `None` when the marker is absent there:
/// some outline point is behind the camera, or every point falls outside
/// the frame widened by [`MARKER_FRAME_MARGIN`] on each side.
pub fn marker_overlay(marker: &VirtualMarker, model: &CameraModel) -> Option<Vec<PixelPoint>> {
    let points: Vec<PixelPoint> = marker
        .outline()
        .iter()
        .map(|p| model.project(p).ok())
        .collect::<Option<_>>()?;
    let (w, h) = (model.intrinsics.image_width as f64, model.intrinsics.image_height as f64);
    let m = MARKER_FRAME_MARGIN;
    let inside = |q: &PixelPoint| q.u >= -m * w && q.u <= (1.0 + m) * w && q.v >= -m * h && q.v <= (1.0 + m) * h;
    points.iter().any(inside).then_some(points)
}

/// [`marker_overlay`] for every camera, in order.
pub fn project_virtual_marker(marker: &VirtualMarker, models: &[CameraModel]) -> Vec<Option<Vec<PixelPoint>>> {
    models.iter().map(|m| marker_overlay(marker, m)).collect()
}
