//! Pinhole camera model and the two projection functions linking the image
//! pixel frame with the shared world frame.
//!
//! Conventions:
//!
//! * World frame: right-handed, `z` up, floor plane at `z = 0`, meters.
//! * Pixel frame: `u` to the right, `v` downward, origin at the top-left
//!   corner of the image.
//! * Camera frame: `x'` right, `y'` down, `z'` forward along the optical axis.
//!   With `yaw = pitch = roll = 0` the camera looks along world `+x`, and the
//!   image-down direction points toward world `-z`.
//! * `yaw` turns the heading counter-clockwise about world `z` (from `+x`
//!   toward `+y`), `pitch` tilts the optical axis (negative looks down),
//!   `roll` turns the image about the optical axis. Positive roll moves the
//!   vanishing point of world verticals toward `+u` when the camera looks
//!   down.
//! * Principal point at the image center, square pixels, zero skew.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points whose camera-frame depth is at or below this value have no
/// valid projection.
pub const DEPTH_EPSILON: f64 = 1e-9;

/// Rays whose vertical direction component is below this magnitude are
/// treated as parallel to a horizontal plane.
const PARALLEL_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn floor(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("camera mount height must be positive and finite")]
    InvalidHeight,
    #[error("camera angles must be finite")]
    InvalidAngle,
    #[error("camera position must be finite")]
    InvalidPosition,
    #[error("focal length must be positive and finite")]
    InvalidFocal,
    #[error("image dimensions must be positive")]
    InvalidDimensions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("point lies at or behind the projection center")]
    BehindCamera,
    #[error("ray does not meet the plane in front of the camera")]
    NoIntersection,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Camera position and orientation in the world frame. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl CameraPose {
    /// Validates and normalizes all angles into `(-pi, pi]`.
    pub fn new(x0: f64, y0: f64, z0: f64, yaw: f64, pitch: f64, roll: f64) -> Result<Self, ModelError> {
        let pose = Self { x0, y0, z0, yaw, pitch, roll };
        pose.validate()?;
        Ok(Self {
            yaw: normalize_angle(yaw),
            pitch: normalize_angle(pitch),
            roll: normalize_angle(roll),
            ..pose
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.x0.is_finite() && self.y0.is_finite()) {
            return Err(ModelError::InvalidPosition);
        }
        if !(self.z0.is_finite() && self.z0 > 0.0) {
            return Err(ModelError::InvalidHeight);
        }
        if !(self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()) {
            return Err(ModelError::InvalidAngle);
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.x0, self.y0, self.z0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(focal: f64, image_width: u32, image_height: u32) -> Result<Self, ModelError> {
        let intrinsics = Self { focal, image_width, image_height };
        intrinsics.validate()?;
        Ok(intrinsics)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(ModelError::InvalidFocal);
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(ModelError::InvalidDimensions);
        }
        Ok(())
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.image_width as f64 / 2.0, self.image_height as f64 / 2.0)
    }

    /// Upper-triangular calibration matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        let c = self.principal_point();
        Matrix3::new(self.focal, 0.0, c.u, 0.0, self.focal, c.v, 0.0, 0.0, 1.0)
    }
}

/// World-to-camera rotation for the given angles.
///
/// The heading rotation about world `z` is undone first, the heading frame
/// (forward, left, up) is then relabeled into camera axes (right, down,
/// forward), after which pitch tilts about the camera `x'` axis and roll turns
/// about the optical axis.
pub fn compose_rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    roll_matrix(roll) * pitch_matrix(pitch) * heading_to_camera() * yaw_matrix(yaw)
}

/// Undoes a heading of `yaw` about world `z`.
fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Forward/left/up heading axes expressed as camera right/down/forward.
fn heading_to_camera() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

fn pitch_matrix(pitch: f64) -> Matrix3<f64> {
    let (s, c) = pitch.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

fn roll_matrix(roll: f64) -> Matrix3<f64> {
    let (s, c) = roll.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// The seven pinhole parameters plus the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

impl CameraModel {
    pub fn new(pose: CameraPose, intrinsics: CameraIntrinsics) -> Result<Self, ModelError> {
        pose.validate()?;
        intrinsics.validate()?;
        Ok(Self { pose, intrinsics })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.pose.validate()?;
        self.intrinsics.validate()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        compose_rotation(self.pose.yaw, self.pose.pitch, self.pose.roll)
    }

    pub fn principal_point(&self) -> PixelPoint {
        self.intrinsics.principal_point()
    }

    /// Expresses a world point in the camera frame.
    pub fn world_to_camera(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation() * (p.to_vector() - self.pose.center())
    }

    /// World-frame direction of the ray through a pixel (not normalized).
    pub fn ray_direction(&self, q: &PixelPoint) -> Vector3<f64> {
        self.rotation().transpose() * self.camera_ray(q)
    }

    /// Camera-frame direction of the ray through a pixel, with unit depth.
    pub fn camera_ray(&self, q: &PixelPoint) -> Vector3<f64> {
        let c = self.principal_point();
        let f = self.intrinsics.focal;
        Vector3::new((q.u - c.u) / f, (q.v - c.v) / f, 1.0)
    }

    /// The 3x4 homogeneous world-to-image matrix `K [R | -R C]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let r = self.rotation();
        let t = -(r * self.pose.center());
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        self.intrinsics.matrix() * rt
    }

    /// Projects a world point onto the image.
    pub fn project(&self, p: &WorldPoint) -> Result<PixelPoint, ProjectionError> {
        project_world_to_pixel(p, self)
    }

    /// Intersects the ray through `q` with the horizontal plane `z = h`.
    pub fn unproject(&self, q: &PixelPoint, h: f64) -> Result<WorldPoint, ProjectionError> {
        project_pixel_to_world(q, h, self)
    }
}

pub fn project_world_to_pixel(p: &WorldPoint, m: &CameraModel) -> Result<PixelPoint, ProjectionError> {
    let pc = m.world_to_camera(p);
    if !(pc.z > DEPTH_EPSILON) {
        return Err(ProjectionError::BehindCamera);
    }
    let c = m.principal_point();
    let f = m.intrinsics.focal;
    Ok(PixelPoint::new(c.u + f * pc.x / pc.z, c.v + f * pc.y / pc.z))
}

pub fn project_pixel_to_world(q: &PixelPoint, h: f64, m: &CameraModel) -> Result<WorldPoint, ProjectionError> {
    let dir = m.ray_direction(q);
    if dir.z.abs() < PARALLEL_EPSILON {
        return Err(ProjectionError::NoIntersection);
    }
    // The camera-frame ray has unit depth, so `t` is the depth of the hit.
    let t = (h - m.pose.z0) / dir.z;
    if !(t > DEPTH_EPSILON) {
        return Err(ProjectionError::NoIntersection);
    }
    let hit = m.pose.center() + dir * t;
    Ok(WorldPoint::new(hit.x, hit.y, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn nadir_camera() -> CameraModel {
        CameraModel::new(
            CameraPose::new(0.0, 0.0, 3.0, 0.0, -FRAC_PI_2, 0.0).unwrap(),
            CameraIntrinsics::new(1000.0, 1920, 1080).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_angles_give_identity_heading() {
        let r = compose_rotation(0.0, 0.0, 0.0);
        // Camera forward is world +x, right is world -y, down is world -z.
        assert_eq!(r.transpose() * Vector3::z(), Vector3::x());
        assert_eq!(r.transpose() * Vector3::x(), -Vector3::y());
        assert_eq!(r.transpose() * Vector3::y(), -Vector3::z());
    }

    #[test]
    fn quarter_yaw_turns_heading_toward_plus_y() {
        let r = compose_rotation(FRAC_PI_2, 0.0, 0.0);
        let forward = r.transpose() * Vector3::z();
        assert!((forward - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn nadir_point_maps_to_principal_point() {
        let m = nadir_camera();
        let q = m.project(&WorldPoint::floor(0.0, 0.0)).unwrap();
        assert!((q.u - 960.0).abs() < 1e-9 && (q.v - 540.0).abs() < 1e-9);
        let back = m.unproject(&PixelPoint::new(960.0, 540.0), 0.0).unwrap();
        assert!(back.distance(&WorldPoint::floor(0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn axis_point_maps_to_principal_point() {
        let m = CameraModel::new(
            CameraPose::new(1.0, 2.0, 3.0, 0.7, -0.4, 0.2).unwrap(),
            CameraIntrinsics::new(777.0, 640, 480).unwrap(),
        )
        .unwrap();
        let forward = m.rotation().transpose() * Vector3::z();
        let p = WorldPoint::from_vector(&(m.pose.center() + forward * 5.0));
        let q = m.project(&p).unwrap();
        assert!((q.u - 320.0).abs() < 1e-9 && (q.v - 240.0).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let m = nadir_camera();
        assert_eq!(m.project(&WorldPoint::new(0.0, 0.0, 4.0)), Err(ProjectionError::BehindCamera));
        assert_eq!(m.project(&WorldPoint::new(0.0, 0.0, 3.0)), Err(ProjectionError::BehindCamera));
    }

    #[test]
    fn horizon_row_has_no_floor_intersection() {
        let m = CameraModel::new(
            CameraPose::new(0.0, 0.0, 3.0, 0.0, 0.0, 0.0).unwrap(),
            CameraIntrinsics::new(1000.0, 1920, 1080).unwrap(),
        )
        .unwrap();
        assert_eq!(m.unproject(&PixelPoint::new(100.0, 540.0), 0.0), Err(ProjectionError::NoIntersection));
        // Above the horizon the ray meets the floor only behind the camera.
        assert_eq!(m.unproject(&PixelPoint::new(100.0, 200.0), 0.0), Err(ProjectionError::NoIntersection));
        assert!(m.unproject(&PixelPoint::new(100.0, 900.0), 0.0).is_ok());
    }

    #[test]
    fn angles_are_normalized() {
        let pose = CameraPose::new(0.0, 0.0, 1.0, 3.0 * PI, -PI, 7.0).unwrap();
        assert!((pose.yaw - PI).abs() < 1e-12);
        assert!((pose.pitch - PI).abs() < 1e-12);
        assert!((pose.roll - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert_eq!(CameraPose::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), Err(ModelError::InvalidHeight));
        assert_eq!(CameraPose::new(f64::NAN, 0.0, 1.0, 0.0, 0.0, 0.0), Err(ModelError::InvalidPosition));
        assert_eq!(CameraIntrinsics::new(-1.0, 10, 10), Err(ModelError::InvalidFocal));
        assert_eq!(CameraIntrinsics::new(1.0, 0, 10), Err(ModelError::InvalidDimensions));
    }

    #[test]
    fn projection_matrix_matches_projection() {
        let m = CameraModel::new(
            CameraPose::new(-2.0, 5.0, 4.0, 2.1, -0.5, -0.1).unwrap(),
            CameraIntrinsics::new(1500.0, 1280, 720).unwrap(),
        )
        .unwrap();
        let p = WorldPoint::floor(-2.0 + 6.0 * 2.1f64.cos(), 5.0 + 6.0 * 2.1f64.sin());
        let q = m.project(&p).unwrap();
        let h = m.projection_matrix() * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        assert!((h.x / h.z - q.u).abs() < 1e-9);
        assert!((h.y / h.z - q.v).abs() < 1e-9);
    }
}
