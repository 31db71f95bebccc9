//! Two-stage calibration of fixed surveillance cameras from operator
//! annotations on single still images.
//!
//! Stage 1 recovers roll from the vanishing point of annotated verticals,
//! then pitch and focal length by minimizing a geometric-consistency
//! criterion with the camera at a default position. Stage 2 turns an
//! operator's move/scale/rotate of the resulting floor polygon into the
//! camera's position, height and yaw.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotation;
pub mod camera;
pub mod canonical;
pub mod distortion;
pub mod export;
pub mod geometry;
pub mod optimize;
pub mod project;
pub mod stage1;
pub mod stage2;
pub mod store;
pub mod synth;
pub mod vanishing;
pub mod verify;
pub mod workflow;
