//! Operator-drawn image primitives for stage 1.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::camera::PixelPoint;
use crate::distortion::{undistort_point, DistortionModel, StraighteningPolyline};
use crate::geometry::is_simple_polygon;
use crate::vanishing::ImageLine;

/// Equal-length segments shorter than this are rejected, pixels.
pub const MIN_SEGMENT_PX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("{0}")]
    DegenerateLines(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl AnnotationError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid { field: field.into(), reason: reason.into() }
    }
}

/// The floor-plane primitives of the two annotation options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "option", rename_all = "snake_case")]
pub enum FloorGeometry {
    /// Floor lines parallel to each other plus one perpendicular pair. Only
    /// line directions matter.
    Option1 {
        parallel_lines: Vec<ImageLine>,
        perpendicular_pair: Vec<ImageLine>,
    },
    /// Floor segments of equal length. Endpoints matter.
    Option2 { equal_segments: Vec<ImageLine> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(flatten)]
    pub floor: FloorGeometry,
    /// Lines that are vertical in the world. Only directions matter.
    pub vertical_lines: Vec<ImageLine>,
    /// Effective field of view, outlined on the floor.
    pub efov_polygon: Vec<PixelPoint>,
    /// Curves that are straight in the scene, used only to fit distortion.
    /// Always kept in raw (distorted) image coordinates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polylines: Vec<StraighteningPolyline>,
}

impl AnnotationSet {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), AnnotationError> {
        let (w, h) = (width as f64, height as f64);
        let in_frame = |p: &PixelPoint| {
            p.is_finite() && p.u >= -0.5 * w && p.u <= 1.5 * w && p.v >= -0.5 * h && p.v <= 1.5 * h
        };
        let check_lines = |field: &str, lines: &[ImageLine]| -> Result<(), AnnotationError> {
            for (i, l) in lines.iter().enumerate() {
                if !in_frame(&l.start) || !in_frame(&l.end) {
                    return Err(AnnotationError::invalid(format!("{field}[{i}]"), "point outside the image margin"));
                }
                if l.validate().is_err() {
                    return Err(AnnotationError::invalid(format!("{field}[{i}]"), "endpoints coincide"));
                }
            }
            Ok(())
        };

        if self.vertical_lines.len() < 2 {
            return Err(AnnotationError::DegenerateLines(
                "at least two vertical lines are required".into(),
            ));
        }
        check_lines("vertical_lines", &self.vertical_lines)?;

        match &self.floor {
            FloorGeometry::Option1 { parallel_lines, perpendicular_pair } => {
                if parallel_lines.len() < 2 {
                    return Err(AnnotationError::invalid("parallel_lines", "at least two lines are required"));
                }
                if perpendicular_pair.len() != 2 {
                    return Err(AnnotationError::invalid("perpendicular_pair", "exactly two lines are required"));
                }
                check_lines("parallel_lines", parallel_lines)?;
                check_lines("perpendicular_pair", perpendicular_pair)?;
            }
            FloorGeometry::Option2 { equal_segments } => {
                if equal_segments.len() < 2 {
                    return Err(AnnotationError::invalid("equal_segments", "at least two segments are required"));
                }
                check_lines("equal_segments", equal_segments)?;
                if let Some(i) = equal_segments.iter().position(|s| s.length() < MIN_SEGMENT_PX) {
                    return Err(AnnotationError::invalid(
                        format!("equal_segments[{i}]"),
                        format!("segment shorter than {MIN_SEGMENT_PX} px"),
                    ));
                }
            }
        }

        if self.efov_polygon.len() < 3 {
            return Err(AnnotationError::invalid("efov_polygon", "at least three vertices are required"));
        }
        if let Some(i) = self.efov_polygon.iter().position(|p| !in_frame(p)) {
            return Err(AnnotationError::invalid(format!("efov_polygon[{i}]"), "point outside the image margin"));
        }
        let pts: Vec<(f64, f64)> = self.efov_polygon.iter().map(|p| (p.u, p.v)).collect();
        if !is_simple_polygon(&pts) {
            return Err(AnnotationError::invalid("efov_polygon", "polygon is not simple"));
        }
        for (i, pl) in self.polylines.iter().enumerate() {
            pl.validate(i)
                .map_err(|e| AnnotationError::invalid(format!("polylines[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Maps every stage-1 primitive through the distortion model. Polylines
    /// are left in raw coordinates.
    pub fn undistorted(&self, d: &DistortionModel, center: &PixelPoint) -> AnnotationSet {
        let pt = |p: &PixelPoint| undistort_point(p, d, center);
        let ln = |l: &ImageLine| ImageLine { start: pt(&l.start), end: pt(&l.end) };
        let lines = |ls: &[ImageLine]| ls.iter().map(ln).collect::<Vec<_>>();
        let floor = match &self.floor {
            FloorGeometry::Option1 { parallel_lines, perpendicular_pair } => FloorGeometry::Option1 {
                parallel_lines: lines(parallel_lines),
                perpendicular_pair: lines(perpendicular_pair),
            },
            FloorGeometry::Option2 { equal_segments } => FloorGeometry::Option2 { equal_segments: lines(equal_segments) },
        };
        AnnotationSet {
            floor,
            vertical_lines: lines(&self.vertical_lines),
            efov_polygon: self.efov_polygon.iter().map(pt).collect(),
            polylines: self.polylines.clone(),
        }
    }

    /// SHA-256 over the canonical serialization, hex encoded. Unchanged by
    /// a save/load cycle of the project document.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(crate::canonical::to_string(self).as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(a: (f64, f64), b: (f64, f64)) -> ImageLine {
        ImageLine { start: PixelPoint::new(a.0, a.1), end: PixelPoint::new(b.0, b.1) }
    }

    fn sample() -> AnnotationSet {
        AnnotationSet {
            floor: FloorGeometry::Option1 {
                parallel_lines: vec![l((100.0, 900.0), (400.0, 600.0)), l((500.0, 1000.0), (800.0, 650.0))],
                perpendicular_pair: vec![l((900.0, 900.0), (1200.0, 700.0)), l((900.0, 900.0), (1300.0, 1000.0))],
            },
            vertical_lines: vec![l((200.0, 300.0), (210.0, 600.0)), l((1700.0, 300.0), (1690.0, 600.0))],
            efov_polygon: vec![
                PixelPoint::new(100.0, 1000.0),
                PixelPoint::new(1800.0, 1000.0),
                PixelPoint::new(1500.0, 500.0),
                PixelPoint::new(400.0, 500.0),
            ],
            polylines: vec![],
        }
    }

    #[test]
    fn valid_sample_passes() {
        sample().validate(1920, 1080).unwrap();
    }

    #[test]
    fn missing_verticals_are_degenerate() {
        let mut a = sample();
        a.vertical_lines.truncate(1);
        assert!(matches!(a.validate(1920, 1080), Err(AnnotationError::DegenerateLines(_))));
    }

    #[test]
    fn self_intersecting_efov_is_rejected() {
        let mut a = sample();
        a.efov_polygon.swap(1, 2);
        assert!(matches!(a.validate(1920, 1080), Err(AnnotationError::Invalid { field, .. }) if field == "efov_polygon"));
    }

    #[test]
    fn points_far_outside_are_rejected() {
        let mut a = sample();
        a.efov_polygon[1].u = 3000.0;
        assert!(a.validate(1920, 1080).is_err());
        a.efov_polygon[1].u = 2800.0;
        assert!(a.validate(1920, 1080).is_ok());
    }

    #[test]
    fn short_equal_segments_are_rejected() {
        let mut a = sample();
        a.floor = FloorGeometry::Option2 {
            equal_segments: vec![l((100.0, 900.0), (400.0, 600.0)), l((500.0, 900.0), (510.0, 900.0))],
        };
        assert!(matches!(a.validate(1920, 1080), Err(AnnotationError::Invalid { field, .. }) if field == "equal_segments[1]"));
    }

    #[test]
    fn perpendicular_pair_needs_two_lines() {
        let mut a = sample();
        if let FloorGeometry::Option1 { perpendicular_pair, .. } = &mut a.floor {
            perpendicular_pair.pop();
        }
        assert!(a.validate(1920, 1080).is_err());
    }

    #[test]
    fn option_tag_serializes_flat() {
        let v = serde_json::to_value(sample()).unwrap();
        assert_eq!(v["option"], "option1");
        assert!(v["parallel_lines"].is_array());
        let back: AnnotationSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn digest_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.digest(), b.digest());
        b.efov_polygon[0].u += 1.0;
        assert_ne!(a.digest(), b.digest());
    }
}
