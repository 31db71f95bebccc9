//! Vanishing point of annotated world-vertical lines, the roll angle it
//! implies, and construction of further vertical lines through image points.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PixelPoint;

/// Minimum endpoint separation of a drawn line, pixels.
pub const MIN_LINE_LENGTH: f64 = 1e-6;
/// Homogeneous `w` below this (after max-normalization) means a point at
/// infinity.
pub const INFINITE_W: f64 = 1e-8;
/// A finite vanishing point this close to the principal point leaves the
/// vertical direction undefined.
pub const AMBIGUOUS_ROLL_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VanishingError {
    #[error("lines are degenerate: {0}")]
    DegenerateLines(&'static str),
    #[error("vanishing point coincides with the principal point; roll is undefined")]
    AmbiguousRoll,
    #[error("point coincides with the vanishing point")]
    CoincidentPoint,
    #[error("line endpoints coincide")]
    ZeroLength,
}

/// A line segment as drawn by the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageLine {
    pub start: PixelPoint,
    pub end: PixelPoint,
}

impl ImageLine {
    pub fn new(start: PixelPoint, end: PixelPoint) -> Result<Self, VanishingError> {
        let line = Self { start, end };
        line.validate()?;
        Ok(line)
    }

    pub fn validate(&self) -> Result<(), VanishingError> {
        if !(self.start.is_finite() && self.end.is_finite()) || self.length() <= MIN_LINE_LENGTH {
            return Err(VanishingError::ZeroLength);
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.start.distance(&self.end)
    }

    pub fn reversed(&self) -> Self {
        Self { start: self.end, end: self.start }
    }

    /// Homogeneous coefficients `(a, b, c)` with `a^2 + b^2 = 1`, so that
    /// `a u + b v + c` is the signed distance of `(u, v)` to the line.
    pub fn coefficients(&self) -> Vector3<f64> {
        line_through(&self.start, &self.end)
    }

    pub fn distance_to(&self, p: &PixelPoint) -> f64 {
        let l = self.coefficients();
        (l.x * p.u + l.y * p.v + l.z).abs()
    }

    /// Unit direction from start to end.
    pub fn direction(&self) -> (f64, f64) {
        let len = self.length();
        ((self.end.u - self.start.u) / len, (self.end.v - self.start.v) / len)
    }
}

fn line_through(a: &PixelPoint, b: &PixelPoint) -> Vector3<f64> {
    let l = Vector3::new(a.u, a.v, 1.0).cross(&Vector3::new(b.u, b.v, 1.0));
    l / l.x.hypot(l.y)
}

/// Homogeneous image point, scaled so its largest component has magnitude 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl VanishingPoint {
    pub fn from_homogeneous(h: Vector3<f64>) -> Option<Self> {
        let m = h.amax();
        if !(m > 0.0) || !m.is_finite() {
            return None;
        }
        let mut h = h / m;
        // Canonical sign: nonnegative w, or for points at infinity a
        // nonnegative leading nonzero coordinate.
        let flip = if h.z.abs() >= INFINITE_W {
            h.z < 0.0
        } else if h.x != 0.0 {
            h.x < 0.0
        } else {
            h.y < 0.0
        };
        if flip {
            h = -h;
        }
        Some(Self { x: h.x, y: h.y, w: h.z })
    }

    pub fn finite(p: PixelPoint) -> Self {
        Self::from_homogeneous(Vector3::new(p.u, p.v, 1.0)).expect("finite point is never the zero triple")
    }

    pub fn at_infinity(du: f64, dv: f64) -> Self {
        Self::from_homogeneous(Vector3::new(du, dv, 0.0)).expect("direction must be nonzero")
    }

    pub fn is_finite(&self) -> bool {
        self.w.abs() >= INFINITE_W
    }

    pub fn to_pixel(&self) -> Option<PixelPoint> {
        self.is_finite().then(|| PixelPoint::new(self.x / self.w, self.y / self.w))
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanishingEstimate {
    pub point: VanishingPoint,
    /// RMS perpendicular distance (pixels) from a finite vanishing point to
    /// the lines; for a point at infinity, RMS sine of the angle between each
    /// line and the common direction.
    pub residual: f64,
}

/// Least-squares intersection of the lines: the direction minimizing the
/// summed squared algebraic distances, computed in similarity-normalized
/// coordinates.
pub fn estimate_vanishing_point(lines: &[ImageLine]) -> Result<VanishingEstimate, VanishingError> {
    if lines.len() < 2 {
        return Err(VanishingError::DegenerateLines("at least two lines are required"));
    }
    for l in lines {
        l.validate().map_err(|_| VanishingError::DegenerateLines("a line has coincident endpoints"))?;
    }
    let first = &lines[0];
    let all_identical = lines[1..]
        .iter()
        .all(|l| first.distance_to(&l.start) < MIN_LINE_LENGTH && first.distance_to(&l.end) < MIN_LINE_LENGTH);
    if all_identical {
        return Err(VanishingError::DegenerateLines("all lines coincide"));
    }

    let n = (2 * lines.len()) as f64;
    let (su, sv) = lines
        .iter()
        .fold((0.0, 0.0), |(a, b), l| (a + l.start.u + l.end.u, b + l.start.v + l.end.v));
    let (mu, mv) = (su / n, sv / n);
    let spread = lines
        .iter()
        .map(|l| l.start.distance(&PixelPoint::new(mu, mv)) + l.end.distance(&PixelPoint::new(mu, mv)))
        .sum::<f64>()
        / n;
    let scale = spread / std::f64::consts::SQRT_2;
    let norm = |p: &PixelPoint| PixelPoint::new((p.u - mu) / scale, (p.v - mv) / scale);

    let mut scatter = Matrix3::zeros();
    for l in lines {
        let c = line_through(&norm(&l.start), &norm(&l.end));
        scatter += c * c.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("3x3 matrix has eigenvalues");
    let v = eig.eigenvectors.column(imin).into_owned();
    let h = Vector3::new(scale * v.x + mu * v.z, scale * v.y + mv * v.z, v.z);
    let point = VanishingPoint::from_homogeneous(h).ok_or(VanishingError::DegenerateLines("no intersection"))?;

    let residual = match point.to_pixel() {
        Some(p) => rms(lines.iter().map(|l| l.distance_to(&p))),
        None => {
            let d = point.x.hypot(point.y);
            let (du, dv) = (point.x / d, point.y / d);
            rms(lines.iter().map(|l| {
                let c = l.coefficients();
                c.x * du + c.y * dv
            }))
        }
    };
    Ok(VanishingEstimate { point, residual })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
    (sum / count as f64).sqrt()
}

/// Signed angle from the image-down axis to the direction of the vertical
/// vanishing point as seen from the principal point.
///
/// Lines carry no orientation, so the direction is only known up to a half
/// turn; the smaller-magnitude solution in `(-pi/2, pi/2]` is returned
/// (mounted cameras are nearly level about the optical axis).
pub fn roll_from_vertical_vp(vp: &VanishingPoint, center: &PixelPoint) -> Result<f64, VanishingError> {
    let (du, dv) = match vp.to_pixel() {
        Some(p) => {
            if p.distance(center) < AMBIGUOUS_ROLL_RADIUS {
                return Err(VanishingError::AmbiguousRoll);
            }
            (p.u - center.u, p.v - center.v)
        }
        None => (vp.x, vp.y),
    };
    let mut roll = du.atan2(dv);
    if roll > std::f64::consts::FRAC_PI_2 {
        roll -= std::f64::consts::PI;
    } else if roll <= -std::f64::consts::FRAC_PI_2 {
        roll += std::f64::consts::PI;
    }
    Ok(roll)
}

/// Image line through `p` and the vertical vanishing point: the image of the
/// world vertical standing on whatever floor point `p` depicts.
pub fn vertical_line_through(p: &PixelPoint, vp: &VanishingPoint) -> Result<ImageLine, VanishingError> {
    match vp.to_pixel() {
        Some(v) => {
            if p.distance(&v) < MIN_LINE_LENGTH {
                return Err(VanishingError::CoincidentPoint);
            }
            ImageLine::new(*p, v)
        }
        None => {
            let d = vp.x.hypot(vp.y);
            let (du, dv) = (vp.x / d, vp.y / d);
            ImageLine::new(*p, PixelPoint::new(p.u + 100.0 * du, p.v + 100.0 * dv))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: (f64, f64), b: (f64, f64)) -> ImageLine {
        ImageLine::new(PixelPoint::new(a.0, a.1), PixelPoint::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn two_lines_intersect_exactly() {
        let est = estimate_vanishing_point(&[line((0.0, 0.0), (50.0, 100.0)), line((300.0, 0.0), (250.0, 100.0))]).unwrap();
        let p = est.point.to_pixel().unwrap();
        assert!((p.u - 150.0).abs() < 1e-9 && (p.v - 300.0).abs() < 1e-9, "{p:?}");
        assert!(est.residual < 1e-9);

        let est = estimate_vanishing_point(&[line((0.0, 100.0), (100.0, 200.0)), line((100.0, 300.0), (100.0, 250.0))]).unwrap();
        let p = est.point.to_pixel().unwrap();
        assert!((p.u - 100.0).abs() < 1e-9 && (p.v - 200.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn parallel_lines_meet_at_infinity() {
        let est = estimate_vanishing_point(&[line((0.0, 0.0), (30.0, 40.0)), line((100.0, 0.0), (130.0, 40.0))]).unwrap();
        assert!(!est.point.is_finite());
        let d = est.point.x.hypot(est.point.y);
        assert!((est.point.x / d - 0.6).abs() < 1e-12 && (est.point.y / d - 0.8).abs() < 1e-12);
        assert!(est.residual < 1e-12);
    }

    #[test]
    fn identical_lines_are_degenerate() {
        let l = line((0.0, 0.0), (30.0, 40.0));
        assert!(matches!(
            estimate_vanishing_point(&[l, l.reversed(), line((60.0, 80.0), (90.0, 120.0))]),
            Err(VanishingError::DegenerateLines(_))
        ));
        assert!(matches!(estimate_vanishing_point(&[l]), Err(VanishingError::DegenerateLines(_))));
    }

    #[test]
    fn roll_is_zero_below_principal_point() {
        let c = PixelPoint::new(960.0, 540.0);
        let vp = VanishingPoint::finite(PixelPoint::new(960.0, 4000.0));
        assert_eq!(roll_from_vertical_vp(&vp, &c).unwrap(), 0.0);
        // Above the principal point (camera looking up) folds onto the same roll.
        let vp = VanishingPoint::finite(PixelPoint::new(960.0, -4000.0));
        assert_eq!(roll_from_vertical_vp(&vp, &c).unwrap(), 0.0);
    }

    #[test]
    fn roll_from_direction_at_infinity() {
        let c = PixelPoint::new(960.0, 540.0);
        let vp = VanishingPoint::at_infinity(0.1f64.sin(), 0.1f64.cos());
        assert!((roll_from_vertical_vp(&vp, &c).unwrap() - 0.1).abs() < 1e-12);
        let vp = VanishingPoint::at_infinity(-0.1f64.sin(), -0.1f64.cos());
        assert!((roll_from_vertical_vp(&vp, &c).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn roll_at_principal_point_is_ambiguous() {
        let c = PixelPoint::new(960.0, 540.0);
        let vp = VanishingPoint::finite(PixelPoint::new(960.5, 540.2));
        assert_eq!(roll_from_vertical_vp(&vp, &c), Err(VanishingError::AmbiguousRoll));
    }

    #[test]
    fn vertical_through_finite_vp_joins_points() {
        let vp = VanishingPoint::finite(PixelPoint::new(500.0, 3000.0));
        let p = PixelPoint::new(400.0, 3000.0);
        let l = vertical_line_through(&p, &vp).unwrap();
        assert!(l.distance_to(&p) < 1e-9);
        assert!(l.distance_to(&PixelPoint::new(500.0, 3000.0)) < 1e-9);
        assert_eq!(vertical_line_through(&PixelPoint::new(500.0, 3000.0), &vp), Err(VanishingError::CoincidentPoint));
    }

    #[test]
    fn vertical_through_infinite_vp_is_parallel() {
        let vp = VanishingPoint::at_infinity(0.0, 1.0);
        let l = vertical_line_through(&PixelPoint::new(10.0, 20.0), &vp).unwrap();
        let (du, dv) = l.direction();
        assert!(du.abs() < 1e-12 && (dv - 1.0).abs() < 1e-12);
    }
}
