//! Radial distortion removal fitted from operator polylines that trace
//! curves which are straight in the undistorted image.
//!
//! Only annotated coordinates are ever mapped; images are not resampled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PixelPoint;
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Restart threshold on the RMS straightness residual, in pixels.
const RESTART_RESIDUAL_PX: f64 = 2.0;
const MONOTONE_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistortionError {
    #[error("at least one polyline with three or more points is required")]
    InsufficientData,
    #[error("distortion fit did not converge (residual {residual:.3} px)")]
    NonConvergence { residual: f64 },
    #[error("polyline {index} is invalid: {reason}")]
    InvalidPolyline { index: usize, reason: &'static str },
    #[error("distortion model is not monotone over the image")]
    NotMonotone,
    #[error("distortion coefficients must be finite")]
    NonFinite,
}

/// Two-term radial model `q' = c + (q - c)(1 + k1 r^2 + k2 r^4)` mapping
/// distorted annotation coordinates to undistorted ones. `r` is the distance
/// to the center divided by `norm_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    pub k1: f64,
    pub k2: f64,
    /// Half the image diagonal, pixels.
    pub norm_radius: f64,
    /// Largest normalized radius over which the model is required to be
    /// monotone. `1.0` covers the whole image.
    #[serde(default = "full_domain")]
    pub domain_radius: f64,
}

fn full_domain() -> f64 {
    1.0
}

impl DistortionModel {
    pub fn new(k1: f64, k2: f64, width: u32, height: u32) -> Self {
        Self {
            k1,
            k2,
            norm_radius: half_diagonal(width, height),
            domain_radius: 1.0,
        }
    }

    pub fn identity(width: u32, height: u32) -> Self {
        Self::new(0.0, 0.0, width, height)
    }

    /// Radial gain at normalized radius `r`.
    pub fn gain(&self, r: f64) -> f64 {
        let r2 = r * r;
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// True when the undistorted radius `r * gain(r)` is increasing on
    /// `[0, max_radius]`.
    pub fn is_monotone_up_to(&self, max_radius: f64) -> bool {
        (0..=MONOTONE_SAMPLES).all(|i| {
            let r = max_radius * i as f64 / MONOTONE_SAMPLES as f64;
            let r2 = r * r;
            1.0 + 3.0 * self.k1 * r2 + 5.0 * self.k2 * r2 * r2 > 0.0
        })
    }

    pub fn validate(&self) -> Result<(), DistortionError> {
        if !(self.k1.is_finite() && self.k2.is_finite() && self.norm_radius > 0.0 && self.domain_radius > 0.0) {
            return Err(DistortionError::NonFinite);
        }
        if !self.is_monotone_up_to(self.domain_radius) {
            return Err(DistortionError::NotMonotone);
        }
        Ok(())
    }
}

pub fn half_diagonal(width: u32, height: u32) -> f64 {
    (width as f64).hypot(height as f64) / 2.0
}

pub fn image_center(width: u32, height: u32) -> PixelPoint {
    PixelPoint::new(width as f64 / 2.0, height as f64 / 2.0)
}

pub fn undistort_point(q: &PixelPoint, d: &DistortionModel, center: &PixelPoint) -> PixelPoint {
    let du = q.u - center.u;
    let dv = q.v - center.v;
    let r = du.hypot(dv) / d.norm_radius;
    let g = d.gain(r);
    PixelPoint::new(center.u + du * g, center.v + dv * g)
}

/// An operator-traced curve that should be straight once undistorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StraighteningPolyline {
    pub points: Vec<PixelPoint>,
}

impl StraighteningPolyline {
    pub fn new(points: Vec<PixelPoint>) -> Self {
        Self { points }
    }

    /// Checks point count and that consecutive points differ.
    pub fn validate(&self, index: usize) -> Result<(), DistortionError> {
        if self.points.len() < 3 {
            return Err(DistortionError::InvalidPolyline { index, reason: "fewer than 3 points" });
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(DistortionError::InvalidPolyline { index, reason: "non-finite point" });
        }
        if self.points.windows(2).any(|w| w[0].distance(&w[1]) == 0.0) {
            return Err(DistortionError::InvalidPolyline { index, reason: "repeated consecutive point" });
        }
        Ok(())
    }
}

/// Mean squared perpendicular distance of `points` to their total
/// least-squares line.
pub fn line_fit_mse(points: &[PixelPoint]) -> f64 {
    let n = points.len() as f64;
    let (su, sv) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.u, b + p.v));
    let (mu, mv) = (su / n, sv / n);
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for p in points {
        let (du, dv) = (p.u - mu, p.v - mv);
        suu += du * du;
        svv += dv * dv;
        suv += du * dv;
    }
    // Smallest eigenvalue of the 2x2 scatter matrix.
    let half_trace = 0.5 * (suu + svv);
    let disc = (0.25 * (suu - svv).powi(2) + suv * suv).sqrt();
    ((half_trace - disc) / n).max(0.0)
}

/// Straightness objective: sum over polylines of the mean squared
/// perpendicular distance of the undistorted points to their best-fit line.
pub fn straightness(polylines: &[&StraighteningPolyline], d: &DistortionModel, center: &PixelPoint) -> f64 {
    polylines
        .iter()
        .map(|pl| {
            let pts: Vec<PixelPoint> = pl.points.iter().map(|q| undistort_point(q, d, center)).collect();
            line_fit_mse(&pts)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionFit {
    pub model: DistortionModel,
    /// RMS perpendicular distance to the fitted lines, pixels.
    pub residual: f64,
}

pub fn fit_distortion(
    polylines: &[StraighteningPolyline],
    width: u32,
    height: u32,
) -> Result<DistortionFit, DistortionError> {
    let usable: Vec<&StraighteningPolyline> = polylines.iter().filter(|p| p.points.len() >= 3).collect();
    if usable.is_empty() {
        return Err(DistortionError::InsufficientData);
    }
    for (i, pl) in polylines.iter().enumerate() {
        if pl.points.len() >= 3 {
            pl.validate(i)?;
        }
    }

    let center = image_center(width, height);
    let base = DistortionModel::identity(width, height);
    let domain = usable
        .iter()
        .flat_map(|pl| pl.points.iter())
        .map(|q| q.distance(&center) / base.norm_radius)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let with = |k: &[f64]| DistortionModel {
        k1: k[0],
        k2: k[1],
        domain_radius: domain,
        ..base
    };
    let objective = |k: &[f64]| {
        let m = with(k);
        if !m.is_monotone_up_to(domain) {
            return f64::INFINITY;
        }
        straightness(&usable, &m, &center)
    };
    let rms = |value: f64| (value / usable.len() as f64).sqrt();

    let opts = NelderMeadOptions {
        max_evaluations: 4000,
        f_tolerance: 1e-18,
        x_tolerance: 1e-10,
        initial_step: vec![0.05, 0.02],
    };
    let mut best = nelder_mead(objective, &[0.0, 0.0], None, &opts);
    if rms(best.value) > RESTART_RESIDUAL_PX {
        let perturbed = NelderMeadOptions {
            initial_step: vec![-0.2, -0.05],
            ..opts.clone()
        };
        let retry = nelder_mead(objective, &best.x, None, &perturbed);
        if retry.value <= best.value {
            best = retry;
        }
    }
    // Polish from the incumbent with a small simplex.
    let polish = NelderMeadOptions {
        initial_step: vec![1e-3, 1e-3],
        ..opts.clone()
    };
    let polished = nelder_mead(objective, &best.x, None, &polish);
    let converged = best.converged || polished.converged;
    if polished.value <= best.value {
        best = polished;
    }

    let residual = rms(best.value);
    if !converged && residual > RESTART_RESIDUAL_PX {
        return Err(DistortionError::NonConvergence { residual });
    }
    Ok(DistortionFit { model: with(&best.x), residual })
}
