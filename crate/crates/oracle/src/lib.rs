//! Reference geometry for tests, written without the calibration library.
//!
//! The camera is described by the world directions of its image axes,
//! built from heading and tilt by hand, and points are projected through an
//! explicit `K [R | -R C]` product. Scenes are rendered from known world
//! primitives. Nothing here shares code with the library under test.

use std::f64::consts::PI;

use rand::Rng;

pub type Vec3 = [f64; 3];
pub type Px = [f64; 2];
/// Image segment, start and end.
pub type Seg = [Px; 2];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn comb(a: Vec3, s: f64, b: Vec3, t: f64) -> Vec3 {
    [s * a[0] + t * b[0], s * a[1] + t * b[1], s * a[2] + t * b[2]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCamera {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl OracleCamera {
    /// World directions of the image right, image down and viewing axes.
    ///
    /// Heading `yaw` is measured from +x toward +y, negative `pitch` tilts
    /// the view below the horizon and `roll` turns the image axes about the
    /// viewing direction (right toward down).
    pub fn axes(&self) -> [Vec3; 3] {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        let forward = [cp * cy, cp * sy, sp];
        let right = [sy, -cy, 0.0];
        let down = cross(forward, right);
        [comb(right, cr, down, sr), comb(right, -sr, down, cr), forward]
    }

    pub fn center(&self) -> Vec3 {
        [self.x0, self.y0, self.z0]
    }

    pub fn principal_point(&self) -> Px {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }

    /// Row-major `K [R | -R C]`.
    pub fn matrix(&self) -> [[f64; 4]; 3] {
        let r = self.axes();
        let c = self.center();
        let [cu, cv] = self.principal_point();
        let k = [[self.focal, 0.0, cu], [0.0, self.focal, cv], [0.0, 0.0, 1.0]];
        let mut rt = [[0.0; 4]; 3];
        for i in 0..3 {
            rt[i][..3].copy_from_slice(&r[i]);
            rt[i][3] = -dot(r[i], c);
        }
        let mut p = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..4 {
                p[i][j] = (0..3).map(|l| k[i][l] * rt[l][j]).sum();
            }
        }
        p
    }

    /// Pixel of a world point, `None` when its depth is not positive.
    pub fn project(&self, p: Vec3) -> Option<Px> {
        let m = self.matrix();
        let h: Vec<f64> = m.iter().map(|row| row[0] * p[0] + row[1] * p[1] + row[2] * p[2] + row[3]).collect();
        (h[2] > 1e-9).then(|| [h[0] / h[2], h[1] / h[2]])
    }

    /// World direction of the ray through a pixel.
    pub fn ray(&self, q: Px) -> Vec3 {
        let [r, d, f] = self.axes();
        let [cu, cv] = self.principal_point();
        let a = (q[0] - cu) / self.focal;
        let b = (q[1] - cv) / self.focal;
        [r[0] * a + d[0] * b + f[0], r[1] * a + d[1] * b + f[1], r[2] * a + d[2] * b + f[2]]
    }

    /// Point where the ray through `q` meets the plane `z = h`, in front of
    /// the camera.
    pub fn hit(&self, q: Px, h: f64) -> Option<Vec3> {
        let d = self.ray(q);
        if d[2].abs() < 1e-12 {
            return None;
        }
        let t = (h - self.z0) / d[2];
        (t > 1e-9).then(|| [self.x0 + t * d[0], self.y0 + t * d[1], self.z0 + t * d[2]])
    }

    pub fn in_frame(&self, q: Px) -> bool {
        q[0] >= 0.0 && q[0] <= self.width as f64 && q[1] >= 0.0 && q[1] <= self.height as f64
    }

    fn ground_range(&self, p: Vec3) -> f64 {
        (p[0] - self.x0).hypot(p[1] - self.y0)
    }
}

/// Sampling ranges for [`random_camera`].
#[derive(Debug, Clone)]
pub struct Ranges {
    pub pitch: (f64, f64),
    pub focal_ratio: (f64, f64),
    pub roll: (f64, f64),
    pub height: (f64, f64),
    pub position: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Ranges { pitch: (-1.2, -0.2), focal_ratio: (0.5, 3.0), roll: (-0.4, 0.4), height: (2.0, 8.0), position: (-20.0, 20.0) }
    }
}

pub fn random_camera<R: Rng>(rng: &mut R, width: u32, height: u32, r: &Ranges) -> OracleCamera {
    OracleCamera {
        x0: rng.random_range(r.position.0..=r.position.1),
        y0: rng.random_range(r.position.0..=r.position.1),
        z0: rng.random_range(r.height.0..=r.height.1),
        yaw: rng.random_range(-PI..PI),
        pitch: rng.random_range(r.pitch.0..=r.pitch.1),
        roll: rng.random_range(r.roll.0..=r.roll.1),
        focal: rng.random_range(r.focal_ratio.0..=r.focal_ratio.1) * width as f64,
        width,
        height,
    }
}

const TRIES: usize = 4000;
const RANGE: f64 = 35.0;

/// A rendered scene: known floor and vertical primitives seen by a camera.
#[derive(Debug, Clone)]
pub struct Scene {
    pub camera: OracleCamera,
    pub verticals: Vec<Seg>,
    pub parallel: Vec<Seg>,
    pub perpendicular: Vec<Seg>,
    pub equal: Vec<Seg>,
    /// Image outline of `footprint`.
    pub efov: Vec<Px>,
    /// Floor quadrilateral, meters.
    pub footprint: Vec<[f64; 2]>,
}

fn floor_point<R: Rng>(rng: &mut R, cam: &OracleCamera) -> Option<Vec3> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    (0..TRIES).find_map(|_| {
        let q = [rng.random_range(0.08 * w..0.92 * w), rng.random_range(0.25 * h..0.95 * h)];
        cam.hit(q, 0.0).filter(|p| cam.ground_range(*p) < RANGE)
    })
}

fn image_segment(cam: &OracleCamera, a: Vec3, b: Vec3, min_px: f64) -> Option<Seg> {
    let (qa, qb) = (cam.project(a)?, cam.project(b)?);
    let long = (qa[0] - qb[0]).hypot(qa[1] - qb[1]) >= min_px;
    (cam.in_frame(qa) && cam.in_frame(qb) && long).then_some([qa, qb])
}

fn floor_segment<R: Rng>(rng: &mut R, cam: &OracleCamera, heading: f64, length: Option<f64>) -> Option<Seg> {
    let (s, c) = heading.sin_cos();
    (0..TRIES).find_map(|_| {
        let m = floor_point(rng, cam)?;
        let len = length.unwrap_or_else(|| rng.random_range(0.5..3.0) * cam.z0);
        let a = [m[0] - 0.5 * len * c, m[1] - 0.5 * len * s, 0.0];
        let b = [m[0] + 0.5 * len * c, m[1] + 0.5 * len * s, 0.0];
        image_segment(cam, a, b, 40.0)
    })
}

fn vertical<R: Rng>(rng: &mut R, cam: &OracleCamera) -> Option<Seg> {
    (0..TRIES).find_map(|_| {
        let p = floor_point(rng, cam)?;
        let top = [p[0], p[1], rng.random_range(0.3..0.9) * cam.z0.min(2.5)];
        image_segment(cam, p, top, 40.0)
    })
}

/// A floor heading turned 20 to 70 degrees away from the viewing heading,
/// so its image vanishing point is finite and off the central column.
fn oblique<R: Rng>(rng: &mut R, cam: &OracleCamera) -> f64 {
    let turn = rng.random_range(0.35..1.2);
    cam.yaw + if rng.random_bool(0.5) { turn } else { -turn }
}

fn footprint(cam: &OracleCamera) -> Option<(Vec<Px>, Vec<[f64; 2]>)> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut top = 0.3;
    while top < 0.85 {
        let quad = [[0.1 * w, 0.92 * h], [0.9 * w, 0.92 * h], [0.7 * w, top * h], [0.3 * w, top * h]];
        let floor: Option<Vec<Vec3>> = quad.iter().map(|q| cam.hit(*q, 0.0)).collect();
        if let Some(floor) = floor.filter(|f| f.iter().all(|p| cam.ground_range(*p) < RANGE)) {
            // Re-render the floor corners so the outline is the image of the footprint.
            let efov = floor.iter().map(|p| cam.project(*p)).collect::<Option<Vec<_>>>()?;
            return Some((efov, floor.iter().map(|p| [p[0], p[1]]).collect()));
        }
        top += 0.05;
    }
    None
}

/// Renders three verticals, three parallel floor lines, a perpendicular
/// pair, four equal floor segments and a floor footprint. `None` when the
/// camera sees too little floor.
pub fn render<R: Rng>(rng: &mut R, cam: &OracleCamera) -> Option<Scene> {
    let verticals = (0..3).map(|_| vertical(rng, cam)).collect::<Option<Vec<_>>>()?;
    let heading = oblique(rng, cam);
    let parallel = (0..3).map(|_| floor_segment(rng, cam, heading, None)).collect::<Option<Vec<_>>>()?;
    let heading = oblique(rng, cam);
    let perpendicular = [heading, heading + PI / 2.0]
        .iter()
        .map(|&h| floor_segment(rng, cam, h, None))
        .collect::<Option<Vec<_>>>()?;
    let equal = (0..TRIES).find_map(|_| {
        let length = rng.random_range(0.3..1.5) * cam.z0;
        (0..4)
            .map(|_| {
                let h = rng.random_range(-PI..PI);
                floor_segment(rng, cam, h, Some(length))
            })
            .collect::<Option<Vec<_>>>()
    })?;
    let (efov, footprint) = footprint(cam)?;
    Some(Scene { camera: *cam, verticals, parallel, perpendicular, equal, efov, footprint })
}

/// Adds Gaussian noise of `sigma` pixels to both endpoints (Box-Muller).
pub fn jitter<R: Rng>(rng: &mut R, s: &Seg, sigma: f64) -> Seg {
    let mut g = || {
        let (u1, u2): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
        sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    };
    [[s[0][0] + g(), s[0][1] + g()], [s[1][0] + g(), s[1][1] + g()]]
}

/// Least-squares planar similarity `dst ~ t + s R(theta) src`, solved in
/// complex form: `dst = a src + b`.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    /// Largest distance between a mapped source point and its target.
    pub max_residual: f64,
}

pub fn procrustes(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Similarity {
    let n = src.len() as f64;
    let mean = |p: &[[f64; 2]]| p.iter().fold([0.0, 0.0], |a, q| [a[0] + q[0] / n, a[1] + q[1] / n]);
    let (ms, md) = (mean(src), mean(dst));
    // a = sum conj(s) d / sum |s|^2 over centered points
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s[0] - ms[0], s[1] - ms[1]);
        let (dx, dy) = (d[0] - md[0], d[1] - md[1]);
        re += sx * dx + sy * dy;
        im += sx * dy - sy * dx;
        norm += sx * sx + sy * sy;
    }
    let (ar, ai) = (re / norm, im / norm);
    let tx = md[0] - (ar * ms[0] - ai * ms[1]);
    let ty = md[1] - (ai * ms[0] + ar * ms[1]);
    let max_residual = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (ar * s[0] - ai * s[1] + tx - d[0]).hypot(ai * s[0] + ar * s[1] + ty - d[1]))
        .fold(0.0, f64::max);
    Similarity { scale: ar.hypot(ai), theta: ai.atan2(ar), tx, ty, max_residual }
}

/// Radial lens with coefficients `k1`, `k2` and radii normalized by half
/// the image diagonal, distortion centered on the image center.
#[derive(Debug, Clone, Copy)]
pub struct Lens {
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
}

impl Lens {
    fn norm(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64) / 2.0
    }

    fn center(&self) -> Px {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }

    fn gain_radius(&self, r: f64) -> f64 {
        r * (1.0 + self.k1 * r * r + self.k2 * r.powi(4))
    }

    /// Largest raw radius (at most 1) up to which corrected radius grows.
    fn monotone_limit(&self) -> f64 {
        let slope = |r: f64| 1.0 + 3.0 * self.k1 * r * r + 5.0 * self.k2 * r.powi(4);
        (1..=1000).map(|i| i as f64 / 1000.0).take_while(|r| slope(*r) > 0.0).last().unwrap_or(0.0)
    }

    /// Largest corrected radius, pixels, that a raw point can map to.
    pub fn reach(&self) -> f64 {
        self.gain_radius(self.monotone_limit()) * self.norm()
    }

    /// The raw pixel that corrects to the ideal pixel `q`: solves
    /// `r (1 + k1 r^2 + k2 r^4) = |q - c|` for `r` by bisection.
    pub fn distort(&self, q: Px) -> Px {
        let c = self.center();
        let (du, dv) = (q[0] - c[0], q[1] - c[1]);
        let target = du.hypot(dv) / self.norm();
        if target == 0.0 {
            return q;
        }
        let (mut lo, mut hi) = (0.0, self.monotone_limit());
        assert!(self.gain_radius(hi) >= target, "ideal point beyond the lens reach");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.gain_radius(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = 0.5 * (lo + hi) / target;
        [c[0] + k * du, c[1] + k * dv]
    }
}

/// Four straight image lines near the frame edges, each sampled at
/// `points` positions and pushed through the lens. Lines are pulled toward
/// the center when the lens cannot reach the frame edges.
pub fn distorted_polylines<R: Rng>(rng: &mut R, lens: &Lens, points: usize) -> Vec<Vec<Px>> {
    let (w, h) = (lens.width as f64, lens.height as f64);
    let shrink = (0.95 * lens.reach() / lens.norm()).min(1.0);
    let ideal = [
        ([0.05, 0.1], [0.95, 0.15]),
        ([0.05, 0.9], [0.95, 0.8]),
        ([0.1, 0.05], [0.15, 0.95]),
        ([0.9, 0.05], [0.8, 0.95]),
    ];
    ideal
        .iter()
        .map(|(a, b)| {
            let jitter = rng.random_range(-0.03..0.03);
            (0..points)
                .map(|i| {
                    let t = i as f64 / (points - 1) as f64;
                    let u = a[0] + t * (b[0] - a[0]) + jitter - 0.5;
                    let v = a[1] + t * (b[1] - a[1]) - 0.5;
                    lens.distort([w * (0.5 + shrink * u), h * (0.5 + shrink * v)])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nadir() -> OracleCamera {
        OracleCamera { x0: 0.0, y0: 0.0, z0: 3.0, yaw: 0.0, pitch: -PI / 2.0, roll: 0.0, focal: 1000.0, width: 1920, height: 1080 }
    }

    #[test]
    fn nadir_point_is_principal_point() {
        let q = nadir().project([0.0, 0.0, 0.0]).unwrap();
        assert!((q[0] - 960.0).abs() < 1e-12 && (q[1] - 540.0).abs() < 1e-12);
    }

    #[test]
    fn axis_point_is_principal_point() {
        let cam = OracleCamera { pitch: -0.4, yaw: 1.1, roll: 0.2, ..nadir() };
        let f = cam.axes()[2];
        let q = cam.project([5.0 * f[0], 5.0 * f[1], 3.0 + 5.0 * f[2]]).unwrap();
        assert!((q[0] - 960.0).abs() < 1e-9 && (q[1] - 540.0).abs() < 1e-9);
    }

    #[test]
    fn axes_are_orthonormal_and_right_handed() {
        let cam = OracleCamera { pitch: -0.7, yaw: 0.3, roll: 0.1, ..nadir() };
        let [r, d, f] = cam.axes();
        for (a, b) in [(r, d), (d, f), (r, f)] {
            assert!(dot(a, b).abs() < 1e-15);
        }
        let rd = cross(r, d);
        assert!((0..3).all(|i| (rd[i] - f[i]).abs() < 1e-15));
    }

    #[test]
    fn hit_inverts_project() {
        let cam = OracleCamera { pitch: -0.5, yaw: 2.0, roll: -0.3, x0: 1.0, y0: -4.0, ..nadir() };
        let p = cam.hit([700.0, 900.0], 0.0).unwrap();
        let q = cam.project(p).unwrap();
        assert!((q[0] - 700.0).abs() < 1e-9 && (q[1] - 900.0).abs() < 1e-9);
    }

    #[test]
    fn procrustes_recovers_similarity() {
        let src = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]];
        let (s, th, t) = (1.3f64, 0.4f64, [5.0, -1.0]);
        let dst: Vec<[f64; 2]> = src
            .iter()
            .map(|p| [s * (th.cos() * p[0] - th.sin() * p[1]) + t[0], s * (th.sin() * p[0] + th.cos() * p[1]) + t[1]])
            .collect();
        let fit = procrustes(&src, &dst);
        assert!((fit.scale - s).abs() < 1e-12 && (fit.theta - th).abs() < 1e-12);
        assert!((fit.tx - t[0]).abs() < 1e-12 && (fit.ty - t[1]).abs() < 1e-12 && fit.max_residual < 1e-12);
    }

    #[test]
    fn distortion_inverse_round_trips() {
        let lens = Lens { k1: 0.2, k2: -0.05, width: 1000, height: 800 };
        let q = [900.0, 100.0];
        let raw = lens.distort(q);
        let c = lens.center();
        let r = (raw[0] - c[0]).hypot(raw[1] - c[1]) / lens.norm();
        let g = 1.0 + 0.2 * r * r - 0.05 * r.powi(4);
        assert!((c[0] + (raw[0] - c[0]) * g - q[0]).abs() < 1e-9);
    }
}
