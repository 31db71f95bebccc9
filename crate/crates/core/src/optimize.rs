//! Box-bounded Nelder-Mead simplex search.
//!
//! Trial points are clamped into the box before evaluation. Objectives may
//! return `f64::INFINITY` for infeasible parameters; such vertices sort last
//! and are contracted away.

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Converged once the spread of objective values across the simplex is
    /// below this value ...
    pub f_tolerance: f64,
    /// ... and every vertex lies within this distance (per coordinate) of
    /// the best one.
    pub x_tolerance: f64,
    /// Per-coordinate offsets of the initial simplex vertices.
    pub initial_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

pub fn nelder_mead<F>(mut f: F, start: &[f64], bounds: Option<&Bounds>, opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n >= 1 && opts.initial_step.len() == n);
    let evaluations = std::cell::Cell::new(0usize);
    let mut eval = |x: &mut Vec<f64>| -> f64 {
        if let Some(b) = bounds {
            b.clamp(x);
        }
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    let f0 = eval(&mut x0);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut xi = x0.clone();
        xi[i] += opts.initial_step[i];
        // Step inward when the box would collapse the vertex onto the start.
        if let Some(b) = bounds {
            if xi[i] > b.upper[i] {
                xi[i] = x0[i] - opts.initial_step[i];
            }
        }
        let fi = eval(&mut xi);
        simplex.push((xi, fi));
    }

    let mut converged = false;
    while evaluations.get() < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if worst.is_finite() { worst - best } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tolerance && size <= opts.x_tolerance {
            converged = true;
            break;
        }
        if size == 0.0 {
            // Fully collapsed simplex cannot make further progress.
            converged = spread <= opts.f_tolerance;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let mut xr = toward(REFLECT);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = toward(REFLECT * EXPAND);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (mut xc, outside) = if fr < simplex[n].1 {
            (toward(REFLECT * CONTRACT), true)
        } else {
            (toward(-CONTRACT), false)
        };
        let fc = eval(&mut xc);
        if (outside && fc <= fr) || (!outside && fc < simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut xs: Vec<f64> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(a, v)| a + SHRINK * (v - a))
                .collect();
            let fs = eval(&mut xs);
            *vertex = (xs, fs);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations: evaluations.get(), converged }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's parabolic-interpolation / golden-section search for a minimum of
/// `f` on `[lo, hi]`, to a relative tolerance `x_tol`.
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, x_tol: f64, max_evaluations: usize) -> ScalarMinimum
where
    F: FnMut(f64) -> f64,
{
    let sanitize = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = sanitize(f(x));
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut evaluations = 1;

    while evaluations < max_evaluations {
        let xm = 0.5 * (a + b);
        let tol1 = x_tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if !(p.abs() >= (0.5 * q * e_prev).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = sanitize(f(u));
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMinimum { x, value: fx, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_smooth_and_kinked_minima() {
        let m = brent_minimize(|x| (x - 0.7).powi(2) + 1.0, -3.0, 5.0, 1e-10, 200);
        assert!((m.x - 0.7).abs() < 1e-7 && (m.value - 1.0).abs() < 1e-14, "{m:?}");
        let m = brent_minimize(|x| (x - 0.123_456_789).abs(), -1.0, 1.0, 1e-13, 500);
        assert!((m.x - 0.123_456_789).abs() < 1e-12, "{m:?}");
    }

    fn opts(step: f64) -> NelderMeadOptions {
        NelderMeadOptions {
            max_evaluations: 5000,
            f_tolerance: 1e-14,
            x_tolerance: 1e-10,
            initial_step: vec![step, step],
        }
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], None, &opts(0.1));
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2) + (x[1] + 5.0).powi(2);
        let b = Bounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let m = nelder_mead(f, &[0.0, 0.0], Some(&b), &opts(0.5));
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] + 1.0).abs() < 1e-8, "{:?}", m.x);
    }

    #[test]
    fn walks_away_from_infeasible_region() {
        let f = |x: &[f64]| {
            if x[0] > 0.5 {
                f64::INFINITY
            } else {
                (x[0] - 0.3).abs() + (x[1] - 0.2).abs()
            }
        };
        let m = nelder_mead(f, &[0.0, 0.0], None, &opts(1.0));
        assert!(m.value < 1e-8, "{m:?}");
    }

    #[test]
    fn reports_budget_exhaustion() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let mut o = opts(0.1);
        o.max_evaluations = 20;
        let m = nelder_mead(rosen, &[-1.2, 1.0], None, &o);
        assert!(!m.converged);
        assert!(m.evaluations <= 22);
    }
}
