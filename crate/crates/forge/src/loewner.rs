//! Radial Loewner numerics: forward/backward flows in the unit disc,
//! trace synthesis from a driving function, driving extraction by a radial
//! zipper, hyperbolic geodesics, and metrics on capacity-parametrized
//! curves, trees, loops and loop ensembles.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoewnerError {
    #[error("adaptive step size underflowed at t = {0}")]
    StepFailure(f64),
    #[error("curve self-intersects or leaves the disc near point {0}")]
    NonSimple(usize),
    #[error("capacity is not strictly increasing")]
    NoCapacityParam,
    #[error("bad input: {0}")]
    BadInput(&'static str),
}

/// Default swallowing tolerance for the forward flow.
pub const EPS_SWALLOW: f64 = 1e-6;
/// Default per-step capacity cap for the zipper.
pub const CAP_STEP: f64 = 1e-3;

/// Boundary driving function on a time grid, stored as a continuous
/// argument lift: U_k = exp(i upsilon_k).  An optional second marked
/// boundary point phi_k is kept with the convention phi - upsilon in
/// [0, 2 pi].
#[derive(Debug, Clone)]
pub struct DrivingPath {
    /// strictly increasing capacity times, starting at 0
    pub t: Vec<f64>,
    /// argument lift of the driving point
    pub upsilon: Vec<f64>,
    /// optional argument lift of the second marked point
    pub phi: Option<Vec<f64>>,
    /// zero-capacity spans dropped during extraction (bookkeeping only)
    pub dropped_spans: usize,
}

impl DrivingPath {
    pub fn from_angles(t: Vec<f64>, upsilon: Vec<f64>) -> Self {
        assert_eq!(t.len(), upsilon.len());
        DrivingPath { t, upsilon, phi: None, dropped_spans: 0 }
    }

    /// Constant driving at angle `angle` on a uniform grid of `n` cells.
    pub fn constant(angle: f64, t_end: f64, n: usize) -> Self {
        let t = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
        let upsilon = vec![angle; n + 1];
        DrivingPath { t, upsilon, phi: None, dropped_spans: 0 }
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    /// Linear interpolation of the argument lift; clamped beyond the grid.
    pub fn upsilon_at(&self, t: f64) -> f64 {
        let n = self.t.len();
        if n == 0 {
            return 0.0;
        }
        if t <= self.t[0] {
            return self.upsilon[0];
        }
        if t >= self.t[n - 1] {
            return self.upsilon[n - 1];
        }
        let k = match self.t.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.upsilon[k],
            Err(k) => k,
        };
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = (t - t0) / (t1 - t0);
        self.upsilon[k - 1] * (1.0 - w) + self.upsilon[k] * w
    }

    pub fn u_at(&self, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.upsilon_at(t))
    }

    /// Smallest positive grid spacing (used as a step-size cap so the
    /// driving interpolation is always resolved).
    pub fn min_dt(&self) -> f64 {
        self.t
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Curve in the closed disc parametrized by d-capacity: the conformal map
/// from the complement of the curve up to time t, normalized to fix 0,
/// has derivative e^t at 0.
#[derive(Debug, Clone)]
pub struct CapCurve {
    pub t: Vec<f64>,
    pub gamma: Vec<Complex64>,
}

impl CapCurve {
    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    /// Linear interpolation at capacity time t; clamped beyond the ends.
    pub fn at(&self, t: f64) -> Complex64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.gamma[0];
        }
        if t >= self.t[n - 1] {
            return self.gamma[n - 1];
        }
        let k = match self.t.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.gamma[k],
            Err(k) => k,
        };
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let w = (t - t0) / (t1 - t0);
        self.gamma[k - 1] * (1.0 - w) + self.gamma[k] * w
    }
}

/// Outcome of running the forward flow to a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    Reached(Complex64),
    /// the point was absorbed by the hull at this time
    Swallowed(f64),
}

fn radial_rhs(g: Complex64, u: Complex64) -> Complex64 {
    -g * (g + u) / (g - u)
}

/// Forward radial Loewner flow dg/dt = -g (g + U_t)/(g - U_t), g_0(z) = z.
/// Adaptive fourth-order steps; reports the swallowing time when the point
/// comes within `eps_swallow` of the driving singularity.
pub fn flow_forward(
    u: &DrivingPath,
    z: Complex64,
    t_end: f64,
    eps_swallow: f64,
) -> Result<Flow, LoewnerError> {
    if z == Complex64::new(0.0, 0.0) {
        // fixed point of the flow
        return Ok(Flow::Reached(z));
    }
    let h_cap = u.min_dt().min(t_end.max(1e-12) / 16.0).min(1e-2);
    let mut g = z;
    let mut t = 0.0;
    while t < t_end {
        let ut = u.u_at(t);
        let gap = (g - ut).norm();
        if gap < eps_swallow {
            return Ok(Flow::Swallowed(t));
        }
        // keep the increment well below the distance to the singularity
        let speed = (g.norm() * (g + ut).norm()) / gap;
        let mut h = (0.05 * gap / speed.max(1e-300)).min(h_cap).min(t_end - t);
        if h < 1e-16 * (1.0 + t) {
            return Err(LoewnerError::StepFailure(t));
        }
        loop {
            let k1 = radial_rhs(g, u.u_at(t));
            let k2 = radial_rhs(g + 0.5 * h * k1, u.u_at(t + 0.5 * h));
            let k3 = radial_rhs(g + 0.5 * h * k2, u.u_at(t + 0.5 * h));
            let k4 = radial_rhs(g + h * k3, u.u_at(t + h));
            let g_new = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            // reject steps that overshoot past the singularity
            if (g_new - u.u_at(t + h)).norm() < 0.25 * gap && gap > eps_swallow {
                h *= 0.5;
                if h < 1e-16 * (1.0 + t) {
                    return Ok(Flow::Swallowed(t));
                }
                continue;
            }
            g = g_new;
            t += h;
            break;
        }
    }
    Ok(Flow::Reached(g))
}

/// Backward radial flow: evaluates the inverse map f_t(w) = g_t^{-1}(w) by
/// integrating dy/ds = +y (y + U_{t-s})/(y - U_{t-s}) from y(0) = w to s = t.
pub fn flow_backward(u: &DrivingPath, w: Complex64, t: f64) -> Result<Complex64, LoewnerError> {
    let h_cap = u.min_dt().min(t.max(1e-12) / 16.0).min(1e-2);
    let mut y = w;
    let mut s = 0.0;
    let rhs = |y: Complex64, uu: Complex64| y * (y + uu) / (y - uu);
    while s < t {
        let us = u.u_at(t - s);
        let gap = (y - us).norm();
        if gap < 1e-14 {
            return Err(LoewnerError::StepFailure(s));
        }
        let speed = (y.norm() * (y + us).norm()) / gap;
        let h = (0.05 * gap / speed.max(1e-300)).min(h_cap).min(t - s);
        if h < 1e-18 * (1.0 + s) {
            return Err(LoewnerError::StepFailure(s));
        }
        let k1 = rhs(y, u.u_at(t - s));
        let k2 = rhs(y + 0.5 * h * k1, u.u_at(t - s - 0.5 * h));
        let k3 = rhs(y + 0.5 * h * k2, u.u_at(t - s - 0.5 * h));
        let k4 = rhs(y + h * k3, u.u_at(t - s - h));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    Ok(y)
}

/// Hyperbolic geodesic approximation to the tip: f_t((1 - eps) U_t).
pub fn hyperbolic_geodesic(u: &DrivingPath, t: f64, eps: f64) -> Result<Complex64, LoewnerError> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(LoewnerError::BadInput("eps must lie in (0,1)"));
    }
    let w = (1.0 - eps) * u.u_at(t);
    flow_backward(u, w, t)
}

/// Synthesizes the trace of a driving function by the backward flow.  The
/// tip at each grid time is obtained from three hyperbolic-geodesic
/// evaluations at eps, eps/4, eps/16 extrapolated to eps = 0 in powers of
/// sqrt(eps) (the inverse map has a square-root singularity at the tip).
pub fn trace_from_driving(u: &DrivingPath, resolution: f64) -> Result<CapCurve, LoewnerError> {
    let eps0 = if resolution > 0.0 { resolution } else { 1e-3 };
    let mut t_out = Vec::with_capacity(u.t.len());
    let mut gamma = Vec::with_capacity(u.t.len());
    t_out.push(0.0);
    gamma.push(u.u_at(0.0));
    for &tk in u.t.iter().skip(1) {
        if tk <= 0.0 {
            continue;
        }
        let f1 = hyperbolic_geodesic(u, tk, eps0)?;
        let f2 = hyperbolic_geodesic(u, tk, eps0 / 4.0)?;
        let f3 = hyperbolic_geodesic(u, tk, eps0 / 16.0)?;
        // quadratic extrapolation in x = sqrt(eps) at nodes x, x/2, x/4
        let tip = f1 / 3.0 - 2.0 * f2 + (8.0 / 3.0) * f3;
        t_out.push(tk);
        gamma.push(tip);
    }
    Ok(CapCurve { t: t_out, gamma })
}

/// Elementary radial slit map: the conformal map of the disc minus the
/// radial slit [rho, 1] onto the disc, fixing 0 with positive derivative.
/// Built from the Koebe map, an affine normalization and the inverse
/// Joukowski map; returns the image of z.  The slit tip rho maps to 1.
fn slit_map(rho: f64, z: Complex64) -> Complex64 {
    let c = rho / ((1.0 - rho) * (1.0 - rho));
    let p = (0.25 - c) / (c + 0.25);
    let q = p / (1.0 + (1.0 - p * p).sqrt());
    let w = z / ((1.0 - z) * (1.0 - z));
    let a = (2.0 * w - (c - 0.25)) / (c + 0.25);
    let y = a / (1.0 + (Complex64::new(1.0, 0.0) - a * a).sqrt());
    (y - q) / (1.0 - q * y)
}

/// d-capacity of the radial slit [rho, 1]: log of the derivative at 0 of
/// the slit map.
fn slit_capacity(rho: f64) -> f64 {
    let c = rho / ((1.0 - rho) * (1.0 - rho));
    let p = (0.25 - c) / (c + 0.25);
    let q = p / (1.0 + (1.0 - p * p).sqrt());
    let num = (1.0 + q * q) * (1.0 + q * q);
    let den = (1.0 - q * q) * (1.0 - q * q) * (c + 0.25);
    (num / den).ln()
}

/// Inner radius of the radial slit with the given d-capacity (bisection).
pub fn slit_radius_for_capacity(t: f64) -> f64 {
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    // slit_capacity is decreasing in rho
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slit_capacity(mid) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Radial zipper: extracts the driving function of a simple curve in the
/// closed disc started on the boundary.  Each polyline step is unzipped by
/// a rotated radial slit map matching the tip; steps whose capacity would
/// exceed `cap_step` are subdivided.  Returns the driving function on the
/// accumulated-capacity grid; zero-capacity spans are dropped and counted.
pub fn extract_driving(curve: &[Complex64], cap_step: f64) -> Result<DrivingPath, LoewnerError> {
    let (path, _) = extract_driving_with_caps(curve, cap_step)?;
    Ok(path)
}

/// As `extract_driving`, but also returns the accumulated capacity at each
/// input vertex (for reparametrizing the curve itself by d-capacity).
pub fn extract_driving_with_caps(
    curve: &[Complex64],
    cap_step: f64,
) -> Result<(DrivingPath, Vec<f64>), LoewnerError> {
    extract_driving_marked(curve, cap_step, None)
}

/// As `extract_driving_with_caps`, additionally tracking a marked boundary
/// point through the composed slit maps; its argument lift is stored in the
/// driving path's second marked series with the gap kept in [0, 2 pi].
pub fn extract_driving_marked(
    curve: &[Complex64],
    cap_step: f64,
    marked: Option<Complex64>,
) -> Result<(DrivingPath, Vec<f64>), LoewnerError> {
    if curve.len() < 2 {
        return Err(LoewnerError::BadInput("curve needs at least two points"));
    }
    if (curve[0].norm() - 1.0).abs() > 1e-6 {
        return Err(LoewnerError::BadInput("curve must start on the unit circle"));
    }
    let cap = if cap_step > 0.0 { cap_step } else { CAP_STEP };
    // images of the not-yet-unzipped points under the composed maps
    let mut pts: Vec<Complex64> = curve[1..].to_vec();
    let mut u_cur = curve[0] / curve[0].norm();
    let mut t_acc = 0.0;
    let mut ups_prev = u_cur.arg();
    let mut t_grid = vec![0.0];
    let mut ups = vec![ups_prev];
    let mut caps_at = vec![0.0];
    let mut dropped = 0usize;
    // marked boundary point: keep its image on the circle and lift its
    // argument so that phi - upsilon starts in [0, 2 pi]
    let mut mk = marked.map(|m| m / m.norm());
    let mut phi_prev = mk.map(|m| {
        let mut ph = m.arg();
        while ph - ups_prev < 0.0 {
            ph += 2.0 * std::f64::consts::PI;
        }
        while ph - ups_prev > 2.0 * std::f64::consts::PI {
            ph -= 2.0 * std::f64::consts::PI;
        }
        ph
    });
    let mut phis = phi_prev.map(|p| vec![p]);

    for k in 0..pts.len() {
        // estimated capacity of unzipping straight to this point
        let rho_direct = pts[k].norm();
        if rho_direct >= 1.0 + 1e-9 {
            return Err(LoewnerError::NonSimple(k + 1));
        }
        let n_sub = if rho_direct >= 1.0 - 1e-12 {
            1
        } else {
            // the estimate diverges as rho -> 0; clamp so the substep count
            // stays finite even on degenerate (non-simple) inputs
            (slit_capacity(rho_direct.clamp(1e-9, 1.0 - 1e-12)) / cap)
                .ceil()
                .clamp(1.0, 1e5) as usize
        };
        for j in 0..n_sub {
            // split the remaining chord into equal parts in the current chart
            let frac = 1.0 / (n_sub - j) as f64;
            let w = u_cur + frac * (pts[k] - u_cur);
            let rho = w.norm();
            if rho >= 1.0 + 1e-9 {
                return Err(LoewnerError::NonSimple(k + 1));
            }
            if rho >= 1.0 - 1e-12 {
                // zero-capacity span: the tip never left the boundary
                dropped += 1;
                u_cur = w / rho;
                let mut th = u_cur.arg();
                while th - ups_prev > std::f64::consts::PI {
                    th -= 2.0 * std::f64::consts::PI;
                }
                while th - ups_prev < -std::f64::consts::PI {
                    th += 2.0 * std::f64::consts::PI;
                }
                ups_prev = th;
                continue;
            }
            let theta = w.arg();
            let rot = Complex64::from_polar(1.0, theta);
            let dt = slit_capacity(rho);
            for p in pts[k..].iter_mut() {
                *p = rot * slit_map(rho, *p / rot);
            }
            u_cur = rot;
            t_acc += dt;
            let mut th = theta;
            while th - ups_prev > std::f64::consts::PI {
                th -= 2.0 * std::f64::consts::PI;
            }
            while th - ups_prev < -std::f64::consts::PI {
                th += 2.0 * std::f64::consts::PI;
            }
            ups_prev = th;
            t_grid.push(t_acc);
            ups.push(th);
            if let Some(m) = mk.as_mut() {
                let img = rot * slit_map(rho, *m / rot);
                *m = img / img.norm();
                let mut ph = m.arg();
                let prev = phi_prev.unwrap();
                while ph - prev > std::f64::consts::PI {
                    ph -= 2.0 * std::f64::consts::PI;
                }
                while ph - prev < -std::f64::consts::PI {
                    ph += 2.0 * std::f64::consts::PI;
                }
                phi_prev = Some(ph);
                phis.as_mut().unwrap().push(ph);
            }
        }
        caps_at.push(t_acc);
    }
    let path = DrivingPath { t: t_grid, upsilon: ups, phi: phis, dropped_spans: dropped };
    Ok((path, caps_at))
}

/// Reparametrizes a raw polyline (starting on the boundary) by d-capacity,
/// dropping zero-capacity spans.
pub fn capacity_parametrize(
    curve: &[Complex64],
    cap_step: f64,
) -> Result<CapCurve, LoewnerError> {
    let (path, caps) = extract_driving_with_caps(curve, cap_step)?;
    let mut t = Vec::with_capacity(curve.len());
    let mut gamma = Vec::with_capacity(curve.len());
    for (i, &c) in caps.iter().enumerate() {
        if i > 0 && c <= *t.last().unwrap() + 1e-15 {
            continue;
        }
        t.push(c);
        gamma.push(curve[i]);
    }
    if t.len() < 2 {
        return Err(LoewnerError::NoCapacityParam);
    }
    let _ = path;
    Ok(CapCurve { t, gamma })
}

fn check_cap_param(c: &CapCurve) -> Result<(), LoewnerError> {
    if c.t.len() < 2 || c.t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LoewnerError::NoCapacityParam);
    }
    Ok(())
}

/// Sup-norm distance between two d-capacity parametrized curves over the
/// merged capacity grid; each curve is held at its endpoint past its own
/// final capacity.
pub fn metric_curve(a: &CapCurve, b: &CapCurve) -> Result<f64, LoewnerError> {
    check_cap_param(a)?;
    check_cap_param(b)?;
    let mut grid: Vec<f64> = a.t.iter().chain(b.t.iter()).cloned().collect();
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut d = 0.0f64;
    for &t in &grid {
        d = d.max((a.at(t) - b.at(t)).norm());
    }
    Ok(d)
}

/// Hausdorff distance between two finite sets of branches under the curve
/// metric.
pub fn metric_tree(t1: &[CapCurve], t2: &[CapCurve]) -> Result<f64, LoewnerError> {
    if t1.is_empty() || t2.is_empty() {
        return Err(LoewnerError::BadInput("empty branch set"));
    }
    let mut d = 0.0f64;
    for (from, to) in [(t1, t2), (t2, t1)] {
        for a in from {
            let mut best = f64::INFINITY;
            for b in to {
                best = best.min(metric_curve(a, b)?);
            }
            d = d.max(best);
        }
    }
    Ok(d)
}

/// Resamples a closed polyline to n points equally spaced in arclength.
fn resample_closed(loop_pts: &[Complex64], n: usize) -> Vec<Complex64> {
    let m = loop_pts.len();
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for i in 0..m {
        let seg = (loop_pts[(i + 1) % m] - loop_pts[i]).norm();
        cum.push(cum[i] + seg);
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return vec![loop_pts[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < m && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(loop_pts[seg] * (1.0 - w) + loop_pts[(seg + 1) % m] * w);
    }
    out
}

/// Discrete Fréchet distance between two point sequences (dynamic
/// programming over monotone couplings).
fn discrete_frechet(a: &[Complex64], b: &[Complex64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            let d = (a[i] - b[j]).norm();
            let reach = if i == 0 && j == 0 {
                d
            } else if i == 0 {
                cur[j - 1].max(d)
            } else if j == 0 {
                prev[j].max(d)
            } else {
                prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d)
            };
            cur[j] = reach;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Number of resample points for the loop metric.
const LOOP_SAMPLES: usize = 200;

/// Cyclic discrete Fréchet distance between two loops: minimum over cyclic
/// shifts and both orientations of the second loop, after canonical
/// arclength resampling.  An upper bound on the parametrization infimum.
pub fn metric_loop(l1: &[Complex64], l2: &[Complex64]) -> f64 {
    if l1.is_empty() || l2.is_empty() {
        return f64::INFINITY;
    }
    let a = resample_closed(l1, LOOP_SAMPLES);
    let b0 = resample_closed(l2, LOOP_SAMPLES);
    let mut best = f64::INFINITY;
    for rev in [false, true] {
        let mut b = b0.clone();
        if rev {
            b.reverse();
        }
        for s in 0..LOOP_SAMPLES {
            let shifted: Vec<Complex64> =
                (0..=LOOP_SAMPLES).map(|k| b[(s + k) % LOOP_SAMPLES]).collect();
            let mut a_closed = a.clone();
            a_closed.push(a[0]);
            best = best.min(discrete_frechet(&a_closed, &shifted));
        }
    }
    best
}

/// Hausdorff distance between two loop ensembles with the loop metric as
/// the ground distance.
pub fn metric_ensemble(e1: &[Vec<Complex64>], e2: &[Vec<Complex64>]) -> f64 {
    if e1.is_empty() || e2.is_empty() {
        return if e1.is_empty() && e2.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let mut d = 0.0f64;
    for (from, to) in [(e1, e2), (e2, e1)] {
        for a in from {
            let mut best = f64::INFINITY;
            for b in to {
                best = best.min(metric_loop(a, b));
            }
            d = d.max(best);
        }
    }
    d
}
