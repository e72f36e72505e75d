//! Radial SLE(kappa) and SLE(kappa, rho) simulation in the Z = cos X
//! coordinate, martingale and Bessel-statistics estimators, and the
//! branching construction over finite target sets.

use crate::loewner::{DrivingPath, LoewnerError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SleError {
    #[error("bad parameters: {0}")]
    BadParams(&'static str),
    #[error("not enough increments away from the reflecting boundary")]
    InsufficientData,
    #[error(transparent)]
    Flow(#[from] LoewnerError),
}

/// One standard normal draw (Box-Muller, cosine branch).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Driving path of a radial SLE(kappa, rho) together with the derived
/// series used by the martingale observables.  The boundary sign state of
/// N is constant within each excursion of the two marked points away from
/// coincidence and resampled at each excursion start.
#[derive(Debug, Clone)]
pub struct SlePath {
    pub driving: DrivingPath,
    /// half angle gap X_k = (phi_k - upsilon_k)/2, in [0, pi]
    pub x: Vec<f64>,
    /// Z_k = cos X_k
    pub z: Vec<f64>,
    /// M_k = e^{t_k} Z_k
    pub m: Vec<f64>,
    /// N_k = sign * e^{t_k/2} sqrt(sin X_k) cos((upsilon_k + phi_k + pi)/4)
    pub n: Vec<f64>,
    /// steps where the angular drift cot X was capped at dt^{-1/2}
    pub capped_steps: usize,
    pub total_steps: usize,
    /// steps with |Z| > 1 - 1e-6 (reflection occupation bookkeeping)
    pub boundary_steps: usize,
}

/// Radial SLE(kappa): driving argument is sqrt(kappa) times a standard
/// Brownian motion on a uniform grid.
pub fn simulate_radial_sle(kappa: f64, t_end: f64, dt: f64, seed: u64) -> DrivingPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (t_end / dt).round().max(1.0) as usize;
    let mut t = Vec::with_capacity(n + 1);
    let mut ups = Vec::with_capacity(n + 1);
    t.push(0.0);
    ups.push(0.0);
    let mut x = 0.0;
    let root = kappa.sqrt() * dt.sqrt();
    for k in 1..=n {
        x += root * standard_normal(&mut rng);
        t.push(k as f64 * dt);
        ups.push(x);
    }
    DrivingPath::from_angles(t, ups)
}

/// Per-step state of the Z-coordinate scheme; shared by the single-path
/// simulator and the branching construction so their draws agree exactly.
#[derive(Debug, Clone, Copy)]
struct ZState {
    t: f64,
    z: f64,
    phi: f64,
    ups: f64,
    sign: f64,
    at_boundary: bool,
    capped: usize,
    boundary: usize,
}

impl ZState {
    fn new(t0: f64, ups0: f64, phi0: f64, rng: &mut ChaCha8Rng) -> Self {
        let x0 = (phi0 - ups0) / 2.0;
        let z0 = x0.cos();
        ZState {
            t: t0,
            z: z0,
            phi: phi0,
            ups: ups0,
            sign: if rng.gen::<bool>() { 1.0 } else { -1.0 },
            at_boundary: z0.abs() >= 1.0 - 1e-9,
            capped: 0,
            boundary: 0,
        }
    }

    fn x(&self) -> f64 {
        self.z.clamp(-1.0, 1.0).acos()
    }

    /// One Euler-Maruyama step of dZ = sigma sqrt(1 - Z^2) dB - (b +
    /// sigma^2/2) Z dt, with the angular drift cot X capped at dt^{-1/2}.
    fn step(&mut self, sigma: f64, b: f64, dt: f64, rng: &mut ChaCha8Rng) {
        let g = standard_normal(rng);
        let diff = (1.0 - self.z * self.z).max(0.0).sqrt();
        let z_new = (self.z + sigma * diff * dt.sqrt() * g - (b + 0.5 * sigma * sigma) * self.z * dt)
            .clamp(-1.0, 1.0);
        self.z = z_new;
        let x = self.x();
        let cap = 1.0 / dt.sqrt();
        let mut drift = if x.sin().abs() > 1e-300 { x.cos() / x.sin() } else { cap };
        if drift.abs() > cap {
            drift = drift.signum() * cap;
            self.capped += 1;
        }
        self.phi += drift * dt;
        self.ups = self.phi - 2.0 * x;
        self.t += dt;
        if self.z.abs() > 1.0 - 1e-6 {
            self.boundary += 1;
        }
        let now_boundary = self.z.abs() >= 1.0 - 1e-9;
        if self.at_boundary && !now_boundary {
            // new excursion away from the boundary: fresh symmetric sign
            self.sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        self.at_boundary = now_boundary;
    }

    fn m(&self) -> f64 {
        self.t.exp() * self.z
    }

    fn n(&self) -> f64 {
        let x = self.x();
        self.sign * (self.t / 2.0).exp() * x.sin().max(0.0).sqrt()
            * ((self.ups + self.phi + PI) / 4.0).cos()
    }
}

/// Radial SLE(kappa, rho) via the nonsingular Z = cos X scheme.
pub fn simulate_sle_kr(
    kappa: f64,
    rho: f64,
    upsilon0: f64,
    phi0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<SlePath, SleError> {
    if kappa < 0.0 || dt <= 0.0 || t_end <= 0.0 {
        return Err(SleError::BadParams("kappa must be nonnegative, dt and t_end positive"));
    }
    if !(0.0..=2.0 * PI + 1e-12).contains(&(phi0 - upsilon0)) {
        return Err(SleError::BadParams("need 0 <= phi0 - upsilon0 <= 2 pi"));
    }
    let sigma = kappa.sqrt() / 2.0;
    let b = (rho + 2.0) / 4.0;
    let n = (t_end / dt).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = ZState::new(0.0, upsilon0, phi0, &mut rng);
    let mut t = Vec::with_capacity(n + 1);
    let mut ups = Vec::with_capacity(n + 1);
    let mut phi = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut zs = Vec::with_capacity(n + 1);
    let mut ms = Vec::with_capacity(n + 1);
    let mut ns = Vec::with_capacity(n + 1);
    let mut push = |st: &ZState, t: &mut Vec<f64>, ups: &mut Vec<f64>, phi: &mut Vec<f64>,
                    xs: &mut Vec<f64>, zs: &mut Vec<f64>, ms: &mut Vec<f64>, ns: &mut Vec<f64>| {
        t.push(st.t);
        ups.push(st.ups);
        phi.push(st.phi);
        xs.push(st.x());
        zs.push(st.z);
        ms.push(st.m());
        ns.push(st.n());
    };
    push(&st, &mut t, &mut ups, &mut phi, &mut xs, &mut zs, &mut ms, &mut ns);
    for _ in 0..n {
        st.step(sigma, b, dt, &mut rng);
        push(&st, &mut t, &mut ups, &mut phi, &mut xs, &mut zs, &mut ms, &mut ns);
    }
    let driving = DrivingPath { t, upsilon: ups, phi: Some(phi), dropped_spans: 0 };
    Ok(SlePath {
        driving,
        x: xs,
        z: zs,
        m: ms,
        n: ns,
        capped_steps: st.capped,
        total_steps: n,
        boundary_steps: st.boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Martingale {
    M,
    N,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub mean: f64,
    pub se: f64,
    pub start: f64,
    pub n_paths: usize,
}

impl MartingaleReport {
    /// |mean - start| in units of the standard error.
    pub fn deviation_se(&self) -> f64 {
        (self.mean - self.start).abs() / self.se.max(1e-300)
    }
}

/// Sample mean and standard error of the terminal martingale value over a
/// list of simulated paths.
pub fn martingale_stats(paths: &[SlePath], which: Martingale) -> MartingaleReport {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut start = 0.0;
    for p in paths {
        let series = match which {
            Martingale::M => &p.m,
            Martingale::N => &p.n,
        };
        let v = *series.last().unwrap();
        sum += v;
        sumsq += v * v;
        start += series[0];
    }
    let n = paths.len() as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    MartingaleReport { mean, se: (var / n).sqrt(), start: start / n, n_paths: paths.len() }
}

#[derive(Debug, Clone)]
pub struct QvBin {
    pub z_lo: f64,
    pub z_hi: f64,
    pub rate: f64,
    /// sigma^2 (1 - Z^2) averaged over the visits to this bin
    pub predicted: f64,
    pub count: usize,
}

/// One-pass ensemble statistics for the Z-scheme: terminal M and N moments,
/// M at intermediate checkpoints, binned quadratic-variation rate of Z,
/// drift-cap and reflection-occupation fractions.  Streams paths without
/// materializing them.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub m_report: MartingaleReport,
    pub n_report: MartingaleReport,
    pub checkpoints: Vec<f64>,
    pub m_checkpoint: Vec<MartingaleReport>,
    pub qv_bins: Vec<QvBin>,
    pub capped_fraction: f64,
    pub boundary_fraction: f64,
}

pub fn ensemble_stats(
    kappa: f64,
    rho: f64,
    upsilon0: f64,
    phi0: f64,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    checkpoints: &[f64],
) -> Result<EnsembleStats, SleError> {
    if kappa <= 0.0 || dt <= 0.0 || t_end <= 0.0 || n_paths == 0 {
        return Err(SleError::BadParams("positive kappa, dt, t_end, n_paths required"));
    }
    let sigma = kappa.sqrt() / 2.0;
    let b = (rho + 2.0) / 4.0;
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let check_steps: Vec<usize> =
        checkpoints.iter().map(|c| (c / dt).round().min(n_steps as f64) as usize).collect();
    const N_BINS: usize = 8;
    let mut qv_sum = vec![0.0f64; N_BINS];
    let mut qv_pred = vec![0.0f64; N_BINS];
    let mut qv_cnt = vec![0usize; N_BINS];
    let (mut m_sum, mut m_sq, mut m0_sum) = (0.0, 0.0, 0.0);
    let (mut n_sum, mut n_sq, mut n0_sum) = (0.0, 0.0, 0.0);
    let mut chk_sum = vec![0.0f64; check_steps.len()];
    let mut chk_sq = vec![0.0f64; check_steps.len()];
    let mut capped = 0usize;
    let mut boundary = 0usize;
    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(path as u64));
        let mut st = ZState::new(0.0, upsilon0, phi0, &mut rng);
        m0_sum += st.m();
        n0_sum += st.n();
        for k in 1..=n_steps {
            let z_prev = st.z;
            st.step(sigma, b, dt, &mut rng);
            // quadratic variation of Z binned by the pre-step Z value
            let bin = (((z_prev + 1.0) / 2.0) * N_BINS as f64).min(N_BINS as f64 - 1.0) as usize;
            let dz = st.z - z_prev;
            qv_sum[bin] += dz * dz / dt;
            qv_pred[bin] += sigma * sigma * (1.0 - z_prev * z_prev);
            qv_cnt[bin] += 1;
            for (i, &cs) in check_steps.iter().enumerate() {
                if cs == k {
                    let m = st.m();
                    chk_sum[i] += m;
                    chk_sq[i] += m * m;
                }
            }
        }
        let (m, nn) = (st.m(), st.n());
        m_sum += m;
        m_sq += m * m;
        n_sum += nn;
        n_sq += nn * nn;
        capped += st.capped;
        boundary += st.boundary;
    }
    let np = n_paths as f64;
    let report = |sum: f64, sq: f64, start: f64| {
        let mean = sum / np;
        let var = (sq / np - mean * mean).max(0.0);
        MartingaleReport { mean, se: (var / np).sqrt(), start, n_paths }
    };
    let qv_bins = (0..N_BINS)
        .map(|i| QvBin {
            z_lo: -1.0 + 2.0 * i as f64 / N_BINS as f64,
            z_hi: -1.0 + 2.0 * (i + 1) as f64 / N_BINS as f64,
            rate: if qv_cnt[i] > 0 { qv_sum[i] / qv_cnt[i] as f64 } else { f64::NAN },
            predicted: if qv_cnt[i] > 0 { qv_pred[i] / qv_cnt[i] as f64 } else { f64::NAN },
            count: qv_cnt[i],
        })
        .collect();
    let total_steps = (n_paths * n_steps) as f64;
    Ok(EnsembleStats {
        n_paths,
        m_report: report(m_sum, m_sq, m0_sum / np),
        n_report: report(n_sum, n_sq, n0_sum / np),
        checkpoints: check_steps.iter().map(|&s| s as f64 * dt).collect(),
        m_checkpoint: check_steps
            .iter()
            .enumerate()
            .map(|(i, _)| report(chk_sum[i], chk_sq[i], m0_sum / np))
            .collect(),
        qv_bins,
        capped_fraction: capped as f64 / total_steps,
        boundary_fraction: boundary as f64 / total_steps,
    })
}

#[derive(Debug, Clone)]
pub struct BesselReport {
    /// fitted drift coefficient of dX = b cot(X) dt + sigma dB
    pub b_hat: f64,
    /// fitted diffusion coefficient sigma^2
    pub sigma2_hat: f64,
    /// squared correlation between the increments and the drift regressor
    pub r2: f64,
    pub n_increments: usize,
}

fn bessel_regress(pairs: &[(f64, f64)], dt: f64) -> Result<BesselReport, SleError> {
    if pairs.len() < 1000 {
        return Err(SleError::InsufficientData);
    }
    let n = pairs.len() as f64;
    let (mut scc, mut scd, mut sdd, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(c, dx) in pairs {
        scc += c * c;
        scd += c * dx;
        sdd += dx * dx;
        sc += c;
        sd += dx;
    }
    let b_hat = if scc > 0.0 { scd / scc } else { 0.0 };
    let sigma2_hat = sdd / n / dt;
    let cov = scd / n - (sc / n) * (sd / n);
    let vc = scc / n - (sc / n) * (sc / n);
    let vd = sdd / n - (sd / n) * (sd / n);
    let r2 = cov * cov / (vc * vd).max(1e-300);
    Ok(BesselReport { b_hat, sigma2_hat, r2, n_increments: pairs.len() })
}

/// Local regression of the angle-gap increments on cot(X) dt, restricted to
/// X in [0.3, pi - 0.3] (away from reflection).
pub fn bessel_stats(paths: &[SlePath]) -> Result<BesselReport, SleError> {
    let dt = paths
        .first()
        .and_then(|p| p.driving.t.get(1).map(|&t| t - p.driving.t[0]))
        .ok_or(SleError::InsufficientData)?;
    let mut pairs = Vec::new();
    for p in paths {
        for k in 1..p.x.len() {
            let x_prev = p.x[k - 1];
            if (0.3..=PI - 0.3).contains(&x_prev) {
                pairs.push(((x_prev.cos() / x_prev.sin()) * dt, p.x[k] - p.x[k - 1]));
            }
        }
    }
    bessel_regress(&pairs, dt)
}

/// Negative control: the same regression after shuffling the increments
/// against the regressors, which destroys the cot(X) dependence.
pub fn bessel_stats_shuffled(paths: &[SlePath], seed: u64) -> Result<BesselReport, SleError> {
    let dt = paths
        .first()
        .and_then(|p| p.driving.t.get(1).map(|&t| t - p.driving.t[0]))
        .ok_or(SleError::InsufficientData)?;
    let mut cs = Vec::new();
    let mut dxs = Vec::new();
    for p in paths {
        for k in 1..p.x.len() {
            let x_prev = p.x[k - 1];
            if (0.3..=PI - 0.3).contains(&x_prev) {
                cs.push((x_prev.cos() / x_prev.sin()) * dt);
                dxs.push(p.x[k] - p.x[k - 1]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates on the increments
    for i in (1..dxs.len()).rev() {
        let j = rng.gen_range(0..=i);
        dxs.swap(i, j);
    }
    let pairs: Vec<(f64, f64)> = cs.into_iter().zip(dxs).collect();
    bessel_regress(&pairs, dt)
}

/// Streaming Bessel statistics over a freshly simulated ensemble.
pub fn bessel_ensemble(
    kappa: f64,
    rho: f64,
    upsilon0: f64,
    phi0: f64,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<BesselReport, SleError> {
    let sigma = kappa.sqrt() / 2.0;
    let b = (rho + 2.0) / 4.0;
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let (mut scc, mut scd, mut sdd, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(path as u64));
        let mut st = ZState::new(0.0, upsilon0, phi0, &mut rng);
        let mut x_prev = st.x();
        for _ in 0..n_steps {
            st.step(sigma, b, dt, &mut rng);
            let x = st.x();
            if (0.3..=PI - 0.3).contains(&x_prev) {
                let c = (x_prev.cos() / x_prev.sin()) * dt;
                let dx = x - x_prev;
                scc += c * c;
                scd += c * dx;
                sdd += dx * dx;
                sc += c;
                sd += dx;
                count += 1;
            }
            x_prev = x;
        }
    }
    if count < 1000 {
        return Err(SleError::InsufficientData);
    }
    let n = count as f64;
    let cov = scd / n - (sc / n) * (sd / n);
    let vc = scc / n - (sc / n) * (sc / n);
    let vd = sdd / n - (sd / n) * (sd / n);
    Ok(BesselReport {
        b_hat: scd / scc,
        sigma2_hat: sdd / n / dt,
        r2: cov * cov / (vc * vd).max(1e-300),
        n_increments: count,
    })
}

/// Branching SLE(kappa, kappa - 6) over a finite target set: one shared
/// driving realization per group of still-connected targets; targets that
/// get disconnected (their tracked image is swallowed) split off with a
/// recorded branch time and continue toward their own target in the
/// uniformized coordinates of their complementary component.
#[derive(Debug, Clone)]
pub struct BranchingTree {
    pub targets: Vec<Complex64>,
    pub paths: Vec<SlePath>,
    /// pair (i, j) with i < j -> disconnection time; absent if unbranched
    pub branch_times: BTreeMap<(usize, usize), f64>,
}

/// Swallowing threshold of the disconnection detector.
const DISCONNECT_TOL: f64 = 1e-3;

/// Advances a tracked point one grid step under the forward radial flow,
/// with the driving argument interpolated linearly across the step.
/// Returns None if the point is swallowed during the step.
fn advance_point(w: Complex64, ups0: f64, ups1: f64, dt: f64) -> Option<Complex64> {
    let mut y = w;
    let mut s = 0.0;
    while s < dt {
        let ups = ups0 + (ups1 - ups0) * (s / dt);
        let u = Complex64::from_polar(1.0, ups);
        let gap = (y - u).norm();
        if gap < DISCONNECT_TOL {
            return None;
        }
        let speed = (y.norm() * (y + u).norm()) / gap;
        let h = (0.05 * gap / speed.max(1e-300)).min(dt - s).max(1e-12 * dt);
        let rhs = |y: Complex64, frac: f64| {
            let u = Complex64::from_polar(1.0, ups0 + (ups1 - ups0) * frac);
            -y * (y + u) / (y - u)
        };
        let k1 = rhs(y, s / dt);
        let k2 = rhs(y + 0.5 * h * k1, (s + 0.5 * h) / dt);
        let k3 = rhs(y + 0.5 * h * k2, (s + 0.5 * h) / dt);
        let k4 = rhs(y + h * k3, (s + h) / dt);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    Some(y)
}

pub fn branching_sle(
    targets: &[Complex64],
    kappa: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<BranchingTree, SleError> {
    if !(4.0 < kappa && kappa < 8.0) {
        return Err(SleError::BadParams("kappa must lie in (4, 8)"));
    }
    if targets.is_empty() {
        return Err(SleError::BadParams("need at least one target"));
    }
    for (i, z) in targets.iter().enumerate() {
        if z.norm() >= 1.0 {
            return Err(SleError::BadParams("targets must lie in the open disc"));
        }
        for w in &targets[..i] {
            if (z - w).norm() < 1e-12 {
                return Err(SleError::BadParams("targets must be distinct"));
            }
        }
    }
    let rho = kappa - 6.0;
    let sigma = kappa.sqrt() / 2.0;
    let b = (rho + 2.0) / 4.0;
    let n_steps = (t_end / dt).round().max(1.0) as usize;

    // One group of still-connected targets; the representative (first
    // member) is mapped to the origin by a Mobius map, the others are
    // tracked through the flow.
    struct Group {
        members: Vec<usize>,
        /// current flow images of the members' Mobius-mapped targets
        /// (the representative stays at 0)
        images: Vec<Complex64>,
        st: ZState,
        rng: ChaCha8Rng,
        history: Vec<ZState>,
        start_step: usize,
    }

    let mobius = |a: Complex64, z: Complex64| (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z);
    let mut next_stream = 1u64;
    let mut rng0 = ChaCha8Rng::seed_from_u64(seed);
    let st0 = ZState::new(0.0, 0.0, 0.0, &mut rng0);
    let rep = targets[0];
    let first = Group {
        members: (0..targets.len()).collect(),
        images: targets.iter().map(|&z| mobius(rep, z)).collect(),
        st: st0,
        rng: rng0,
        history: vec![st0],
        start_step: 0,
    };
    let mut groups = vec![first];
    let mut done: Vec<Option<Vec<ZState>>> = vec![None; targets.len()];
    let mut branch_times = BTreeMap::new();

    while let Some(mut g) = groups.pop() {
        let mut step = g.start_step;
        while step < n_steps {
            let ups_prev = g.st.ups;
            g.st.step(sigma, b, dt, &mut g.rng);
            g.history.push(g.st);
            step += 1;
            // advance the tracked images and detect disconnections: either
            // the image comes within the swallowing tolerance of the
            // driving point, or its distance to the unit circle collapses
            // (the conformal radius of the target's component vanishes
            // when the curve closes the component off — the geometric
            // confirmation of the disconnection)
            let mut split = Vec::new();
            for (idx, w) in g.images.iter_mut().enumerate() {
                if idx == 0 {
                    continue; // representative stays at the origin
                }
                match advance_point(*w, ups_prev, g.st.ups, dt) {
                    Some(y) => {
                        if 1.0 - y.norm() < DISCONNECT_TOL {
                            split.push(idx);
                        } else {
                            *w = y;
                        }
                    }
                    None => split.push(idx),
                }
            }
            if !split.is_empty() {
                let t_branch = step as f64 * dt;
                let stay: Vec<usize> =
                    (0..g.members.len()).filter(|i| !split.contains(i)).collect();
                for &i in &stay {
                    for &j in &split {
                        let (a, bb) = (g.members[i].min(g.members[j]), g.members[i].max(g.members[j]));
                        branch_times.insert((a, bb), t_branch);
                    }
                }
                // members swallowed together stay in one group; their
                // mutual branch times are recorded when that group splits
                // split members continue as a fresh group in the
                // uniformized coordinates of their component, with the
                // shared history copied up to the branch time
                let split_members: Vec<usize> = split.iter().map(|&i| g.members[i]).collect();
                let rep_new = targets[split_members[0]];
                let mut rng_new = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(next_stream)));
                next_stream += 1;
                let st_new = ZState::new(g.st.t, 0.0, 0.0, &mut rng_new);
                let mut hist_new = g.history.clone();
                hist_new.truncate(step + 1);
                groups.push(Group {
                    members: split_members.clone(),
                    images: split_members.iter().map(|&m| mobius(rep_new, targets[m])).collect(),
                    st: st_new,
                    rng: rng_new,
                    // continuation restarts its Z-state but the recorded
                    // path keeps the shared prefix
                    history: hist_new,
                    start_step: step,
                });
                let keep: Vec<usize> = stay.clone();
                g.members = keep.iter().map(|&i| g.members[i]).collect();
                g.images = keep.iter().map(|&i| g.images[i]).collect();
            }
        }
        for &m in &g.members {
            done[m] = Some(g.history.clone());
        }
    }

    // assemble per-target SlePaths from the recorded states
    let mut paths = Vec::with_capacity(targets.len());
    for hist in done.into_iter() {
        let hist = hist.expect("every target finishes in some group");
        let mut t = Vec::with_capacity(hist.len());
        let mut ups = Vec::with_capacity(hist.len());
        let mut phi = Vec::with_capacity(hist.len());
        let mut xs = Vec::with_capacity(hist.len());
        let mut zs = Vec::with_capacity(hist.len());
        let mut ms = Vec::with_capacity(hist.len());
        let mut ns = Vec::with_capacity(hist.len());
        for st in hist.iter() {
            t.push(st.t);
            ups.push(st.ups);
            phi.push(st.phi);
            xs.push(st.x());
            zs.push(st.z);
            ms.push(st.m());
            ns.push(st.n());
        }
        let last = hist.last().unwrap();
        let (capped, boundary) = (last.capped, last.boundary);
        let total = hist.len() - 1;
        paths.push(SlePath {
            driving: DrivingPath { t, upsilon: ups, phi: Some(phi), dropped_spans: 0 },
            x: xs,
            z: zs,
            m: ms,
            n: ns,
            capped_steps: capped,
            total_steps: total,
            boundary_steps: boundary,
        });
    }
    Ok(BranchingTree { targets: targets.to_vec(), paths, branch_times })
}
