//! Experiment orchestration: disc-shaped domains, crossing / tortuosity /
//! Hölder estimators on exploration trees, the end-to-end interface-vs-SLE
//! driving comparison, and deterministic report persistence.

use crate::lattice::{
    corners, mark_dobrushin, DirEdge, DobrushinDomain, MeshGeometry, Pt, WiredDomain,
};
use crate::loewner::{
    capacity_parametrize, extract_driving_marked, metric_tree, trace_from_driving, CapCurve,
    LoewnerError,
};
use crate::rcmodel::{loop_representation, BondConfig, LoopEnsemble, LoopSampler};
use crate::sle::{simulate_sle_kr, SleError};
use crate::tree::{
    build_branch_ctx, build_tree_ctx, finite_subtree, tree_edge_set, Branch, ExplorationTree,
    TreeContext, TreeError,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error at `{0}`: {1}")]
    Config(String, String),
    #[error("domain marking failed: {0}")]
    Mark(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Sle(#[from] SleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnulusSpec {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub big_r: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Stages to run, in order. Known stages: sample, tree, crossings,
    /// tortuosity, holder, fk_vs_sle, subtree, sle.
    pub stages: Vec<String>,
    /// Medial-lattice diameters of the disc domains (primal radius = d/4).
    pub medial_diameters: Vec<usize>,
    /// Monte Carlo sweeps between retained samples.
    pub sweeps: usize,
    /// Monte Carlo sweeps discarded before the first sample.
    pub burn_in: usize,
    /// Number of retained samples per domain.
    pub samples: usize,
    /// Master seed; required (no entropy defaults).
    pub seed: Option<u64>,
    /// Annuli for crossing counts, in plane coordinates.
    pub annuli: Vec<AnnulusSpec>,
    /// Diameter thresholds for tortuosity tables.
    pub tortuosity_radii: Vec<f64>,
    /// Net scales for finite subtrees.
    pub eta: Vec<f64>,
    /// Time step for SLE comparison runs.
    pub sle_dt: f64,
    /// Number of synthetic SLE paths for self-calibration.
    pub sle_paths: usize,
    /// Horizon for synthetic SLE paths.
    pub sle_horizon: f64,
    /// Output directory for reports.
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stages: vec![],
            medial_diameters: vec![16],
            sweeps: 10,
            burn_in: 50,
            samples: 20,
            seed: None,
            annuli: vec![],
            tortuosity_radii: vec![0.4, 0.2, 0.1],
            eta: vec![0.5],
            sle_dt: 2e-3,
            sle_paths: 12,
            sle_horizon: 2.0,
            out_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |f: &str, m: &str| Err(HarnessError::Config(f.into(), m.into()));
        if self.seed.is_none() {
            return bad("seed", "missing; a seed is required (no entropy defaults)");
        }
        if self.medial_diameters.is_empty() {
            return bad("medial_diameters", "must be non-empty");
        }
        for (i, &d) in self.medial_diameters.iter().enumerate() {
            if d < 8 || d % 4 != 0 {
                return bad(&format!("medial_diameters[{i}]"), "must be a multiple of 4, at least 8");
            }
        }
        if self.sweeps == 0 {
            return bad("sweeps", "must be positive");
        }
        if self.samples == 0 {
            return bad("samples", "must be positive");
        }
        for (i, a) in self.annuli.iter().enumerate() {
            if !(a.r > 0.0 && a.big_r > a.r) {
                return bad(&format!("annuli[{i}]"), "needs 0 < r < big_r");
            }
        }
        for (i, &r) in self.tortuosity_radii.iter().enumerate() {
            if !(r > 0.0) {
                return bad(&format!("tortuosity_radii[{i}]"), "must be positive");
            }
        }
        for (i, &e) in self.eta.iter().enumerate() {
            if !(e > 0.0) {
                return bad(&format!("eta[{i}]"), "must be positive");
            }
        }
        if !(self.sle_dt > 0.0) {
            return bad("sle_dt", "must be positive");
        }
        if self.sle_paths == 0 {
            return bad("sle_paths", "must be positive");
        }
        if !(self.sle_horizon > 0.0) {
            return bad("sle_horizon", "must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HarnessError::Config("<json>".into(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Disc domains and the unit-disk chart
// ---------------------------------------------------------------------------

/// Wired domain whose black vertices fill the disc of the given primal radius.
pub fn disc_domain(r_primal: i64, mesh: f64) -> WiredDomain {
    let mut blacks = BTreeSet::new();
    for x in -r_primal..=r_primal {
        for y in -r_primal..=r_primal {
            if x * x + y * y <= r_primal * r_primal {
                blacks.insert((x, y));
            }
        }
    }
    WiredDomain::from_blacks(blacks, mesh)
}

/// Disc domain for a given medial diameter (primal radius = diameter/4,
/// mesh chosen so the disc has unit plane radius).
pub fn disc_for_diameter(medial_diameter: usize) -> WiredDomain {
    let r = (medial_diameter / 4) as i64;
    disc_domain(r, 1.0 / r as f64)
}

/// First admissible boundary marking of a domain, scanned deterministically.
pub fn mark_first(d: &WiredDomain) -> Result<DobrushinDomain, HarnessError> {
    let interior = d.interior_diagonals();
    for (&m, _) in &d.squares {
        for f in interior.iter().filter(|e| e.dir() == (1, 1)) {
            if let Ok(x) = mark_dobrushin(d, m, *f) {
                return Ok(x);
            }
        }
    }
    Err(HarnessError::Mark("no admissible root/diagonal pair".into()))
}

/// Similarity taking the domain onto (a subset of) the closed unit disk:
/// recenters on the centroid of the black vertices and scales by the largest
/// medial-corner radius, so every lattice point maps into |z| <= 1.
pub struct DiscChart {
    pub center: Complex64,
    pub radius: f64,
    geom: MeshGeometry,
}

impl DiscChart {
    pub fn new(d: &WiredDomain) -> DiscChart {
        let geom = d.geom.clone();
        let mut cx = 0.0;
        let mut cy = 0.0;
        for &b in &d.blacks {
            let (x, y) = geom.to_plane((8 * b.0, 8 * b.1));
            cx += x;
            cy += y;
        }
        let n = d.blacks.len().max(1) as f64;
        let center = Complex64::new(cx / n, cy / n);
        let mut radius = 0.0f64;
        for (&m, _) in &d.squares {
            for c in corners(m) {
                let (x, y) = geom.to_plane(c);
                radius = radius.max((Complex64::new(x, y) - center).norm());
            }
        }
        DiscChart { center, radius: radius * (1.0 + 1e-9), geom }
    }

    pub fn plane(&self, p: Pt) -> Complex64 {
        let (x, y) = self.geom.to_plane(p);
        Complex64::new(x, y)
    }

    pub fn map(&self, p: Pt) -> Complex64 {
        (self.plane(p) - self.center) / self.radius
    }
}

/// Polyline of medial vertices visited by a branch (start corner included).
pub fn branch_points(br: &Branch) -> Vec<Pt> {
    let mut pts = Vec::with_capacity(br.path.len() + 1);
    pts.push(br.path[0].tail);
    for e in &br.path {
        pts.push(e.head);
    }
    pts
}

/// Branch as a curve in the closed unit disk, start projected onto the
/// circle (the zipper requires the curve to begin on the boundary).
pub fn branch_curve(br: &Branch, chart: &DiscChart) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for (i, p) in branch_points(br).into_iter().enumerate() {
        let mut z = chart.map(p);
        if i == 0 {
            z /= z.norm();
        } else if z.norm() >= 1.0 - 1e-12 {
            z *= (1.0 - 1e-9) / z.norm();
        }
        if out.last().map_or(true, |&w| (w - z).norm() > 1e-15) {
            out.push(z);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Crossing counts (exact vertex-disjoint packing via max flow)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Annulus {
    pub z0: Complex64,
    pub r: f64,
    pub big_r: f64,
}

impl From<&AnnulusSpec> for Annulus {
    fn from(a: &AnnulusSpec) -> Annulus {
        Annulus { z0: Complex64::new(a.x, a.y), r: a.r, big_r: a.big_r }
    }
}

struct MaxFlow {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i32>,
}

impl MaxFlow {
    fn new(n: usize) -> MaxFlow {
        MaxFlow { adj: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }
    fn add(&mut self, u: usize, v: usize, c: i32) {
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }
    fn run(&mut self, s: usize, t: usize) -> usize {
        let mut total = 0;
        loop {
            let mut prev = vec![usize::MAX; self.adj.len()];
            let mut via = vec![usize::MAX; self.adj.len()];
            let mut q = VecDeque::from([s]);
            prev[s] = s;
            while let Some(u) = q.pop_front() {
                if u == t {
                    break;
                }
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && prev[v] == usize::MAX {
                        prev[v] = u;
                        via[v] = e;
                        q.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                v = prev[v];
            }
            total += 1;
        }
    }
}

/// Maximum number of vertex-disjoint tree segments each touching both the
/// inner disk and the outer complement of the annulus. Exact (Menger's
/// theorem via unit-capacity max flow with split vertices).
pub fn count_disjoint_crossings(t: &ExplorationTree, ann: &Annulus) -> usize {
    let chart = DiscChart::new(&t.dob.base);
    let edges = tree_edge_set(t);
    let mut idx: HashMap<Pt, usize> = HashMap::new();
    let mut verts: Vec<Pt> = Vec::new();
    for e in &edges {
        for p in [e.tail, e.head] {
            idx.entry(p).or_insert_with(|| {
                verts.push(p);
                verts.len() - 1
            });
        }
    }
    let n = verts.len();
    if n == 0 {
        return 0;
    }
    // nodes: 2i (in), 2i+1 (out), then source, sink
    let s = 2 * n;
    let tk = 2 * n + 1;
    let mut mf = MaxFlow::new(2 * n + 2);
    let mut any_inner = false;
    let mut any_outer = false;
    for (i, &p) in verts.iter().enumerate() {
        mf.add(2 * i, 2 * i + 1, 1);
        let d = (chart.plane(p) - ann.z0).norm();
        if d < ann.r {
            mf.add(s, 2 * i, 1);
            any_inner = true;
        } else if d > ann.big_r {
            mf.add(2 * i + 1, tk, 1);
            any_outer = true;
        }
    }
    if !any_inner || !any_outer {
        return 0;
    }
    for e in &edges {
        let (u, v) = (idx[&e.tail], idx[&e.head]);
        mf.add(2 * u + 1, 2 * v, 1);
        mf.add(2 * v + 1, 2 * u, 1);
    }
    mf.run(s, tk)
}

// ---------------------------------------------------------------------------
// Tortuosity and Hölder estimates
// ---------------------------------------------------------------------------

/// Minimal number of consecutive curve segments of diameter <= r covering
/// the polyline (segments share their split vertices); the greedy
/// left-to-right split is optimal for this objective. A single edge longer
/// than r counts as one segment so the count is always defined.
pub fn tortuosity(points: &[Complex64], r: f64) -> usize {
    let n = points.len();
    if n <= 1 {
        return usize::from(n == 1);
    }
    let mut blocks = 0;
    let mut i = 0;
    while i + 1 < n {
        blocks += 1;
        let mut j = i + 1;
        if (points[i] - points[j]).norm() > r {
            // over-long edge: a single-edge segment, never extended
            i = j;
            continue;
        }
        'ext: while j + 1 < n {
            for k in i..=j {
                if (points[k] - points[j + 1]).norm() > r {
                    break 'ext;
                }
            }
            j += 1;
        }
        i = j;
    }
    blocks
}

/// Brute-force minimal segment count by dynamic programming (oracle for
/// tests; cubic in the number of vertices).
pub fn tortuosity_brute(points: &[Complex64], r: f64) -> usize {
    let n = points.len();
    if n <= 1 {
        return usize::from(n == 1);
    }
    let mut best = vec![usize::MAX; n];
    best[0] = 0;
    for j in 1..n {
        for i in (0..j).rev() {
            if best[i] == usize::MAX {
                continue;
            }
            let fits = j == i + 1
                || (i..=j).all(|a| (i..=j).all(|b| (points[a] - points[b]).norm() <= r));
            if fits {
                best[j] = best[j].min(best[i] + 1);
            }
            // once the block [i..=j] is too wide, smaller i cannot help
            if !fits && j > i + 1 {
                break;
            }
        }
    }
    best[n - 1]
}

/// Empirical Hölder norms sup |g(s) - g(t)| / |s - t|^a over dyadic pairs of
/// the arclength-normalized parametrization, for a in {0.1, ..., 0.5}.
pub fn holder_estimate(points: &[Complex64]) -> Vec<(f64, f64)> {
    const LEVELS: u32 = 8;
    let exponents = [0.1, 0.2, 0.3, 0.4, 0.5];
    if points.len() < 2 {
        return exponents.iter().map(|&a| (a, 0.0)).collect();
    }
    let mut s = vec![0.0];
    for w in points.windows(2) {
        s.push(s.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *s.last().unwrap();
    if total <= 0.0 {
        return exponents.iter().map(|&a| (a, 0.0)).collect();
    }
    let n = 1usize << LEVELS;
    let mut g = Vec::with_capacity(n + 1);
    let mut k = 0;
    for m in 0..=n {
        let target = total * m as f64 / n as f64;
        while k + 1 < s.len() - 1 && s[k + 1] < target {
            k += 1;
        }
        let span = (s[k + 1] - s[k]).max(1e-300);
        let f = ((target - s[k]) / span).clamp(0.0, 1.0);
        g.push(points[k] + f * (points[k + 1] - points[k]));
    }
    exponents
        .iter()
        .map(|&a| {
            let mut norm = 0.0f64;
            for i in 0..=n {
                for j in i + 1..=n {
                    let dt = (j - i) as f64 / n as f64;
                    norm = norm.max((g[j] - g[i]).norm() / dt.powf(a));
                }
            }
            (a, norm)
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
pub fn ks_pvalue(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return 1.0;
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k + 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Driving extraction and the kappa estimator
// ---------------------------------------------------------------------------

/// Driving data of one curve sampled at the capacities of its vertices.
#[derive(Debug, Clone, Serialize)]
pub struct DrivingSample {
    pub t: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub phi: Option<Vec<f64>>,
}

fn interp(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return vs[0];
    }
    if t >= *ts.last().unwrap() {
        return *vs.last().unwrap();
    }
    let k = ts.partition_point(|&x| x <= t) - 1;
    let span = ts[k + 1] - ts[k];
    if span <= 0.0 {
        return vs[k + 1];
    }
    vs[k] + (vs[k + 1] - vs[k]) * (t - ts[k]) / span
}

/// Extracts the driving angle (and the lifted marked-point angle, if given)
/// of a curve in the unit disk, reported at the capacity of each vertex.
pub fn curve_driving(
    curve: &[Complex64],
    marked: Option<Complex64>,
) -> Result<DrivingSample, LoewnerError> {
    let (path, caps) = extract_driving_marked(curve, 1e-3, marked)?;
    let t: Vec<f64> = caps.clone();
    let upsilon: Vec<f64> = caps.iter().map(|&c| interp(&path.t, &path.upsilon, c)).collect();
    let phi = path
        .phi
        .as_ref()
        .map(|ph| caps.iter().map(|&c| interp(&path.t, ph, c)).collect());
    Ok(DrivingSample { t, upsilon, phi })
}

/// Pooled quadratic-variation estimate of the driving diffusivity with a
/// jackknife confidence interval (95%, leave-one-curve-out). Each curve is
/// truncated at 1.5x the median capacity span, which removes the capacity
/// blowup of curves that pass arbitrarily close to the disk center.
pub fn qv_kappa(samples: &[DrivingSample]) -> Option<(f64, f64, f64)> {
    const CELLS: usize = 256;
    let mut spans: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.t.last().copied())
        .filter(|t| t.is_finite() && *t > 0.0)
        .collect();
    if spans.is_empty() {
        return None;
    }
    spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t_cap = 1.5 * spans[spans.len() / 2];
    let mut qv = Vec::new();
    let mut tau = Vec::new();
    for s in samples {
        let t_end = s.t.last()?.min(t_cap);
        if !(t_end > 0.0) || s.t.len() < 8 {
            continue;
        }
        let h = t_end / CELLS as f64;
        let mut q = 0.0;
        let mut prev = interp(&s.t, &s.upsilon, 0.0);
        for k in 1..=CELLS {
            let u = interp(&s.t, &s.upsilon, k as f64 * h);
            q += (u - prev) * (u - prev);
            prev = u;
        }
        qv.push(q);
        tau.push(t_end);
    }
    let n = qv.len();
    if n < 2 {
        return None;
    }
    let sq: f64 = qv.iter().sum();
    let st: f64 = tau.iter().sum();
    let kappa = sq / st;
    // jackknife over curves
    let mut jack = Vec::with_capacity(n);
    for i in 0..n {
        jack.push((sq - qv[i]) / (st - tau[i]));
    }
    let jm = jack.iter().sum::<f64>() / n as f64;
    let var = jack.iter().map(|&x| (x - jm) * (x - jm)).sum::<f64>() * (n - 1) as f64 / n as f64;
    let half = 1.96 * var.sqrt();
    Some((kappa, kappa - half, kappa + half))
}

// ---------------------------------------------------------------------------
// Sampling pipeline
// ---------------------------------------------------------------------------

/// A Markov chain over bond configurations on one domain; yields decorrelated
/// samples separated by full Metropolis sweeps.
pub struct SampleChain<'a> {
    sampler: LoopSampler<'a>,
    rng: ChaCha8Rng,
    sweeps: usize,
}

impl<'a> SampleChain<'a> {
    pub fn new(d: &'a WiredDomain, seed: u64, burn_in: usize, sweeps: usize) -> SampleChain<'a> {
        let mut chain = SampleChain {
            sampler: LoopSampler::new(d, BondConfig::all(d.n_bonds(), false)),
            rng: ChaCha8Rng::seed_from_u64(seed),
            sweeps,
        };
        chain.advance(burn_in);
        chain
    }

    fn advance(&mut self, sweeps: usize) {
        let n = self.sampler.domain.n_bonds();
        for _ in 0..sweeps * n {
            self.sampler.step(&mut self.rng);
        }
    }

    pub fn next_config(&mut self) -> BondConfig {
        self.advance(self.sweeps);
        BondConfig { open: self.sampler.open.clone() }
    }
}

/// Target edge whose midpoint image is closest to the disk point `z`.
pub fn target_nearest(ctx: &TreeContext, chart: &DiscChart, z: Complex64) -> Option<DirEdge> {
    ctx.targets
        .iter()
        .min_by(|a, b| {
            mid_norm(chart, a, z).partial_cmp(&mid_norm(chart, b, z)).unwrap()
        })
        .cloned()
}

fn mid_norm(chart: &DiscChart, e: &DirEdge, z: Complex64) -> f64 {
    (0.5 * (chart.map(e.tail) + chart.map(e.head)) - z).norm()
}

/// One sampled interface: the exploration branch toward the target nearest
/// the domain center, as a curve in the unit disk.
pub struct InterfaceSample {
    pub curve: Vec<Complex64>,
    pub driving: DrivingSample,
}

pub fn sample_interface(
    dob: &DobrushinDomain,
    chart: &DiscChart,
    ens: &LoopEnsemble,
) -> Result<InterfaceSample, HarnessError> {
    let ctx = TreeContext::new(dob, ens)?;
    let target = target_nearest(&ctx, chart, Complex64::new(0.0, 0.0))
        .ok_or_else(|| HarnessError::Mark("no interior targets".into()))?;
    let br = build_branch_ctx(&ctx, target)?;
    let curve = branch_curve(&br, chart);
    let b_img = {
        let z = chart.map(dob.b());
        z / z.norm()
    };
    let driving = curve_driving(&curve, Some(b_img))?;
    Ok(InterfaceSample { curve, driving })
}

// ---------------------------------------------------------------------------
// End-to-end comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub medial_diameter: usize,
    pub n_samples: usize,
    pub kappa_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// |mean drift of e^t cos X between capacity 0.5 and 1.0| in SE units.
    pub m_drift_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticReport {
    pub kappa_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FkSleReport {
    pub levels: Vec<LevelReport>,
    pub synthetic: SyntheticReport,
    pub target: f64,
}

/// Drift of the discrete parafermionic martingale estimate M = e^t cos X with
/// X = (phi - upsilon)/2, between capacities t0 and t1, in SE units.
pub fn m_drift_se(samples: &[DrivingSample], t0: f64, t1: f64) -> f64 {
    let mut diffs = Vec::new();
    for s in samples {
        let Some(phi) = &s.phi else { continue };
        if *s.t.last().unwrap() < t1 {
            continue;
        }
        let m_at = |t: f64| {
            let x = 0.5 * (interp(&s.t, phi, t) - interp(&s.t, &s.upsilon, t));
            t.exp() * x.cos()
        };
        diffs.push(m_at(t1) - m_at(t0));
    }
    if diffs.len() < 2 {
        return f64::INFINITY;
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    mean.abs() / (var / n).sqrt().max(1e-300)
}

/// Samples interfaces on one disc domain and estimates the driving
/// diffusivity.
pub fn level_run(
    medial_diameter: usize,
    samples: usize,
    burn_in: usize,
    sweeps: usize,
    seed: u64,
) -> Result<(LevelReport, Vec<InterfaceSample>), HarnessError> {
    let d = disc_for_diameter(medial_diameter);
    let dob = mark_first(&d)?;
    let chart = DiscChart::new(&d);
    let mut chain = SampleChain::new(&d, seed, burn_in, sweeps);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let cfg = chain.next_config();
        let ens = loop_representation(&d, &cfg);
        match sample_interface(&dob, &chart, &ens) {
            Ok(s) => out.push(s),
            // a curve that grazes the boundary can defeat the zipper; skip it
            Err(HarnessError::Loewner(LoewnerError::NonSimple(_))) => continue,
            Err(e) => return Err(e),
        }
    }
    let drivings: Vec<DrivingSample> = out.iter().map(|s| s.driving.clone()).collect();
    let (kappa_hat, ci_lo, ci_hi) = qv_kappa(&drivings)
        .ok_or_else(|| HarnessError::Mark("too few usable interface samples".into()))?;
    let report = LevelReport {
        medial_diameter,
        n_samples: out.len(),
        kappa_hat,
        ci_lo,
        ci_hi,
        m_drift_se: m_drift_se(&drivings, 0.5, 1.0),
    };
    Ok((report, out))
}

/// Applies the same QV estimator to traces synthesized from radial
/// SLE(16/3, -2/3) driving (self-calibration oracle).
pub fn synthetic_calibration(
    n_paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<SyntheticReport, HarnessError> {
    let kappa = 16.0 / 3.0;
    let rho = -2.0 / 3.0;
    let mut drivings = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        let p = simulate_sle_kr(kappa, rho, 0.0, std::f64::consts::PI, horizon, dt, seed + k as u64)?;
        let tr = trace_from_driving(&p.driving, 1e-2)?;
        drivings.push(curve_driving(&tr.gamma, None)?);
    }
    let (kappa_hat, ci_lo, ci_hi) = qv_kappa(&drivings)
        .ok_or_else(|| HarnessError::Mark("too few synthetic paths".into()))?;
    Ok(SyntheticReport { kappa_hat, ci_lo, ci_hi, n_paths })
}

pub fn fk_vs_sle(cfg: &ExperimentConfig) -> Result<FkSleReport, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap();
    let mut levels = Vec::new();
    for (i, &d) in cfg.medial_diameters.iter().enumerate() {
        let (rep, _) = level_run(d, cfg.samples, cfg.burn_in, cfg.sweeps, seed ^ (i as u64 + 1))?;
        levels.push(rep);
    }
    let synthetic = synthetic_calibration(cfg.sle_paths, cfg.sle_horizon, cfg.sle_dt, seed ^ 0x5e5e)?;
    Ok(FkSleReport { levels, synthetic, target: 16.0 / 3.0 })
}

// ---------------------------------------------------------------------------
// Tree metrics (capacity-parametrized branch curves)
// ---------------------------------------------------------------------------

/// Capacity-parametrizes every branch of a tree in its unit-disk chart,
/// thinning the polylines to keep the zipper affordable.
pub fn tree_curves(t: &ExplorationTree, thin: usize) -> Result<Vec<CapCurve>, HarnessError> {
    let chart = DiscChart::new(&t.dob.base);
    let step = thin.max(1);
    let mut out = Vec::with_capacity(t.branches.len());
    for br in t.branches.values() {
        let full = branch_curve(br, &chart);
        let mut pts: Vec<Complex64> = full.iter().step_by(step).cloned().collect();
        if (pts.last() != full.last()) && full.last().is_some() {
            pts.push(*full.last().unwrap());
        }
        out.push(capacity_parametrize(&pts, 1e-2)?);
    }
    Ok(out)
}

/// Hausdorff tree distance between a restriction and the full tree.
pub fn subtree_distance(sub: &ExplorationTree, full: &ExplorationTree, thin: usize) -> Result<f64, HarnessError> {
    let a = tree_curves(sub, thin)?;
    let b = tree_curves(full, thin)?;
    Ok(metric_tree(&a, &b)?)
}

// ---------------------------------------------------------------------------
// Experiment runner and persistence
// ---------------------------------------------------------------------------

fn fnv_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Output file name -> FNV-1a hash of its bytes.
    pub outputs: BTreeMap<String, String>,
}

fn write_output(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    manifest: &mut BTreeMap<String, String>,
) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(dir.join(name))?;
    f.write_all(bytes)?;
    manifest.insert(name.to_string(), format!("{:016x}", fnv_bytes(bytes)));
    Ok(())
}

/// Executes the configured stages and writes CSV/JSON reports plus a
/// manifest; reports are a pure function of the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap();
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir)?;
    let mut outputs = BTreeMap::new();

    let diameter = cfg.medial_diameters[0];
    let d = disc_for_diameter(diameter);
    let dob = mark_first(&d)?;
    let chart = DiscChart::new(&d);

    for stage in &cfg.stages {
        match stage.as_str() {
            "sample" => {
                let mut chain = SampleChain::new(&d, seed ^ 1, cfg.burn_in, cfg.sweeps);
                let mut csv = String::from("sample,n_open,n_loops\n");
                for k in 0..cfg.samples {
                    let c = chain.next_config();
                    let ens = loop_representation(&d, &c);
                    let open = c.open.iter().filter(|&&b| b).count();
                    csv += &format!("{k},{open},{}\n", ens.loops.len());
                }
                write_output(&dir, "samples.csv", csv.as_bytes(), &mut outputs)?;
            }
            "tree" => {
                let mut chain = SampleChain::new(&d, seed ^ 2, cfg.burn_in, cfg.sweeps);
                let ens = loop_representation(&d, &chain.next_config());
                let ctx = TreeContext::new(&dob, &ens)?;
                let tree = build_tree_ctx(&ctx, ctx.targets.clone())?;
                let mut text = String::new();
                for (tgt, br) in &tree.branches {
                    text += &format!(
                        "{:?}->{:?}: {}\n",
                        tgt.tail,
                        tgt.head,
                        br.path.len()
                    );
                }
                write_output(&dir, "tree.txt", text.as_bytes(), &mut outputs)?;
            }
            "crossings" => {
                let mut chain = SampleChain::new(&d, seed ^ 3, cfg.burn_in, cfg.sweeps);
                let mut csv = String::from("annulus,sample,count\n");
                let mut ge6: Vec<usize> = vec![0; cfg.annuli.len()];
                for k in 0..cfg.samples {
                    let ens = loop_representation(&d, &chain.next_config());
                    let ctx = TreeContext::new(&dob, &ens)?;
                    let tree = build_tree_ctx(&ctx, ctx.targets.clone())?;
                    for (i, a) in cfg.annuli.iter().enumerate() {
                        let c = count_disjoint_crossings(&tree, &Annulus::from(a));
                        if c >= 6 {
                            ge6[i] += 1;
                        }
                        csv += &format!("{i},{k},{c}\n");
                    }
                }
                let mut summary = String::from("annulus,r,big_r,p_ge6\n");
                for (i, a) in cfg.annuli.iter().enumerate() {
                    summary += &format!(
                        "{i},{:.6},{:.6},{:.6}\n",
                        a.r,
                        a.big_r,
                        ge6[i] as f64 / cfg.samples as f64
                    );
                }
                write_output(&dir, "crossings.csv", csv.as_bytes(), &mut outputs)?;
                write_output(&dir, "crossings_summary.csv", summary.as_bytes(), &mut outputs)?;
            }
            "tortuosity" => {
                let mut chain = SampleChain::new(&d, seed ^ 4, cfg.burn_in, cfg.sweeps);
                let mut csv = String::from("sample,r,m_r\n");
                for k in 0..cfg.samples {
                    let ens = loop_representation(&d, &chain.next_config());
                    let s = sample_interface(&dob, &chart, &ens)?;
                    for &r in &cfg.tortuosity_radii {
                        csv += &format!("{k},{r:.6},{}\n", tortuosity(&s.curve, r));
                    }
                }
                write_output(&dir, "tortuosity.csv", csv.as_bytes(), &mut outputs)?;
            }
            "holder" => {
                let mut chain = SampleChain::new(&d, seed ^ 5, cfg.burn_in, cfg.sweeps);
                let mut csv = String::from("sample,exponent,norm\n");
                for k in 0..cfg.samples {
                    let ens = loop_representation(&d, &chain.next_config());
                    let s = sample_interface(&dob, &chart, &ens)?;
                    for (a, norm) in holder_estimate(&s.curve) {
                        csv += &format!("{k},{a:.1},{norm:.9e}\n");
                    }
                }
                write_output(&dir, "holder.csv", csv.as_bytes(), &mut outputs)?;
            }
            "fk_vs_sle" => {
                let rep = fk_vs_sle(cfg)?;
                let json = serde_json::to_vec_pretty(&rep)?;
                write_output(&dir, "fk_vs_sle.json", &json, &mut outputs)?;
            }
            "subtree" => {
                let mut chain = SampleChain::new(&d, seed ^ 6, cfg.burn_in, cfg.sweeps);
                let ens = loop_representation(&d, &chain.next_config());
                let ctx = TreeContext::new(&dob, &ens)?;
                let tree = build_tree_ctx(&ctx, ctx.targets.clone())?;
                let uni = |p: Pt| chart.map(p);
                let mut csv = String::from("eta,n_branches,n_full,d_tree\n");
                for &eta in &cfg.eta {
                    let sub = finite_subtree(&tree, eta, &uni)?;
                    let dist = subtree_distance(&sub, &tree, 1)?;
                    csv += &format!("{eta:.6},{},{},{dist:.9e}\n", sub.branches.len(), tree.branches.len());
                }
                write_output(&dir, "subtree.csv", csv.as_bytes(), &mut outputs)?;
            }
            "sle" => {
                let rep = synthetic_calibration(cfg.sle_paths, cfg.sle_horizon, cfg.sle_dt, seed ^ 7)?;
                let json = serde_json::to_vec_pretty(&rep)?;
                write_output(&dir, "sle.json", &json, &mut outputs)?;
            }
            other => {
                return Err(HarnessError::Config(
                    "stages".into(),
                    format!("unknown stage `{other}`"),
                ));
            }
        }
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_hash: format!("{:016x}", fnv_bytes(serde_json::to_string(cfg)?.as_bytes())),
        outputs,
    };
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}
