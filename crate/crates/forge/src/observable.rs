//! Fermionic observables of the critical FK Ising loop model on marked
//! domains: exact enumeration and Monte Carlo estimators of the edge
//! observables, their closed-form continuum counterparts on the unit disc,
//! the boundary-arc coefficient formulas, and the quartic double-root
//! verification that pins those coefficients.

use crate::dca::EdgeField;
use crate::lattice::{DirEdge, DobrushinDomain, Pt};
use crate::rcmodel::{BondConfig, LoopSampler, SQRT2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum ObsError {
    #[error("{0} interior edges exceed the enumeration guard of 24")]
    TooLarge(usize),
    #[error("no samples requested")]
    NoSamples,
    #[error("arc ordering must satisfy υ ≤ φ ≤ υ + 2π: got ({0}, {1})")]
    BadArc(f64, f64),
    #[error("double-root verification failed: max residual {0:.3e}")]
    VerificationFailed(f64),
    #[error("evaluation point is singular (0, u or v)")]
    Singular,
}

// -- winding ---------------------------------------------------------------------

/// A traced interface with its cumulative turning, in exact π/4 units.
#[derive(Clone, Debug)]
pub struct WindingPath {
    pub edges: Vec<DirEdge>,
    /// cum_turn[j] = total turning (π/4 units) accumulated when edges[j]
    /// is traversed, relative to the first edge.
    pub cum_turn: Vec<i32>,
}

fn octant(d: Pt) -> i32 {
    match d {
        (1, 0) => 0,
        (1, 1) => 1,
        (0, 1) => 2,
        (-1, 1) => 3,
        (-1, 0) => 4,
        (-1, -1) => 5,
        (0, -1) => 6,
        (1, -1) => 7,
        _ => unreachable!("degenerate edge direction"),
    }
}

/// Signed turning from e1 to e2 in π/4 units, in (−4, 4].
fn turn(e1: &DirEdge, e2: &DirEdge) -> i32 {
    let k = (octant(e2.dir()) - octant(e1.dir())).rem_euclid(8);
    let k = if k > 4 { k - 8 } else { k };
    debug_assert!(k.abs() <= 2, "interfaces turn by at most π/2 per step");
    k
}

/// e^{−(i/2) W} for a winding of k quarter-of-π turns (W = kπ/4).
fn half_winding_phase(k: i32) -> Complex64 {
    Complex64::from_polar(1.0, -(k as f64) * PI / 8.0)
}

/// Trace the loop through `start` in the successor structure; the returned
/// path begins with `start` and stops before repeating it. The second value
/// is the total turning of the closed loop (±8 quarter-of-π units).
pub fn trace_loop(succ: &HashMap<Pt, DirEdge>, start: DirEdge) -> (WindingPath, i32) {
    let mut edges = vec![start];
    let mut cum_turn = vec![0i32];
    let mut cur = start;
    loop {
        let next = succ[&cur.head];
        if next == start {
            let total = cum_turn.last().unwrap() + turn(&cur, &next);
            return (WindingPath { edges, cum_turn }, total);
        }
        cum_turn.push(cum_turn.last().unwrap() + turn(&cur, &next));
        edges.push(next);
        cur = next;
    }
}

/// Trace from `start` until an edge whose head is `stop` has been taken.
pub fn trace_until(succ: &HashMap<Pt, DirEdge>, start: DirEdge, stop: Pt) -> WindingPath {
    let mut edges = vec![start];
    let mut cum_turn = vec![0i32];
    let mut cur = start;
    while cur.head != stop {
        let next = succ[&cur.head];
        cum_turn.push(cum_turn.last().unwrap() + turn(&cur, &next));
        edges.push(next);
        cur = next;
    }
    WindingPath { edges, cum_turn }
}

// -- exact observables -----------------------------------------------------------

/// The interior observable: edge values plus the two half-edge values at the
/// marked edge (which the edge map cannot key separately).
#[derive(Clone, Debug)]
pub struct FObservable {
    pub edges: EdgeField,
    /// Value at the outgoing half of the marked edge (tail to midpoint).
    pub at_f_out: Complex64,
    /// Value at the incoming half (midpoint to head).
    pub at_f_in: Complex64,
}

/// Both exact observables in one enumeration pass.
pub struct ExactObservables {
    pub f: FObservable,
    pub f_tilde: EdgeField,
}

/// Per-configuration contributions of the two observables. Windings are
/// taken along the reversed traversal, which makes them differences of the
/// forward cumulative turning: W(ref, e) = T(e) − T(ref).
fn config_contribution(
    dob: &DobrushinDomain,
    succ: &HashMap<Pt, DirEdge>,
    weight: f64,
    f_acc: &mut BTreeMap<DirEdge, Complex64>,
    f_out: &mut Complex64,
    f_in: &mut Complex64,
    ft_acc: &mut BTreeMap<DirEdge, Complex64>,
) {
    // interior observable: the loop through the marked edge, cut at its
    // midpoint; the boundary loop is closed through the external arc, whose
    // geometry only shifts the winding by a multiple of 4π (invisible in the
    // half-angle phase), so the straight closing side stands in for it.
    let (gamma, total) = trace_loop(succ, dob.f);
    debug_assert_eq!(total.abs(), 8, "simple closed curves turn by ±2π");
    for (j, e) in gamma.edges.iter().enumerate() {
        let ph = half_winding_phase(gamma.cum_turn[j] - total);
        if j == 0 {
            // the incoming half of the marked edge: winding relative to the
            // outgoing half is minus the full turn of the loop
            *f_in -= weight * ph;
        } else {
            *f_acc.entry(*e).or_insert(Complex64::new(0.0, 0.0)) -= weight * ph;
        }
    }
    // the outgoing half itself carries zero winding
    *f_out -= weight;

    // boundary observable: the interface from a to b, traced with the cut
    // side removed; the marked edge, when crossed, is closed through its own
    // external arc which again contributes a multiple of 4π.
    let path = trace_until(succ, dob.e_i, dob.cut_side.tail);
    let t_end = *path.cum_turn.last().unwrap();
    for (j, e) in path.edges.iter().enumerate() {
        let ph = half_winding_phase(path.cum_turn[j] - t_end);
        *ft_acc.entry(*e).or_insert(Complex64::new(0.0, 0.0)) += weight * ph;
    }
}

/// Exact expectations by enumeration over all bond configurations under the
/// loop measure with weight √2 per loop.
pub fn observables_exact(dob: &DobrushinDomain) -> Result<ExactObservables, ObsError> {
    let d = &dob.base;
    let n = d.n_bonds();
    if n > 24 {
        return Err(ObsError::TooLarge(n));
    }
    let mut f_acc: BTreeMap<DirEdge, Complex64> = BTreeMap::new();
    let mut ft_acc: BTreeMap<DirEdge, Complex64> = BTreeMap::new();
    let (mut f_out, mut f_in) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut z = 0.0f64;
    for bits in 0u64..(1 << n) {
        let open: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        let edges = d.active_edges(&open);
        let mut succ = HashMap::with_capacity(edges.len());
        let mut n_cycles = 0usize;
        for e in &edges {
            succ.insert(e.tail, *e);
        }
        // count cycles of the successor permutation
        let mut seen: HashMap<Pt, bool> = HashMap::with_capacity(edges.len());
        for e in &edges {
            if seen.contains_key(&e.tail) {
                continue;
            }
            n_cycles += 1;
            let mut cur = *e;
            loop {
                seen.insert(cur.tail, true);
                cur = succ[&cur.head];
                if cur == *e {
                    break;
                }
            }
        }
        let w = SQRT2.powi(n_cycles as i32);
        z += w;
        config_contribution(dob, &succ, w, &mut f_acc, &mut f_out, &mut f_in, &mut ft_acc);
    }
    for v in f_acc.values_mut() {
        *v /= z;
    }
    for v in ft_acc.values_mut() {
        *v /= z;
    }
    Ok(ExactObservables {
        f: FObservable {
            edges: EdgeField { values: f_acc },
            at_f_out: f_out / z,
            at_f_in: f_in / z,
        },
        f_tilde: EdgeField { values: ft_acc },
    })
}

/// The interior observable alone.
pub fn observable_f_exact(dob: &DobrushinDomain) -> Result<FObservable, ObsError> {
    Ok(observables_exact(dob)?.f)
}

/// The boundary observable alone.
pub fn observable_ftilde_exact(dob: &DobrushinDomain) -> Result<EdgeField, ObsError> {
    Ok(observables_exact(dob)?.f_tilde)
}

// -- holomorphicity defect at the marked edge -----------------------------------

/// The four medial edges perpendicular to the marked edge at its two square
/// endpoints, labeled by compass direction in the frame where the marked
/// edge points east: (NE, NW, SW, SE).
pub fn marked_edge_cross(dob: &DobrushinDomain) -> [Option<DirEdge>; 4] {
    let d = &dob.base;
    let mut by_mid: BTreeMap<Pt, DirEdge> = BTreeMap::new();
    for e in d.interior_diagonals() {
        by_mid.insert(e.mid2(), e);
    }
    let m = dob.w2; // midpoint of the marked edge, doubled
    // rotated-frame compass offsets of the neighboring perpendicular edges'
    // midpoints (doubled): NE ↦ (0, 8), NW ↦ (−8, 0), SW ↦ (0, −8), SE ↦ (8, 0)
    let at = |off: Pt| by_mid.get(&(m.0 + off.0, m.1 + off.1)).copied();
    [at((0, 8)), at((-8, 0)), at((0, -8)), at((8, 0))]
}

/// ∂̄₁ of the interior observable at the marked edge via the four-value
/// difference formula; equals √2 whenever the marked edge and its four
/// perpendicular neighbors all sit between sampled bond squares.
pub fn f_defect(dob: &DobrushinDomain, f: &FObservable) -> Complex64 {
    let [ne, nw, sw, se] = marked_edge_cross(dob);
    // edges the loop through the marked edge never visits (or outside the
    // interior) carry value zero
    let v = |e: Option<DirEdge>| {
        e.and_then(|e| f.edges.values.get(&e).copied()).unwrap_or(Complex64::new(0.0, 0.0))
    };
    let lambda = Complex64::from_polar(1.0, -PI / 4.0);
    0.5 * (lambda.conj() * (v(ne) - v(sw)) - lambda * (v(nw) - v(se)))
}

// -- Monte Carlo estimator -------------------------------------------------------

/// Chain-averaged estimates with across-chain standard errors.
pub struct McObservables {
    pub f: BTreeMap<DirEdge, (Complex64, Complex64)>,
    pub f_tilde: BTreeMap<DirEdge, (Complex64, Complex64)>,
    pub chains: usize,
    pub sweeps: usize,
}

/// Metropolis estimator of both observables: `chains` independent chains of
/// `sweeps` sweeps each (one proposed flip per interior bond per sweep), the
/// first 10% of sweeps discarded, one measurement per retained sweep.
/// Standard errors are across-chain, per real and imaginary part.
pub fn observable_mc(
    dob: &DobrushinDomain,
    chains: usize,
    sweeps: usize,
    seed: u64,
) -> Result<McObservables, ObsError> {
    if chains == 0 || sweeps == 0 {
        return Err(ObsError::NoSamples);
    }
    let d = &dob.base;
    let n = d.n_bonds();
    let burn = sweeps / 10;
    if sweeps <= burn {
        return Err(ObsError::NoSamples);
    }
    let mut per_chain_f: Vec<BTreeMap<DirEdge, Complex64>> = Vec::with_capacity(chains);
    let mut per_chain_ft: Vec<BTreeMap<DirEdge, Complex64>> = Vec::with_capacity(chains);
    for c in 0..chains {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
        let mut sampler = LoopSampler::new(d, BondConfig::all(n, false));
        let mut f_acc: BTreeMap<DirEdge, Complex64> = BTreeMap::new();
        let mut ft_acc: BTreeMap<DirEdge, Complex64> = BTreeMap::new();
        let (mut f_out, mut f_in) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut kept = 0usize;
        for s in 0..sweeps {
            for _ in 0..n {
                sampler.step(&mut rng);
            }
            if s < burn {
                continue;
            }
            kept += 1;
            let edges = d.active_edges(&sampler.open);
            let mut succ = HashMap::with_capacity(edges.len());
            for e in &edges {
                succ.insert(e.tail, *e);
            }
            config_contribution(dob, &succ, 1.0, &mut f_acc, &mut f_out, &mut f_in, &mut ft_acc);
        }
        for v in f_acc.values_mut() {
            *v /= kept as f64;
        }
        for v in ft_acc.values_mut() {
            *v /= kept as f64;
        }
        per_chain_f.push(f_acc);
        per_chain_ft.push(ft_acc);
    }
    let reduce = |per: &[BTreeMap<DirEdge, Complex64>]| {
        let mut keys: BTreeMap<DirEdge, ()> = BTreeMap::new();
        for m in per {
            for k in m.keys() {
                keys.insert(*k, ());
            }
        }
        let mut out = BTreeMap::new();
        for (&k, _) in &keys {
            let vals: Vec<Complex64> = per
                .iter()
                .map(|m| m.get(&k).copied().unwrap_or(Complex64::new(0.0, 0.0)))
                .collect();
            let mean = vals.iter().sum::<Complex64>() / vals.len() as f64;
            let (mut vr, mut vi) = (0.0, 0.0);
            for v in &vals {
                vr += (v.re - mean.re).powi(2);
                vi += (v.im - mean.im).powi(2);
            }
            let norm = (vals.len().max(2) - 1) as f64 * vals.len() as f64;
            let se = Complex64::new((vr / norm).sqrt(), (vi / norm).sqrt());
            out.insert(k, (mean, se));
        }
        out
    };
    Ok(McObservables {
        f: reduce(&per_chain_f),
        f_tilde: reduce(&per_chain_ft),
        chains,
        sweeps,
    })
}

// -- boundary-arc coefficients and the quartic verification ----------------------

/// α = 2cos((φ−υ)/2), β = 2sin((φ−υ)/2)·cos²((υ+φ+π)/4) for boundary
/// arguments υ ≤ φ ≤ υ + 2π; the endpoints are the degenerate limits with
/// β = 0 and α = ±2.
pub fn coefficients(upsilon: f64, phi: f64) -> Result<(f64, f64), ObsError> {
    if !(phi >= upsilon && phi <= upsilon + 2.0 * PI) {
        return Err(ObsError::BadArc(upsilon, phi));
    }
    let half = (phi - upsilon) / 2.0;
    let alpha = 2.0 * half.cos();
    let beta = 2.0 * half.sin() * ((upsilon + phi + PI) / 4.0).cos().powi(2);
    Ok((alpha, beta.max(0.0)))
}

pub struct QReport {
    /// Double root on the counterclockwise arc from u to v.
    pub m: Complex64,
    /// Double root on the complementary arc.
    pub n: Complex64,
    pub max_residual: f64,
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
}

fn poly_deriv(c: &[Complex64]) -> Vec<Complex64> {
    c.iter().enumerate().skip(1).map(|(k, &ck)| ck * k as f64).collect()
}

/// All roots of a polynomial by the Weierstrass–Durand–Kerner iteration.
fn poly_roots(c: &[Complex64]) -> Vec<Complex64> {
    let deg = c.len() - 1;
    let lead = c[deg];
    let monic: Vec<Complex64> = c.iter().map(|&ck| ck / lead).collect();
    let mut roots: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(1.3, 0.7 + 2.0 * PI * k as f64 / deg as f64))
        .collect();
    for _ in 0..600 {
        let mut delta = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = horner(&monic, roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 {
            break;
        }
    }
    roots
}

fn in_ccw_arc(theta: f64, from: f64, to: f64) -> bool {
    let span = (to - from).rem_euclid(2.0 * PI);
    let off = (theta - from).rem_euclid(2.0 * PI);
    off <= span
}

/// Verify that Q(z) = (−z² + iαz + 1)(z−u)(z−v) + β(u−v)z² has two double
/// roots on the unit circle, one on each arc between u = e^{iυ} and
/// v = e^{iφ}. Roots are found by a generic polynomial solver and polished
/// by Newton iteration on Q′ (a double root of Q is a simple root of Q′).
pub fn verify_q(upsilon: f64, phi: f64, alpha: f64, beta: f64) -> Result<QReport, ObsError> {
    if !(phi >= upsilon && phi <= upsilon + 2.0 * PI) {
        return Err(ObsError::BadArc(upsilon, phi));
    }
    let i = Complex64::new(0.0, 1.0);
    let u = Complex64::from_polar(1.0, upsilon);
    let v = Complex64::from_polar(1.0, phi);
    // ascending coefficients of the quartic
    let q = [
        u * v,
        -(u + v) + i * alpha * u * v,
        Complex64::new(1.0, 0.0) - i * alpha * (u + v) - u * v + beta * (u - v),
        i * alpha + u + v,
        Complex64::new(-1.0, 0.0),
    ];
    let dq = poly_deriv(&q);
    let ddq = poly_deriv(&dq);
    let mut roots = poly_roots(&q);
    // pair the four roots into two nearest clusters
    let mut best = (0usize, 1usize, f64::INFINITY);
    for a in 0..4 {
        for b in (a + 1)..4 {
            let sep = (roots[a] - roots[b]).norm();
            if sep < best.2 {
                best = (a, b, sep);
            }
        }
    }
    let (a, b, _) = best;
    let rest: Vec<usize> = (0..4).filter(|k| *k != a && *k != b).collect();
    let mut pair1 = (roots[a] + roots[b]) / 2.0;
    let mut pair2 = (roots[rest[0]] + roots[rest[1]]) / 2.0;
    // Newton polish on Q′
    for _ in 0..50 {
        pair1 -= horner(&dq, pair1) / horner(&ddq, pair1);
        pair2 -= horner(&dq, pair2) / horner(&ddq, pair2);
    }
    roots = vec![pair1, pair2];
    let residual = |z: Complex64| -> f64 {
        horner(&q, z)
            .norm()
            .max(horner(&dq, z).norm())
            .max((z.norm() - 1.0).abs())
    };
    let max_residual = residual(roots[0]).max(residual(roots[1]));
    // assign arcs: m on the counterclockwise arc from u to v
    let (mut m, mut n) = (None, None);
    for r in &roots {
        if in_ccw_arc(r.arg(), upsilon, phi) {
            m = Some(*r);
        } else {
            n = Some(*r);
        }
    }
    match (m, n) {
        (Some(m), Some(n)) if max_residual < 1e-8 => Ok(QReport { m, n, max_residual }),
        _ => Err(ObsError::VerificationFailed(max_residual)),
    }
}

// -- continuum observables on the unit disc --------------------------------------

/// Closed-form continuum data on the unit disc for boundary points
/// u = e^{iυ}, v = e^{iφ}.
pub struct ContinuumObservable {
    pub u: Complex64,
    pub v: Complex64,
    pub upsilon: f64,
    pub phi: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Reference point (on |z| = 1/2) where the square roots take their
    /// principal values; branches continue from here along circular-then-
    /// radial paths.
    pub branch_ref: Complex64,
}

pub fn continuum_observable(upsilon: f64, phi: f64) -> Result<ContinuumObservable, ObsError> {
    let (alpha, beta) = coefficients(upsilon, phi)?;
    let u = Complex64::from_polar(1.0, upsilon);
    let v = Complex64::from_polar(1.0, phi);
    // reference direction on |z|=1/2 as far as possible from u and v
    let mut best = (0.0f64, f64::NEG_INFINITY);
    for k in 0..64 {
        let th = 2.0 * PI * k as f64 / 64.0;
        let p = Complex64::from_polar(0.5, th);
        let dmin = (p - u).norm().min((p - v).norm());
        if dmin > best.1 {
            best = (th, dmin);
        }
    }
    Ok(ContinuumObservable {
        u,
        v,
        upsilon,
        phi,
        alpha,
        beta,
        branch_ref: Complex64::from_polar(0.5, best.0),
    })
}

/// Continue sqrt(radicand) from the principal value at `from` to `to` along
/// the circle through `from` followed by the ray to `to`, picking the branch
/// continuously.
fn continued_sqrt(
    radicand: &dyn Fn(Complex64) -> Complex64,
    from: Complex64,
    to: Complex64,
) -> Complex64 {
    let mut val = radicand(from).sqrt();
    let mut walk = |a: Complex64, b: Complex64, steps: usize| {
        for s in 1..=steps {
            let t = s as f64 / steps as f64;
            // geometric interpolation: arg linearly, radius exponentially
            let r = a.norm().powf(1.0 - t) * b.norm().powf(t);
            let mut da = b.arg() - a.arg();
            while da > PI {
                da -= 2.0 * PI;
            }
            while da < -PI {
                da += 2.0 * PI;
            }
            let z = Complex64::from_polar(r, a.arg() + t * da);
            let w = radicand(z).sqrt();
            val = if (w - val).norm() <= (w + val).norm() { w } else { -w };
        }
    };
    let mid = Complex64::from_polar(from.norm(), to.arg());
    walk(from, mid, 256);
    walk(mid, to, 256);
    val
}

/// Evaluate the continuum triple (F_disc, F̃_disc, H_disc) at z in the open
/// unit disc. H is normalized by H(branch_ref) = 0.
pub fn continuum_f_h(
    z: Complex64,
    obs: &ContinuumObservable,
) -> Result<(Complex64, Complex64, f64), ObsError> {
    let (u, v) = (obs.u, obs.v);
    if z.norm() < 1e-12 || (z - u).norm() < 1e-9 || (z - v).norm() < 1e-9 {
        return Err(ObsError::Singular);
    }
    let alpha = obs.alpha;
    let beta = obs.beta;
    let i = Complex64::new(0.0, 1.0);
    let rad_f = move |w: Complex64| {
        1.0 / (w * w) - 1.0 + i * alpha / w + beta * (1.0 / (w - u) - 1.0 / (w - v))
    };
    let rad_ft = move |w: Complex64| 1.0 / (w - u) - 1.0 / (w - v);
    let f = continued_sqrt(&rad_f, obs.branch_ref, z);
    let ft = continued_sqrt(&rad_ft, obs.branch_ref, z) / PI.sqrt();
    let h = h_disc_raw(z, obs) - h_disc_raw(obs.branch_ref, obs);
    Ok((f, ft, h))
}

/// Im ∫ F² dz, evaluated through a branch of the logarithms continuous on
/// the punctured disc: Im(iα log z) = α log|z| needs no branch, and the
/// two boundary logarithms use arguments measured against the inward
/// normals at u and v, which keeps them in (−π/2, π/2) throughout the disc.
fn h_disc_raw(z: Complex64, obs: &ContinuumObservable) -> f64 {
    let (u, v) = (obs.u, obs.v);
    let lead = -1.0 / z - z;
    let arc = ((u - z) / u).arg() - ((v - z) / v).arg();
    lead.im + obs.alpha * z.norm().ln() + obs.beta * arc
}

/// The two boundary constants of H on the arcs: (ζ on the arc from u to v,
/// ξ on the arc from v to u), normalized like `continuum_f_h`.
pub fn h_arc_constants(obs: &ContinuumObservable) -> (f64, f64) {
    let shift = h_disc_raw(obs.branch_ref, obs);
    let at = |theta: f64| {
        h_disc_raw(Complex64::from_polar(1.0 - 1e-9, theta), obs) - shift
    };
    let mid_uv = (obs.upsilon + obs.phi) / 2.0;
    let mid_vu = mid_uv + PI;
    (at(mid_uv), at(mid_vu))
}

// -- discrete vs continuum ratios ------------------------------------------------

/// Normalization-free comparison of the enumerated interior observable with
/// its continuum form: for sampled pairs of parallel interior edges, compare
/// F_δ(e)/F_δ(e′) with sqrt(Φ′(z)/Φ′(z′))·F_disc(Φ(z))/F_disc(Φ(z′)), where
/// Φ is the uniformizing map onto the disc sending the marked midpoint to 0.
/// Returns the maximum relative deviation over the sampled pairs.
pub fn compare_discrete_continuum(
    dob: &DobrushinDomain,
    f: &FObservable,
    obs: &ContinuumObservable,
    map: &dyn Fn(Complex64) -> Complex64,
) -> f64 {
    let mesh = dob.base.geom.mesh;
    let to_plane = |p2: Pt| Complex64::new(p2.0 as f64, p2.1 as f64) * mesh / 16.0;
    let phi = |z: Complex64| map(z);
    let dphi = |z: Complex64| {
        let h = 1e-6 * mesh;
        (phi(z + h) - phi(z - h)) / (2.0 * h)
    };
    // sample edges of the marked edge's own direction class, away from the
    // marked edge and the root stubs
    let mut pts: Vec<(Complex64, Complex64)> = Vec::new();
    for (e, &val) in &f.edges.values {
        if !e.is_diagonal() || e.dir() != dob.f.dir() {
            continue;
        }
        if *e == dob.f || *e == dob.e_i || *e == dob.e_o {
            continue;
        }
        let z = to_plane(e.mid2());
        pts.push((z, val));
    }
    let mut worst = 0.0f64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (z1, d1) = pts[i];
            let (z2, d2) = pts[j];
            if d2.norm() < 1e-12 {
                continue;
            }
            let c1 = match continuum_f_h(phi(z1), obs) {
                Ok(t) => t.0 * dphi(z1).sqrt(),
                Err(_) => continue,
            };
            let c2 = match continuum_f_h(phi(z2), obs) {
                Ok(t) => t.0 * dphi(z2).sqrt(),
                Err(_) => continue,
            };
            if c2.norm() < 1e-12 {
                continue;
            }
            let disc = d1 / d2;
            let cont = c1 / c2;
            // the discrete ratio of parallel edges and the continuum ratio
            // may differ by a branch sign of the square roots; compare the
            // closer alignment
            let dev = (disc - cont).norm().min((disc + cont).norm()) / cont.norm();
            worst = worst.max(dev);
        }
    }
    worst
}
