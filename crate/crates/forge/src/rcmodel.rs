//! Critical FK Ising model in its loop representation: exact enumeration
//! of the loop measure and single-bond Metropolis sampling.

use crate::lattice::{strand_sides, DirEdge, Pt, Violation, WiredDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BondConfig {
    pub open: Vec<bool>,
}

impl BondConfig {
    pub fn all(n: usize, v: bool) -> Self {
        BondConfig { open: vec![v; n] }
    }
    pub fn from_bits(n: usize, bits: u64) -> Self {
        BondConfig { open: (0..n).map(|i| bits >> i & 1 == 1).collect() }
    }
    pub fn to_bitstring(&self) -> String {
        self.open.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
    pub fn from_bitstring(s: &str) -> Result<Self, String> {
        let mut open = Vec::new();
        for c in s.trim().chars() {
            match c {
                '0' => open.push(false),
                '1' => open.push(true),
                c => return Err(format!("bad bit {c:?}")),
            }
        }
        Ok(BondConfig { open })
    }
}

/// Canonical loop collection: every loop starts at its minimal directed
/// edge, loops sorted by first edge. Equality is plain structural equality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopEnsemble {
    pub loops: Vec<Vec<DirEdge>>,
}

impl LoopEnsemble {
    pub fn canonicalize(mut loops: Vec<Vec<DirEdge>>) -> Self {
        for l in &mut loops {
            let k = l.iter().enumerate().min_by_key(|(_, e)| **e).map(|(i, _)| i).unwrap();
            l.rotate_left(k);
        }
        loops.sort_by(|a, b| a[0].cmp(&b[0]));
        LoopEnsemble { loops }
    }
}

/// Trace the interfaces of a bond configuration; the boundary cycle is
/// dropped, everything else is a loop.
pub fn loop_representation(d: &WiredDomain, c: &BondConfig) -> LoopEnsemble {
    assert_eq!(c.open.len(), d.n_bonds(), "config does not index this domain");
    let cycles = d.trace_cycles(&c.open);
    let loops: Vec<Vec<DirEdge>> = cycles.into_iter().filter(|cy| cy != &d.boundary).collect();
    LoopEnsemble::canonicalize(loops)
}

pub fn count_loops(e: &LoopEnsemble) -> usize {
    e.loops.len()
}

pub fn validate_dcnil(d: &WiredDomain, e: &LoopEnsemble) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut all_verts: BTreeSet<Pt> = BTreeSet::new();
    for (j, l) in e.loops.iter().enumerate() {
        let mut verts = BTreeSet::new();
        for edge in l {
            if !verts.insert(edge.tail) {
                out.push(Violation {
                    invariant: "not-simple".into(),
                    witness: format!("loop {j} revisits {:?}", edge.tail),
                });
            }
        }
        for i in 0..l.len() {
            if l[i].head != l[(i + 1) % l.len()].tail {
                out.push(Violation {
                    invariant: "not-a-loop".into(),
                    witness: format!("loop {j} breaks after edge {i}"),
                });
            }
        }
        for v in verts {
            if !all_verts.insert(v) {
                out.push(Violation {
                    invariant: "not-vertex-disjoint".into(),
                    witness: format!("{v:?}"),
                });
            }
        }
    }
    let covered: BTreeSet<DirEdge> = e.loops.iter().flatten().cloned().collect();
    for diag in d.interior_diagonals() {
        if !covered.contains(&diag) {
            out.push(Violation {
                invariant: "edge-not-covered".into(),
                witness: format!("{diag:?}"),
            });
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum EnumError {
    #[error("{0} interior edges exceed the enumeration guard of 24")]
    TooLarge(usize),
}

pub fn enumerate_measure(d: &WiredDomain) -> Result<Vec<(BondConfig, f64)>, EnumError> {
    let n = d.n_bonds();
    if n > 24 {
        return Err(EnumError::TooLarge(n));
    }
    let mut items = Vec::with_capacity(1 << n);
    let mut z = 0.0;
    for bits in 0u64..(1 << n) {
        let c = BondConfig::from_bits(n, bits);
        let nl = d.trace_cycles(&c.open).len() - 1;
        let w = SQRT2.powi(nl as i32);
        z += w;
        items.push((c, w));
    }
    for it in &mut items {
        it.1 /= z;
    }
    Ok(items)
}

/// Incremental interface tracer: keeps the successor map of the interface
/// structure and the loop count up to date across single-bond flips.
pub struct LoopSampler<'a> {
    pub domain: &'a WiredDomain,
    pub open: Vec<bool>,
    succ: HashMap<Pt, DirEdge>,
    pub n_loops: usize,
}

impl<'a> LoopSampler<'a> {
    pub fn new(domain: &'a WiredDomain, init: BondConfig) -> Self {
        assert_eq!(init.open.len(), domain.n_bonds());
        let edges = domain.active_edges(&init.open);
        let mut succ = HashMap::with_capacity(edges.len());
        for e in &edges {
            succ.insert(e.tail, *e);
        }
        let n_loops = domain.trace_cycles(&init.open).len() - 1;
        LoopSampler { domain, open: init.open, succ, n_loops }
    }

    fn square_of_bond(&self, i: usize) -> Pt {
        let (a, b) = self.domain.interior_edges[i];
        crate::lattice::square_center(a, b)
    }

    /// Loop-count change if bond i were flipped: +1 when the square's two
    /// strands lie on the same loop (the flip splits it), -1 otherwise.
    pub fn delta_n(&self, i: usize) -> i64 {
        let m = self.square_of_bond(i);
        let [s1, s2] = strand_sides(m, self.open[i]);
        let mut cur = s1;
        loop {
            cur = self.succ[&cur.head];
            if cur == s2 {
                return 1;
            }
            if cur == s1 {
                return -1;
            }
        }
    }

    pub fn flip(&mut self, i: usize) {
        let dn = self.delta_n(i);
        let m = self.square_of_bond(i);
        let [o1, o2] = strand_sides(m, self.open[i]);
        self.open[i] = !self.open[i];
        let [n1, n2] = strand_sides(m, self.open[i]);
        self.succ.remove(&o1.tail);
        self.succ.remove(&o2.tail);
        self.succ.insert(n1.tail, n1);
        self.succ.insert(n2.tail, n2);
        self.n_loops = (self.n_loops as i64 + dn) as usize;
    }

    /// One Metropolis step; returns (bond, delta_n, accepted).
    pub fn step(&mut self, rng: &mut impl Rng) -> (usize, i64, bool) {
        let i = rng.gen_range(0..self.open.len());
        let dn = self.delta_n(i);
        let acc = dn > 0 || rng.gen::<f64>() < SQRT2.powi(dn as i32);
        if acc {
            self.flip(i);
        }
        (i, dn, acc)
    }
}

/// Metropolis chain targeting the loop measure; one sweep = one proposed
/// flip per interior bond. Deterministic in (domain, sweeps, seed).
pub fn sample_mc(d: &WiredDomain, sweeps: usize, seed: u64) -> BondConfig {
    assert!(sweeps >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d.n_bonds();
    if n == 0 {
        return BondConfig { open: vec![] };
    }
    let mut s = LoopSampler::new(d, BondConfig::all(n, false));
    for _ in 0..sweeps * n {
        s.step(&mut rng);
    }
    BondConfig { open: s.open }
}

/// 64-bit FNV-1a over the domain's defining data, for file headers.
pub fn domain_hash(d: &WiredDomain) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |x: i64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for &(x, y) in &d.blacks {
        eat(x);
        eat(y);
    }
    eat(d.geom.mesh.to_bits() as i64);
    h
}

pub fn edge_id(e: &DirEdge) -> String {
    format!("{}:{}:{}:{}", e.tail.0, e.tail.1, e.head.0, e.head.1)
}

pub fn ensemble_to_text(d: &WiredDomain, e: &LoopEnsemble, seed: Option<u64>) -> String {
    let mut s = format!("# domain={:016x} seed={}\n", domain_hash(d), seed.map_or("none".into(), |s| s.to_string()));
    for l in &e.loops {
        let ids: Vec<String> = l.iter().map(edge_id).collect();
        s.push_str(&ids.join(","));
        s.push('\n');
    }
    s
}
