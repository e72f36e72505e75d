//! Loops-to-tree and tree-to-loops: exploration branches indexed by target
//! medial edges, the shared (target-independent) exploration of the full
//! tree, and loop recovery from branching squares.

use crate::lattice::{
    all_sides, corners, diagonal_at, strand_sides, DirEdge, DobrushinDomain, Pt, Violation,
};
use crate::rcmodel::LoopEnsemble;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("target edge is not an interior medial edge of the domain")]
    InvalidTarget,
    #[error("ensemble does not induce a bond state on square {0:?}")]
    BadEnsemble(Pt),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("ambiguous construction step at {0:?}: {1}")]
    Ambiguous(Pt, String),
    #[error("no admissible lattice target within reach of {0}; mesh too coarse")]
    NoLatticePoint(String),
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub target: DirEdge,
    /// Edge path from the root stub to the target (inclusive).
    pub path: Vec<DirEdge>,
    /// Indices (into the source ensemble) of the loops followed, in order.
    pub loop_seq: Vec<usize>,
    /// Squares at which the branch switched loops, in order.
    pub square_seq: Vec<Pt>,
}

#[derive(Clone, Debug)]
pub struct ExplorationTree {
    pub dob: DobrushinDomain,
    pub branches: BTreeMap<DirEdge, Branch>,
    /// Branching square -> index of the loop it recovers; includes the root
    /// square, which recovers the loop cut open at the start.
    pub branching: BTreeMap<Pt, usize>,
    pub ensemble_hash: u64,
}

/// Static exploration context for one (domain, ensemble) pair.
pub struct TreeContext<'a> {
    pub dob: &'a DobrushinDomain,
    pub open: Vec<bool>,
    /// Corner -> unique active outgoing edge (strand or medial edge).
    succ: HashMap<Pt, DirEdge>,
    /// Corner -> free-side jump edge starting there (interior heads only).
    free_out: HashMap<Pt, DirEdge>,
    /// Undirected adjacency of the slit graph (cut side removed,
    /// boundary-touching edges removed).
    adj: HashMap<Pt, Vec<Pt>>,
    pub targets: BTreeSet<DirEdge>,
    /// Loop index of each loop edge in the source ensemble.
    loop_of: HashMap<DirEdge, usize>,
    pub ensemble_hash: u64,
}

fn fnv_edges<'i>(edges: impl Iterator<Item = &'i DirEdge>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for e in edges {
        for x in [e.tail.0, e.tail.1, e.head.0, e.head.1] {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

/// The two incoming medial edges of a square (their heads are the square's
/// two in-corners; this is independent of the bond state).
pub fn in_diagonals(m: Pt) -> Vec<DirEdge> {
    corners(m)
        .iter()
        .filter_map(|&c| {
            let (d, _) = diagonal_at(m, c);
            (d.head == c).then_some(d)
        })
        .collect()
}

impl<'a> TreeContext<'a> {
    pub fn new(dob: &'a DobrushinDomain, ens: &LoopEnsemble) -> Result<Self, TreeError> {
        let d = &dob.base;
        let loop_edges: HashMap<DirEdge, usize> = ens
            .loops
            .iter()
            .enumerate()
            .flat_map(|(j, l)| l.iter().map(move |e| (*e, j)))
            .collect();
        // infer the bond configuration from which sides the loops use
        let mut open = vec![false; d.n_bonds()];
        for (&m, &bond) in &d.squares {
            if let Some(i) = bond {
                let w = strand_sides(m, true);
                let b = strand_sides(m, false);
                let wc = w.iter().filter(|s| loop_edges.contains_key(s)).count();
                let bc = b.iter().filter(|s| loop_edges.contains_key(s)).count();
                match (wc, bc) {
                    (2, 0) => open[i] = true,
                    (0, 2) => open[i] = false,
                    _ => return Err(TreeError::BadEnsemble(m)),
                }
            }
        }
        let mut succ = HashMap::new();
        let mut insert = |e: DirEdge| {
            succ.insert(e.tail, e);
        };
        for (&m, &bond) in &d.squares {
            let op = bond.map_or(true, |i| open[i]);
            for s in strand_sides(m, op) {
                insert(s);
            }
        }
        for diag in d.interior_diagonals() {
            insert(diag);
        }
        succ.remove(&dob.cut_side.tail);
        // free-side jumps: the non-strand sides, directed out of in-corners
        let mut free_out = HashMap::new();
        for (&m, &bond) in &d.squares {
            let op = bond.map_or(true, |i| open[i]);
            for s in strand_sides(m, !op) {
                if !d.on_boundary_vertex(s.tail) && !d.on_boundary_vertex(s.head) {
                    free_out.insert(s.tail, s);
                }
            }
        }
        // slit graph for disconnection tests: all sides + interior medial
        // edges, minus anything touching the boundary, minus the cut side
        let mut adj: HashMap<Pt, Vec<Pt>> = HashMap::new();
        let mut add = |a: Pt, b: Pt| {
            if !d.on_boundary_vertex(a) && !d.on_boundary_vertex(b) {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        };
        for (&m, _) in &d.squares {
            for s in all_sides(m) {
                if s != dob.cut_side {
                    add(s.tail, s.head);
                }
            }
        }
        for diag in d.interior_diagonals() {
            add(diag.tail, diag.head);
        }
        let targets: BTreeSet<DirEdge> = d
            .interior_diagonals()
            .into_iter()
            .filter(|e| !d.on_boundary_vertex(e.tail) && !d.on_boundary_vertex(e.head))
            .collect();
        Ok(TreeContext {
            dob,
            open,
            succ,
            free_out,
            adj,
            targets,
            loop_of: loop_edges,
            ensemble_hash: fnv_edges(ens.loops.iter().flatten()),
        })
    }

    /// Vertices reachable from `start` by the branch dynamics (loop edges
    /// forward, loop switches through free sides) avoiding `blocked`.
    fn forward_set(&self, start: Pt, blocked: &HashSet<Pt>) -> HashSet<Pt> {
        let mut seen = HashSet::new();
        if blocked.contains(&start) {
            return seen;
        }
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(v) = stack.pop() {
            for e in [self.succ.get(&v), self.free_out.get(&v)].into_iter().flatten() {
                let w = e.head;
                if !blocked.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// True if the branch dynamics can reach `goal` from `start`.
    fn forward_reachable(&self, start: Pt, goal: Pt, blocked: &HashSet<Pt>) -> bool {
        if blocked.contains(&start) || blocked.contains(&goal) {
            return false;
        }
        if start == goal {
            return true;
        }
        let mut seen = HashSet::new();
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(v) = stack.pop() {
            for e in [self.succ.get(&v), self.free_out.get(&v)].into_iter().flatten() {
                let w = e.head;
                if w == goal {
                    return true;
                }
                if !blocked.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        false
    }

    /// Undirected component of `start` in the slit graph avoiding `blocked`.
    fn component(&self, start: Pt, blocked: &HashSet<Pt>) -> HashSet<Pt> {
        let mut seen = HashSet::new();
        if blocked.contains(&start) || !self.adj.contains_key(&start) {
            return seen;
        }
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(v) = stack.pop() {
            for &w in &self.adj[&v] {
                if !blocked.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// Literal single-target recursion: follow the current loop; when the next
/// loop edge would land outside the target's component of the slit graph,
/// switch loops through the free square side.
pub fn build_branch(
    dob: &DobrushinDomain,
    ens: &LoopEnsemble,
    target: DirEdge,
) -> Result<Branch, TreeError> {
    let ctx = TreeContext::new(dob, ens)?;
    build_branch_ctx(&ctx, target)
}

pub fn build_branch_ctx(ctx: &TreeContext, target: DirEdge) -> Result<Branch, TreeError> {
    if !ctx.targets.contains(&target) {
        return Err(TreeError::InvalidTarget);
    }
    let mut path = vec![ctx.dob.e_i];
    let mut blocked: HashSet<Pt> = HashSet::new();
    blocked.insert(ctx.dob.e_i.tail);
    blocked.insert(ctx.dob.e_i.head);
    let mut loop_seq = Vec::new();
    let mut square_seq = Vec::new();
    if let Some(&j) = ctx.loop_of.get(&ctx.dob.e_i) {
        loop_seq.push(j);
    }
    let cap = 8 * ctx.adj.len() + 64;
    for _ in 0..cap {
        let last = *path.last().unwrap();
        if last == target {
            return Ok(Branch { target, path, loop_seq, square_seq });
        }
        let v = last.head;
        let g = ctx
            .succ
            .get(&v)
            .copied()
            .ok_or_else(|| TreeError::Ambiguous(v, "no continuation".into()))?;
        let h = ctx.free_out.get(&v).copied();
        let take = if g == target {
            g
        } else if let Some(h) = h {
            // follow the loop only while the target stays ahead of the
            // branch dynamics
            let stay = !blocked.contains(&g.head)
                && ctx.forward_reachable(g.head, target.tail, &blocked);
            if stay {
                g
            } else {
                if blocked.contains(&h.head) {
                    return Err(TreeError::Ambiguous(v, "jump revisits a vertex".into()));
                }
                square_seq.push(crate::lattice::side_square(&h));
                h
            }
        } else {
            if blocked.contains(&g.head) {
                return Err(TreeError::Ambiguous(v, "forced move revisits a vertex".into()));
            }
            g
        };
        path.push(take);
        blocked.insert(take.head);
        if let Some(&j) = ctx.loop_of.get(&take) {
            if loop_seq.last() != Some(&j) {
                loop_seq.push(j);
            }
        }
    }
    Err(TreeError::Ambiguous(target.tail, "branch did not terminate".into()))
}

/// Shared exploration of all branches at once. Branch prefixes coincide by
/// construction; the target set splits at each loop switch according to the
/// component decomposition of the slit graph.
pub fn build_tree(dob: &DobrushinDomain, ens: &LoopEnsemble) -> Result<ExplorationTree, TreeError> {
    let ctx = TreeContext::new(dob, ens)?;
    build_tree_ctx(&ctx, ctx.targets.clone())
}

pub fn build_tree_ctx(
    ctx: &TreeContext,
    targets: BTreeSet<DirEdge>,
) -> Result<ExplorationTree, TreeError> {
    for t in &targets {
        if !ctx.targets.contains(t) {
            return Err(TreeError::InvalidTarget);
        }
    }
    let mut st = Explorer {
        ctx,
        path: vec![ctx.dob.e_i],
        blocked: HashSet::new(),
        loop_seq: Vec::new(),
        square_seq: Vec::new(),
        branches: BTreeMap::new(),
        branching: BTreeMap::new(),
    };
    st.blocked.insert(ctx.dob.e_i.tail);
    st.blocked.insert(ctx.dob.e_i.head);
    if let Some(&j) = ctx.loop_of.get(&ctx.dob.e_i) {
        st.loop_seq.push(j);
    }
    if let Some(&j) = ctx.loop_of.get(&ctx.dob.cut_side) {
        st.branching.insert(ctx.dob.root_square, j);
    }
    let mut pending = targets;
    st.record(&mut pending, ctx.dob.e_i);
    st.explore(pending)?;
    Ok(ExplorationTree {
        dob: ctx.dob.clone(),
        branches: st.branches,
        branching: st.branching,
        ensemble_hash: ctx.ensemble_hash,
    })
}

struct Explorer<'c, 'a> {
    ctx: &'c TreeContext<'a>,
    path: Vec<DirEdge>,
    blocked: HashSet<Pt>,
    loop_seq: Vec<usize>,
    square_seq: Vec<Pt>,
    branches: BTreeMap<DirEdge, Branch>,
    branching: BTreeMap<Pt, usize>,
}

impl Explorer<'_, '_> {
    fn record(&mut self, pending: &mut BTreeSet<DirEdge>, edge: DirEdge) {
        if pending.remove(&edge) {
            self.branches.insert(
                edge,
                Branch {
                    target: edge,
                    path: self.path.clone(),
                    loop_seq: self.loop_seq.clone(),
                    square_seq: self.square_seq.clone(),
                },
            );
        }
    }

    fn take(&mut self, pending: &mut BTreeSet<DirEdge>, edge: DirEdge) {
        self.path.push(edge);
        self.blocked.insert(edge.head);
        if let Some(&j) = self.ctx.loop_of.get(&edge) {
            if self.loop_seq.last() != Some(&j) {
                self.loop_seq.push(j);
            }
        }
        self.record(pending, edge);
    }

    fn explore(&mut self, mut pending: BTreeSet<DirEdge>) -> Result<(), TreeError> {
        while !pending.is_empty() {
            let v = self.path.last().unwrap().head;
            let g = self
                .ctx
                .succ
                .get(&v)
                .copied()
                .ok_or_else(|| TreeError::Ambiguous(v, "no continuation".into()))?;
            let h = self.ctx.free_out.get(&v).copied();
            let Some(h) = h else {
                if self.blocked.contains(&g.head) {
                    return Err(TreeError::Ambiguous(v, "forced move revisits a vertex".into()));
                }
                self.take(&mut pending, g);
                continue;
            };
            // what the branch dynamics can still reach through the loop
            // continuation
            let comp_g = if self.blocked.contains(&g.head) {
                HashSet::new()
            } else {
                self.ctx.forward_set(g.head, &self.blocked)
            };
            let (tg, th): (BTreeSet<_>, BTreeSet<_>) =
                pending.iter().partition(|t| comp_g.contains(&t.tail) || t.tail == g.head);
            if th.is_empty() {
                self.take(&mut pending, g);
                continue;
            }
            if self.blocked.contains(&h.head) {
                return Err(TreeError::Ambiguous(v, "jump revisits a vertex".into()));
            }
            // loop switch: a fresh loop is entered exactly when the
            // continuation vertex was not yet visited
            if !self.blocked.contains(&g.head) {
                let j = self
                    .ctx
                    .succ
                    .get(&h.head)
                    .and_then(|e| self.ctx.loop_of.get(e))
                    .copied()
                    .ok_or_else(|| TreeError::Ambiguous(v, "jump lands off-loop".into()))?;
                let sq = crate::lattice::side_square(&h);
                if self.branching.insert(sq, j).is_some() {
                    return Err(TreeError::Ambiguous(sq, "square branches twice".into()));
                }
            }
            if tg.is_empty() {
                self.square_seq.push(crate::lattice::side_square(&h));
                self.take(&mut pending, h);
                pending = th;
                continue;
            }
            // genuine split: finish the jump side with the current prefix,
            // then resume the loop side
            let snap_path = self.path.len();
            let snap_loops = self.loop_seq.len();
            let snap_sq = self.square_seq.len();
            let mut th = th;
            self.square_seq.push(crate::lattice::side_square(&h));
            let before: HashSet<Pt> = self.blocked.clone();
            self.take(&mut th, h);
            self.explore(th)?;
            self.path.truncate(snap_path);
            self.loop_seq.truncate(snap_loops);
            self.square_seq.truncate(snap_sq);
            self.blocked = before;
            self.take(&mut pending, g);
            pending = tg;
        }
        Ok(())
    }
}

// -- validation and inverse ---------------------------------------------------

pub fn tree_edge_set(t: &ExplorationTree) -> BTreeSet<DirEdge> {
    t.branches.values().flat_map(|b| b.path.iter().cloned()).collect()
}

/// Spanning-tree check: connected, acyclic, one in-edge per non-root vertex.
pub fn validate_spanning(t: &ExplorationTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let edges = tree_edge_set(t);
    let mut verts: BTreeSet<Pt> = BTreeSet::new();
    let mut in_deg: BTreeMap<Pt, usize> = BTreeMap::new();
    for e in &edges {
        verts.insert(e.tail);
        verts.insert(e.head);
        *in_deg.entry(e.head).or_insert(0) += 1;
    }
    let root = t.dob.e_i.tail;
    for (&v, &k) in &in_deg {
        if k > 1 {
            out.push(Violation {
                invariant: "vertex-entered-twice".into(),
                witness: format!("{v:?}"),
            });
        }
        if v == root {
            out.push(Violation {
                invariant: "root-entered".into(),
                witness: format!("{v:?}"),
            });
        }
    }
    if edges.len() + 1 != verts.len() {
        out.push(Violation {
            invariant: "edge-count".into(),
            witness: format!("{} edges, {} vertices", edges.len(), verts.len()),
        });
    }
    // connectivity from the root along tree edges
    let mut adj: HashMap<Pt, Vec<Pt>> = HashMap::new();
    for e in &edges {
        adj.entry(e.tail).or_default().push(e.head);
    }
    let mut seen = BTreeSet::new();
    seen.insert(root);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if let Some(ns) = adj.get(&v) {
            for &w in ns {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
    }
    if seen.len() != verts.len() {
        out.push(Violation {
            invariant: "not-connected".into(),
            witness: format!("{} of {} reached", seen.len(), verts.len()),
        });
    }
    out
}

pub fn recover_loops(t: &ExplorationTree) -> Result<LoopEnsemble, TreeError> {
    let mut loops = Vec::new();
    for (&sq, _) in &t.branching {
        if sq == t.dob.root_square {
            let b = t
                .branches
                .get(&t.dob.e_o)
                .ok_or_else(|| TreeError::MalformedTree("no branch to the root out-stub".into()))?;
            let mut l = b.path.clone();
            l.push(t.dob.cut_side);
            loops.push(l);
            continue;
        }
        let ins = in_diagonals(sq);
        let have: Vec<&Branch> = ins.iter().filter_map(|d| t.branches.get(d)).collect();
        if have.len() != 2 {
            return Err(TreeError::MalformedTree(format!(
                "branching square {sq:?} lacks an incoming medial edge"
            )));
        }
        // the second arrival has the longer root path
        let e2 = if have[0].path.len() > have[1].path.len() { have[0] } else { have[1] };
        let cs: BTreeSet<Pt> = corners(sq).iter().cloned().collect();
        let exit_idx = e2
            .path
            .iter()
            .position(|e| cs.contains(&e.tail) && !cs.contains(&e.head))
            .ok_or_else(|| TreeError::MalformedTree(format!("no exit from {sq:?}")))?;
        let mut l: Vec<DirEdge> = e2.path[exit_idx..].to_vec();
        let last = *l.last().unwrap();
        let exit = l[0];
        let close = all_sides(sq)
            .into_iter()
            .find(|s| s.tail == last.head && s.head == exit.tail)
            .ok_or_else(|| TreeError::MalformedTree(format!("no closing side on {sq:?}")))?;
        l.push(close);
        loops.push(l);
    }
    Ok(LoopEnsemble::canonicalize(loops))
}

pub fn branching_squares(t: &ExplorationTree) -> BTreeMap<Pt, usize> {
    t.branching.clone()
}

/// Five-arm count at an interior branching square: the four tree arms
/// crossing the square boundary (two incoming medial edges, two outgoing)
/// plus the gray closing arm, the square side that completes the recovered
/// loop and is never a tree edge. Returns 5 exactly for a well-formed
/// branching square.
pub fn arm_count(t: &ExplorationTree, sq: Pt) -> usize {
    let cs: BTreeSet<Pt> = corners(sq).iter().cloned().collect();
    let edges = tree_edge_set(t);
    let crossing = edges
        .iter()
        .filter(|e| cs.contains(&e.tail) != cs.contains(&e.head))
        .count();
    let sides_in_tree = all_sides(sq).iter().filter(|s| edges.contains(s)).count();
    // the closing arm exists iff exactly 2 of the 4 sides carry the tree
    // through the square, leaving room for the loop-closing side
    let closing = usize::from(sides_in_tree == 2);
    crossing + closing
}

pub fn check_target_independence(t: &ExplorationTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let ctx = match TreeContext::new(&t.dob, &match recover_loops(t) {
        Ok(l) => l,
        Err(e) => {
            return vec![Violation {
                invariant: "recover-failed".into(),
                witness: format!("{e}"),
            }]
        }
    }) {
        Ok(c) => c,
        Err(e) => {
            return vec![Violation {
                invariant: "context-failed".into(),
                witness: format!("{e}"),
            }]
        }
    };
    let branches: Vec<&Branch> = t.branches.values().collect();
    for i in 0..branches.len() {
        for j in (i + 1)..branches.len() {
            let (a, b) = (branches[i], branches[j]);
            let k = a
                .path
                .iter()
                .zip(b.path.iter())
                .take_while(|(x, y)| x == y)
                .count();
            if k == a.path.len() || k == b.path.len() {
                continue; // one is a prefix of the other
            }
            let (ea, eb) = (a.path[k], b.path[k]);
            if ea.tail != eb.tail {
                out.push(Violation {
                    invariant: "divergence-not-a-fork".into(),
                    witness: format!("{:?} vs {:?}", a.target, b.target),
                });
                continue;
            }
            // at the fork the two targets must lie in different components
            // of the slit graph blocked by the shared prefix
            let mut blocked: HashSet<Pt> = HashSet::new();
            blocked.insert(a.path[0].tail);
            for e in &a.path[..k] {
                blocked.insert(e.head);
            }
            let ca = ctx.component(ea.head, &blocked);
            let goal_b = if b.path.len() > k { b.target.tail } else { b.target.head };
            if ca.contains(&goal_b) && !ca.contains(&a.target.tail) {
                out.push(Violation {
                    invariant: "diverged-while-connected".into(),
                    witness: format!("{:?} vs {:?} at {:?}", a.target, b.target, ea.tail),
                });
            }
            // jump-square sequences share the prefix up to the fork
            let ja = jumps_within(&ctx, a, k);
            let jb = jumps_within(&ctx, b, k);
            if a.square_seq[..ja] != b.square_seq[..jb] || ja != jb {
                out.push(Violation {
                    invariant: "square-seq-prefix".into(),
                    witness: format!("{:?} vs {:?}", a.target, b.target),
                });
            }
        }
    }
    out
}

/// Number of loop switches occurring within the first k edges of a branch.
fn jumps_within(ctx: &TreeContext, b: &Branch, k: usize) -> usize {
    b.path[..k]
        .iter()
        .filter(|e| ctx.free_out.get(&e.tail) == Some(e))
        .count()
}

// ---------------------------------------------------------------------------
// Finite subtrees: eta-net of targets plus quarter-rule refinement
// ---------------------------------------------------------------------------

use num_complex::Complex64;

fn seg_dist(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 < 1e-30 {
        return (p - a).norm();
    }
    let s = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + s * ab)).norm()
}

fn polyline_dist(p: Complex64, poly: &[Complex64]) -> f64 {
    let mut d = f64::INFINITY;
    for w in poly.windows(2) {
        d = d.min(seg_dist(p, w[0], w[1]));
    }
    if poly.len() == 1 {
        d = (p - poly[0]).norm();
    }
    d
}

fn nearest_on_polylines(p: Complex64, polys: &[&Vec<Complex64>]) -> (f64, Complex64) {
    let mut best = (f64::INFINITY, p);
    for poly in polys {
        for w in poly.windows(2) {
            let ab = w[1] - w[0];
            let len2 = ab.norm_sqr();
            let s = if len2 < 1e-30 {
                0.0
            } else {
                (((p - w[0]) * ab.conj()).re / len2).clamp(0.0, 1.0)
            };
            let q = w[0] + s * ab;
            let d = (p - q).norm();
            if d < best.0 {
                best = (d, q);
            }
        }
    }
    best
}

/// Restricts an exploration tree to a finite set of targets forming an
/// eta-net in the unit-disk image: the targets nearest the grid points of
/// (eta Z^2) inside the disk, refined by a quarter rule until every branch
/// of the full tree is within eta (in the capacity-matched curve metric) of
/// a selected branch.
pub fn finite_subtree(
    t: &ExplorationTree,
    eta: f64,
    uniformizer: &dyn Fn(Pt) -> Complex64,
) -> Result<ExplorationTree, TreeError> {
    if !(eta > 0.0) {
        return Err(TreeError::MalformedTree("eta must be positive".into()));
    }
    if t.branches.is_empty() {
        return Err(TreeError::MalformedTree("empty tree".into()));
    }
    // branch polylines and target-edge midpoints in the disk image; the
    // start corner is projected onto the circle, interior points nudged
    // strictly inside, as the capacity parametrization requires
    let mut images: BTreeMap<DirEdge, Vec<Complex64>> = BTreeMap::new();
    let mut tips: BTreeMap<DirEdge, Complex64> = BTreeMap::new();
    let mut curves: BTreeMap<DirEdge, crate::loewner::CapCurve> = BTreeMap::new();
    for (tgt, br) in &t.branches {
        let mut pts: Vec<Complex64> = Vec::with_capacity(br.path.len() + 1);
        for (i, p) in std::iter::once(br.path[0].tail)
            .chain(br.path.iter().map(|e| e.head))
            .enumerate()
        {
            let mut z = uniformizer(p);
            if i == 0 {
                z /= z.norm();
            } else if z.norm() >= 1.0 - 1e-12 {
                z *= (1.0 - 1e-9) / z.norm();
            }
            if pts.last().map_or(true, |&w| (w - z).norm() > 1e-15) {
                pts.push(z);
            }
        }
        let cap = crate::loewner::capacity_parametrize(&pts, 1e-2)
            .map_err(|e| TreeError::MalformedTree(format!("capacity parametrization: {e}")))?;
        curves.insert(*tgt, cap);
        tips.insert(*tgt, 0.5 * (uniformizer(tgt.tail) + uniformizer(tgt.head)));
        images.insert(*tgt, pts);
    }
    let mut chosen: BTreeSet<DirEdge> = BTreeSet::new();
    // initial grid (eta Z^2) inside the open unit disk
    let n_max = (1.0 / eta).ceil() as i64;
    for i in -n_max..=n_max {
        for j in -n_max..=n_max {
            let g = Complex64::new(i as f64 * eta, j as f64 * eta);
            if g.norm() >= 1.0 {
                continue;
            }
            let (tgt, dist) = tips
                .iter()
                .map(|(e, &z)| (*e, (z - g).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if dist > 0.5 * eta {
                return Err(TreeError::NoLatticePoint(format!("grid point ({:.3}, {:.3})", g.re, g.im)));
            }
            chosen.insert(tgt);
        }
    }
    // refinement: while some branch is farther than eta from the selected
    // branches in the capacity-matched curve metric, add a target by the
    // quarter rule (split the box around the offending tip into four
    // quarters, take the quarter farthest from the point where the subtree
    // comes closest, and pick the target whose image is nearest that
    // quarter's center)
    let keys: Vec<DirEdge> = tips.keys().cloned().collect();
    let mut d_min: BTreeMap<DirEdge, f64> = keys.iter().map(|e| (*e, f64::INFINITY)).collect();
    let mut fresh: Vec<DirEdge> = chosen.iter().cloned().collect();
    for _ in 0..t.branches.len() {
        // fold the newly added branches into the min-distance table
        for nb in fresh.drain(..) {
            for e in &keys {
                if chosen.contains(e) {
                    continue;
                }
                let d = crate::loewner::metric_curve(&curves[e], &curves[&nb])
                    .map_err(|er| TreeError::MalformedTree(format!("curve metric: {er}")))?;
                let slot = d_min.get_mut(e).unwrap();
                if d < *slot {
                    *slot = d;
                }
            }
        }
        let worst = keys
            .iter()
            .filter(|e| !chosen.contains(e))
            .map(|e| (*e, d_min[e]))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let Some((worst_tgt, d)) = worst else { break };
        if d <= 0.9 * eta {
            break;
        }
        let z_star = tips[&worst_tgt];
        let polys: Vec<&Vec<Complex64>> = chosen.iter().map(|e| &images[e]).collect();
        let (_, attach) = nearest_on_polylines(z_star, &polys);
        let half = 0.5 * d;
        let centers = [
            z_star + Complex64::new(half, half),
            z_star + Complex64::new(-half, half),
            z_star + Complex64::new(half, -half),
            z_star + Complex64::new(-half, -half),
        ];
        let c = centers
            .iter()
            .cloned()
            .max_by(|a, b| (a - attach).norm().partial_cmp(&(b - attach).norm()).unwrap())
            .unwrap();
        let cand = tips
            .iter()
            .filter(|(e, _)| !chosen.contains(e))
            .map(|(e, &z)| (*e, (z - c).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let added = match cand {
            Some((e, dist)) if dist <= eta => e,
            // fall back to the offending tip itself
            _ => worst_tgt,
        };
        chosen.insert(added);
        fresh.push(added);
    }
    let branches: BTreeMap<DirEdge, Branch> =
        chosen.iter().map(|e| (*e, t.branches[e].clone())).collect();
    let kept_squares: BTreeSet<Pt> =
        branches.values().flat_map(|b| b.square_seq.iter().cloned()).collect();
    let branching = t
        .branching
        .iter()
        .filter(|(sq, _)| **sq == t.dob.root_square || kept_squares.contains(sq))
        .map(|(s, l)| (*s, *l))
        .collect();
    Ok(ExplorationTree {
        dob: t.dob.clone(),
        branches,
        branching,
        ensemble_hash: t.ensemble_hash,
    })
}
