//! Square lattice, its dual, the medial lattice and the square-octagon
//! modification with its canonical edge orientation, plus discrete domains.
//!
//! Coordinates are integers scaled by 8:
//! - primal (black face centers): both coordinates = 0 mod 8
//! - dual (white face centers): both coordinates = 4 mod 8
//! - small-square centers (midpoints of primal edges): one coordinate
//!   = 4 mod 8, the other = 0 mod 8
//! - small-square corners: both coordinates odd (center + (±1, ±1))
//!
//! Every edge of the square-octagon lattice carries a fixed direction:
//! counter-clockwise around black octagons, clockwise around white ones.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub type Pt = (i64, i64);

pub const SCALE: i64 = 8;

/// Directed edge of the oriented square-octagon lattice, endpoints in
/// scaled corner coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct DirEdge {
    pub tail: Pt,
    pub head: Pt,
}

impl DirEdge {
    pub fn new(tail: Pt, head: Pt) -> Self {
        DirEdge { tail, head }
    }
    pub fn reversed(&self) -> Self {
        DirEdge { tail: self.head, head: self.tail }
    }
    /// Midpoint doubled (to stay integral).
    pub fn mid2(&self) -> Pt {
        (self.tail.0 + self.head.0, self.tail.1 + self.head.1)
    }
    pub fn is_diagonal(&self) -> bool {
        self.tail.0 != self.head.0 && self.tail.1 != self.head.1
    }
    /// Direction as a (dx, dy) with entries in {-1, 0, 1}.
    pub fn dir(&self) -> Pt {
        ((self.head.0 - self.tail.0).signum(), (self.head.1 - self.tail.1).signum())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum EdgeKind {
    OctagonSideBlack,
    OctagonSideWhite,
    SmallSquareSide,
}

fn rot_ccw(p: Pt) -> Pt {
    (-p.1, p.0)
}
fn rot_cw(p: Pt) -> Pt {
    (p.1, -p.0)
}
fn sgn(p: Pt) -> Pt {
    (p.0.signum(), p.1.signum())
}

pub fn is_black_center(p: Pt) -> bool {
    p.0.rem_euclid(8) == 0 && p.1.rem_euclid(8) == 0
}
pub fn is_white_center(p: Pt) -> bool {
    p.0.rem_euclid(8) == 4 && p.1.rem_euclid(8) == 4
}
pub fn is_square_center(p: Pt) -> bool {
    (p.0.rem_euclid(8) == 4) != (p.1.rem_euclid(8) == 4)
        && p.0.rem_euclid(4) == 0
        && p.1.rem_euclid(4) == 0
}
/// True if the square sits on a horizontal primal edge.
pub fn is_h_square(m: Pt) -> bool {
    debug_assert!(is_square_center(m));
    m.0.rem_euclid(8) == 4
}

/// Center of the small square on the primal edge a-b (primal coordinates).
pub fn square_center(a: Pt, b: Pt) -> Pt {
    (4 * (a.0 + b.0), 4 * (a.1 + b.1))
}

/// The two primal endpoints (primal coordinates) of the edge under square m.
pub fn square_primal_edge(m: Pt) -> (Pt, Pt) {
    if is_h_square(m) {
        (((m.0 - 4) / 8, m.1 / 8), ((m.0 + 4) / 8, m.1 / 8))
    } else {
        ((m.0 / 8, (m.1 - 4) / 8), (m.0 / 8, (m.1 + 4) / 8))
    }
}

const DIRS: [Pt; 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

/// The side of square m in axis direction d, with its canonical orientation.
pub fn square_side(m: Pt, d: Pt) -> DirEdge {
    let q = (m.0 + d.0, m.1 + d.1); // side midpoint
    let o = (m.0 + 4 * d.0, m.1 + 4 * d.1); // facing octagon center
    let p = (q.0 - o.0, q.1 - o.1);
    let t = if is_black_center(o) { sgn(rot_ccw(p)) } else { sgn(rot_cw(p)) };
    DirEdge::new((q.0 - t.0, q.1 - t.1), (q.0 + t.0, q.1 + t.1))
}

/// Octagon center faced by the side of square m in direction d.
pub fn side_octagon(m: Pt, d: Pt) -> Pt {
    (m.0 + 4 * d.0, m.1 + 4 * d.1)
}

pub fn all_sides(m: Pt) -> [DirEdge; 4] {
    [square_side(m, DIRS[0]), square_side(m, DIRS[1]), square_side(m, DIRS[2]), square_side(m, DIRS[3])]
}

/// Interface strands of square m: the two white-facing sides when the
/// primal bond is open, the two black-facing sides when it is closed.
pub fn strand_sides(m: Pt, open: bool) -> [DirEdge; 2] {
    let want_white = open;
    let mut out = Vec::with_capacity(2);
    for d in DIRS {
        if is_white_center(side_octagon(m, d)) == want_white {
            out.push(square_side(m, d));
        }
    }
    [out[0], out[1]]
}

/// The two sides of m not used by any interface in the given state.
pub fn free_sides(m: Pt, open: bool) -> [DirEdge; 2] {
    strand_sides(m, !open)
}

/// The octagon-side (diagonal) edge at corner c of square m, together with
/// the center of the partner square it leads to.
pub fn diagonal_at(m: Pt, c: Pt) -> (DirEdge, Pt) {
    let u = (c.0 - m.0, c.1 - m.1); // (±1, ±1)
    debug_assert!(u.0.abs() == 1 && u.1.abs() == 1);
    let partner = (m.0 + 4 * u.0, m.1 + 4 * u.1);
    let b = if is_h_square(m) { (m.0 + 4 * u.0, m.1) } else { (m.0, m.1 + 4 * u.1) };
    let q = (c.0 + u.0, c.1 + u.1); // diagonal midpoint
    let t = sgn(rot_ccw((q.0 - b.0, q.1 - b.1)));
    (DirEdge::new((q.0 - t.0, q.1 - t.1), (q.0 + t.0, q.1 + t.1)), partner)
}

pub fn corners(m: Pt) -> [Pt; 4] {
    [
        (m.0 + 1, m.1 + 1),
        (m.0 - 1, m.1 + 1),
        (m.0 - 1, m.1 - 1),
        (m.0 + 1, m.1 - 1),
    ]
}

/// Square center owning corner c.
pub fn corner_square(c: Pt) -> [Pt; 1] {
    // a corner belongs to exactly one square: round each coord to the
    // nearest multiple of 4 that makes a valid square center
    for dx in [-1i64, 1] {
        for dy in [-1i64, 1] {
            let m = (c.0 + dx, c.1 + dy);
            if is_square_center(m) {
                return [m];
            }
        }
    }
    unreachable!("corner {:?} has no square", c)
}

/// Classification of an edge by the faces it separates.
pub fn edge_kind(e: &DirEdge) -> EdgeKind {
    if e.is_diagonal() {
        // separates a black and a white octagon
        EdgeKind::OctagonSideBlack // diagonals: report the black-facing kind
    } else {
        EdgeKind::SmallSquareSide
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshGeometry {
    pub mesh: f64,
    pub origin: (f64, f64),
}

impl MeshGeometry {
    pub fn new(mesh: f64) -> Self {
        assert!(mesh > 0.0, "mesh must be positive");
        MeshGeometry { mesh, origin: (0.0, 0.0) }
    }
    /// Scaled integer point to plane coordinates (one mesh unit = one
    /// primal lattice step = 8 integer units).
    pub fn to_plane(&self, p: Pt) -> (f64, f64) {
        (
            self.origin.0 + self.mesh * p.0 as f64 / 8.0,
            self.origin.1 + self.mesh * p.1 as f64 / 8.0,
        )
    }
}

#[derive(Clone, Debug)]
pub struct WiredDomain {
    pub geom: MeshGeometry,
    /// Primal coordinates of the black faces (source of truth).
    pub blacks: BTreeSet<Pt>,
    /// Layer of extra vertices carrying the wired edges.
    pub ring: BTreeSet<Pt>,
    /// Interior primal edges (the bond configuration space), sorted.
    pub interior_edges: Vec<(Pt, Pt)>,
    /// Always-open edges touching the ring.
    pub wired_edges: Vec<(Pt, Pt)>,
    /// Square center -> Some(bond index) for interior squares, None for wired.
    pub squares: BTreeMap<Pt, Option<usize>>,
    /// White faces inside the domain (scaled centers).
    pub whites: BTreeSet<Pt>,
    /// Counter-clockwise boundary cycle.
    pub boundary: Vec<DirEdge>,
    /// Outermost loop drawable inside the domain, disjoint from the boundary.
    pub inner_boundary: Vec<DirEdge>,
    boundary_verts: BTreeSet<Pt>,
    edge_index: HashMap<(Pt, Pt), usize>,
}

fn primal_edge_key(a: Pt, b: Pt) -> (Pt, Pt) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl WiredDomain {
    pub fn from_blacks(blacks: BTreeSet<Pt>, mesh: f64) -> WiredDomain {
        assert!(!blacks.is_empty(), "domain must be non-empty");
        let mut ring = BTreeSet::new();
        for &(x, y) in &blacks {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let p = (x + dx, y + dy);
                    if !blacks.contains(&p) {
                        ring.insert(p);
                    }
                }
            }
        }
        let all: BTreeSet<Pt> = blacks.union(&ring).cloned().collect();
        let mut interior_edges = Vec::new();
        let mut wired_edges = Vec::new();
        for &(x, y) in &all {
            for (dx, dy) in [(1i64, 0i64), (0, 1)] {
                let q = (x + dx, y + dy);
                if all.contains(&q) {
                    let a = (x, y);
                    if blacks.contains(&a) && blacks.contains(&q) {
                        interior_edges.push(primal_edge_key(a, q));
                    } else {
                        wired_edges.push(primal_edge_key(a, q));
                    }
                }
            }
        }
        interior_edges.sort();
        interior_edges.dedup();
        wired_edges.sort();
        wired_edges.dedup();
        let mut squares = BTreeMap::new();
        let mut edge_index = HashMap::new();
        for (i, &(a, b)) in interior_edges.iter().enumerate() {
            squares.insert(square_center(a, b), Some(i));
            edge_index.insert((a, b), i);
        }
        for &(a, b) in &wired_edges {
            squares.insert(square_center(a, b), None);
        }
        // whites: dual faces all four of whose surrounding squares exist
        let mut whites = BTreeSet::new();
        for &(x, y) in &all {
            for (dx, dy) in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
                let w = (8 * x + 4 * dx, 8 * y + 4 * dy);
                if whites.contains(&w) {
                    continue;
                }
                let ok = [(w.0 - 4, w.1), (w.0 + 4, w.1), (w.0, w.1 - 4), (w.0, w.1 + 4)]
                    .iter()
                    .all(|m| squares.contains_key(m));
                if ok {
                    whites.insert(w);
                }
            }
        }
        let mut d = WiredDomain {
            geom: MeshGeometry::new(mesh),
            blacks,
            ring,
            interior_edges,
            wired_edges,
            squares,
            whites,
            boundary: Vec::new(),
            inner_boundary: Vec::new(),
            boundary_verts: BTreeSet::new(),
            edge_index,
        };
        d.compute_boundaries();
        d
    }

    pub fn build_rect_domain(n_cols: usize, n_rows: usize, mesh: f64) -> WiredDomain {
        assert!(n_cols >= 1 && n_rows >= 1);
        let mut blacks = BTreeSet::new();
        for x in 0..n_cols as i64 {
            for y in 0..n_rows as i64 {
                blacks.insert((x, y));
            }
        }
        WiredDomain::from_blacks(blacks, mesh)
    }

    pub fn n_bonds(&self) -> usize {
        self.interior_edges.len()
    }

    pub fn bond_index(&self, a: Pt, b: Pt) -> Option<usize> {
        self.edge_index.get(&primal_edge_key(a, b)).copied()
    }

    pub fn is_square_present(&self, m: Pt) -> bool {
        self.squares.contains_key(&m)
    }

    /// Open state of the square's bond under a configuration
    /// (wired squares are always open).
    pub fn square_open(&self, m: Pt, open: &[bool]) -> bool {
        match self.squares[&m] {
            Some(i) => open[i],
            None => true,
        }
    }

    fn black_in_domain(&self, oct: Pt) -> bool {
        let p = (oct.0 / 8, oct.1 / 8);
        self.blacks.contains(&p) || self.ring.contains(&p)
    }

    /// All directed edges of the interface structure for a configuration:
    /// strands of present squares, diagonals with at least one present
    /// square, and the boundary filler edges along absent squares.
    pub fn active_edges(&self, open: &[bool]) -> Vec<DirEdge> {
        let mut out = Vec::new();
        for (&m, _) in &self.squares {
            let op = self.square_open(m, open);
            out.extend_from_slice(&strand_sides(m, op));
        }
        for p in self.blacks.iter().chain(self.ring.iter()) {
            let o = (8 * p.0, 8 * p.1);
            // the four octagon diagonals around this black
            for u in [(1i64, 1i64), (-1, 1), (-1, -1), (1, -1)] {
                let q = (o.0 + 2 * u.0, o.1 + 2 * u.1);
                let t = rot_ccw(u);
                out.push(DirEdge::new((q.0 - t.0, q.1 - t.1), (q.0 + t.0, q.1 + t.1)));
            }
            // boundary filler: sides of absent squares facing this black
            for d in DIRS {
                let m = (o.0 + 4 * d.0, o.1 + 4 * d.1);
                if !self.is_square_present(m) {
                    out.push(square_side(m, (-d.0, -d.1)));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Decompose the interface structure into directed cycles.
    pub fn trace_cycles(&self, open: &[bool]) -> Vec<Vec<DirEdge>> {
        let edges = self.active_edges(open);
        decompose_cycles(&edges)
    }

    fn compute_boundaries(&mut self) {
        let all_open = vec![true; self.n_bonds()];
        let cycles = self.trace_cycles(&all_open);
        // the boundary is the unique cycle containing a side of an absent
        // square or a dangling diagonal; identify via a marker edge: any
        // side whose square is absent
        // among such cycles pick the outermost (containing the maximal
        // active edge); malformed inputs may have several, which
        // validate_admissible reports separately
        let mut boundary = cycles
            .iter()
            .filter(|cyc| {
                cyc.iter()
                    .any(|e| !e.is_diagonal() && !self.is_square_present(side_square(e)))
            })
            .max_by_key(|c| c.iter().max().unwrap())
            .cloned()
            .unwrap_or_else(|| {
                cycles
                    .iter()
                    .max_by_key(|c| c.iter().max().unwrap())
                    .unwrap()
                    .clone()
            });
        // canonical start
        rotate_to_min(&mut boundary);
        self.boundary_verts = boundary.iter().map(|e| e.tail).collect();
        self.boundary = boundary;
        // inner boundary: with all interior bonds closed, the cycle through
        // the inner strand of the maximal wired square
        let all_closed = vec![false; self.n_bonds()];
        let cycles = self.trace_cycles(&all_closed);
        let bset: BTreeSet<DirEdge> = self.boundary.iter().cloned().collect();
        let mut inner: Option<Vec<DirEdge>> = None;
        for cyc in cycles {
            if cyc.iter().any(|e| bset.contains(e)) {
                continue;
            }
            let key = cyc.iter().max().cloned().unwrap();
            if inner.as_ref().map_or(true, |c| key > c.iter().max().cloned().unwrap()) {
                inner = Some(cyc);
            }
        }
        if let Some(mut inner) = inner {
            rotate_to_min(&mut inner);
            self.inner_boundary = inner;
        }
    }

    pub fn on_boundary_vertex(&self, p: Pt) -> bool {
        self.boundary_verts.contains(&p)
    }

    pub fn boundary_edge_set(&self) -> BTreeSet<DirEdge> {
        self.boundary.iter().cloned().collect()
    }

    /// All directed medial (diagonal) edges strictly inside the domain:
    /// those separating a black and a white face that are both inside.
    pub fn interior_diagonals(&self) -> BTreeSet<DirEdge> {
        let mut out = BTreeSet::new();
        for &w in &self.whites {
            for u in [(1i64, 1i64), (-1, 1), (-1, -1), (1, -1)] {
                let q = (w.0 + 2 * u.0, w.1 + 2 * u.1);
                let t = rot_cw(u);
                out.insert(DirEdge::new((q.0 - t.0, q.1 - t.1), (q.0 + t.0, q.1 + t.1)));
            }
        }
        out
    }

    /// Directed edges that can appear on a loop or branch: strands of
    /// present squares (both states) plus interior diagonals.
    pub fn traversable_edges(&self) -> BTreeSet<DirEdge> {
        let mut out = self.interior_diagonals();
        for (&m, _) in &self.squares {
            for op in [true, false] {
                out.extend(strand_sides(m, op));
            }
        }
        out
    }

    // -- text format ------------------------------------------------------

    pub fn to_text(&self) -> String {
        let minx = self.blacks.iter().map(|p| p.0).min().unwrap();
        let maxx = self.blacks.iter().map(|p| p.0).max().unwrap();
        let miny = self.blacks.iter().map(|p| p.1).min().unwrap();
        let maxy = self.blacks.iter().map(|p| p.1).max().unwrap();
        let mut s = format!("mesh={}\n", self.geom.mesh);
        for y in (miny..=maxy).rev() {
            for x in minx..=maxx {
                s.push(if self.blacks.contains(&(x, y)) { 'B' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<WiredDomain, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty domain text")?;
        let mesh: f64 = header
            .strip_prefix("mesh=")
            .ok_or("missing mesh= header")?
            .trim()
            .parse()
            .map_err(|e| format!("bad mesh value: {e}"))?;
        if mesh <= 0.0 {
            return Err("mesh must be positive".into());
        }
        let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
        let mut blacks = BTreeSet::new();
        let nrows = rows.len() as i64;
        for (i, row) in rows.iter().enumerate() {
            for (j, ch) in row.chars().enumerate() {
                match ch {
                    'B' => {
                        blacks.insert((j as i64, nrows - 1 - i as i64));
                    }
                    '.' => {}
                    c => return Err(format!("unexpected character {c:?}")),
                }
            }
        }
        if blacks.is_empty() {
            return Err("no black faces".into());
        }
        Ok(WiredDomain::from_blacks(blacks, mesh))
    }
}

/// The square a non-diagonal edge is a side of.
pub fn side_square(e: &DirEdge) -> Pt {
    let q2 = e.mid2(); // doubled midpoint; one coord even*2, other odd*2
    // midpoint q = q2/2 has one integer coordinate (even) and one odd
    let q = (q2.0 / 2, q2.1 / 2);
    // q = m + d with d axis unit
    for d in DIRS {
        let m = (q.0 - d.0, q.1 - d.1);
        if is_square_center(m) {
            return m;
        }
    }
    unreachable!("edge {:?} is not a square side", e)
}

/// The black and white octagon centers separated by a diagonal edge.
pub fn diagonal_octagons(e: &DirEdge) -> (Pt, Pt) {
    debug_assert!(e.is_diagonal());
    let q2 = e.mid2();
    let q = (q2.0 / 2, q2.1 / 2); // both coords even
    // the octagon centers lie across the edge, at the two diagonal offsets
    // perpendicular to it; the other two diagonal neighbors are square centers
    let mut black = None;
    let mut white = None;
    for d in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
        let o = (q.0 + 2 * d.0, q.1 + 2 * d.1);
        if is_black_center(o) {
            black = Some(o);
        } else if is_white_center(o) {
            white = Some(o);
        }
    }
    (black.unwrap(), white.unwrap())
}

fn rotate_to_min(cycle: &mut Vec<DirEdge>) {
    let k = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, e)| **e)
        .map(|(i, _)| i)
        .unwrap();
    cycle.rotate_left(k);
}

/// Decompose a set of directed edges with in-degree = out-degree = 1 at
/// every vertex into simple directed cycles, each rotated to start at its
/// minimal edge, sorted by first edge.
pub fn decompose_cycles(edges: &[DirEdge]) -> Vec<Vec<DirEdge>> {
    let mut next: HashMap<Pt, DirEdge> = HashMap::with_capacity(edges.len());
    let mut indeg: HashMap<Pt, u32> = HashMap::new();
    for e in edges {
        let prev = next.insert(e.tail, *e);
        assert!(prev.is_none(), "vertex {:?} has out-degree > 1", e.tail);
        *indeg.entry(e.head).or_insert(0) += 1;
    }
    for e in edges {
        assert!(next.contains_key(&e.head), "dangling edge head {:?}", e.head);
        assert_eq!(indeg[&e.tail], 1, "vertex {:?} has in-degree != 1", e.tail);
    }
    let mut used: BTreeSet<DirEdge> = BTreeSet::new();
    let mut cycles = Vec::new();
    for e in edges {
        if used.contains(e) {
            continue;
        }
        let mut cyc = Vec::new();
        let mut cur = *e;
        loop {
            used.insert(cur);
            cyc.push(cur);
            cur = next[&cur.head];
            if cur == *e {
                break;
            }
        }
        rotate_to_min(&mut cyc);
        cycles.push(cyc);
    }
    cycles.sort_by_key(|c| c[0]);
    cycles
}

// -- validation -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub invariant: String,
    pub witness: String,
}

pub fn validate_admissible(d: &WiredDomain) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.blacks.is_empty() {
        out.push(Violation { invariant: "non-empty".into(), witness: String::new() });
        return out;
    }
    // connectivity of the induced primal subgraph
    let start = *d.blacks.iter().next().unwrap();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    seen.insert(start);
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let q = (x + dx, y + dy);
            if d.blacks.contains(&q) && seen.insert(q) {
                stack.push(q);
            }
        }
    }
    if seen.len() != d.blacks.len() {
        let w = d.blacks.iter().find(|p| !seen.contains(p)).unwrap();
        out.push(Violation {
            invariant: "not-connected".into(),
            witness: format!("{w:?}"),
        });
    }
    // simple connectivity: complement of the black set is connected
    let minx = d.blacks.iter().map(|p| p.0).min().unwrap() - 2;
    let maxx = d.blacks.iter().map(|p| p.0).max().unwrap() + 2;
    let miny = d.blacks.iter().map(|p| p.1).min().unwrap() - 2;
    let maxy = d.blacks.iter().map(|p| p.1).max().unwrap() + 2;
    let mut outside = BTreeSet::new();
    let mut stack = vec![(minx, miny)];
    outside.insert((minx, miny));
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let q = (x + dx, y + dy);
            if q.0 < minx || q.0 > maxx || q.1 < miny || q.1 > maxy {
                continue;
            }
            if !d.blacks.contains(&q) && outside.insert(q) {
                stack.push(q);
            }
        }
    }
    for x in minx..=maxx {
        for y in miny..=maxy {
            let p = (x, y);
            if !d.blacks.contains(&p) && !outside.contains(&p) {
                out.push(Violation {
                    invariant: "not-simply-connected".into(),
                    witness: format!("{p:?}"),
                });
                return out;
            }
        }
    }
    // boundary is a simple closed path
    let mut verts = BTreeSet::new();
    for e in &d.boundary {
        if !verts.insert(e.tail) {
            out.push(Violation {
                invariant: "boundary-not-a-path".into(),
                witness: format!("{:?}", e.tail),
            });
            break;
        }
    }
    if let (Some(first), Some(last)) = (d.boundary.first(), d.boundary.last()) {
        if last.head != first.tail {
            out.push(Violation {
                invariant: "boundary-not-closed".into(),
                witness: format!("{:?}", last.head),
            });
        }
    }
    // inner boundary vertex-disjoint from the outer boundary
    for e in &d.inner_boundary {
        if d.on_boundary_vertex(e.tail) {
            out.push(Violation {
                invariant: "inner-boundary-touches-boundary".into(),
                witness: format!("{:?}", e.tail),
            });
            break;
        }
    }
    out
}

// -- Dobrushin markings -------------------------------------------------------

#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum MarkError {
    #[error("root square shares {0} boundary edges, need exactly one")]
    BottleneckRoot(usize),
    #[error("root square not adjacent to the boundary")]
    RootNotOnBoundary,
    #[error("root square is not a square of this domain")]
    RootNotPresent,
    #[error("marked edge touches the boundary or lies outside the domain")]
    NotInterior,
    #[error("marked edge must be a horizontal east-pointing interior edge")]
    BadOrientation,
}

#[derive(Clone, Debug)]
pub struct DobrushinDomain {
    pub base: WiredDomain,
    pub root_square: Pt,
    /// Diagonal stub directed out of the root square into the interior;
    /// the point a sits at its head.
    pub e_i: DirEdge,
    /// Diagonal stub directed into the root square; b sits at its head.
    pub e_o: DirEdge,
    /// The root square's interior strand, from head(e_o) to tail(e_i);
    /// cutting the loop through it opens the root.
    pub cut_side: DirEdge,
    /// The root square's boundary strand.
    pub outer_side: DirEdge,
    /// Marked interior medial edge f (a horizontal east-pointing diagonal),
    /// split at its midpoint w into halves f_o (tail..w) and f_i (w..head).
    pub f: DirEdge,
    /// Midpoint of f, doubled to stay integral.
    pub w2: Pt,
}

pub fn mark_dobrushin(d: &WiredDomain, root_square: Pt, f: DirEdge) -> Result<DobrushinDomain, MarkError> {
    if !d.is_square_present(root_square) {
        return Err(MarkError::RootNotPresent);
    }
    let bset = d.boundary_edge_set();
    let sides = all_sides(root_square);
    let on_b: Vec<&DirEdge> = sides.iter().filter(|s| bset.contains(s)).collect();
    match on_b.len() {
        0 => return Err(MarkError::RootNotOnBoundary),
        1 => {}
        n => return Err(MarkError::BottleneckRoot(n)),
    }
    let outer = *on_b[0];
    // the root square is wired (always open); its strands are the outer
    // side and the interior cut side
    let strands = strand_sides(root_square, true);
    let cut = if strands[0] == outer { strands[1] } else { strands[0] };
    assert!(strands.contains(&outer), "root boundary side is not a strand");
    // stubs: the diagonal leaving tail(cut)... the cut side runs from
    // head(e_o) to tail(e_i): e_i leaves the corner cut.head, e_o arrives
    // at the corner cut.tail
    let (diag_out, p1) = diagonal_at(root_square, cut.head);
    let (diag_in, p2) = diagonal_at(root_square, cut.tail);
    assert_eq!(diag_out.tail, cut.head, "stub at cut head must leave the square");
    assert_eq!(diag_in.head, cut.tail, "stub at cut tail must enter the square");
    if !d.is_square_present(p1) || !d.is_square_present(p2) {
        return Err(MarkError::RootNotOnBoundary);
    }
    let e_i = diag_out;
    let e_o = diag_in;
    // boundary values of the two observables are compared at e_o without any
    // direction-dependent phase only when the outgoing edge lies in the same
    // oriented diagonal class as the marked edge; require that frame
    if e_o.dir() != (1, 1) {
        return Err(MarkError::BadOrientation);
    }
    // f: horizontal east-pointing interior diagonal
    if !f.is_diagonal() {
        return Err(MarkError::BadOrientation);
    }
    let dirv = f.dir();
    // "horizontal east-pointing" medial edge: rotating the medial lattice by
    // -45° sends the (1, 1) diagonal class to the horizontal east direction
    if dirv != (1, 1) {
        return Err(MarkError::BadOrientation);
    }
    let interior = d.interior_diagonals();
    if !interior.contains(&f) {
        return Err(MarkError::NotInterior);
    }
    // f must not touch the boundary or the root stubs
    if d.on_boundary_vertex(f.tail) || d.on_boundary_vertex(f.head) || f == e_i || f == e_o {
        return Err(MarkError::NotInterior);
    }
    // require both its squares to carry interior or wired bonds strictly
    // inside: reject edges on the inner boundary adjacent to the outer one
    let ib: BTreeSet<DirEdge> = d.inner_boundary.iter().cloned().collect();
    if ib.contains(&f) {
        // allowed unless adjacent to the boundary, which was checked above;
        // keep f strictly interior for safety
        return Err(MarkError::NotInterior);
    }
    Ok(DobrushinDomain {
        base: d.clone(),
        root_square,
        e_i,
        e_o,
        cut_side: cut,
        outer_side: outer,
        f,
        w2: f.mid2(),
    })
}

impl DobrushinDomain {
    /// a = head of e_i.
    pub fn a(&self) -> Pt {
        self.e_i.head
    }
    /// b = head of e_o.
    pub fn b(&self) -> Pt {
        self.e_o.head
    }
}
