//! Discrete complex analysis on the square grid: unnormalized Laplace and
//! Wirtinger-type difference operators, the discrete Green's function and
//! Cauchy kernel, spin-preholomorphicity residuals, and the discrete
//! integral of Im ∫ F² dz on octagon faces.
//!
//! Grid conventions (integer-scaled, mesh δ = 2 units): grid vertices sit at
//! even coordinate pairs (2i, 2j); the "black" sublattice is x+y ≡ 0 (mod 4)
//! and the "white" one x+y ≡ 2 (mod 4); plaquette centers sit at odd pairs
//! (2i+1, 2j+1). The auxiliary medial lattice has vertices at (odd, even)
//! pairs, so grid vertices are the midpoints of its horizontal edges and
//! plaquette centers the midpoints of its vertical edges.

use crate::lattice::{corners, diagonal_at, diagonal_octagons, DirEdge, DobrushinDomain, Pt};
use num_complex::Complex64;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

pub const LAMBDA: Complex64 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2);

/// Mesh in grid units: grid vertices are 2 units apart.
pub const DELTA_UNITS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticeTag {
    /// All grid vertices (black ∪ white), spacing δ.
    Grid,
    /// Plaquette centers of the grid, spacing δ.
    PlaquetteDual,
    /// Black sublattice, spacing √2 δ.
    Black,
}

#[derive(Clone, Debug)]
pub struct VertexField {
    pub values: BTreeMap<Pt, Complex64>,
    pub tag: LatticeTag,
}

#[derive(Clone, Debug, Default)]
pub struct EdgeField {
    pub values: BTreeMap<DirEdge, Complex64>,
}

#[derive(Clone, Debug, Default)]
pub struct FaceField {
    pub values: BTreeMap<Pt, f64>,
}

pub fn is_black_grid(p: Pt) -> bool {
    p.0.rem_euclid(2) == 0 && p.1.rem_euclid(2) == 0 && (p.0 + p.1).rem_euclid(4) == 0
}
pub fn is_white_grid(p: Pt) -> bool {
    p.0.rem_euclid(2) == 0 && p.1.rem_euclid(2) == 0 && (p.0 + p.1).rem_euclid(4) == 2
}
pub fn is_plaquette(p: Pt) -> bool {
    p.0.rem_euclid(2) == 1 && p.1.rem_euclid(2) == 1
}

fn unit(d: Pt) -> Complex64 {
    let v = Complex64::new(d.0 as f64, d.1 as f64);
    v / v.norm()
}

/// Unnormalized Laplacian on the black sublattice:
/// (Δ₁f)(z) = Σ_{w∼z} (f(w) − f(z)), neighbors at (±2, ±2).
/// Defined at vertices whose four neighbors all carry values.
pub fn laplacian1(f: &VertexField) -> VertexField {
    assert_eq!(f.tag, LatticeTag::Black, "laplacian1 acts on the black sublattice");
    let mut out = BTreeMap::new();
    'pts: for (&z, &fz) in &f.values {
        let mut acc = Complex64::new(0.0, 0.0);
        for d in [(2i64, 2i64), (-2, 2), (-2, -2), (2, -2)] {
            match f.values.get(&(z.0 + d.0, z.1 + d.1)) {
                Some(&fw) => acc += fw - fz,
                None => continue 'pts,
            }
        }
        out.insert(z, acc);
    }
    VertexField { values: out, tag: LatticeTag::Black }
}

/// Normalized Laplacian Δ = Δ₁ / (2δ²).
pub fn laplacian(f: &VertexField, delta: f64) -> VertexField {
    let mut l = laplacian1(f);
    for v in l.values.values_mut() {
        *v /= 2.0 * delta * delta;
    }
    l
}

fn cross_neighbors(z: Pt, from_grid: bool) -> [Pt; 4] {
    // grid ↔ plaquette-dual neighbors at (±1, ±1)
    let _ = from_grid;
    [(z.0 + 1, z.1 + 1), (z.0 - 1, z.1 + 1), (z.0 - 1, z.1 - 1), (z.0 + 1, z.1 - 1)]
}

fn d_or_dbar(f: &VertexField, conjugate: bool) -> VertexField {
    let (out_tag, from_grid) = match f.tag {
        LatticeTag::Grid => (LatticeTag::PlaquetteDual, true),
        LatticeTag::PlaquetteDual => (LatticeTag::Grid, false),
        LatticeTag::Black => panic!("difference operators act on the full grid or its dual"),
    };
    // output sites: points all four of whose neighbors carry values
    let mut sites: BTreeSet<Pt> = BTreeSet::new();
    for &w in f.values.keys() {
        for z in cross_neighbors(w, !from_grid) {
            sites.insert(z);
        }
    }
    let mut out = BTreeMap::new();
    'sites: for z in sites {
        let mut acc = Complex64::new(0.0, 0.0);
        for w in cross_neighbors(z, from_grid) {
            match f.values.get(&w) {
                Some(&fw) => {
                    let u = unit((w.0 - z.0, w.1 - z.1));
                    acc += if conjugate { u.conj() } else { u } * fw;
                }
                None => continue 'sites,
            }
        }
        out.insert(z, acc / 2.0);
    }
    VertexField { values: out, tag: out_tag }
}

/// (∂₁f)(z) = ½ Σ_{w∼z} ((w̄−z̄)/|w−z|) f(w), mapping grid → dual or back.
pub fn d1(f: &VertexField) -> VertexField {
    d_or_dbar(f, true)
}

/// (∂̄₁f)(z) = ½ Σ_{w∼z} ((w−z)/|w−z|) f(w).
pub fn dbar1(f: &VertexField) -> VertexField {
    d_or_dbar(f, false)
}

/// Normalized derivatives ∂ = ∂₁/(√2 δ), ∂̄ = ∂̄₁/(√2 δ).
pub fn d_norm(f: &VertexField, delta: f64) -> VertexField {
    let mut g = d1(f);
    for v in g.values.values_mut() {
        *v /= std::f64::consts::SQRT_2 * delta;
    }
    g
}
pub fn dbar_norm(f: &VertexField, delta: f64) -> VertexField {
    let mut g = dbar1(f);
    for v in g.values.values_mut() {
        *v /= std::f64::consts::SQRT_2 * delta;
    }
    g
}

#[derive(Debug, thiserror::Error)]
pub enum DcaError {
    #[error("linear solve failed to converge: residual {0}")]
    SolveFailure(f64),
    #[error("increments do not close up: max cycle residual {0}")]
    NotClosed(f64),
    #[error("{0}")]
    BadInput(String),
}

pub struct GreensFunction {
    pub field: VertexField,
    /// Fitted additive constant of the logarithmic asymptotics.
    pub constant: f64,
    pub z0: Pt,
}

/// Discrete Green's function of the black sublattice: Δ₁G = 1 at z0, G(z0)=0,
/// computed on the box |z−z0|_∞ ≤ radius (grid units) with logarithmic
/// Dirichlet data on the surrounding ring; the additive constant is fitted by
/// the normalization G(z0) = 0.
pub fn greens_function(z0: Pt, radius: i64) -> Result<GreensFunction, DcaError> {
    if !is_black_grid(z0) {
        return Err(DcaError::BadInput(format!("{z0:?} is not a black grid vertex")));
    }
    if radius < 16 {
        return Err(DcaError::BadInput("radius must be at least 16 grid units (8δ)".into()));
    }
    let delta = DELTA_UNITS;
    let log_profile = |p: Pt| -> f64 {
        let r = (((p.0 - z0.0).pow(2) + (p.1 - z0.1).pow(2)) as f64).sqrt();
        (r / (std::f64::consts::SQRT_2 * delta)).ln() / (2.0 * std::f64::consts::PI)
    };
    // unknowns: black vertices strictly inside; Dirichlet ring just outside
    let mut idx: HashMap<Pt, usize> = HashMap::new();
    let mut pts: Vec<Pt> = Vec::new();
    let mut x = z0.0 - radius;
    while x <= z0.0 + radius {
        let mut y = z0.1 - radius;
        while y <= z0.1 + radius {
            let p = (x, y);
            if is_black_grid(p) {
                idx.insert(p, pts.len());
                pts.push(p);
            }
            y += 2;
        }
        x += 2;
    }
    let n = pts.len();
    // rhs of (4I − A) g = −𝟙_{z0} + Σ boundary data
    let mut b = vec![0.0f64; n];
    b[idx[&z0]] -= 1.0;
    let neigh = |p: Pt| [(p.0 + 2, p.1 + 2), (p.0 - 2, p.1 + 2), (p.0 - 2, p.1 - 2), (p.0 + 2, p.1 - 2)];
    for (k, &p) in pts.iter().enumerate() {
        for q in neigh(p) {
            if !idx.contains_key(&q) {
                b[k] += log_profile(q);
            }
        }
    }
    // conjugate gradient on the SPD operator (4I − A)
    let apply = |v: &[f64], out: &mut [f64]| {
        for (k, &p) in pts.iter().enumerate() {
            let mut acc = 4.0 * v[k];
            for q in neigh(p) {
                if let Some(&j) = idx.get(&q) {
                    acc -= v[j];
                }
            }
            out[k] = acc;
        }
    };
    let mut g = vec![0.0f64; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0f64; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rs = dot(&r, &r);
    let tol = 1e-24;
    for _ in 0..20 * n {
        if rs < tol {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for k in 0..n {
            g[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rs2 = dot(&r, &r);
        let beta = rs2 / rs;
        rs = rs2;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    if rs.sqrt() > 1e-10 {
        return Err(DcaError::SolveFailure(rs.sqrt()));
    }
    let g0 = g[idx[&z0]];
    let mut values = BTreeMap::new();
    for (k, &pt) in pts.iter().enumerate() {
        values.insert(pt, Complex64::new(g[k] - g0, 0.0));
    }
    Ok(GreensFunction {
        field: VertexField { values, tag: LatticeTag::Black },
        constant: -g0,
        z0,
    })
}

pub struct CauchyKernel {
    /// Values on vertical medial edges, keyed by the plaquette center.
    pub on_plaquettes: BTreeMap<Pt, Complex64>,
    /// Values at medial vertices (odd, even): sum of the two vertical edges.
    pub on_vertices: VertexField,
    pub z0: Pt,
    pub greens: GreensFunction,
}

/// The black diagonal of the plaquette centered at p: its two black corners,
/// ordered so the direction points into the right half plane.
pub fn plaquette_black_diagonal(p: Pt) -> (Pt, Pt) {
    debug_assert!(is_plaquette(p));
    let c = (p.0 + 1, p.1 + 1);
    if is_black_grid(c) {
        ((p.0 - 1, p.1 - 1), (p.0 + 1, p.1 + 1))
    } else {
        ((p.0 - 1, p.1 + 1), (p.0 + 1, p.1 - 1))
    }
}

/// Discrete Cauchy kernel 𝒞 = ∂₁ G_{z0}: computed through the difference of
/// the Green's function along the black edge through each plaquette center,
/// 𝒞(p) = conj(u) (G(b₂) − G(b₁)) with u the unit vector from b₁ to b₂.
pub fn cauchy_kernel(z0: Pt, radius: i64) -> Result<CauchyKernel, DcaError> {
    let greens = greens_function(z0, radius)?;
    let gv = &greens.field.values;
    let mut on_plaquettes = BTreeMap::new();
    for &b in gv.keys() {
        for d in [(1i64, 1i64), (-1, 1), (-1, -1), (1, -1)] {
            let p = (b.0 + d.0, b.1 + d.1);
            if on_plaquettes.contains_key(&p) {
                continue;
            }
            let (b1, b2) = plaquette_black_diagonal(p);
            if let (Some(&g1), Some(&g2)) = (gv.get(&b1), gv.get(&b2)) {
                let d = (b2.0 - b1.0, b2.1 - b1.1);
                // σ takes values e^{i(π/4 + kπ/2)} by edge direction: λ̄ = conj(u)
                // for the north-east orientation and λ̄ again for north-west
                let sigma = if d.0 == d.1 { LAMBDA } else { LAMBDA.conj() };
                on_plaquettes.insert(p, sigma * (g2 - g1));
            }
        }
    }
    let mut on_vertices = BTreeMap::new();
    for &p in on_plaquettes.keys() {
        // vertices above and below the vertical edge through p
        for v in [(p.0, p.1 - 1), (p.0, p.1 + 1)] {
            if on_vertices.contains_key(&v) {
                continue;
            }
            if let (Some(&a), Some(&b)) =
                (on_plaquettes.get(&(v.0, v.1 - 1)), on_plaquettes.get(&(v.0, v.1 + 1)))
            {
                on_vertices.insert(v, a + b);
            }
        }
    }
    Ok(CauchyKernel {
        on_plaquettes,
        on_vertices: VertexField { values: on_vertices, tag: LatticeTag::Grid },
        z0,
        greens,
    })
}

impl CauchyKernel {
    /// Pole defect ½[λ̄(𝒞(NE)−𝒞(SW)) − λ(𝒞(NW)−𝒞(SE))] at z0. Equals ½
    /// exactly: the four adjacent edge values are forced to ±λ/4, ±λ̄/4 by
    /// G(z0) = 0 and the nearest-neighbor values ¼.
    pub fn defect(&self) -> Complex64 {
        let g = |d: Pt| self.on_plaquettes[&(self.z0.0 + d.0, self.z0.1 + d.1)];
        let (ne, nw, sw, se) = (g((1, 1)), g((-1, 1)), g((-1, -1)), g((1, -1)));
        0.5 * (LAMBDA.conj() * (ne - sw) - LAMBDA * (nw - se))
    }
}

// -- spin preholomorphicity ----------------------------------------------------

/// Incidence data for the projection relations: each medial vertex carries
/// the sum of two designated edge values; each edge carries a complex line.
#[derive(Clone, Debug, Default)]
pub struct SholoGeometry {
    pub vertex_edges: BTreeMap<Pt, [DirEdge; 2]>,
    /// (endpoint, endpoint, unit direction of the projection line)
    pub edges: Vec<(DirEdge, Pt, Pt, Complex64)>,
}

/// Per-edge residual |proj(F(v₁)) − proj(F(v₂))| of the projections of the
/// two endpoint vertex values onto the edge's line. Edges with a missing
/// endpoint value are skipped.
pub fn sholo_residuals(f: &EdgeField, geom: &SholoGeometry) -> BTreeMap<DirEdge, f64> {
    let mut vertex: BTreeMap<Pt, Complex64> = BTreeMap::new();
    'v: for (&p, es) in &geom.vertex_edges {
        let mut acc = Complex64::new(0.0, 0.0);
        for e in es {
            match f.values.get(e) {
                Some(&x) => acc += x,
                None => continue 'v,
            }
        }
        vertex.insert(p, acc);
    }
    let mut out = BTreeMap::new();
    for &(e, p1, p2, nu) in &geom.edges {
        if let (Some(&a), Some(&b)) = (vertex.get(&p1), vertex.get(&p2)) {
            let pa = (nu.conj() * a).re;
            let pb = (nu.conj() * b).re;
            out.insert(e, (pa - pb).abs());
        }
    }
    out
}

/// The projection geometry of the auxiliary medial lattice around the
/// kernel's grid: vertices at (odd, even); vertex values from the two
/// vertical edges; lines ℝ/iℝ on horizontal edges at black/white grid
/// vertices and λℝ/λ̄ℝ on vertical edges by the black diagonal direction.
pub fn grid_sholo_geometry(c: &CauchyKernel) -> SholoGeometry {
    let mut geom = SholoGeometry::default();
    for (&v, _) in &c.on_vertices.values {
        geom.vertex_edges.insert(
            v,
            [vertical_edge((v.0, v.1 - 1)), vertical_edge((v.0, v.1 + 1))],
        );
    }
    let mut seen: BTreeSet<DirEdge> = BTreeSet::new();
    for &v in c.on_vertices.values.keys() {
        // horizontal edges, midpoint = grid vertex
        for m in [(v.0 - 1, v.1), (v.0 + 1, v.1)] {
            let e = DirEdge::new((m.0 - 1, m.1), (m.0 + 1, m.1));
            if seen.insert(e) {
                let nu = if is_black_grid(m) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 1.0)
                };
                geom.edges.push((e, e.tail, e.head, nu));
            }
        }
        // vertical edges, midpoint = plaquette center
        for p in [(v.0, v.1 - 1), (v.0, v.1 + 1)] {
            let e = vertical_edge(p);
            if seen.insert(e) {
                let (b1, b2) = plaquette_black_diagonal(p);
                let d = (b2.0 - b1.0, b2.1 - b1.1);
                let nu = if d.0 == d.1 { LAMBDA } else { LAMBDA.conj() };
                geom.edges.push((e, e.tail, e.head, nu));
            }
        }
    }
    geom
}

pub fn vertical_edge(p: Pt) -> DirEdge {
    DirEdge::new((p.0, p.1 - 1), (p.0, p.1 + 1))
}

/// The kernel as an edge field on the vertical medial edges.
pub fn cauchy_edge_field(c: &CauchyKernel) -> EdgeField {
    let mut f = EdgeField::default();
    for (&p, &v) in &c.on_plaquettes {
        f.values.insert(vertical_edge(p), v);
    }
    f
}

// -- the H integral on octagon faces -------------------------------------------

/// Integrate the face function H with increments H(B) − H(W) = |F(e)|²
/// across every interior medial edge e between a black face B and a white
/// face W, anchored at 0 on a wired boundary face. The marked edge f is
/// excluded from both the spanning integration and the closure check (the
/// observable is allowed a defect there).
pub fn integrate_h(f: &EdgeField, dob: &DobrushinDomain) -> Result<FaceField, DcaError> {
    let d = &dob.base;
    let interior = d.interior_diagonals();
    // adjacency: black face ↔ white face across each usable interior edge;
    // edges the observable never visits carry value zero
    let mut adj: HashMap<Pt, Vec<(Pt, f64)>> = HashMap::new();
    for e in &interior {
        if *e == dob.f {
            continue;
        }
        let (black, white) = diagonal_octagons(e);
        let inc = f.values.get(e).map(|v| v.norm_sqr()).unwrap_or(0.0);
        adj.entry(black).or_default().push((white, -inc));
        adj.entry(white).or_default().push((black, inc));
    }
    let anchor = {
        let r = d.ring.iter().next().ok_or_else(|| DcaError::BadInput("empty domain".into()))?;
        (8 * r.0, 8 * r.1)
    };
    let mut h: BTreeMap<Pt, f64> = BTreeMap::new();
    h.insert(anchor, 0.0);
    let mut queue = VecDeque::from([anchor]);
    let mut max_residual = 0.0f64;
    while let Some(p) = queue.pop_front() {
        let hp = h[&p];
        for &(q, dh) in adj.get(&p).into_iter().flatten() {
            let val = hp + dh;
            match h.get(&q) {
                Some(&old) => max_residual = max_residual.max((old - val).abs()),
                None => {
                    h.insert(q, val);
                    queue.push_back(q);
                }
            }
        }
    }
    if max_residual > 1e-10 {
        return Err(DcaError::NotClosed(max_residual));
    }
    Ok(FaceField { values: h })
}

/// Projection-relation geometry for an observable on the marked domain:
/// medial vertices are the small-square centers, vertex values are the sums
/// of the two slope +1 medial edges at the square, and the line of each
/// interior medial edge is ν(e) = exp(−(i/2)·(θ_e − θ_ref)) for a reference
/// direction θ_ref (the marked edge for the interior observable, the
/// outgoing root stub for the boundary one).
pub fn observable_sholo_geometry(dob: &DobrushinDomain, reference: DirEdge) -> SholoGeometry {
    let d = &dob.base;
    let interior = d.interior_diagonals();
    let theta = |e: &DirEdge| {
        let dir = e.dir();
        (dir.1 as f64).atan2(dir.0 as f64)
    };
    let tref = theta(&reference);
    let mut geom = SholoGeometry::default();
    // vertices: only the sampled bond squares; the wired ring squares are
    // boundary medial vertices, where the projection relations pick up the
    // boundary conditions instead
    let sampled: BTreeSet<Pt> = d
        .interior_edges
        .iter()
        .map(|&(a, b)| crate::lattice::square_center(a, b))
        .collect();
    for &m in &sampled {
        // the two slope +1 medial edges at this square
        let mut plus: Vec<DirEdge> = Vec::new();
        let mut all4 = true;
        for c in corners(m) {
            let (diag, _) = diagonal_at(m, c);
            if !interior.contains(&diag) {
                all4 = false;
                break;
            }
            let dir = diag.dir();
            if dir.0 == dir.1 {
                plus.push(diag);
            }
        }
        if !all4 {
            continue;
        }
        assert_eq!(plus.len(), 2, "square {m:?} must carry two slope +1 medial edges");
        geom.vertex_edges.insert(m, [plus[0], plus[1]]);
    }
    for e in &interior {
        let (m1, m2) = medial_endpoints(e);
        if !geom.vertex_edges.contains_key(&m1) || !geom.vertex_edges.contains_key(&m2) {
            continue;
        }
        let mut dt = theta(e) - tref;
        while dt <= -std::f64::consts::PI {
            dt += 2.0 * std::f64::consts::PI;
        }
        while dt > std::f64::consts::PI {
            dt -= 2.0 * std::f64::consts::PI;
        }
        let nu = Complex64::from_polar(1.0, -dt / 2.0);
        geom.edges.push((*e, m1, m2, nu));
    }
    geom
}

/// The two square centers adjacent to an interior medial edge: the square
/// owning the corner and its partner across the edge.
pub fn medial_endpoints(e: &DirEdge) -> (Pt, Pt) {
    // midpoint of the edge, doubled: the edge spans corners c, c' with
    // midpoint on the segment between the two square centers
    let mid = e.mid2();
    let (black, white) = diagonal_octagons(e);
    // square centers adjacent to the edge: mid/2 ± (black−white)⊥ scaled
    let bx = (black.0 - white.0) / 2;
    let by = (black.1 - white.1) / 2;
    // perpendicular of the black→white half-axis points to the two squares
    let m1 = (mid.0 / 2 - by, mid.1 / 2 + bx);
    let m2 = (mid.0 / 2 + by, mid.1 / 2 - bx);
    (m1.min(m2), m1.max(m2))
}
