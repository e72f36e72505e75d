//! Scratch driver: observable identity checks.

use forge::dca::{integrate_h, observable_sholo_geometry, sholo_residuals, EdgeField};
use forge::lattice::diagonal_octagons;
use forge::lattice::*;
use forge::observable::*;
use num_complex::Complex64;
use std::f64::consts::PI;

/// All admissible markings, deep ones (marked edge surrounded by interior
/// perpendicular neighbors) first.
fn candidate_markings(d: &WiredDomain) -> Vec<(DobrushinDomain, bool)> {
    let interior = d.interior_diagonals();
    let by_mid: std::collections::BTreeMap<Pt, DirEdge> =
        interior.iter().map(|e| (e.mid2(), *e)).collect();
    let sampled: std::collections::BTreeSet<Pt> =
        d.interior_edges.iter().map(|&(a, b)| square_center(a, b)).collect();
    // an edge is "buried" if both adjacent squares carry sampled bonds
    let buried = |e: &DirEdge| {
        let (m1, m2) = forge::dca::medial_endpoints(e);
        sampled.contains(&m1) && sampled.contains(&m2)
    };
    let mut deep = Vec::new();
    let mut shallow = Vec::new();
    for (&m, _) in &d.squares {
        for f in interior.iter().filter(|e| e.dir() == (1, 1)) {
            if let Ok(dob) = mark_dobrushin(d, m, *f) {
                let w = dob.w2;
                let is_deep = buried(f)
                    && [(0i64, 8i64), (-8, 0), (0, -8), (8, 0)].iter().all(|o| {
                        by_mid
                            .get(&(w.0 + o.0, w.1 + o.1))
                            .map(&buried)
                            .unwrap_or(false)
                    });
                if is_deep {
                    deep.push((dob, true));
                } else {
                    shallow.push((dob, false));
                }
            }
        }
    }
    deep.extend(shallow);
    deep
}

fn main() {
    for (w, h) in [(3usize, 2usize), (3, 3), (4, 3)] {
        let d = WiredDomain::build_rect_domain(w, h, 1.0);
        let mut found = false;
        for (dob, is_deep) in candidate_markings(&d) {
            let ex = observables_exact(&dob).expect("enumeration");
            // skip degenerate markings where the interface cannot reach the
            // marked edge (all boundary-touching values vanish)
            let beta_d = ex.f_tilde.values.get(&dob.f).map(|v| v.norm_sqr()).unwrap_or(0.0);
            if beta_d < 1e-9 || !ex.f.edges.values.contains_key(&dob.e_o) {
                continue;
            }
            found = true;
            println!(
                "== {w}x{h}: {} bonds, f {:?}, root {:?}, deep={is_deep}",
                d.n_bonds(),
                dob.f,
                dob.root_square
            );

            // endpoint values
            assert!((ex.f.at_f_out + 1.0).norm() < 1e-12, "F(f_o) = {:?}", ex.f.at_f_out);
            assert!((ex.f.at_f_in - 1.0).norm() < 1e-12, "F(f_i) = {:?}", ex.f.at_f_in);
            let ft_eo = ex.f_tilde.values[&dob.e_o];
            assert!((ft_eo - 1.0).norm() < 1e-12, "F~(e_o) = {ft_eo:?}");
            println!("   endpoints ok: F(f_o)=-1, F(f_i)=1, F~(e_o)=1");

            // epsilon identities
            let f_eo = ex.f.edges.values[&dob.e_o];
            let f_ei = ex.f.edges.values[&dob.e_i];
            let ft_ei = ex.f_tilde.values[&dob.e_i];
            let eps = f_eo / ft_eo;
            println!("   eps = {:.6} + {:.2e} i", eps.re, eps.im);
            assert!(eps.im.abs() < 1e-12, "eps must be real");
            assert!((eps + f_ei / ft_ei).norm() < 1e-12, "eps = -F(e_i)/F~(e_i): {:?}", f_ei / ft_ei);
            assert!((eps.re * eps.re - beta_d).abs() < 1e-12, "eps^2 = |F~(f)|^2");
            assert!((f_eo.norm_sqr() - beta_d).abs() < 1e-12, "|F(e_o)|^2 = beta");
            assert!((f_ei.norm_sqr() - beta_d).abs() < 1e-12, "|F(e_i)|^2 = beta");
            assert!(beta_d > 0.0 && beta_d < 1.0, "beta in (0,1): {beta_d}");
            println!("   eps identities ok, beta_delta = {beta_d:.6}");

            // s-holomorphicity
            let geom = observable_sholo_geometry(&dob, dob.f);
            let res_ft = sholo_residuals(&ex.f_tilde, &geom);
            let worst_ft = res_ft.values().cloned().fold(0.0, f64::max);
            println!("   F~ sholo worst {worst_ft:.3e} over {} edges", res_ft.len());
            assert!(worst_ft < 1e-12);
            let away_from_f = |field: &EdgeField, label: &str| {
                let res = sholo_residuals(field, &geom);
                let mut worst = 0.0f64;
                let mut n_away = 0;
                for (e, r) in &res {
                    let (m1, m2) = forge::dca::medial_endpoints(&dob.f);
                    let (e1, e2) = forge::dca::medial_endpoints(e);
                    if e1 == m1 || e1 == m2 || e2 == m1 || e2 == m2 {
                        continue;
                    }
                    worst = worst.max(*r);
                    n_away += 1;
                }
                println!("   {label} sholo worst away from f {worst:.3e} over {n_away} edges");
                assert!(worst < 1e-12);
            };
            away_from_f(&ex.f.edges, "F");
            // F +- eps F~ (holomorphic continuations past a and b)
            for (sgn, label) in [(1.0, "F+epsF~"), (-1.0, "F-epsF~")] {
                let mut combo = ex.f.edges.clone();
                for (e, v) in combo.values.iter_mut() {
                    if let Some(ft) = ex.f_tilde.values.get(e) {
                        *v += sgn * eps.re * ft;
                    }
                }
                away_from_f(&combo, label);
            }
            let defect = f_defect(&dob, &ex.f);
            println!("   F defect at f = {:.9} + {:.3e} i", defect.re, defect.im);
            if is_deep {
                assert!(
                    (defect - Complex64::new(2.0f64.sqrt(), 0.0)).norm() < 1e-12,
                    "deep defect must be sqrt(2)"
                );
            }

            // H integration
            let hf = integrate_h(&ex.f.edges, &dob).expect("H closure");
            let (bf, wf) = diagonal_octagons(&dob.f);
            let h_jump = hf.values[&bf] - hf.values[&wf];
            println!("   H jump across f = {h_jump:.9}");
            println!("   H faces: {}", hf.values.len());
            break;
        }
        assert!(found, "no live marking on {w}x{h}");
    }

    // coefficients + verify_Q
    let (a, b) = coefficients(-PI / 2.0, PI / 2.0).unwrap();
    assert!((a - 0.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14, "({a},{b})");
    let (a, b) = coefficients(0.0, PI / 2.0).unwrap();
    assert!((a - 1.414214).abs() < 1e-6 && (b - 0.207107).abs() < 1e-6, "({a},{b})");
    let (a, b) = coefficients(0.0, 2.0 * PI).unwrap();
    assert!((a + 2.0).abs() < 1e-14 && b.abs() < 1e-14);
    let rep = verify_q(-PI / 2.0, PI / 2.0, 0.0, 1.0).unwrap();
    let m_want = Complex64::from_polar(1.0, -PI / 4.0);
    let n_want = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
    assert!((rep.m - m_want).norm() < 1e-8, "m = {:?}", rep.m);
    assert!((rep.n - n_want).norm() < 1e-8, "n = {:?}", rep.n);
    assert!(rep.max_residual < 1e-10);
    println!("verify_Q symmetric arc ok, residual {:.3e}", rep.max_residual);
    // random pairs
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let t0 = std::time::Instant::now();
    for _ in 0..1000 {
        let ups = rng.gen_range(-PI..PI);
        let phi = ups + rng.gen_range(0.05..(2.0 * PI - 0.05));
        let (a, b) = coefficients(ups, phi).unwrap();
        let rep = verify_q(ups, phi, a, b).unwrap_or_else(|e| panic!("({ups},{phi}): {e}"));
        assert!(rep.max_residual < 1e-8);
    }
    println!("1000 random verify_Q ok in {:?}", t0.elapsed());
    assert!(verify_q(0.3, 2.0, 1.0, 0.3).is_err(), "perturbed must fail");

    // continuum checks
    let obs = continuum_observable(0.4, 2.5).unwrap();
    let (zeta, xi) = h_arc_constants(&obs);
    println!("continuum: zeta {zeta:.6} xi {xi:.6} beta*pi {:.6}", obs.beta * PI);
    assert!(((xi - zeta) - obs.beta * PI).abs() < 1e-6, "jump = beta*pi");
    // arc constancy
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let t = obs.upsilon + (obs.phi - obs.upsilon) * (k as f64 + 0.5) / 1000.0;
        let h = {
            let z = Complex64::from_polar(1.0 - 1e-9, t);
            let (_, _, h) = continuum_f_h(z, &obs).unwrap();
            h
        };
        worst = worst.max((h - zeta).abs());
    }
    println!("arc uv constancy worst {worst:.3e}");
    assert!(worst < 1e-6);
    // near 0: H - Im(-1/z) bounded by K log(1/|z|)
    for r in [1e-4, 1e-3, 1e-2] {
        let z = Complex64::from_polar(r, 1.0);
        let (_, _, h) = continuum_f_h(z, &obs).unwrap();
        let dev = (h - (-1.0 / z).im).abs();
        assert!(dev < 10.0 * (1.0 / r).ln(), "near-zero bound at {r}: {dev}");
    }
    println!("observable smoke ok");
}
