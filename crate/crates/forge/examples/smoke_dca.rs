//! Scratch driver: discrete complex analysis checks.

use forge::dca::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

fn grid_field(n: i64, f: impl Fn(i64, i64) -> Complex64) -> VertexField {
    let mut values = BTreeMap::new();
    for x in -n..=n {
        for y in -n..=n {
            if (x + y).rem_euclid(2) == 0 {
                values.insert((2 * x, 2 * y), f(2 * x, 2 * y));
            }
        }
    }
    // keys are all even pairs: (2x, 2y) with x+y arbitrary
    VertexField { values, tag: LatticeTag::Grid }
}

fn main() {
    // operator identity dbar1 d1 = 1/4 laplacian1 on black vertices
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut values = BTreeMap::new();
    for x in -12i64..=12 {
        for y in -12i64..=12 {
            values.insert((2 * x, 2 * y), Complex64::new(rng.gen_range(-9..10) as f64, rng.gen_range(-9..10) as f64));
        }
    }
    let f = VertexField { values: values.clone(), tag: LatticeTag::Grid };
    let composed = dbar1(&d1(&f));
    let black = VertexField {
        values: values.iter().filter(|(p, _)| is_black_grid(**p)).map(|(p, v)| (*p, *v)).collect(),
        tag: LatticeTag::Black,
    };
    let lap = laplacian1(&black);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (p, v) in &composed.values {
        if let Some(l) = lap.values.get(p) {
            worst = worst.max((v - l / 4.0).norm());
            count += 1;
        }
    }
    println!("identity checked at {count} black vertices, worst {worst:.3e}");
    assert!(worst < 1e-12 && count > 100);

    // f(z) = z: dbar = 0, d = 1
    let fz = grid_field(12, |x, y| Complex64::new(x as f64 / 2.0, y as f64 / 2.0));
    let db = dbar1(&fz);
    let dd = d1(&fz);
    let wd = db.values.values().map(|v| v.norm()).fold(0.0, f64::max);
    let wd2 = dd.values.values().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
    println!("f=z (delta units): |dbar1| max {wd:.3e}, |d1 - 1| max {wd2:.3e}");
    assert!(wd < 1e-12 && wd2 < 1e-12);

    // Green's function
    let g = greens_function((0, 0), 64).unwrap();
    println!("greens: C = {:.6}, G(z0) = {:.3e}", g.constant, g.field.values[&(0, 0)].re);
    for d in [(2i64, 2i64), (-2, 2), (-2, -2), (2, -2)] {
        let v = g.field.values[&d].re;
        assert!((v - 0.25).abs() < 1e-9, "nearest neighbor {v}");
    }
    let lg = laplacian1(&g.field);
    let mut worst = 0.0;
    for (p, v) in &lg.values {
        let want = if *p == (0, 0) { 1.0 } else { 0.0 };
        worst = f64::max(worst, (v.re - want).abs());
    }
    println!("greens laplacian residual {worst:.3e}");
    assert!(worst < 1e-9);
    // asymptotic residual decay
    let prof = |p: (i64, i64)| {
        let r = ((p.0 * p.0 + p.1 * p.1) as f64).sqrt();
        (r / (std::f64::consts::SQRT_2 * 2.0)).ln() / (2.0 * std::f64::consts::PI) + g.constant
    };
    let res_at = |r: i64| -> f64 {
        g.field
            .values
            .iter()
            .filter(|(p, _)| p.0.abs().max(p.1.abs()) == r)
            .map(|(p, v)| (v.re - prof(*p)).abs())
            .fold(0.0, f64::max)
    };
    println!("asym residual at 8: {:.3e}, 16: {:.3e}, 32: {:.3e}", res_at(8), res_at(16), res_at(32));
    assert!(res_at(16) < res_at(8) / 2.5);

    // Cauchy kernel
    let c = cauchy_kernel((0, 0), 64).unwrap();
    let defect = c.defect();
    println!("defect = {:.12} + {:.3e}i", defect.re, defect.im);
    assert!((defect - 0.5).norm() < 1e-10);
    // line confinement of plaquette values
    for (p, v) in &c.on_plaquettes {
        let (b1, b2) = plaquette_black_diagonal(*p);
        let nu = if (b2.0 - b1.0) == (b2.1 - b1.1) { LAMBDA } else { LAMBDA.conj() };
        let off = (nu.conj() * v).im.abs();
        assert!(off < 1e-12, "plaquette {p:?} off-line by {off}");
    }
    println!("plaquette values confined to their lines");
    // s-holomorphicity residuals
    let geom = grid_sholo_geometry(&c);
    let field = cauchy_edge_field(&c);
    let res = sholo_residuals(&field, &geom);
    let mut worst = 0.0f64;
    let mut at_z0 = 0.0f64;
    for (e, r) in &res {
        let mid = e.mid2();
        if (mid.0 / 2, mid.1 / 2) == (0, 0) {
            at_z0 = *r;
        } else {
            worst = worst.max(*r);
        }
    }
    println!("sholo residuals: worst away {worst:.3e}, at z0 {at_z0:.3e} ({} edges)", res.len());
    assert!(worst < 1e-10 && at_z0 > 1e-3);
    // far field
    let mut worst_rel = 0.0f64;
    for (p, v) in &c.on_vertices.values {
        let r2 = p.0 * p.0 + p.1 * p.1;
        if r2 < 20 * 20 || p.0.abs().max(p.1.abs()) > 40 {
            continue;
        }
        let z = Complex64::new(p.0 as f64, p.1 as f64);
        let pred = std::f64::consts::SQRT_2 / (2.0 * std::f64::consts::PI) * 2.0 / z;
        worst_rel = worst_rel.max((v - pred).norm() / pred.norm());
    }
    println!("far-field worst relative deviation {worst_rel:.3e}");
    assert!(worst_rel < 0.15);
    println!("dca smoke ok");
}
