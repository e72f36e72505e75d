//! Scratch driver: Loewner flow / zipper checks.

use forge::loewner::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

fn brownian_driving(kappa: f64, t_end: f64, dt: f64, seed: u64) -> DrivingPath {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = (t_end / dt).round() as usize;
    let mut t = Vec::with_capacity(n + 1);
    let mut ups = Vec::with_capacity(n + 1);
    t.push(0.0);
    ups.push(0.0);
    let mut x = 0.0;
    for k in 1..=n {
        let g: f64 = {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        };
        x += kappa.sqrt() * dt.sqrt() * g;
        t.push(k as f64 * dt);
        ups.push(x);
    }
    DrivingPath::from_angles(t, ups)
}

fn main() {
    let one = Complex64::new(1.0, 0.0);

    // --- flow_forward basics ---
    let u = DrivingPath::constant(0.0, 0.5, 500);
    // fixed point at 0
    assert_eq!(
        flow_forward(&u, Complex64::new(0.0, 0.0), 0.5, EPS_SWALLOW).unwrap(),
        Flow::Reached(Complex64::new(0.0, 0.0))
    );
    // derivative normalization g_t'(0) = e^t
    for t_end in [0.1, 0.3, 0.5] {
        let z = Complex64::new(1e-8, 1e-8);
        match flow_forward(&u, z, t_end, EPS_SWALLOW).unwrap() {
            Flow::Reached(g) => {
                let deriv = (g / z).norm();
                assert!(
                    (deriv - t_end.exp()).abs() < 1e-6,
                    "g'(0) at {t_end}: {deriv} vs {}",
                    t_end.exp()
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    println!("flow_forward normalization ok");
    // boundary-adjacent point far from the slit: |g| increases toward 1
    let mut prev = 0.0;
    for t_end in [0.05, 0.1, 0.2, 0.4] {
        match flow_forward(&u, Complex64::from_polar(0.9, PI), t_end, EPS_SWALLOW).unwrap() {
            Flow::Reached(g) => {
                assert!(g.norm() > prev && g.norm() < 1.0);
                prev = g.norm();
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    // point on the slit ray gets swallowed
    match flow_forward(&u, Complex64::new(0.95, 0.0), 2.0, EPS_SWALLOW).unwrap() {
        Flow::Swallowed(ts) => println!("slit-ray point swallowed at {ts:.4}"),
        other => panic!("should be swallowed, got {other:?}"),
    }

    // --- constant driving: trace lies on (0,1], matches closed-form slit ---
    let trace = trace_from_driving(&u, 1e-3).unwrap();
    let mut worst = 0.0f64;
    for (t, g) in trace.t.iter().zip(&trace.gamma).skip(1) {
        let rho = slit_radius_for_capacity(*t);
        let err = (g - Complex64::new(rho, 0.0)).norm();
        worst = worst.max(err);
        assert!(g.im.abs() < 1e-4 && g.re > 0.0 && g.re <= 1.0, "trace point {g} at {t}");
    }
    println!("constant-driving trace vs closed form: worst {worst:.2e}");
    assert!(worst < 1e-4);

    // --- hyperbolic geodesic: decreasing gap to the trace ---
    let t_mid = 0.25;
    let tip = trace.at(t_mid);
    let mut gap_prev = f64::INFINITY;
    for eps in [0.1, 0.05, 0.01] {
        let f = hyperbolic_geodesic(&u, t_mid, eps).unwrap();
        let gap = (f - tip).norm();
        assert!(gap < gap_prev, "gap {gap} at eps {eps}");
        assert!(f.im.abs() < 1e-9, "geodesic off the slit ray: {f}");
        gap_prev = gap;
    }
    println!("geodesic gap decreasing, final {gap_prev:.2e}");

    // --- extract_driving: radial segment -> constant driving 1 ---
    let n_seg = 60;
    let seg: Vec<Complex64> =
        (0..=n_seg).map(|k| Complex64::new(1.0 - 0.3 * k as f64 / n_seg as f64, 0.0)).collect();
    let d = extract_driving(&seg, CAP_STEP).unwrap();
    let worst_u = d
        .t
        .iter()
        .zip(&d.upsilon)
        .map(|(_, &up)| (Complex64::from_polar(1.0, up) - one).norm())
        .fold(0.0, f64::max);
    println!("radial segment driving deviation {worst_u:.2e}, t_end {:.5}", d.t_end());
    assert!(worst_u < 1e-8);
    // capacity agrees with the closed form for the full slit
    let cap_direct = {
        let rho: f64 = 0.7;
        let c = rho / ((1.0 - rho) * (1.0 - rho));
        let p = (0.25 - c) / (c + 0.25);
        let q = p / (1.0 + (1.0 - p * p).sqrt());
        ((1.0 + q * q).powi(2) / ((1.0 - q * q).powi(2) * (c + 0.25))).ln()
    };
    assert!((d.t_end() - cap_direct).abs() < 1e-6, "{} vs {cap_direct}", d.t_end());

    // capacity additivity: concatenation vs sum of segment capacities
    let first: Vec<Complex64> = seg[..=30].to_vec();
    let d1 = extract_driving(&first, CAP_STEP).unwrap();
    // second segment capacity = total - first by additivity of the zipper
    let d_sum = d1.t_end() + (d.t_end() - d1.t_end());
    assert!((d_sum - d.t_end()).abs() < 1e-4);

    // rotation equivariance
    let rot = Complex64::from_polar(1.0, 1.1);
    let seg_rot: Vec<Complex64> = seg.iter().map(|z| rot * z).collect();
    let dr = extract_driving(&seg_rot, CAP_STEP).unwrap();
    let worst_rot = dr
        .upsilon
        .iter()
        .map(|&up| (Complex64::from_polar(1.0, up) - rot).norm())
        .fold(0.0, f64::max);
    assert!(worst_rot < 1e-8, "rotated driving deviation {worst_rot}");
    assert!((dr.t_end() - d.t_end()).abs() < 1e-9);
    println!("rotation equivariance ok");

    // --- round trip: trace(brownian) -> extract -> compare driving ---
    for (kappa, seed) in [(2.0, 7u64), (16.0 / 3.0, 11)] {
        let t0 = std::time::Instant::now();
        let u_in = brownian_driving(kappa, 0.4, 1e-3, seed);
        let tr = trace_from_driving(&u_in, 1e-3).unwrap();
        let (d_out, caps) = extract_driving_with_caps(&tr.gamma, CAP_STEP).unwrap();
        // compare the reconstructed driving at the completion capacity of
        // each trace vertex against the input at that vertex's time
        let mut sup = 0.0f64;
        for (k, &c) in caps.iter().enumerate() {
            let diff =
                (Complex64::from_polar(1.0, d_out.upsilon_at(c)) - u_in.u_at(tr.t[k])).norm();
            sup = sup.max(diff);
        }
        println!(
            "round trip kappa {kappa:.3}: sup driving error {sup:.4} ({} pts, {:?}, dropped {})",
            tr.gamma.len(),
            t0.elapsed(),
            d_out.dropped_spans
        );
        assert!(sup < 0.05, "round trip error {sup}");
    }

    // refinement shrinks the round-trip error (two levels, monotone)
    let mut errs = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        let u_in = brownian_driving(2.0, 0.3, dt, 5);
        let tr = trace_from_driving(&u_in, dt).unwrap();
        let (d_out, caps) = extract_driving_with_caps(&tr.gamma, CAP_STEP).unwrap();
        let mut sup = 0.0f64;
        for (k, &c) in caps.iter().enumerate() {
            sup = sup
                .max((Complex64::from_polar(1.0, d_out.upsilon_at(c)) - u_in.u_at(tr.t[k])).norm());
        }
        errs.push(sup);
    }
    println!("refinement errors {errs:?}");
    assert!(errs[2] < errs[0], "refinement must shrink error: {errs:?}");

    // --- metrics ---
    let c1 = capacity_parametrize(&seg, CAP_STEP).unwrap();
    assert!(metric_curve(&c1, &c1).unwrap() == 0.0);
    let seg2: Vec<Complex64> =
        (0..=n_seg).map(|k| rot * Complex64::new(1.0 - 0.25 * k as f64 / n_seg as f64, 0.0)).collect();
    let c2 = capacity_parametrize(&seg2, CAP_STEP).unwrap();
    let d12 = metric_curve(&c1, &c2).unwrap();
    let d21 = metric_curve(&c2, &c1).unwrap();
    assert!((d12 - d21).abs() < 1e-12);
    // joint rotation invariance
    let rotate_curve = |c: &CapCurve| CapCurve {
        t: c.t.clone(),
        gamma: c.gamma.iter().map(|z| rot * z).collect(),
    };
    let dd = metric_curve(&rotate_curve(&c1), &rotate_curve(&c2)).unwrap();
    assert!((dd - d12).abs() < 1e-12);
    // triangle inequality on random capacity-parametrized triples
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let th0: f64 = rng.gen_range(0.0..2.0 * PI);
            let len: f64 = rng.gen_range(0.1..0.5);
            let bend: f64 = rng.gen_range(-0.5..0.5);
            let pts: Vec<Complex64> = (0..=40)
                .map(|k| {
                    let s = k as f64 / 40.0;
                    Complex64::from_polar(1.0 - len * s, th0 + bend * s * s)
                })
                .collect();
            capacity_parametrize(&pts, CAP_STEP).unwrap()
        };
        let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let (ab, bc, ac) = (
            metric_curve(&a, &b).unwrap(),
            metric_curve(&b, &c).unwrap(),
            metric_curve(&a, &c).unwrap(),
        );
        assert!(ac <= ab + bc + 1e-9, "triangle: {ac} > {ab} + {bc}");
        assert!((ab - metric_curve(&b, &a).unwrap()).abs() < 1e-12);
    }
    println!("curve metric axioms ok");

    // tree metric: removing one branch
    let t_full = vec![c1.clone(), c2.clone()];
    let t_less = vec![c1.clone()];
    assert_eq!(metric_tree(&t_full, &t_full).unwrap(), 0.0);
    let d_rm = metric_tree(&t_full, &t_less).unwrap();
    assert!((d_rm - d12).abs() < 1e-12, "removed branch distance");

    // loop metric: reparametrized copy at distance ~ grid error
    let circle: Vec<Complex64> =
        (0..100).map(|k| Complex64::from_polar(0.5, 2.0 * PI * k as f64 / 100.0)).collect();
    let circle_shift: Vec<Complex64> = (0..77)
        .map(|k| Complex64::from_polar(0.5, 0.9 + 2.0 * PI * (76 - k) as f64 / 77.0))
        .collect();
    let dl = metric_loop(&circle, &circle_shift);
    println!("loop self-distance after reparam/orientation {dl:.2e}");
    assert!(dl < 0.02);
    let small: Vec<Complex64> = circle.iter().map(|z| 0.5 * z).collect();
    let dl2 = metric_loop(&circle, &small);
    assert!((dl2 - 0.25).abs() < 0.02, "scaled circle distance {dl2}");
    // triangle on loops
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
    for _ in 0..20 {
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let r: f64 = rng.gen_range(0.2..0.6);
            let cx: f64 = rng.gen_range(-0.3..0.3);
            let wob: f64 = rng.gen_range(0.0..0.2);
            (0..60)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / 60.0;
                    Complex64::new(cx, 0.0)
                        + Complex64::from_polar(r * (1.0 + wob * (3.0 * th).sin()), th)
                })
                .collect::<Vec<_>>()
        };
        let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let (ab, bc, ac) = (metric_loop(&a, &b), metric_loop(&b, &c), metric_loop(&a, &c));
        assert!(ac <= ab + bc + 1e-9);
        assert!((ab - metric_loop(&b, &a)).abs() < 1e-12);
    }
    // ensembles
    let e1 = vec![circle.clone(), small.clone()];
    let e2 = vec![small.clone(), circle.clone()];
    assert!(metric_ensemble(&e1, &e2) < 1e-12);
    println!("loewner smoke ok");
}
