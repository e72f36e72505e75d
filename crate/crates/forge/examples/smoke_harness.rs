//! Scratch driver: harness estimators and the end-to-end pipeline.

use forge::harness::*;
use forge::rcmodel::loop_representation;
use forge::tree::{build_tree_ctx, finite_subtree, TreeContext};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let t0 = std::time::Instant::now();

    // --- config validation ---
    assert!(ExperimentConfig::default().validate().is_err(), "missing seed must fail");
    let mut cfg = ExperimentConfig { seed: Some(7), ..Default::default() };
    assert!(cfg.validate().is_ok());
    cfg.sle_dt = 0.0;
    match cfg.validate() {
        Err(HarnessError::Config(field, _)) => assert_eq!(field, "sle_dt"),
        other => panic!("expected config error, got {other:?}"),
    }

    // --- tortuosity: greedy vs exact DP on random short walks ---
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let n = 3 + (case % 15);
        let mut pts = vec![Complex64::new(0.0, 0.0)];
        for _ in 1..n {
            let step = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            pts.push(pts.last().unwrap() + step);
        }
        for r in [0.3, 0.7, 1.5] {
            assert_eq!(tortuosity(&pts, r), tortuosity_brute(&pts, r), "case {case} r {r}");
        }
    }
    // straight path of length L with fine vertices: ceil(L/r) blocks
    let line: Vec<Complex64> =
        (0..=1000).map(|i| Complex64::new(i as f64 * 0.01, 0.0)).collect();
    for (r, want) in [(1.0001, 10), (0.5001, 20), (0.3001, 34), (3.0001, 4), (20.0, 1)] {
        assert_eq!(tortuosity(&line, r), want, "straight line r {r}");
    }
    // monotone in r
    for r in [0.05, 0.1, 0.2, 0.4, 0.8] {
        assert!(tortuosity(&line, r) >= tortuosity(&line, 2.0 * r));
    }
    println!("tortuosity ok");

    // --- Hölder norms ---
    let constant = vec![Complex64::new(1.0, 1.0); 10];
    for (_, norm) in holder_estimate(&constant) {
        assert_eq!(norm, 0.0);
    }
    let seg: Vec<Complex64> = (0..=100).map(|i| Complex64::new(i as f64 / 100.0, 0.0)).collect();
    for (a, norm) in holder_estimate(&seg) {
        // unit-speed segment: sup dt / dt^a = 1 at the full span, finite always
        assert!((norm - 1.0).abs() < 1e-9, "exponent {a}: norm {norm}");
    }
    println!("holder ok");

    // --- KS helper sanity ---
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
    let ys: Vec<f64> = (0..200).map(|i| i as f64 / 200.0 + 0.001).collect();
    assert!(ks_pvalue(&xs, &ys) > 0.5);
    let zs: Vec<f64> = (0..200).map(|i| i as f64 / 200.0 + 0.8).collect();
    assert!(ks_pvalue(&xs, &zs) < 1e-6);

    // --- crossings on sampled trees ---
    let d = disc_for_diameter(24);
    let dob = mark_first(&d).unwrap();
    let mut chain = SampleChain::new(&d, 5, 50, 10);
    let ens = loop_representation(&d, &chain.next_config());
    let ctx = TreeContext::new(&dob, &ens).unwrap();
    let tree = build_tree_ctx(&ctx, ctx.targets.clone()).unwrap();
    // annulus far outside the domain -> 0
    let far = Annulus { z0: Complex64::new(50.0, 0.0), r: 1.0, big_r: 2.0 };
    assert_eq!(count_disjoint_crossings(&tree, &far), 0);
    // inner disk containing the whole domain -> 0
    let huge = Annulus { z0: Complex64::new(0.0, 0.0), r: 10.0, big_r: 20.0 };
    assert_eq!(count_disjoint_crossings(&tree, &huge), 0);
    // nested annuli: enlarging the annulus never increases the count
    let mut prev = usize::MAX;
    for (r, big) in [(0.5, 0.6), (0.4, 0.7), (0.3, 0.8), (0.2, 0.9)] {
        let c = count_disjoint_crossings(
            &tree,
            &Annulus { z0: Complex64::new(0.0, 0.0), r, big_r: big },
        );
        assert!(c <= prev, "nested annuli must be monotone: {c} > {prev}");
        prev = c;
        println!("  crossings r {r} R {big}: {c}");
    }

    // --- finite subtree ---
    let chart = DiscChart::new(&d);
    let uni = |p: forge::lattice::Pt| chart.map(p);
    for eta in [2.5, 0.5, 0.25] {
        let sub = finite_subtree(&tree, eta, &uni).unwrap();
        if eta >= 2.0 {
            // grid reduces to the single point nearest the center
            println!("  eta {eta}: {} initial-ish branches", sub.branches.len());
        }
        let dist = subtree_distance(&sub, &tree, 1).unwrap();
        println!(
            "  eta {eta}: |I| {} of {} branches, d_tree {dist:.4}",
            sub.branches.len(),
            tree.branches.len()
        );
        assert!(dist < eta, "subtree distance {dist} vs eta {eta}");
    }
    println!("subtree ok in {:?}", t0.elapsed());

    // --- one small level run + synthetic calibration ---
    let t1 = std::time::Instant::now();
    let (rep, samples) = level_run(24, 30, 50, 10, 99).unwrap();
    println!(
        "level 24: kappa_hat {:.3} CI [{:.3}, {:.3}] n {} m_drift {:.2} SE in {:?}",
        rep.kappa_hat,
        rep.ci_lo,
        rep.ci_hi,
        rep.n_samples,
        rep.m_drift_se,
        t1.elapsed()
    );
    assert!(rep.kappa_hat > 0.0 && rep.ci_lo < rep.kappa_hat && rep.kappa_hat < rep.ci_hi);
    // holder norms finite on sampled interfaces
    for s in samples.iter().take(3) {
        for (a, norm) in holder_estimate(&s.curve) {
            assert!(norm.is_finite() && norm > 0.0, "exponent {a}");
        }
    }
    let t2 = std::time::Instant::now();
    let syn = synthetic_calibration(8, 1.5, 2e-3, 4242).unwrap();
    println!(
        "synthetic: kappa_hat {:.3} CI [{:.3}, {:.3}] in {:?}",
        syn.kappa_hat,
        syn.ci_lo,
        syn.ci_hi,
        t2.elapsed()
    );
    assert!(syn.ci_lo < 16.0 / 3.0 && 16.0 / 3.0 < syn.ci_hi, "self-calibration");

    // --- experiment runner determinism ---
    let cfg = ExperimentConfig {
        stages: vec!["sample".into(), "crossings".into(), "subtree".into()],
        medial_diameters: vec![16],
        samples: 5,
        burn_in: 20,
        sweeps: 5,
        seed: Some(11),
        annuli: vec![AnnulusSpec { x: 0.0, y: 0.0, r: 0.25, big_r: 0.75 }],
        eta: vec![0.5],
        out_dir: "/tmp/forge_exp_a".into(),
        ..Default::default()
    };
    let m1 = run_experiment(&cfg).unwrap();
    let cfg2 = ExperimentConfig { out_dir: "/tmp/forge_exp_b".into(), ..cfg.clone() };
    let m2 = run_experiment(&cfg2).unwrap();
    assert_eq!(m1.outputs, m2.outputs, "bit-for-bit reruns");
    assert_eq!(m1.outputs.len(), 4);
    // empty stage list -> manifest only
    let cfg3 = ExperimentConfig {
        stages: vec![],
        out_dir: "/tmp/forge_exp_c".into(),
        ..cfg.clone()
    };
    let m3 = run_experiment(&cfg3).unwrap();
    assert!(m3.outputs.is_empty());

    println!("harness smoke ok in {:?}", t0.elapsed());
}
