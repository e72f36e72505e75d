//! Scratch driver: SLE simulation / statistics checks.

use forge::sle::*;
use num_complex::Complex64;
use std::f64::consts::PI;

const KAPPA: f64 = 16.0 / 3.0;
const RHO: f64 = -2.0 / 3.0;

fn main() {
    let t0 = std::time::Instant::now();

    // --- radial SLE driving: Brownian moments ---
    let mut mean = 0.0;
    let mut var = 0.0;
    let n_paths = 100_000;
    for s in 0..n_paths {
        let d = simulate_radial_sle(2.0, 1.0, 1e-2, 1000 + s as u64);
        let v = *d.upsilon.last().unwrap();
        mean += v;
        var += v * v;
    }
    mean /= n_paths as f64;
    var = var / n_paths as f64 - mean * mean;
    let se = (2.0 / n_paths as f64).sqrt();
    println!("radial driving: mean {mean:.5} (3 SE {:.5}), var {var:.4} (target 2.0)", 3.0 * se);
    assert!(mean.abs() < 3.0 * se);
    assert!((var - 2.0).abs() / 2.0 < 0.05, "variance off by more than 5%");
    // kappa = 0: constant driving
    let d0 = simulate_radial_sle(0.0, 1.0, 1e-2, 1);
    assert!(d0.upsilon.iter().all(|&u| u == 0.0));

    // --- Z-scheme basics ---
    let p = simulate_sle_kr(KAPPA, RHO, 0.0, 0.0, 1.0, 1e-4, 42).unwrap();
    assert_eq!(p.z[0], 1.0, "corner start");
    assert!(p.z[5..].iter().take(100).any(|&z| z < 1.0 - 1e-9), "enters the interior");
    assert!(p.z.iter().all(|&z| (-1.0..=1.0).contains(&z)));
    assert!(p.x.iter().all(|&x| (0.0..=PI).contains(&x)));
    let capped_frac = p.capped_steps as f64 / p.total_steps as f64;
    println!("capped drift steps: {:.3}% at dt 1e-4", 100.0 * capped_frac);
    assert!(capped_frac < 0.01, "capped steps must stay below 1%");
    // sign(dPhi) = sign(cot X) away from capped steps
    let phi = p.driving.phi.as_ref().unwrap();
    let mut bad = 0;
    for k in 1..phi.len() {
        let c = (p.x[k].cos() / p.x[k].sin()).signum();
        if ((phi[k] - phi[k - 1]).signum() - c).abs() > 0.5 {
            bad += 1;
        }
    }
    assert!(bad as f64 / phi.len() as f64 <= capped_frac + 1e-12, "dPhi sign violations {bad}");

    // --- martingale + QV ensemble at (16/3, -2/3) ---
    let stats =
        ensemble_stats(KAPPA, RHO, 0.0, 0.0, 1.0, 1e-3, 20_000, 7, &[0.25, 0.5, 1.0]).unwrap();
    println!(
        "M: mean {:.4} start {:.4} dev {:.2} SE | N: mean {:.4} start {:.4} dev {:.2} SE",
        stats.m_report.mean,
        stats.m_report.start,
        stats.m_report.deviation_se(),
        stats.n_report.mean,
        stats.n_report.start,
        stats.n_report.deviation_se()
    );
    assert!(stats.m_report.deviation_se() < 3.0, "M martingale");
    assert!(stats.n_report.deviation_se() < 3.0, "N martingale");
    for (t, rep) in stats.checkpoints.iter().zip(&stats.m_checkpoint) {
        println!("  checkpoint t {t:.2}: E[e^t cos X] = {:.4} ({:.2} SE)", rep.mean, rep.deviation_se());
        assert!(rep.deviation_se() < 3.0, "checkpoint martingale at {t}");
    }
    // QV rate (4/3)(1 - Z^2) within 10% on well-populated bins, comparing
    // against the prediction averaged over the actual visits to each bin
    for bin in &stats.qv_bins {
        if bin.count < 10_000 {
            continue;
        }
        let rel = (bin.rate - bin.predicted).abs() / bin.predicted.max(1e-9);
        println!(
            "  QV bin [{:.2},{:.2}]: rate {:.4} predicted {:.4} rel {:.3}",
            bin.z_lo, bin.z_hi, bin.rate, bin.predicted, rel
        );
        if bin.predicted > 0.1 {
            assert!(rel < 0.10, "QV off by more than 10%");
        }
    }
    // negative control: kappa = 6, rho = 0 breaks the M martingale
    let bad = ensemble_stats(6.0, 0.0, 0.0, 0.0, 1.0, 1e-3, 20_000, 7, &[]).unwrap();
    println!("negative control (6,0): M dev {:.1} SE", bad.m_report.deviation_se());
    assert!(bad.m_report.deviation_se() > 3.0, "negative control must fail");

    // reflection occupation decreases as dt is halved (two levels)
    let occ: Vec<f64> = [4e-4, 2e-4, 1e-4]
        .iter()
        .map(|&dt| {
            ensemble_stats(KAPPA, RHO, 0.0, 0.0, 0.5, dt, 2_000, 11, &[])
                .unwrap()
                .boundary_fraction
        })
        .collect();
    println!("reflection occupation by dt: {occ:?}");
    assert!(occ[1] < occ[0] && occ[2] < occ[1], "occupation must decrease: {occ:?}");

    // --- Bessel statistics ---
    let bes = bessel_ensemble(KAPPA, RHO, 0.0, PI, 1.0, 1e-4, 1_000, 23).unwrap();
    println!(
        "bessel: b_hat {:.4} (target 1/3), sigma2_hat {:.4} (target 4/3), r2 {:.2e}, n {}",
        bes.b_hat, bes.sigma2_hat, bes.r2, bes.n_increments
    );
    assert!((0.30..=0.37).contains(&bes.b_hat), "b_hat out of range");
    assert!((1.27..=1.40).contains(&bes.sigma2_hat), "sigma2_hat out of range");
    // deterministic flow: kappa = 0, rho = -2 has zero diffusion
    let det = simulate_sle_kr(0.0, -2.0, 0.0, PI, 1.0, 1e-3, 3).unwrap();
    let bes0 = bessel_stats(&vec![det; 2]).unwrap();
    assert!(bes0.sigma2_hat.abs() < 1e-12, "deterministic sigma2 {:.2e}", bes0.sigma2_hat);
    // shuffled increments lose the cot structure (r2 of the centered drift
    // regression collapses to noise level); coarse dt makes the drift
    // signal visible above the diffusion noise
    let paths: Vec<SlePath> = (0..100)
        .map(|s| simulate_sle_kr(KAPPA, RHO, 0.0, PI, 5.0, 1e-2, 100 + s).unwrap())
        .collect();
    let fit = bessel_stats(&paths).unwrap();
    let shuf = bessel_stats_shuffled(&paths, 99).unwrap();
    println!("paths fit: b {:.3} r2 {:.2e} | shuffled: b {:.3} r2 {:.2e}", fit.b_hat, fit.r2, shuf.b_hat, shuf.r2);
    assert!(shuf.r2 < 0.5 * fit.r2, "shuffling must drop r2");

    // --- branching SLE ---
    // single target reduces bitwise to the plain simulator
    let one = branching_sle(&[Complex64::new(0.0, 0.0)], KAPPA, 1.0, 1e-3, 5).unwrap();
    let plain = simulate_sle_kr(KAPPA, KAPPA - 6.0, 0.0, 0.0, 1.0, 1e-3, 5).unwrap();
    assert_eq!(one.paths[0].z, plain.z, "bitwise Z reduction");
    assert_eq!(one.paths[0].driving.upsilon, plain.driving.upsilon, "bitwise driving reduction");
    assert_eq!(one.paths[0].m, plain.m);
    assert!(one.branch_times.is_empty());

    // two targets: shared prefix, recorded branch time
    let targets = [Complex64::new(0.25, 0.1), Complex64::new(-0.3, -0.2)];
    let tree = branching_sle(&targets, KAPPA, 5.0, 1e-3, 17).unwrap();
    let tb = *tree.branch_times.get(&(0, 1)).expect("pair must branch by T = 5");
    let kb = (tb / 1e-3).round() as usize;
    assert_eq!(tree.paths[0].z[..=kb], tree.paths[1].z[..=kb], "shared prefix");
    assert!(tree.paths[0].z.len() == tree.paths[1].z.len());
    println!("two targets branch at t = {tb:.3}");

    // branch times are a.s. finite: < 5% of pairs unbranched by T = 5
    let mut unbranched = 0;
    let mut total = 0;
    for s in 0..20 {
        let targets = [
            Complex64::from_polar(0.4, s as f64),
            Complex64::from_polar(0.5, 2.0 + s as f64),
        ];
        let tr = branching_sle(&targets, KAPPA, 5.0, 1e-3, 200 + s).unwrap();
        total += 1;
        if !tr.branch_times.contains_key(&(0, 1)) {
            unbranched += 1;
        }
    }
    println!("unbranched pairs by T=5: {unbranched}/{total}");
    assert!((unbranched as f64) < 0.05 * total as f64 + 1.0, "too many unbranched pairs");

    // three targets: the two smallest pairwise branch times coincide
    for s in 0..10 {
        let targets = [
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.25, 0.15),
            Complex64::new(0.05, -0.4),
        ];
        let tr = branching_sle(&targets, KAPPA, 5.0, 1e-3, 400 + s).unwrap();
        let mut times: Vec<f64> = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|p| tr.branch_times.get(p).copied().unwrap_or(f64::INFINITY))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            (times[0] - times[1]).abs() < 1e-12 || !times[1].is_finite(),
            "ultrametric ordering violated: {times:?}"
        );
    }
    println!("ultrametric branch ordering ok");

    // parameter validation
    assert!(branching_sle(&[Complex64::new(0.1, 0.0)], 3.0, 1.0, 1e-3, 1).is_err());
    assert!(simulate_sle_kr(KAPPA, RHO, 0.0, 7.0, 1.0, 1e-3, 1).is_err());

    println!("sle smoke ok in {:?}", t0.elapsed());
}
