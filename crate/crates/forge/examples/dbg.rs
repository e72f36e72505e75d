use forge::harness::*;
use forge::rcmodel::loop_representation;

fn interp(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] { return vs[0]; }
    if t >= *ts.last().unwrap() { return *vs.last().unwrap(); }
    let k = ts.partition_point(|&x| x <= t) - 1;
    let span = ts[k + 1] - ts[k];
    if span <= 0.0 { return vs[k + 1]; }
    vs[k] + (vs[k + 1] - vs[k]) * (t - ts[k]) / span
}

fn kappa_lag(drs: &[DrivingSample], h: f64, t_cap: f64) -> (f64, usize) {
    let (mut sq, mut st, mut n) = (0.0, 0.0, 0);
    for s in drs {
        let t_end = s.t.last().unwrap().min(t_cap);
        if !(t_end >= 2.0 * h) { continue; }
        let m = (t_end / h).floor() as usize;
        let mut prev = interp(&s.t, &s.upsilon, 0.0);
        for k in 1..=m {
            let u = interp(&s.t, &s.upsilon, k as f64 * h);
            sq += (u - prev) * (u - prev);
            st += h;
            n += 1;
            prev = u;
        }
    }
    (sq / st, n)
}

fn main() {
    for dia in [16usize, 32, 64] {
        let t0 = std::time::Instant::now();
        let d = disc_for_diameter(dia);
        let dob = mark_first(&d).unwrap();
        let chart = DiscChart::new(&d);
        let mut chain = SampleChain::new(&d, 7, 1000, 25);
        let mut drs = Vec::new();
        for _ in 0..100 {
            let ens = loop_representation(&d, &chain.next_config());
            if let Ok(s) = sample_interface(&dob, &chart, &ens) { drs.push(s.driving); }
        }
        println!("dia {dia} ({} ok, {:?}):", drs.len(), t0.elapsed());
        for t_cap in [0.5, 1.0, 1.5, 2.0] {
            print!("  cap {t_cap}:");
            for h in [0.05, 0.1, 0.2] {
                let (k, n) = kappa_lag(&drs, h, t_cap);
                print!("  h{h}: {k:.3}(n{n})");
            }
            println!();
        }
    }
    // synthetic reference at matching windows
    let syn = {
        use forge::loewner::trace_from_driving;
        use forge::sle::simulate_sle_kr;
        let mut v = Vec::new();
        for k in 0..12u64 {
            let p = simulate_sle_kr(16.0 / 3.0, -2.0 / 3.0, 0.0, std::f64::consts::PI, 2.5, 2e-3, 9000 + k).unwrap();
            let tr = trace_from_driving(&p.driving, 1e-2).unwrap();
            v.push(curve_driving(&tr.gamma, None).unwrap());
        }
        v
    };
    println!("synthetic (12 paths T 2.5):");
    for t_cap in [0.5, 1.0, 1.5, 2.0] {
        print!("  cap {t_cap}:");
        for h in [0.05, 0.1, 0.2] {
            let (k, n) = kappa_lag(&syn, h, t_cap);
            print!("  h{h}: {k:.3}(n{n})");
        }
        println!();
    }
}
