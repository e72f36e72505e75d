//! Scratch driver: exhaustive tree round-trip checks on small domains.

use forge::lattice::*;
use forge::rcmodel::*;
use forge::tree::*;

fn pick_markings(d: &WiredDomain) -> DobrushinDomain {
    for (&m, _) in &d.squares {
        let fs: Vec<DirEdge> = d
            .interior_diagonals()
            .into_iter()
            .filter(|e| e.dir().0 == 1)
            .collect();
        for f in fs {
            if let Ok(dob) = mark_dobrushin(d, m, f) {
                return dob;
            }
        }
    }
    panic!("no valid markings");
}

fn main() {
    for (w, h) in [(1usize, 1usize), (2, 1), (3, 1), (2, 2), (3, 2), (4, 2), (3, 3)] {
        let d = WiredDomain::build_rect_domain(w, h, 1.0);
        let dob = pick_markings(&d);
        let n = d.n_bonds();
        println!(
            "== {w}x{h}: {n} bonds, root {:?}, f {:?}",
            dob.root_square, dob.f
        );
        let mut arm_hist = std::collections::BTreeMap::new();
        for bits in 0u64..(1 << n) {
            let c = BondConfig::from_bits(n, bits);
            let ens = loop_representation(&d, &c);
            let tree = match build_tree(&dob, &ens) {
                Ok(t) => t,
                Err(e) => panic!("{w}x{h} bits={bits:b}: build_tree failed: {e}"),
            };
            let v = validate_spanning(&tree);
            assert!(v.is_empty(), "{w}x{h} bits={bits:b}: spanning violations {v:?}");
            let rec = recover_loops(&tree).unwrap_or_else(|e| {
                panic!("{w}x{h} bits={bits:b}: recover failed: {e}")
            });
            assert_eq!(rec, ens, "{w}x{h} bits={bits:b}: round trip mismatch");
            assert_eq!(
                tree.branching.len(),
                ens.loops.len(),
                "{w}x{h} bits={bits:b}: branching squares vs loops"
            );
            // literal recursion agrees with shared exploration
            let ctx = TreeContext::new(&dob, &ens).unwrap();
            for (t, b) in &tree.branches {
                let lit = build_branch_ctx(&ctx, *t).unwrap_or_else(|e| {
                    panic!("{w}x{h} bits={bits:b} target {t:?}: literal failed: {e}")
                });
                assert_eq!(lit.path, b.path, "{w}x{h} bits={bits:b} target {t:?}");
                assert_eq!(lit.square_seq, b.square_seq, "sq seq {t:?}");
                assert_eq!(lit.loop_seq, b.loop_seq, "loop seq {t:?}");
            }
            let ti = check_target_independence(&tree);
            assert!(ti.is_empty(), "{w}x{h} bits={bits:b}: independence {ti:?}");
            for (&sq, _) in &tree.branching {
                if sq != dob.root_square {
                    let a = arm_count(&tree, sq);
                    assert_eq!(a, 5, "{w}x{h} bits={bits:b}: arms at {sq:?}");
                    *arm_hist.entry(a).or_insert(0u64) += 1;
                }
            }
        }
        println!("   all {} configs ok; arm histogram {:?}", 1u64 << n, arm_hist);
    }
    println!("tree smoke ok");
}
