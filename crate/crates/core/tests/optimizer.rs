mod common;

use common::{exhaustive_min, leaf_certificate, random_hub_instance};
use ehub::optimizer::{
    solve_lp, solve_with_complementarity, BranchMode, ComplementarityPair, LinearProgram, RowSense, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum over the vertices of `{x : G x <= h}` by enumerating every
/// n-subset of tight constraints.
fn vertex_min(g: &[Vec<f64>], h: &[f64], c: &[f64]) -> Option<f64> {
    let n = c.len();
    let rows = g.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| g[idx[i]][j]);
        let b = DVector::from_fn(n, |i, _| h[idx[i]]);
        if let Some(x) = a.lu().solve(&b) {
            let feasible = g.iter().zip(h).all(|(gi, hi)| gi.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() <= hi + 1e-7);
            if feasible && x.iter().all(|v| v.is_finite()) {
                let obj: f64 = c.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        // next combination
        let mut k = n;
        while k > 0 && idx[k - 1] == rows - n + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        idx[k - 1] += 1;
        for j in k..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[test]
fn random_boxed_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut infeasible = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(1..=4);
        let mut lp = LinearProgram::new();
        let mut g = Vec::new();
        let mut h = Vec::new();
        let vars: Vec<_> = (0..n)
            .map(|j| {
                let lo = rng.gen_range(-3.0..1.0);
                let hi = lo + rng.gen_range(0.5..4.0);
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                g.push(e.clone());
                h.push(hi);
                g.push(e.iter().map(|v| -v).collect());
                h.push(-lo);
                lp.add_var(lo, hi, rng.gen_range(-2.0..2.0))
            })
            .collect();
        for _ in 0..m {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = rng.gen_range(-2.0..3.0);
            let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][rng.gen_range(0..3)];
            let coeffs: Vec<_> = vars.iter().zip(&a).map(|(v, a)| (*v, *a)).collect();
            lp.add_row(&coeffs, sense, b);
            if sense != RowSense::Ge {
                g.push(a.clone());
                h.push(b);
            }
            if sense != RowSense::Le {
                g.push(a.iter().map(|v| -v).collect());
                h.push(-b);
            }
        }
        let oracle = vertex_min(&g, &h, &lp.cost);
        let res = solve_lp(&lp).unwrap();
        match oracle {
            Some(v) => {
                assert_eq!(res.status, SolveStatus::Optimal);
                assert!((res.objective - v).abs() <= 1e-6 * (1.0 + v.abs()), "{} vs {v}", res.objective);
            }
            None => {
                infeasible += 1;
                assert_eq!(res.status, SolveStatus::Infeasible);
            }
        }
    }
    assert!(infeasible < 150, "too few feasible instances: {infeasible}");
}

#[test]
fn complementarity_lps_match_exhaustive_fixings() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let k = rng.gen_range(1..=5);
        let mut lp = LinearProgram::new();
        let mut pairs = Vec::new();
        let mut cols = Vec::new();
        for _ in 0..k {
            // costs reward both columns so the relaxation violates the pair
            let a = lp.add_var(0.0, rng.gen_range(1.0..5.0), rng.gen_range(-2.0..0.5));
            let b = lp.add_var(0.0, rng.gen_range(1.0..5.0), rng.gen_range(-2.0..0.5));
            pairs.push(ComplementarityPair::new(a, b));
            cols.extend([a, b]);
        }
        for _ in 0..rng.gen_range(1..=3) {
            let coeffs: Vec<_> = cols.iter().map(|v| (*v, rng.gen_range(0.0..2.0))).collect();
            lp.add_row(&coeffs, RowSense::Le, rng.gen_range(2.0..10.0));
        }
        let oracle = exhaustive_min(&lp, &pairs).expect("zero is feasible");
        for mode in [BranchMode::RelaxFirst, BranchMode::AlwaysBranch] {
            let res = solve_with_complementarity(&lp, &pairs, mode).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal);
            assert!((res.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "{mode:?}");
            assert!(pairs.iter().all(|p| p.product(&res.primal) <= 1e-6));
            assert!(leaf_certificate(&lp, &res).passes());
        }
    }
}

#[test]
fn hub_programs_match_exhaustive_fixings() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let (t, m) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let inst = random_hub_instance(&mut rng, t, m);
        let prog = inst.program();
        let oracle = exhaustive_min(&prog.lp, &prog.pairs).expect("slacks keep the program feasible");
        let res = solve_with_complementarity(&prog.lp, &prog.pairs, BranchMode::RelaxFirst).unwrap();
        assert!((res.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "{} vs {oracle}", res.objective);
        assert!(leaf_certificate(&prog.lp, &res).passes());
    }
}

#[test]
fn branch_and_bound_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inst = random_hub_instance(&mut rng, 3, 2);
    let prog = inst.program();
    let a = solve_with_complementarity(&prog.lp, &prog.pairs, BranchMode::RelaxFirst).unwrap();
    let b = solve_with_complementarity(&prog.lp, &prog.pairs, BranchMode::RelaxFirst).unwrap();
    assert_eq!(a.primal, b.primal);
    assert_eq!(a.stats, b.stats);
}

#[test]
fn relaxation_bounds_the_complementarity_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let inst = random_hub_instance(&mut rng, 2, 2);
        let prog = inst.program();
        let relax = solve_lp(&prog.lp).unwrap();
        let exact = solve_with_complementarity(&prog.lp, &prog.pairs, BranchMode::RelaxFirst).unwrap();
        assert!(relax.objective <= exact.objective + 1e-7 * (1.0 + exact.objective.abs()));
    }
}
