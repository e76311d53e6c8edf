//! Linear programs with complementarity pairs: simplex, branch and bound,
//! and the optimality certificate of the returning leaf.

use ehub::optimizer::{
    check_lp_optimality, solve_lp, solve_with_complementarity, BranchMode, ComplementarityPair, LinearProgram,
    RowSense,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Storage that pays to cycle: charging and discharging both earn
    // 0.1 per unit, so the relaxation does both at once.
    let mut lp = LinearProgram::new();
    let buy = lp.add_var(0.0, f64::INFINITY, 0.3);
    let sell = lp.add_var(0.0, f64::INFINITY, -0.1);
    let charge = lp.add_var(0.0, 50.0, -0.1);
    let discharge = lp.add_var(0.0, 50.0, -0.1);
    // buy + discharge = 40 + sell + charge
    lp.add_row(&[(buy, 1.0), (discharge, 1.0), (sell, -1.0), (charge, -1.0)], RowSense::Eq, 40.0);
    let pairs = [ComplementarityPair::new(buy, sell), ComplementarityPair::new(charge, discharge)];

    let relaxed = solve_lp(&lp)?;
    println!("relaxation: objective {:.3}, x = {:?}", relaxed.objective, relaxed.primal);

    for mode in [BranchMode::RelaxFirst, BranchMode::AlwaysBranch] {
        let res = solve_with_complementarity(&lp, &pairs, mode)?;
        let mut leaf = lp.clone();
        for v in &res.fixed_to_zero {
            leaf.upper[v.0] = 0.0;
        }
        let cert = check_lp_optimality(&leaf, &res.primal, &res.duals);
        println!(
            "{mode:?}: objective {:.3}, x = {:?}, nodes {}, certificate passes {}",
            res.objective,
            res.primal,
            res.stats.nodes,
            cert.passes()
        );
    }
    Ok(())
}
