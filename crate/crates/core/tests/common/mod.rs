#![allow(dead_code)]

use ehub::hub::{HubParameters, HubState, Tariffs};
use ehub::mpc::{build_scenario_program, ScenarioProgram, SpConfig};
use ehub::optimizer::{
    check_lp_optimality, solve_lp, ComplementarityPair, LinearProgram, LpCertificate, SolveResult, SolveStatus,
};
use ehub::sampler::TrajectorySample;
use rand::Rng;

/// Best objective over every fixing `first = 0` / `second = 0` of the pairs.
pub fn exhaustive_min(lp: &LinearProgram, pairs: &[ComplementarityPair]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << pairs.len()) {
        let mut fixed = lp.clone();
        for (i, p) in pairs.iter().enumerate() {
            let v = if mask >> i & 1 == 0 { p.first } else { p.second };
            fixed.set_bounds(v, 0.0, 0.0);
        }
        let r = solve_lp(&fixed).expect("leaf LP solves");
        if r.status == SolveStatus::Optimal {
            best = Some(best.map_or(r.objective, |b: f64| b.min(r.objective)));
        }
    }
    best
}

/// LP certificate of a branch-and-bound result at its returning leaf.
pub fn leaf_certificate(lp: &LinearProgram, res: &SolveResult) -> LpCertificate {
    let mut leaf = lp.clone();
    for v in &res.fixed_to_zero {
        leaf.set_bounds(*v, 0.0, 0.0);
    }
    check_lp_optimality(&leaf, &res.primal, &res.duals)
}

pub struct HubInstance {
    pub state: HubState,
    pub params: HubParameters,
    pub tariffs: Tariffs,
    pub irradiance: Vec<f64>,
    pub scenarios: Vec<TrajectorySample>,
    pub sp: SpConfig,
}

impl HubInstance {
    pub fn program(&self) -> ScenarioProgram {
        build_scenario_program(&self.state, &self.params, &self.tariffs, &self.irradiance, &self.scenarios, &self.sp)
            .expect("program builds")
    }
}

/// Random hub program with `t` steps and `m` scenarios; prices sometimes
/// make selling attractive so the grid pair matters.
pub fn random_hub_instance<R: Rng>(rng: &mut R, t: usize, m: usize) -> HubInstance {
    let params = HubParameters::reference();
    let buy = rng.gen_range(0.08..0.35);
    let tariffs = Tariffs::constant(buy, rng.gen_range(0.0..buy), rng.gen_range(0.04..0.15));
    let state = HubState {
        es_level: rng.gen_range(params.es_min..params.es_max),
        ts_level: rng.gen_range(params.ts_min..params.ts_max),
        clock: 0,
    };
    let irradiance = (0..t).map(|_| rng.gen_range(0.0..0.8)).collect();
    let scenarios = (0..m)
        .map(|i| TrajectorySample {
            scenario: i,
            load_e: (0..t).map(|_| rng.gen_range(20.0..500.0)).collect(),
            load_h: (0..t).map(|_| rng.gen_range(20.0..700.0)).collect(),
        })
        .collect();
    HubInstance { state, params, tariffs, irradiance, scenarios, sp: SpConfig { horizon: t, ..Default::default() } }
}
