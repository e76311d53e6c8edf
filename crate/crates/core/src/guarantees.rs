//! A-posteriori violation certificates for scenario programs.
//!
//! For `M` scenarios and a support subsample of size `s`, the violation level
//! `ε(s) = 1 - (β / (M·C(M, s)))^(1/(M-s))`, with `ε(M) = 1`, makes the
//! probability (over the scenario draw) that the true violation exceeds
//! `ε(s*)` at most `β`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::hub::{HubParameters, HubState, Tariffs};
use crate::mpc::{solve_scenarios, MpcError, SolveOptions, SpConfig, SpSolution};
use crate::sampler::TrajectorySample;

#[derive(Debug, thiserror::Error)]
pub enum GuaranteeError {
    #[error("invalid input: {0}")]
    Input(String),
    /// A re-solve failed after `removed` confirmed removals.
    #[error("re-solve without scenarios {removed:?} + [{tried}] failed: {source}")]
    Resolve {
        removed: Vec<usize>,
        tried: usize,
        #[source]
        source: MpcError,
    },
}

/// Order in which scenarios are tentatively removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seed")]
pub enum GreedyOrder {
    #[default]
    Index,
    Shuffled(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuaranteeConfig {
    pub beta: f64,
    /// Target satisfaction level of the chance constraint (reported only).
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Relative tolerance for "same solution" in the support search.
    #[serde(default = "default_equality_tol")]
    pub equality_tol: f64,
    #[serde(default)]
    pub order: GreedyOrder,
}

fn default_equality_tol() -> f64 {
    1e-6
}

impl Default for GuaranteeConfig {
    fn default() -> Self {
        Self { beta: 1e-3, alpha: None, equality_tol: default_equality_tol(), order: GreedyOrder::Index }
    }
}

impl GuaranteeConfig {
    pub fn validate(&self) -> Result<(), GuaranteeError> {
        check_beta(self.beta)?;
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(GuaranteeError::Input(format!("alpha must lie in (0, 1], got {a}")));
            }
        }
        if !(self.equality_tol >= 0.0 && self.equality_tol.is_finite()) {
            return Err(GuaranteeError::Input("equality_tol must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Certificate report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeResult {
    pub beta: f64,
    pub m: usize,
    pub s_star: usize,
    pub epsilon: f64,
    /// Logarithmic upper bound on `epsilon`; undefined when `s_star = m`.
    pub bound: Option<f64>,
    pub removed_indices: Vec<usize>,
    pub epigraph_active: bool,
    /// `epsilon = 1`: no scenario could be removed.
    pub vacuous: bool,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub scenario_hash: String,
    pub statement: String,
}

impl GuaranteeResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn check_beta(beta: f64) -> Result<(), GuaranteeError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(GuaranteeError::Input(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    assert!(k <= n, "binomial with k > n");
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub fn epsilon_closed_form(s: usize, m: usize, beta: f64) -> Result<f64, GuaranteeError> {
    check_beta(beta)?;
    if m == 0 || s > m {
        return Err(GuaranteeError::Input(format!("need 0 <= s <= M and M >= 1, got s = {s}, M = {m}")));
    }
    if s == m {
        return Ok(1.0);
    }
    let ln_inner = beta.ln() - (m as f64).ln() - ln_binomial(m, s);
    Ok(-(ln_inner / (m - s) as f64).exp_m1())
}

/// `(ln(1/β) + ln(M·C(M, s))) / (M - s)`.
pub fn epsilon_bound(s: usize, m: usize, beta: f64) -> Result<f64, GuaranteeError> {
    check_beta(beta)?;
    if m == 0 || s >= m {
        return Err(GuaranteeError::Input(format!("bound needs s < M, got s = {s}, M = {m}")));
    }
    Ok((-beta.ln() + (m as f64).ln() + ln_binomial(m, s)) / (m - s) as f64)
}

fn same_solution(a: &[f64], reference: &[f64], tol: f64) -> bool {
    if a.len() != reference.len() {
        return false;
    }
    let scale = reference.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    a.iter().zip(reference).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn removal_order(m: usize, order: GreedyOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    if let GreedyOrder::Shuffled(seed) = order {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    }
    idx
}

/// Single greedy pass over the scenarios. `resolve(kept)` solves the program
/// on the scenario indices `kept` and returns the compared decision vector,
/// or `None` when that subset cannot be solved meaningfully (e.g. empty).
/// A removal is confirmed when the result matches `reference`.
pub fn greedy_support<F>(
    m: usize,
    reference: &[f64],
    cfg: &GuaranteeConfig,
    mut resolve: F,
) -> Result<Vec<usize>, GuaranteeError>
where
    F: FnMut(&[usize]) -> Result<Option<Vec<f64>>, MpcError>,
{
    cfg.validate()?;
    let mut removed = vec![false; m];
    let mut confirmed = Vec::new();
    for i in removal_order(m, cfg.order) {
        removed[i] = true;
        let kept: Vec<usize> = (0..m).filter(|&j| !removed[j]).collect();
        let same = match resolve(&kept) {
            Ok(Some(x)) => same_solution(&x, reference, cfg.equality_tol),
            Ok(None) => false,
            Err(source) => return Err(GuaranteeError::Resolve { removed: confirmed, tried: i, source }),
        };
        if same {
            confirmed.push(i);
        } else {
            removed[i] = false;
        }
    }
    confirmed.sort_unstable();
    Ok(confirmed)
}

/// Set points, slacks and the epigraph variable: the decisions the scenario
/// constraints act on.
pub fn shared_decisions(sol: &SpSolution) -> Vec<f64> {
    let mut v: Vec<f64> = sol
        .set_points
        .steps
        .iter()
        .flat_map(|s| {
            [
                s.p_pv,
                s.chp_weights[0],
                s.chp_weights[1],
                s.chp_weights[2],
                s.chp_weights[3],
                s.p_chp,
                s.q_chp,
                s.f_chp,
                s.p_hp,
                s.q_hp,
                s.q_gb,
                s.f_gb,
                s.es_discharge,
                s.es_charge,
                s.es_level,
            ]
        })
        .collect();
    v.extend(&sol.sigma_plus);
    v.extend(&sol.sigma_minus);
    v.extend(sol.epigraph_t);
    v
}

/// Everything needed to re-solve a hub scenario program on a subset.
pub struct SpInstance<'a> {
    pub state: &'a HubState,
    pub params: &'a HubParameters,
    pub tariffs: &'a Tariffs,
    pub irradiance: &'a [f64],
    pub sp: &'a SpConfig,
}

fn resolve_subset(
    inst: &SpInstance<'_>,
    scenarios: &[TrajectorySample],
    kept: &[usize],
) -> Result<Option<Vec<f64>>, MpcError> {
    if kept.is_empty() {
        return Ok(None);
    }
    let subset: Vec<TrajectorySample> = kept.iter().map(|&i| scenarios[i].clone()).collect();
    let sol =
        solve_scenarios(inst.state, inst.params, inst.tariffs, inst.irradiance, &subset, inst.sp, &SolveOptions::default())?;
    Ok(Some(shared_decisions(&sol)))
}

pub fn find_support_subsample(
    inst: &SpInstance<'_>,
    scenarios: &[TrajectorySample],
    reference: &SpSolution,
    cfg: &GuaranteeConfig,
) -> Result<GuaranteeResult, GuaranteeError> {
    let m = scenarios.len();
    if m == 0 || reference.recourse.len() != m {
        return Err(GuaranteeError::Input(format!(
            "solution has {} scenarios, {} given",
            reference.recourse.len(),
            m
        )));
    }
    let removed = greedy_support(m, &shared_decisions(reference), cfg, |kept| resolve_subset(inst, scenarios, kept))?;
    result_for(m, removed, reference.epigraph_t.is_some(), cfg, reference.scenario_hash.clone())
}

/// Certificate for a given removal set.
pub fn result_for(
    m: usize,
    removed_indices: Vec<usize>,
    epigraph_active: bool,
    cfg: &GuaranteeConfig,
    scenario_hash: String,
) -> Result<GuaranteeResult, GuaranteeError> {
    let s_star = m - removed_indices.len();
    let epsilon = epsilon_closed_form(s_star, m, cfg.beta)?;
    let bound = if s_star < m { Some(epsilon_bound(s_star, m, cfg.beta)?) } else { None };
    let vacuous = s_star == m;
    let statement = if vacuous {
        format!("vacuous: all {m} scenarios are in the support, epsilon = 1")
    } else {
        format!(
            "with confidence at least {} over the draw of the {m} scenarios from the scenario-generating \
             distribution, the plan violates the thermal-storage constraints with probability at most {epsilon:.6} \
             under that same distribution",
            1.0 - cfg.beta
        )
    };
    Ok(GuaranteeResult {
        beta: cfg.beta,
        m,
        s_star,
        epsilon,
        bound,
        removed_indices,
        epigraph_active,
        vacuous,
        alpha: cfg.alpha,
        scenario_hash,
        statement,
    })
}

/// Support search plus the closed-form violation level.
pub fn certify(
    inst: &SpInstance<'_>,
    solution: &SpSolution,
    scenarios: &[TrajectorySample],
    cfg: &GuaranteeConfig,
) -> Result<GuaranteeResult, GuaranteeError> {
    let hash = crate::mpc::scenario_hash(scenarios);
    if hash != solution.scenario_hash {
        return Err(GuaranteeError::Input("scenario set does not match the solution's scenario hash".into()));
    }
    find_support_subsample(inst, scenarios, solution, cfg)
}

/// TS level path of one scenario with the set points frozen. Given the heat
/// produced by the converters, the complementary TS flows are unique.
pub fn induced_ts_levels(
    solution: &SpSolution,
    scenario: &TrajectorySample,
    initial_ts: f64,
    params: &HubParameters,
) -> Vec<f64> {
    let mut level = initial_ts;
    solution
        .set_points
        .steps
        .iter()
        .zip(&scenario.load_h)
        .map(|(sp, &lh)| {
            let deficit = lh - (sp.q_gb + sp.q_chp + sp.q_hp);
            let (dis, ch) = if deficit > 0.0 { (deficit, 0.0) } else { (0.0, -deficit) };
            level = crate::hub::storage_step(level, dis, ch, params.eta_ts, params.gamma_ts, params.dt);
            level
        })
        .collect()
}

/// Fraction of `fresh` scenarios whose induced TS path leaves the
/// slack-widened bounds at some step.
pub fn empirical_violation(
    solution: &SpSolution,
    fresh: &[TrajectorySample],
    initial_ts: f64,
    params: &HubParameters,
) -> f64 {
    if fresh.is_empty() {
        return 0.0;
    }
    let tol = crate::mpc::CHECK_TOL;
    let bad = fresh
        .iter()
        .filter(|s| {
            induced_ts_levels(solution, s, initial_ts, params).iter().enumerate().any(|(k, &l)| {
                l > params.ts_max + solution.sigma_plus[k] + tol || l < params.ts_min - solution.sigma_minus[k] - tol
            })
        })
        .count();
    bad as f64 / fresh.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn full_support_is_vacuous() {
        assert_eq!(epsilon_closed_form(7, 7, 0.01).unwrap(), 1.0);
        assert!(epsilon_bound(7, 7, 0.01).is_err());
        assert!(epsilon_closed_form(8, 7, 0.01).is_err());
        assert!(epsilon_closed_form(1, 7, 1.0).is_err());
    }

    #[test]
    fn binomial_identity() {
        for beta in [0.1, 0.01, 1e-4] {
            for m in 1..=30u64 {
                let total: f64 = (0..m)
                    .map(|s| {
                        let e = epsilon_closed_form(s as usize, m as usize, beta).unwrap();
                        binom(m, s) * (1.0 - e).powi((m - s) as i32)
                    })
                    .sum();
                assert!((total - beta).abs() < 1e-10, "M={m} beta={beta}: {total}");
            }
        }
    }

    #[test]
    fn large_m_finite() {
        let e = epsilon_closed_form(1000, 1_000_000, 1e-6).unwrap();
        assert!(e > 0.0 && e < 0.02);
    }

    #[test]
    fn bound_limits() {
        let b = epsilon_bound(0, 40, 1.0 - 1e-12).unwrap();
        assert!((b - (40f64).ln() / 40.0).abs() < 1e-10);
        let d = epsilon_bound(3, 40, 0.005).unwrap() - epsilon_bound(3, 40, 0.01).unwrap();
        assert!((d - 2f64.ln() / 37.0).abs() < 1e-13);
        for s in 0..5usize {
            let mut prev = f64::INFINITY;
            for m in s + 1..=200 {
                let b = epsilon_bound(s, m, 0.01).unwrap();
                assert!(b <= prev + 1e-12, "s={s} M={m}");
                prev = b;
            }
        }
    }

    proptest! {
        #[test]
        fn epsilon_monotone_and_bounded(m in 2usize..200, s_frac in 0.0f64..1.0, beta in 1e-6f64..0.5) {
            let s = ((m - 1) as f64 * s_frac) as usize;
            let e = epsilon_closed_form(s, m, beta).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!(e <= epsilon_bound(s, m, beta).unwrap() + 1e-12);
            prop_assert!(epsilon_closed_form(s + 1, m, beta).unwrap() >= e - 1e-15);
            prop_assert!(epsilon_closed_form(s, m + 1, beta).unwrap() <= e + 1e-15);
            prop_assert!(epsilon_closed_form(s, m, (beta * 1.5).min(0.99)).unwrap() <= e + 1e-15);
        }
    }

    // min x s.t. x >= d_i: only the largest d_i is needed.
    fn max_resolve(d: &[f64]) -> impl FnMut(&[usize]) -> Result<Option<Vec<f64>>, MpcError> + '_ {
        move |kept| Ok(kept.iter().map(|&i| d[i]).reduce(f64::max).map(|x| vec![x]))
    }

    #[test]
    fn greedy_keeps_the_binding_scenario() {
        let d = [0.3, 0.9, 0.1, 0.5];
        let removed = greedy_support(4, &[0.9], &GuaranteeConfig::default(), max_resolve(&d)).unwrap();
        assert_eq!(removed, vec![0, 2, 3]);
        let cfg = GuaranteeConfig { order: GreedyOrder::Shuffled(3), ..Default::default() };
        let removed = greedy_support(4, &[0.9], &cfg, max_resolve(&d)).unwrap();
        assert_eq!(removed, vec![0, 2, 3]);
    }

    #[test]
    fn duplicates_reduce_to_one() {
        let d = [0.4; 6];
        let removed = greedy_support(6, &[0.4], &GuaranteeConfig::default(), max_resolve(&d)).unwrap();
        assert_eq!(removed.len(), 5);
        let r = result_for(6, removed, false, &GuaranteeConfig::default(), String::new()).unwrap();
        assert_eq!(r.s_star, 1);
        assert_eq!(r.epsilon, epsilon_closed_form(1, 6, 1e-3).unwrap());
        assert!(r.epsilon <= r.bound.unwrap() + 1e-12);
    }

    #[test]
    fn resolve_failure_reports_prefix() {
        let err = greedy_support(3, &[1.0], &GuaranteeConfig::default(), |kept| {
            if kept.len() < 2 {
                Err(MpcError::Input("boom".into()))
            } else {
                Ok(Some(vec![1.0]))
            }
        })
        .unwrap_err();
        match err {
            GuaranteeError::Resolve { removed, tried, .. } => {
                assert_eq!(removed, vec![0]);
                assert_eq!(tried, 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn json_has_report_keys() {
        let r = result_for(4, vec![], true, &GuaranteeConfig::default(), "h".into()).unwrap();
        assert!(r.vacuous);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["beta", "s_star", "epsilon", "bound", "removed_indices", "epigraph_active"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
