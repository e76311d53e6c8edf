//! Branch-and-bound over complementarity disjunctions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, VarId};
use super::simplex::{Basis, SimplexOptions};
use super::{solve_lp_warm, BranchStats, ComplementarityPair, OptimizeError, SolveResult, SolveStatus, COMP_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    /// Solve the relaxation and branch only on pairs it violates.
    #[default]
    RelaxFirst,
    /// Branch on every pair, violated or not (exhaustive up to pruning).
    AlwaysBranch,
}

#[derive(Clone, Debug)]
pub struct BranchOptions {
    pub mode: BranchMode,
    pub node_limit: usize,
    pub comp_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self { mode: BranchMode::RelaxFirst, node_limit: 20_000, comp_tol: COMP_TOL, simplex: SimplexOptions::default() }
    }
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    fixed: Vec<usize>,
    warm: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then lowest id
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_with_complementarity(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    mode: BranchMode,
) -> Result<SolveResult, OptimizeError> {
    solve_with_complementarity_opts(lp, pairs, &BranchOptions { mode, ..Default::default() }, None)
}

pub fn solve_with_complementarity_opts(
    lp: &LinearProgram,
    pairs: &[ComplementarityPair],
    opts: &BranchOptions,
    warm: Option<&Basis>,
) -> Result<SolveResult, OptimizeError> {
    lp.validate()?;
    for p in pairs {
        let (a, b) = (p.first.0, p.second.0);
        if a == b {
            return Err(OptimizeError::BadPair(a, b, "indices must differ".into()));
        }
        if a >= lp.num_vars() || b >= lp.num_vars() {
            return Err(OptimizeError::BadPair(a, b, "index out of range".into()));
        }
        if lp.lower[a] != 0.0 || lp.lower[b] != 0.0 {
            return Err(OptimizeError::BadPair(a, b, "both columns need lower bound 0".into()));
        }
    }

    let mut stats = BranchStats::default();
    let mut heap = BinaryHeap::new();
    heap.push(Node { id: 0, depth: 0, bound: f64::NEG_INFINITY, fixed: Vec::new(), warm: warm.cloned() });
    let mut next_id = 1;
    let mut incumbent: Option<SolveResult> = None;
    let mut work = lp.clone();
    let mut hit_limit = false;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective - prune_tol(inc.objective) {
                continue;
            }
        }
        if stats.nodes >= opts.node_limit {
            hit_limit = true;
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);

        for &j in &node.fixed {
            work.upper[j] = 0.0;
        }
        let res = solve_lp_warm(&work, node.warm.as_ref(), &opts.simplex);
        for &j in &node.fixed {
            work.upper[j] = lp.upper[j];
        }
        let mut res = res?;
        stats.lp_iterations += res.stats.lp_iterations;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded if node.depth == 0 => {
                res.stats = stats;
                return Ok(res);
            }
            SolveStatus::Unbounded => {
                return Err(OptimizeError::Numerical("child node unbounded under bounded root".into()))
            }
            SolveStatus::IterationLimit => {
                hit_limit = true;
                break;
            }
        }
        if let Some(inc) = &incumbent {
            if res.objective >= inc.objective - prune_tol(inc.objective) {
                continue;
            }
        }

        let pick = match opts.mode {
            BranchMode::RelaxFirst => most_violated(pairs, &res.primal, opts.comp_tol),
            BranchMode::AlwaysBranch => pairs.iter().position(|p| {
                !node.fixed.contains(&p.first.0) && !node.fixed.contains(&p.second.0)
            }),
        };
        match pick {
            None => {
                if most_violated(pairs, &res.primal, opts.comp_tol).is_some() {
                    // exhaustive mode leaves nothing unfixed, so this cannot happen
                    return Err(OptimizeError::Numerical("fixed pairs remain violated".into()));
                }
                res.fixed_to_zero = node.fixed.iter().map(|&j| VarId(j)).collect();
                incumbent = Some(res);
            }
            Some(k) => {
                stats.pairs_branched += 1;
                let pair = pairs[k];
                for var in [pair.first.0, pair.second.0] {
                    let mut fixed = node.fixed.clone();
                    fixed.push(var);
                    heap.push(Node {
                        id: next_id,
                        depth: node.depth + 1,
                        bound: res.objective,
                        fixed,
                        warm: res.basis.clone(),
                    });
                    next_id += 1;
                }
            }
        }
    }

    match incumbent {
        Some(mut best) => {
            best.stats = stats;
            if hit_limit {
                best.status = SolveStatus::IterationLimit;
            }
            if let Some(k) = most_violated(pairs, &best.primal, opts.comp_tol) {
                return Err(OptimizeError::Numerical(format!(
                    "returned point violates pair {k} (product {:e})",
                    pairs[k].product(&best.primal)
                )));
            }
            Ok(best)
        }
        None => Ok(SolveResult {
            status: if hit_limit { SolveStatus::IterationLimit } else { SolveStatus::Infeasible },
            primal: vec![f64::NAN; lp.num_vars()],
            objective: f64::NAN,
            duals: Vec::new(),
            fixed_to_zero: Vec::new(),
            stats,
            basis: None,
        }),
    }
}

fn prune_tol(objective: f64) -> f64 {
    1e-9 * objective.abs().max(1.0)
}

/// Index of the pair with the largest product above `tol` (lowest index on ties).
fn most_violated(pairs: &[ComplementarityPair], x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in pairs.iter().enumerate() {
        let prod = p.product(x);
        if prod > tol && best.map_or(true, |(_, b)| prod > b) {
            best = Some((k, prod));
        }
    }
    best.map(|(k, _)| k)
}
