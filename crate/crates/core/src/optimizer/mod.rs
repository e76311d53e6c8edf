//! Linear programming with complementarity pairs.
//!
//! [`solve_lp`] runs the bounded revised simplex in [`simplex`]. Problems whose
//! variables come in pairs that may not both be positive (grid import/export,
//! storage charge/discharge) go through [`solve_with_complementarity`], which
//! branches on the disjunction `x = 0 ∨ y = 0` instead of introducing binary
//! variables.

mod bnb;
mod certificate;
mod lp;
mod lu;
mod simplex;

pub use bnb::{solve_with_complementarity, solve_with_complementarity_opts, BranchMode, BranchOptions};
pub use certificate::{check_lp_optimality, LpCertificate};
pub use lp::{LinearProgram, RowId, RowSense, VarId};
pub use simplex::{Basis, SimplexOptions, VarStatus};

use serde::{Deserialize, Serialize};

/// Primal feasibility tolerance reported on optimal results.
pub const FEAS_TOL: f64 = 1e-7;
/// Largest accepted `x·y` on a complementarity pair.
pub const COMP_TOL: f64 = 1e-6;
/// Relative duality gap accepted by the optimality certificate.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("invalid complementarity pair ({0}, {1}): {2}")]
    BadPair(usize, usize, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Two nonnegative columns with `first · second = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplementarityPair {
    pub first: VarId,
    pub second: VarId,
}

impl ComplementarityPair {
    pub fn new(first: VarId, second: VarId) -> Self {
        Self { first, second }
    }

    pub fn product(&self, x: &[f64]) -> f64 {
        x[self.first.0] * x[self.second.0]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub nodes: usize,
    pub max_depth: usize,
    pub pairs_branched: usize,
    pub lp_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Row multipliers of the LP that produced `primal` (for branch-and-bound
    /// results: the leaf LP with `fixed_to_zero` applied).
    pub duals: Vec<f64>,
    /// Columns whose upper bound was forced to zero at the returning leaf.
    pub fixed_to_zero: Vec<VarId>,
    pub stats: BranchStats,
    #[serde(skip)]
    pub basis: Option<Basis>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solve an LP from a cold start.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, OptimizeError> {
    solve_lp_warm(lp, None, &SimplexOptions::default())
}

/// Solve an LP, optionally starting from a previous basis (e.g. the parent
/// node in branch-and-bound or the previous receding-horizon step).
pub fn solve_lp_warm(
    lp: &LinearProgram,
    warm: Option<&Basis>,
    opts: &SimplexOptions,
) -> Result<SolveResult, OptimizeError> {
    lp.validate()?;
    let mut engine = simplex::Simplex::new(lp, opts);
    let run = engine.solve(warm)?;
    let status = match run.outcome {
        simplex::LpOutcome::Optimal => SolveStatus::Optimal,
        simplex::LpOutcome::Infeasible => SolveStatus::Infeasible,
        simplex::LpOutcome::Unbounded => SolveStatus::Unbounded,
        simplex::LpOutcome::IterationLimit => SolveStatus::IterationLimit,
    };
    let objective = if status == SolveStatus::Optimal { lp.objective(&run.x) } else { f64::NAN };
    if status == SolveStatus::Optimal {
        let viol = lp.max_violation(&run.x);
        if viol > FEAS_TOL * (1.0 + max_abs_rhs(lp)) {
            return Err(OptimizeError::Numerical(format!("optimal point violates constraints by {viol:e}")));
        }
    }
    Ok(SolveResult {
        status,
        primal: run.x,
        objective,
        duals: run.duals,
        fixed_to_zero: Vec::new(),
        stats: BranchStats { lp_iterations: run.iterations, ..Default::default() },
        basis: Some(run.basis),
    })
}

pub(crate) fn max_abs_rhs(lp: &LinearProgram) -> f64 {
    lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}
