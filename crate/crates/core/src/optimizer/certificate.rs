//! Optimality certificate for LP solutions that does not touch solver state.
//!
//! Given a primal point and row multipliers, weak duality yields the lower
//! bound `Σ_i b_i y_i + Σ_j min_{l_j ≤ x_j ≤ u_j} d_j x_j` with reduced costs
//! `d = c - Aᵀy`, provided each `y_i` has the sign its row sense demands.
//! A small gap between that bound and `c·x` certifies optimality.

use super::lp::{LinearProgram, RowSense};
use super::{FEAS_TOL, GAP_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct LpCertificate {
    pub primal_objective: f64,
    pub dual_bound: f64,
    /// `|primal - dual| / max(1, |primal|)`.
    pub relative_gap: f64,
    /// Largest bound/row violation of the primal point.
    pub primal_violation: f64,
    /// Largest multiplier with the wrong sign (clipped to zero in the bound).
    pub dual_sign_violation: f64,
    /// A reduced cost pushes towards an infinite bound.
    pub dual_unbounded: bool,
}

impl LpCertificate {
    pub fn passes(&self) -> bool {
        self.primal_violation <= FEAS_TOL
            && !self.dual_unbounded
            && self.relative_gap <= GAP_TOL
    }
}

pub fn check_lp_optimality(lp: &LinearProgram, x: &[f64], duals: &[f64]) -> LpCertificate {
    let mut sign_violation = 0.0f64;
    let y: Vec<f64> = duals
        .iter()
        .zip(&lp.senses)
        .map(|(&yi, sense)| match sense {
            RowSense::Le if yi > 0.0 => {
                sign_violation = sign_violation.max(yi);
                0.0
            }
            RowSense::Ge if yi < 0.0 => {
                sign_violation = sign_violation.max(-yi);
                0.0
            }
            _ => yi,
        })
        .collect();
    let mut reduced = lp.cost.clone();
    for &(r, c, v) in &lp.entries {
        reduced[c] -= v * y[r];
    }
    let mut bound = lp.objective_offset + lp.rhs.iter().zip(&y).map(|(b, yi)| b * yi).sum::<f64>();
    let mut unbounded = false;
    for (j, &d) in reduced.iter().enumerate() {
        let limit = if d > 0.0 { lp.lower[j] } else if d < 0.0 { lp.upper[j] } else { 0.0 };
        if !limit.is_finite() {
            // tolerate round-off sized reduced costs on free directions
            if d.abs() > 1e-9 {
                unbounded = true;
            }
            continue;
        }
        bound += d * limit;
    }
    let primal = lp.objective(x);
    LpCertificate {
        primal_objective: primal,
        dual_bound: bound,
        relative_gap: (primal - bound).abs() / primal.abs().max(1.0),
        primal_violation: lp.max_violation(x),
        dual_sign_violation: sign_violation,
        dual_unbounded: unbounded,
    }
}
