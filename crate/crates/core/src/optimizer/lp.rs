//! Canonical linear-program container.
//!
//! Problems are stored as coordinate triplets plus per-row senses. Column
//! bounds may be infinite; the solver treats `f64::INFINITY` as "no bound".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::OptimizeError;

/// Index of a column (decision variable).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of a row (linear constraint).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        }
    }
}

/// `min cost·x  s.t.  rows(x) {<=,=,>=} rhs,  lower <= x <= upper`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `(row, col, value)`; duplicates are summed.
    pub entries: Vec<(usize, usize, f64)>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    /// Constant added to the objective (does not affect the argmin).
    pub objective_offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        VarId(self.cost.len() - 1)
    }

    pub fn add_row(&mut self, coeffs: &[(VarId, f64)], sense: RowSense, rhs: f64) -> RowId {
        let row = self.rhs.len();
        for &(var, value) in coeffs {
            if value != 0.0 {
                self.entries.push((row, var.0, value));
            }
        }
        self.senses.push(sense);
        self.rhs.push(rhs);
        RowId(row)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.cost[var.0] = cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Row activities `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for &(r, c, v) in &self.entries {
            act[r] += v * x[c];
        }
        act
    }

    /// Largest bound or row violation of `x`, in the problem's own units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (i, a) in self.row_activity(x).into_iter().enumerate() {
            let b = self.rhs[i];
            let v = match self.senses[i] {
                RowSense::Le => a - b,
                RowSense::Ge => b - a,
                RowSense::Eq => (a - b).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(OptimizeError::Malformed("bound vectors do not match column count".into()));
        }
        if self.senses.len() != self.rhs.len() {
            return Err(OptimizeError::Malformed("sense and rhs lengths differ".into()));
        }
        for j in 0..n {
            if !self.cost[j].is_finite() {
                return Err(OptimizeError::Malformed(format!("cost of column {j} is not finite")));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(OptimizeError::Malformed(format!(
                    "column {j} has bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(OptimizeError::Malformed(format!("column {j} has an empty domain")));
            }
        }
        for &(r, c, v) in &self.entries {
            if r >= self.num_rows() || c >= n {
                return Err(OptimizeError::Malformed(format!("entry ({r}, {c}) out of range")));
            }
            if !v.is_finite() {
                return Err(OptimizeError::Malformed(format!("entry ({r}, {c}) is not finite")));
            }
        }
        if let Some(i) = self.rhs.iter().position(|b| !b.is_finite()) {
            return Err(OptimizeError::Malformed(format!("rhs of row {i} is not finite")));
        }
        Ok(())
    }

    /// Plain-text canonical dump: one section each for columns, rows and
    /// complementarity pairs. Stable across runs, meant for diffing.
    pub fn to_canonical_text(&self, pairs: &[super::ComplementarityPair]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "LP {} columns {} rows {} pairs", self.num_vars(), self.num_rows(), pairs.len());
        let _ = writeln!(out, "OFFSET {:e}", self.objective_offset);
        let _ = writeln!(out, "COLUMNS");
        for j in 0..self.num_vars() {
            let _ = writeln!(out, "c{j} cost {:e} lb {:e} ub {:e}", self.cost[j], self.lower[j], self.upper[j]);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_rows()];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        let _ = writeln!(out, "ROWS");
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let _ = write!(out, "r{i}");
            for &(c, v) in row.iter() {
                let _ = write!(out, " {v:+e}*c{c}");
            }
            let _ = writeln!(out, " {} {:e}", self.senses[i].symbol(), self.rhs[i]);
        }
        let _ = writeln!(out, "PAIRS");
        for p in pairs {
            let _ = writeln!(out, "c{} c{}", p.first.0, p.second.0);
        }
        out
    }
}
