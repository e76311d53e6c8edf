//! Bounded-variable primal revised simplex.
//!
//! Every row `i` gets a logical column `r_i = a_i·x` bounded according to the
//! row sense, so the working system is `[A | -I] (x, r) = 0` with all
//! variables boxed (possibly by infinities). Phase 1 minimizes the sum of
//! basic bound violations with a breakpoint-safe ratio test; phase 2 uses
//! Dantzig pricing with a Harris two-pass ratio test. After a run of
//! degenerate pivots the method falls back to Bland's rule until progress
//! resumes.

use super::lp::{LinearProgram, RowSense};
use super::lu::BasisFactor;
use super::OptimizeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Starting point for a warm-started solve: one status per structural
/// column followed by one per row (logical column).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    pub refactor_interval: usize,
    pub stall_limit: usize,
    /// Start with the dual simplex when the initial basis is dual feasible
    /// (after flipping boxed variables).
    pub dual_start: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: 200_000,
            refactor_interval: 100,
            stall_limit: 60,
            dual_start: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub(crate) struct LpRun {
    pub outcome: LpOutcome,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

pub(crate) struct Simplex<'a> {
    opts: &'a SimplexOptions,
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    factor: BasisFactor,
    iterations: usize,
}

const NOT_BASIC: usize = usize::MAX;

impl<'a> Simplex<'a> {
    pub fn new(lp: &LinearProgram, opts: &'a SimplexOptions) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        // CSC with duplicate entries merged
        let mut count = vec![0usize; n + 1];
        let mut sorted = lp.entries.clone();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        for &(_, c, _) in &merged {
            count[c + 1] += 1;
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let row_idx = merged.iter().map(|e| e.0).collect();
        let vals = merged.iter().map(|e| e.2).collect();

        let mut cost = lp.cost.clone();
        cost.resize(n + m, 0.0);
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        for i in 0..m {
            let b = lp.rhs[i];
            let (l, u) = match lp.senses[i] {
                RowSense::Le => (f64::NEG_INFINITY, b),
                RowSense::Ge => (b, f64::INFINITY),
                RowSense::Eq => (b, b),
            };
            lower.push(l);
            upper.push(u);
        }
        Self {
            opts,
            n,
            m,
            col_start: count,
            row_idx,
            vals,
            cost,
            lower,
            upper,
            x: vec![0.0; n + m],
            status: vec![VarStatus::AtLower; n + m],
            basis: Vec::new(),
            pos_of: vec![NOT_BASIC; n + m],
            factor: BasisFactor::default(),
            iterations: 0,
        }
    }

    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        if j < self.n {
            for idx in self.col_start[j]..self.col_start[j + 1] {
                out.push((self.row_idx[idx], self.vals[idx]));
            }
        } else {
            out.push((j - self.n, -1.0));
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for idx in self.col_start[j]..self.col_start[j + 1] {
                s += self.vals[idx] * y[self.row_idx[idx]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn nonbasic_value(&self, j: usize, st: VarStatus) -> f64 {
        match st {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[j],
        }
    }

    /// Status a nonbasic variable should take when it has to sit at a bound.
    fn resting_status(&self, j: usize) -> VarStatus {
        let (l, u) = (self.lower[j], self.upper[j]);
        if l.is_finite() && u.is_finite() {
            if self.x[j] - l <= u - self.x[j] {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            }
        } else if l.is_finite() {
            VarStatus::AtLower
        } else if u.is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        }
    }

    fn install_basis(&mut self, warm: Option<&Basis>) {
        let total = self.n + self.m;
        let usable = warm.filter(|b| b.status.len() == total);
        match usable {
            Some(b) => {
                self.status = b.status.clone();
                self.balance_basis_count();
            }
            None => {
                for j in 0..self.n {
                    self.x[j] = 0.0;
                    self.status[j] = self.resting_status(j);
                }
                for j in self.n..total {
                    self.status[j] = VarStatus::Basic;
                }
            }
        }
        // nonbasic statuses must refer to finite bounds
        for j in 0..total {
            let st = self.status[j];
            let fixed = match st {
                VarStatus::AtLower if !self.lower[j].is_finite() => true,
                VarStatus::AtUpper if !self.upper[j].is_finite() => true,
                VarStatus::Free if self.lower[j].is_finite() || self.upper[j].is_finite() => true,
                _ => false,
            };
            if fixed {
                self.x[j] = 0.0;
                self.status[j] = self.resting_status(j);
            }
            if self.status[j] != VarStatus::Basic {
                self.x[j] = self.nonbasic_value(j, self.status[j]);
            }
        }
        self.basis = (0..total).filter(|&j| self.status[j] == VarStatus::Basic).collect();
        self.pos_of = vec![NOT_BASIC; total];
        for (p, &j) in self.basis.iter().enumerate() {
            self.pos_of[j] = p;
        }
    }

    /// Makes the number of basic statuses equal to the row count: surplus
    /// structurals leave (highest index first), missing slots are filled with
    /// logicals. Singular choices are repaired at factorization.
    fn balance_basis_count(&mut self) {
        let total = self.n + self.m;
        let mut count = self.status.iter().filter(|s| **s == VarStatus::Basic).count();
        let mut j = total;
        while count > self.m && j > 0 {
            j -= 1;
            // drop structurals first, then logicals
            let k = if j >= self.m { j - self.m } else { total - 1 - j };
            let k = if k < self.n { k } else { continue };
            if self.status[k] == VarStatus::Basic {
                self.x[k] = 0.0;
                self.status[k] = self.resting_status(k);
                count -= 1;
            }
        }
        let mut i = 0;
        while count < self.m && i < self.m {
            let k = self.n + i;
            if self.status[k] != VarStatus::Basic {
                self.status[k] = VarStatus::Basic;
                count += 1;
            }
            i += 1;
        }
    }

    fn reduced_costs(&mut self) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.factor.btran(&mut y);
        (0..self.n + self.m)
            .map(|j| if self.status[j] == VarStatus::Basic { 0.0 } else { self.cost[j] - self.col_dot(j, &y) })
            .collect()
    }

    /// Flips boxed nonbasic variables whose reduced cost has the wrong sign.
    /// Returns false when some unboxed variable stays dual infeasible.
    fn make_dual_feasible(&mut self) -> bool {
        let d = self.reduced_costs();
        let tol = self.opts.opt_tol;
        let mut flipped = false;
        let mut feasible = true;
        for j in 0..self.n + self.m {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            match self.status[j] {
                VarStatus::AtLower if d[j] < -tol => {
                    if self.upper[j].is_finite() {
                        self.status[j] = VarStatus::AtUpper;
                        self.x[j] = self.upper[j];
                        flipped = true;
                    } else {
                        feasible = false;
                    }
                }
                VarStatus::AtUpper if d[j] > tol => {
                    if self.lower[j].is_finite() {
                        self.status[j] = VarStatus::AtLower;
                        self.x[j] = self.lower[j];
                        flipped = true;
                    } else {
                        feasible = false;
                    }
                }
                VarStatus::Free if d[j].abs() > tol => feasible = false,
                _ => {}
            }
        }
        if flipped {
            self.recompute_basic_values();
        }
        feasible
    }

    /// Bounded dual simplex from a dual feasible basis.
    fn dual_loop(&mut self) -> Result<DualEnd, OptimizeError> {
        let total = self.n + self.m;
        let tol_p = self.opts.feas_tol;
        let tol_d = self.opts.opt_tol;
        let mut d = self.reduced_costs();
        let mut rho = vec![0.0; self.m];
        let mut row = vec![0.0; total];
        let mut alpha = vec![0.0; self.m];
        let mut col = Vec::new();
        let budget = self.iterations + 4 * (self.m + self.n);
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(DualEnd::IterationLimit);
            }
            if self.iterations >= budget {
                return Ok(DualEnd::GiveUp);
            }
            if self.factor.num_updates() >= self.opts.refactor_interval
                || self.factor.eta_nnz() > 4 * self.factor.factor_nnz() + 10 * self.m
            {
                self.refactor()?;
                d = self.reduced_costs();
            }
            // leaving row: largest bound violation
            let mut leave: Option<(usize, f64)> = None;
            for (p, &j) in self.basis.iter().enumerate() {
                let v = if self.x[j] < self.lower[j] - tol_p {
                    self.lower[j] - self.x[j]
                } else if self.x[j] > self.upper[j] + tol_p {
                    self.x[j] - self.upper[j]
                } else {
                    continue;
                };
                if leave.map_or(true, |(_, b)| v > b) {
                    leave = Some((p, v));
                }
            }
            let Some((p, _)) = leave else {
                return Ok(DualEnd::PrimalFeasible);
            };
            let jl = self.basis[p];
            let to_lower = self.x[jl] < self.lower[jl];

            rho.iter_mut().for_each(|v| *v = 0.0);
            rho[p] = 1.0;
            self.factor.btran(&mut rho);
            let mut max_alpha = 0.0f64;
            for j in 0..total {
                row[j] = if self.status[j] == VarStatus::Basic { 0.0 } else { self.col_dot(j, &rho) };
                max_alpha = max_alpha.max(row[j].abs());
            }
            let piv_tol = self.opts.pivot_tol.max(1e-9 * max_alpha);
            // candidates move the leaving variable towards its violated bound
            let eligible = |j: usize, a: f64| -> bool {
                if a.abs() <= piv_tol || self.lower[j] == self.upper[j] {
                    return false;
                }
                match self.status[j] {
                    VarStatus::AtLower => (a < 0.0) == to_lower,
                    VarStatus::AtUpper => (a > 0.0) == to_lower,
                    VarStatus::Free => true,
                    VarStatus::Basic => false,
                }
            };
            let mut theta_max = f64::INFINITY;
            for j in 0..total {
                if eligible(j, row[j]) {
                    theta_max = theta_max.min((d[j].abs() + tol_d) / row[j].abs());
                }
            }
            if !theta_max.is_finite() {
                if self.factor.num_updates() > 0 {
                    self.refactor()?;
                    d = self.reduced_costs();
                    continue;
                }
                return Ok(DualEnd::Infeasible);
            }
            let mut q = usize::MAX;
            let mut best = 0.0;
            for j in 0..total {
                if eligible(j, row[j]) && d[j].abs() / row[j].abs() <= theta_max && row[j].abs() > best {
                    best = row[j].abs();
                    q = j;
                }
            }

            alpha.iter_mut().for_each(|a| *a = 0.0);
            col.clear();
            self.column(q, &mut col);
            for &(r, a) in &col {
                alpha[r] = a;
            }
            self.factor.ftran(&mut alpha);
            let apq = alpha[p];
            if (apq - row[q]).abs() > 1e-7 * (1.0 + apq.abs()) || apq.abs() <= piv_tol {
                if self.factor.num_updates() == 0 {
                    return Ok(DualEnd::GiveUp);
                }
                self.refactor()?;
                d = self.reduced_costs();
                continue;
            }
            self.iterations += 1;

            // dual update
            let theta_d = d[q] / apq;
            for j in 0..total {
                if row[j] != 0.0 && self.status[j] != VarStatus::Basic {
                    d[j] -= theta_d * row[j];
                }
            }
            d[q] = 0.0;
            d[jl] = -theta_d;

            // primal update
            let bound = if to_lower { self.lower[jl] } else { self.upper[jl] };
            let delta = (self.x[jl] - bound) / apq;
            for (pp, &j) in self.basis.iter().enumerate() {
                let a = alpha[pp];
                if a != 0.0 {
                    self.x[j] -= a * delta;
                }
            }
            self.x[q] += delta;
            self.status[jl] = if to_lower { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.x[jl] = bound;
            self.pos_of[jl] = NOT_BASIC;
            self.basis[p] = q;
            self.pos_of[q] = p;
            self.status[q] = VarStatus::Basic;
            self.factor.update(p, &alpha);
        }
    }

    fn refactor(&mut self) -> Result<(), OptimizeError> {
        for _attempt in 0..4 {
            let basis = self.basis.clone();
            let result = BasisFactor::factorize(self.m, |pos, out| self.column(basis[pos], out));
            match result {
                Ok(f) => {
                    self.factor = f;
                    self.recompute_basic_values();
                    return Ok(());
                }
                Err(sing) => {
                    for (&pos, &row) in sing.positions.iter().zip(&sing.rows) {
                        let leaving = self.basis[pos];
                        self.pos_of[leaving] = NOT_BASIC;
                        let st = self.resting_status(leaving);
                        self.status[leaving] = st;
                        self.x[leaving] = self.nonbasic_value(leaving, st);
                        let entering = self.n + row;
                        self.basis[pos] = entering;
                        self.pos_of[entering] = pos;
                        self.status[entering] = VarStatus::Basic;
                    }
                }
            }
        }
        Err(OptimizeError::Numerical("basis factorization failed after repair attempts".into()))
    }

    fn recompute_basic_values(&mut self) {
        let mut rhs = vec![0.0; self.m];
        let mut col = Vec::new();
        for j in 0..self.n + self.m {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let v = self.x[j];
            if v == 0.0 {
                continue;
            }
            col.clear();
            self.column(j, &mut col);
            for &(r, a) in &col {
                rhs[r] -= a * v;
            }
        }
        self.factor.ftran(&mut rhs);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    /// Phase-1 cost of each basic position; `None` when primal feasible.
    fn infeasibility_costs(&self) -> Option<Vec<f64>> {
        let tol = self.opts.feas_tol;
        let mut any = false;
        let c: Vec<f64> = self
            .basis
            .iter()
            .map(|&j| {
                if self.x[j] < self.lower[j] - tol {
                    any = true;
                    -1.0
                } else if self.x[j] > self.upper[j] + tol {
                    any = true;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        any.then_some(c)
    }

    pub fn solve(&mut self, warm: Option<&Basis>) -> Result<LpRun, OptimizeError> {
        self.install_basis(warm);
        self.refactor()?;
        if self.opts.dual_start && self.make_dual_feasible() {
            match self.dual_loop()? {
                DualEnd::Infeasible => return Ok(self.finish(LpOutcome::Infeasible)),
                DualEnd::IterationLimit => return Ok(self.finish(LpOutcome::IterationLimit)),
                // the primal loop below confirms optimality or continues
                DualEnd::PrimalFeasible | DualEnd::GiveUp => {}
            }
        }
        let total = self.n + self.m;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut y = vec![0.0; self.m];
        let mut alpha = vec![0.0; self.m];
        let mut col = Vec::new();

        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(self.finish(LpOutcome::IterationLimit));
            }
            if self.factor.num_updates() >= self.opts.refactor_interval
                || self.factor.eta_nnz() > 4 * self.factor.factor_nnz() + 10 * self.m
            {
                self.refactor()?;
            }
            let phase1 = self.infeasibility_costs();
            for (p, &j) in self.basis.iter().enumerate() {
                y[p] = match &phase1 {
                    Some(c) => c[p],
                    None => self.cost[j],
                };
            }
            self.factor.btran(&mut y);

            // pricing
            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..total {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let cj = if phase1.is_some() { 0.0 } else { self.cost[j] };
                let d = cj - self.col_dot(j, &y);
                let eligible = match st {
                    VarStatus::AtLower => d < -self.opts.opt_tol,
                    VarStatus::AtUpper => d > self.opts.opt_tol,
                    VarStatus::Free => d.abs() > self.opts.opt_tol,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = Some((j, d));
                }
            }

            let Some((q, d_q)) = entering else {
                if phase1.is_some() {
                    return Ok(self.finish(LpOutcome::Infeasible));
                }
                if self.factor.num_updates() > 0 {
                    // confirm on a fresh factorization before declaring optimality
                    self.refactor()?;
                    if self.infeasibility_costs().is_some() {
                        continue;
                    }
                    for (p, &j) in self.basis.iter().enumerate() {
                        y[p] = self.cost[j];
                    }
                    self.factor.btran(&mut y);
                    let still_optimal = (0..total).all(|j| {
                        let st = self.status[j];
                        if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                            return true;
                        }
                        let d = self.cost[j] - self.col_dot(j, &y);
                        match st {
                            VarStatus::AtLower => d >= -self.opts.opt_tol,
                            VarStatus::AtUpper => d <= self.opts.opt_tol,
                            VarStatus::Free => d.abs() <= self.opts.opt_tol,
                            VarStatus::Basic => true,
                        }
                    });
                    if !still_optimal {
                        continue;
                    }
                }
                return Ok(self.finish(LpOutcome::Optimal));
            };

            let dir = if d_q < 0.0 { 1.0 } else { -1.0 };
            alpha.iter_mut().for_each(|a| *a = 0.0);
            col.clear();
            self.column(q, &mut col);
            for &(r, a) in &col {
                alpha[r] = a;
            }
            self.factor.ftran(&mut alpha);

            let in_phase1 = phase1.is_some();
            let choice = if bland {
                self.ratio_test_bland(&alpha, dir, in_phase1)
            } else {
                self.ratio_test_harris(&alpha, dir, in_phase1)
            };
            let range = self.upper[q] - self.lower[q];
            let step = match choice {
                Some((p, theta)) if theta < range => Step::Pivot(p, theta.max(0.0)),
                _ if range.is_finite() => Step::Flip(range),
                _ => {
                    if in_phase1 {
                        return Err(OptimizeError::Numerical(
                            "phase-1 ray without breakpoint (numerical breakdown)".into(),
                        ));
                    }
                    return Ok(self.finish(LpOutcome::Unbounded));
                }
            };
            self.iterations += 1;

            let theta = match step {
                Step::Pivot(_, t) | Step::Flip(t) => t,
            };
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > self.opts.stall_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            // primal update
            if theta != 0.0 {
                for (p, &j) in self.basis.iter().enumerate() {
                    let a = alpha[p];
                    if a != 0.0 {
                        self.x[j] -= dir * a * theta;
                    }
                }
                self.x[q] += dir * theta;
            }
            match step {
                Step::Flip(_) => {
                    let st = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.status[q] = st;
                    self.x[q] = self.nonbasic_value(q, st);
                }
                Step::Pivot(p, _) => {
                    let leaving = self.basis[p];
                    let st = self.leaving_status(leaving);
                    self.status[leaving] = st;
                    self.x[leaving] = self.nonbasic_value(leaving, st);
                    self.pos_of[leaving] = NOT_BASIC;
                    self.basis[p] = q;
                    self.pos_of[q] = p;
                    self.status[q] = VarStatus::Basic;
                    self.factor.update(p, &alpha);
                }
            }
        }
    }

    /// The leaving variable sits at the bound the ratio test stopped it on,
    /// which is the finite bound nearest its updated value.
    fn leaving_status(&self, j: usize) -> VarStatus {
        let (x, l, u) = (self.x[j], self.lower[j], self.upper[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (x - l).abs() <= (u - x).abs() {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                }
            }
            (true, false) => VarStatus::AtLower,
            (false, true) => VarStatus::AtUpper,
            (false, false) => VarStatus::Free,
        }
    }

    /// Per-basic-position ratio along direction `dir`, and whether it is a
    /// phase-1 breakpoint (exact, no Harris relaxation).
    fn ratio(&self, p: usize, delta: f64, phase1: bool, relax: f64) -> Option<f64> {
        let j = self.basis[p];
        let (x, l, u) = (self.x[j], self.lower[j], self.upper[j]);
        let tol = self.opts.feas_tol;
        if phase1 && x < l - tol {
            return (delta > 0.0).then(|| (l - x) / delta);
        }
        if phase1 && x > u + tol {
            return (delta < 0.0).then(|| (x - u) / -delta);
        }
        if delta < 0.0 && l.is_finite() {
            Some(((x - l + relax) / -delta).max(0.0))
        } else if delta > 0.0 && u.is_finite() {
            Some(((u - x + relax) / delta).max(0.0))
        } else {
            None
        }
    }

    fn ratio_test_harris(&self, alpha: &[f64], dir: f64, phase1: bool) -> Option<(usize, f64)> {
        let relax = self.opts.feas_tol;
        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            let a = alpha[p];
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            if let Some(t) = self.ratio(p, -dir * a, phase1, relax) {
                theta_max = theta_max.min(t);
            }
        }
        if !theta_max.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for p in 0..self.m {
            let a = alpha[p];
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            if let Some(t) = self.ratio(p, -dir * a, phase1, 0.0) {
                if t <= theta_max && best.map_or(true, |(_, _, ba)| a.abs() > ba) {
                    best = Some((p, t, a.abs()));
                }
            }
        }
        best.map(|(p, t, _)| (p, t))
    }

    fn ratio_test_bland(&self, alpha: &[f64], dir: f64, phase1: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.m {
            let a = alpha[p];
            if a.abs() <= self.opts.pivot_tol {
                continue;
            }
            if let Some(t) = self.ratio(p, -dir * a, phase1, 0.0) {
                best = match best {
                    None => Some((p, t)),
                    Some((bp, bt)) => {
                        if t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[p] < self.basis[bp]) {
                            Some((p, t))
                        } else {
                            Some((bp, bt))
                        }
                    }
                };
            }
        }
        best
    }

    fn finish(&mut self, outcome: LpOutcome) -> LpRun {
        let mut duals = vec![0.0; self.m];
        if outcome == LpOutcome::Optimal {
            for (p, &j) in self.basis.iter().enumerate() {
                duals[p] = self.cost[j];
            }
            self.factor.btran(&mut duals);
        }
        LpRun {
            outcome,
            x: self.x[..self.n].to_vec(),
            duals,
            iterations: self.iterations,
            basis: Basis { status: self.status.clone() },
        }
    }
}

enum DualEnd {
    PrimalFeasible,
    Infeasible,
    IterationLimit,
    GiveUp,
}

enum Step {
    Pivot(usize, f64),
    Flip(f64),
}
