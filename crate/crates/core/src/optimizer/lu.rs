//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! Left-looking (Gilbert-Peierls) elimination with threshold partial
//! pivoting. Columns are processed sparsest first and, among numerically
//! acceptable pivots, the row with the fewest basis entries wins. Solves use
//! dense work vectors of length `m`; the factors themselves are sparse.

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-10;

/// Outcome of a factorization attempt that hit structurally or numerically
/// singular columns: the basis positions that could not be pivoted and the
/// rows left without a pivot. The caller swaps them for logical columns.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    m: usize,
    /// Row pivoted at step k.
    prow: Vec<usize>,
    /// Basis position eliminated at step k.
    pcol: Vec<usize>,
    // L: unit lower, column k holds (row, multiplier) for rows pivoted after k.
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // U: column k holds (step k' < k, value); diagonal separate.
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    work: Vec<f64>,
}

impl BasisFactor {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.m
    }

    /// Factorize the `m x m` matrix whose columns are given by `column(pos)`.
    pub fn factorize<F>(m: usize, mut column: F) -> Result<Self, Singular>
    where
        F: FnMut(usize, &mut Vec<(usize, f64)>),
    {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut row_count = vec![0usize; m];
        for pos in 0..m {
            let mut c = Vec::new();
            column(pos, &mut c);
            for &(r, _) in &c {
                row_count[r] += 1;
            }
            cols.push(c);
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].len(), p));

        let mut f = BasisFactor {
            m,
            prow: Vec::with_capacity(m),
            pcol: Vec::with_capacity(m),
            l_start: vec![0],
            u_start: vec![0],
            work: vec![0.0; m],
            ..Default::default()
        };
        // step at which each row was pivoted
        let mut pivot_of_row = vec![usize::MAX; m];
        let mut x = vec![0.0; m];
        let mut mark = vec![0usize; m];
        let mut stamp = 0usize;
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut topo: Vec<usize> = Vec::new();
        let mut pattern: Vec<usize> = Vec::new();
        let mut failed = Vec::new();

        for &pos in &order {
            stamp += 1;
            topo.clear();
            pattern.clear();
            // symbolic reach through L
            for &(r, _) in &cols[pos] {
                if mark[r] == stamp {
                    continue;
                }
                mark[r] = stamp;
                if pivot_of_row[r] == usize::MAX {
                    pattern.push(r);
                    continue;
                }
                stack.push((r, 0));
                while let Some(top) = stack.last_mut() {
                    let node = top.0;
                    let k = pivot_of_row[node];
                    let (s, e) = (f.l_start[k], f.l_start[k + 1]);
                    let mut descend = None;
                    while s + top.1 < e {
                        let child = f.l_idx[s + top.1];
                        top.1 += 1;
                        if mark[child] != stamp {
                            mark[child] = stamp;
                            if pivot_of_row[child] == usize::MAX {
                                pattern.push(child);
                            } else {
                                descend = Some(child);
                                break;
                            }
                        }
                    }
                    match descend {
                        Some(child) => stack.push((child, 0)),
                        None => {
                            topo.push(node);
                            stack.pop();
                        }
                    }
                }
            }
            // numeric solve in topological order (reverse postorder)
            for &(r, v) in &cols[pos] {
                x[r] += v;
            }
            for &r in topo.iter().rev() {
                let xr = x[r];
                if xr == 0.0 {
                    continue;
                }
                let k = pivot_of_row[r];
                for idx in f.l_start[k]..f.l_start[k + 1] {
                    x[f.l_idx[idx]] -= f.l_val[idx] * xr;
                }
            }
            // pivot selection among unpivoted rows
            let max_abs = pattern.iter().map(|&r| x[r].abs()).fold(0.0, f64::max);
            let mut best: Option<usize> = None;
            if max_abs > SINGULAR_TOL {
                for &r in &pattern {
                    if x[r].abs() >= PIVOT_THRESHOLD * max_abs {
                        best = match best {
                            None => Some(r),
                            Some(b) => {
                                if (row_count[r], r) < (row_count[b], b) {
                                    Some(r)
                                } else {
                                    Some(b)
                                }
                            }
                        };
                    }
                }
            }
            let Some(piv_row) = best else {
                failed.push(pos);
                for &r in topo.iter().chain(pattern.iter()) {
                    x[r] = 0.0;
                }
                continue;
            };
            let step = f.prow.len();
            let piv = x[piv_row];
            for &r in topo.iter() {
                let v = x[r];
                if v != 0.0 {
                    f.u_idx.push(pivot_of_row[r]);
                    f.u_val.push(v);
                }
                x[r] = 0.0;
            }
            f.u_start.push(f.u_idx.len());
            f.u_diag.push(piv);
            for &r in &pattern {
                if r != piv_row {
                    let v = x[r];
                    if v != 0.0 {
                        f.l_idx.push(r);
                        f.l_val.push(v / piv);
                    }
                }
                x[r] = 0.0;
            }
            f.l_start.push(f.l_idx.len());
            pivot_of_row[piv_row] = step;
            f.prow.push(piv_row);
            f.pcol.push(pos);
        }

        if !failed.is_empty() {
            let rows = (0..m).filter(|&r| pivot_of_row[r] == usize::MAX).collect();
            return Err(Singular { positions: failed, rows });
        }
        Ok(f)
    }

    /// Solve `B z = rhs` in place (`rhs` row-indexed on entry, position-indexed on exit).
    pub fn ftran(&mut self, rhs: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let r = self.prow[k];
            let v = rhs[r];
            if v == 0.0 {
                continue;
            }
            for idx in self.l_start[k]..self.l_start[k + 1] {
                rhs[self.l_idx[idx]] -= self.l_val[idx] * v;
            }
        }
        let y = &mut self.work;
        for k in 0..m {
            y[k] = rhs[self.prow[k]];
        }
        for k in (0..m).rev() {
            let z = y[k] / self.u_diag[k];
            y[k] = z;
            if z == 0.0 {
                continue;
            }
            for idx in self.u_start[k]..self.u_start[k + 1] {
                y[self.u_idx[idx]] -= self.u_val[idx] * z;
            }
        }
        for k in 0..m {
            rhs[self.pcol[k]] = y[k];
        }
        for eta in &self.etas {
            let zp = rhs[eta.pos] / eta.pivot;
            rhs[eta.pos] = zp;
            if zp != 0.0 {
                for &(i, a) in &eta.entries {
                    rhs[i] -= a * zp;
                }
            }
        }
    }

    /// Solve `B^T y = rhs` in place (`rhs` position-indexed on entry, row-indexed on exit).
    pub fn btran(&mut self, rhs: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = rhs[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * rhs[i];
            }
            rhs[eta.pos] = s / eta.pivot;
        }
        let v = &mut self.work;
        for k in 0..m {
            let mut s = rhs[self.pcol[k]];
            for idx in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[idx] * v[self.u_idx[idx]];
            }
            v[k] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut s = v[k];
            for idx in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[idx] * rhs[self.l_idx[idx]];
            }
            rhs[self.prow[k]] = s;
        }
    }

    /// Record the replacement of basis position `pos` by a column whose
    /// FTRAN image is `alpha` (position-indexed, dense).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.eta_nnz += entries.len();
        self.etas.push(Eta { pos, pivot: alpha[pos], entries });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, (i * 7 + 3) % m)] = rng.gen_range(1.0..3.0);
        }
        for _ in 0..2 * m {
            let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..m));
            a[(i, j)] = rng.gen_range(-2.0..2.0);
        }
        a
    }

    fn factor(a: &DMatrix<f64>) -> BasisFactor {
        BasisFactor::factorize(a.nrows(), |pos, out| {
            for r in 0..a.nrows() {
                if a[(r, pos)] != 0.0 {
                    out.push((r, a[(r, pos)]));
                }
            }
        })
        .expect("nonsingular")
    }

    #[test]
    fn ftran_btran_match_dense_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [1usize, 5, 17, 40] {
            let a = random_sparse(m, &mut rng);
            if a.clone().lu().determinant().abs() < 1e-6 {
                continue;
            }
            let mut f = factor(&a);
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = a.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let mut z = b.clone();
            f.ftran(&mut z);
            for i in 0..m {
                assert!((z[i] - expect[i]).abs() < 1e-9, "ftran m={m}");
            }
            let expect_t = a.transpose().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let mut y = b.clone();
            f.btran(&mut y);
            for i in 0..m {
                assert!((y[i] - expect_t[i]).abs() < 1e-9, "btran m={m}");
            }
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 12;
        let mut a = random_sparse(m, &mut rng);
        let mut f = factor(&a);
        for step in 0..6 {
            let pos = (step * 5) % m;
            let newcol: Vec<f64> = (0..m).map(|i| if i == pos { 2.0 } else if (i + step) % 3 == 0 { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            let mut alpha = newcol.clone();
            f.ftran(&mut alpha);
            f.update(pos, &alpha);
            for i in 0..m {
                a[(i, pos)] = newcol[i];
            }
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut z = b.clone();
            f.ftran(&mut z);
            let expect = a.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            for i in 0..m {
                assert!((z[i] - expect[i]).abs() < 1e-8);
            }
            let mut y = b.clone();
            f.btran(&mut y);
            let expect_t = a.transpose().lu().solve(&DVector::from_vec(b)).unwrap();
            for i in 0..m {
                assert!((y[i] - expect_t[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_columns_are_reported() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0]);
        let err = BasisFactor::factorize(3, |pos, out| {
            for r in 0..3 {
                if a[(r, pos)] != 0.0 {
                    out.push((r, a[(r, pos)]));
                }
            }
        })
        .unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
