//! Revised primal simplex for `min c·x` s.t. `A x = b`, `x ≥ 0`, where every
//! column of `A` is a 0/1 vector given by its row set.
//!
//! Phase one starts from an all-artificial basis. Columns are priced by the
//! most negative reduced cost; after `STALL_LIMIT` consecutive degenerate
//! pivots pricing falls back to Bland's rule (lowest-indexed improving
//! column) until the objective moves again, which rules out cycling.
//! Ratio-test ties always leave by lowest variable index. The basis inverse
//! is kept dense and rebuilt from scratch every `REFACTOR_EVERY` pivots.

use crate::error::{Error, Result};

const REFACTOR_EVERY: usize = 50;
const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-11;
const RATIO_TIE_TOL: f64 = 1e-13;
const FEAS_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 50;
/// Basic levels below this are treated as exact zeros.
const ZERO_LEVEL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub(crate) struct ColumnLp {
    pub rows: usize,
    /// Row sets of the structural columns.
    pub cols: Vec<Vec<usize>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
}

struct Tableau<'a> {
    lp: &'a ColumnLp,
    m: usize,
    ncols: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a ColumnLp) -> Self {
        let m = lp.rows;
        let ncols = lp.cols.len();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut is_basic = vec![false; ncols + m];
        is_basic[ncols..].iter_mut().for_each(|b| *b = true);
        Tableau {
            lp,
            m,
            ncols,
            basis: (ncols..ncols + m).collect(),
            is_basic,
            binv,
            xb: lp.rhs.clone(),
            since_refactor: 0,
            iterations: 0,
            max_iterations: 200_000usize.max(50 * (ncols + m)),
        }
    }

    fn column_rows(&self, var: usize) -> ColRows<'_> {
        if var < self.ncols {
            ColRows::Many(&self.lp.cols[var])
        } else {
            ColRows::One(var - self.ncols)
        }
    }

    /// `y = c_B^T B^{-1}`.
    fn duals(&self, cost_of: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &var) in self.basis.iter().enumerate() {
            let cb = cost_of(var);
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
        y
    }

    fn ftran(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        match self.column_rows(var) {
            ColRows::Many(rows) => {
                for (r, a) in alpha.iter_mut().enumerate() {
                    let row = &self.binv[r * m..(r + 1) * m];
                    *a = rows.iter().map(|&k| row[k]).sum();
                }
            }
            ColRows::One(k) => {
                for (r, a) in alpha.iter_mut().enumerate() {
                    *a = self.binv[r * m + k];
                }
            }
        }
        alpha
    }

    fn pivot(&mut self, p: usize, entering: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let ap = alpha[p];
        let theta = self.xb[p].max(0.0) / ap;
        for (r, (x, a)) in self.xb.iter_mut().zip(alpha).enumerate() {
            if r != p {
                *x -= theta * a;
                if *x < 0.0 && *x > -FEAS_TOL {
                    *x = 0.0;
                }
            }
        }
        self.xb[p] = theta;

        let prow: Vec<f64> = self.binv[p * m..(p + 1) * m].iter().map(|v| v / ap).collect();
        for (r, &f) in alpha.iter().enumerate().take(m) {
            if r == p || f == 0.0 {
                continue;
            }
            let row = &mut self.binv[r * m..(r + 1) * m];
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
        self.binv[p * m..(p + 1) * m].copy_from_slice(&prow);

        self.is_basic[self.basis[p]] = false;
        self.is_basic[entering] = true;
        self.basis[p] = entering;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        if self.iterations > self.max_iterations {
            return Err(Error::Internal(format!("simplex exceeded {} pivots", self.max_iterations)));
        }
        Ok(())
    }

    /// Rebuilds `B^{-1}` by Gauss-Jordan elimination and recomputes `x_B`.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (c, &var) in self.basis.iter().enumerate() {
            match self.column_rows(var) {
                ColRows::Many(rows) => rows.iter().for_each(|&r| b[r * m + c] = 1.0),
                ColRows::One(r) => b[r * m + c] = 1.0,
            }
        }
        self.binv = invert(b, m).ok_or_else(|| Error::Internal("basis matrix became singular".into()))?;
        let mut xb = vec![0.0; m];
        for (r, x) in xb.iter_mut().enumerate() {
            let row = &self.binv[r * m..(r + 1) * m];
            *x = row.iter().zip(&self.lp.rhs).map(|(a, b)| a * b).sum();
            if *x < 0.0 && *x > -FEAS_TOL {
                *x = 0.0;
            }
        }
        self.xb = xb;
        self.since_refactor = 0;
        Ok(())
    }

    /// Runs Bland-rule pivots until no eligible column prices out negative.
    fn optimize(&mut self, cost_of: &dyn Fn(usize) -> f64) -> Result<()> {
        let mut stalled = 0usize;
        loop {
            let y = self.duals(cost_of);
            let reduced = |j: usize| {
                let c = cost_of(j);
                let d = c - self.lp.cols[j].iter().map(|&r| y[r]).sum::<f64>();
                (d < -OPT_TOL * (1.0 + c.abs())).then_some(d)
            };
            let candidates = (0..self.ncols).filter(|&j| !self.is_basic[j]);
            let entering = if stalled >= STALL_LIMIT {
                candidates.into_iter().find(|&j| reduced(j).is_some())
            } else {
                candidates
                    .filter_map(|j| reduced(j).map(|d| (j, d)))
                    .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
                        Some((_, bd)) if bd <= d => best,
                        _ => Some((j, d)),
                    })
                    .map(|(j, _)| j)
            };
            let Some(q) = entering else { return Ok(()) };
            let alpha = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for (r, &a) in alpha.iter().enumerate() {
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[r].max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((p, best)) => {
                        if ratio < best - RATIO_TIE_TOL {
                            Some((r, ratio))
                        } else if ratio <= best + RATIO_TIE_TOL && self.basis[r] < self.basis[p] {
                            Some((r, ratio.min(best)))
                        } else {
                            Some((p, best))
                        }
                    }
                };
            }
            let Some((p, step)) = leave else {
                return Err(Error::Internal("LP reported unbounded on a bounded polytope".into()));
            };
            if step > ZERO_LEVEL {
                stalled = 0;
            } else {
                stalled += 1;
            }
            self.pivot(p, q, &alpha)?;
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural
    /// column can replace them. Artificials on redundant rows stay basic.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for p in 0..m {
            if self.basis[p] < self.ncols {
                continue;
            }
            let row = self.binv[p * m..(p + 1) * m].to_vec();
            let candidate = (0..self.ncols)
                .find(|&j| !self.is_basic[j] && self.lp.cols[j].iter().map(|&r| row[r]).sum::<f64>().abs() > PIVOT_TOL);
            if let Some(q) = candidate {
                let alpha = self.ftran(q);
                self.xb[p] = 0.0;
                self.pivot(p, q, &alpha)?;
            }
        }
        Ok(())
    }
}

enum ColRows<'a> {
    Many(&'a [usize]),
    One(usize),
}

/// Dense inverse by Gauss-Jordan with partial pivoting; `None` if singular.
pub(crate) fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let d = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= d;
            inv[col * m + k] /= d;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * a[col * m + k];
                inv[r * m + k] -= f * inv[col * m + k];
            }
        }
    }
    Some(inv)
}

/// Solves the LP. Costs are rescaled internally to unit magnitude.
pub(crate) fn solve(lp: &ColumnLp) -> Result<LpOutcome> {
    if lp.rhs.len() != lp.rows || lp.cost.len() != lp.cols.len() {
        return Err(Error::Internal("malformed LP dimensions".into()));
    }
    if lp.rhs.iter().any(|&b| b < 0.0) {
        return Err(Error::Internal("LP right-hand side must be nonnegative".into()));
    }
    let ncols = lp.cols.len();
    let scale = lp.cost.iter().fold(1.0f64, |s, c| s.max(c.abs()));
    let mut t = Tableau::new(lp);

    t.optimize(&|v| if v < ncols { 0.0 } else { 1.0 })?;
    t.refactor()?;
    let residual: f64 = t.basis.iter().zip(&t.xb).filter(|(&v, _)| v >= ncols).map(|(_, &x)| x.max(0.0)).sum();
    if residual > FEAS_TOL {
        return Ok(LpOutcome::Infeasible);
    }
    t.drive_out_artificials()?;

    let cost = |v: usize| if v < ncols { lp.cost[v] / scale } else { 0.0 };
    t.optimize(&cost)?;
    t.refactor()?;

    let mut x = vec![0.0; ncols];
    for (&var, &val) in t.basis.iter().zip(&t.xb) {
        if var < ncols {
            if val < -FEAS_TOL {
                return Err(Error::Internal(format!("basic variable {var} went negative ({val:e})")));
            }
            x[var] = if val > ZERO_LEVEL { val } else { 0.0 };
        } else if val.abs() > FEAS_TOL {
            return Err(Error::Internal(format!("artificial variable left at level {val:e}")));
        }
    }
    let y = t.duals(&cost).into_iter().map(|v| v * scale).collect();
    Ok(LpOutcome::Optimal(LpSolution { x, y, iterations: t.iterations }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_permutation_matrix() {
        let a = vec![0.0, 1.0, 1.0, 0.0];
        assert_eq!(invert(a, 2).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
        assert!(invert(vec![1.0, 1.0, 1.0, 1.0], 2).is_none());
    }

    #[test]
    fn two_by_two_assignment() {
        // rows: axis-1 points 0,1 then axis-2 point 0 (axis-2 point 1 dropped)
        let lp = ColumnLp {
            rows: 3,
            cols: vec![vec![0, 2], vec![0], vec![1, 2], vec![1]],
            cost: vec![0.0, 1.0, 1.0, 0.0],
            rhs: vec![0.5, 0.5, 0.5],
        };
        let LpOutcome::Optimal(s) = solve(&lp).unwrap() else { panic!("infeasible") };
        assert!((s.x[0] - 0.5).abs() < 1e-15 && (s.x[3] - 0.5).abs() < 1e-15);
        assert!(s.x[1].abs() < 1e-15 && s.x[2].abs() < 1e-15);
    }

    #[test]
    fn detects_infeasibility() {
        let lp = ColumnLp { rows: 2, cols: vec![vec![0]], cost: vec![1.0], rhs: vec![0.5, 0.5] };
        assert!(matches!(solve(&lp).unwrap(), LpOutcome::Infeasible));
    }
}
