//! Exact solution of the discrete multi-marginal Kantorovich problem.
//!
//! One LP row per axis point (minus the `n - 1` rows implied by equal total
//! mass), one column per finite-cost cell. Optimal LP duals are the
//! Kantorovich potentials `u_i`.

mod simplex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{finite_cells, CostModel};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::space::{Cell, Coupling, ProductSpace};

use simplex::{ColumnLp, LpOutcome};

/// Absolute tolerance on the splitting inequality, scaled by `1 + |c|`.
pub const TOL_DUAL: f64 = 1e-9;

/// Kantorovich potentials: one vector per axis, entries in `[-∞, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    values: Vec<Vec<f64>>,
}

impl DualPotentials {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().flatten().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::arg("potentials must lie in [-inf, inf)"));
        }
        Ok(DualPotentials { values })
    }

    pub fn zeros(space: &ProductSpace) -> Self {
        DualPotentials { values: space.shape().into_iter().map(|n| vec![0.0; n]).collect() }
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn set(&mut self, axis: usize, j: usize, v: f64) {
        self.values[axis][j] = v;
    }

    pub fn replace_axis(&mut self, axis: usize, v: Vec<f64>) {
        self.values[axis] = v;
    }

    /// `Σ_i u_i(x_i)`, possibly `-∞`.
    pub fn sum_at(&self, cell: &[usize]) -> f64 {
        cell.iter().enumerate().map(|(i, &j)| self.values[i][j]).sum()
    }

    /// `Σ_i ⟨u_i, μ_i⟩`, ignoring zero-weight points.
    pub fn dual_value(&self, space: &ProductSpace) -> f64 {
        let mut total = 0.0;
        for (u, axis) in self.values.iter().zip(space.axes()) {
            for (&v, &w) in u.iter().zip(axis.weights()) {
                if w > 0.0 {
                    total += v * w;
                }
            }
        }
        total
    }

    fn check_shape(&self, space: &ProductSpace) -> Result<()> {
        let ok =
            self.values.len() == space.n() && self.values.iter().zip(space.axes()).all(|(u, a)| u.len() == a.len());
        if ok {
            Ok(())
        } else {
            Err(Error::arg("potentials do not match the grid"))
        }
    }

    /// Worst violation of `Σ u_i ≤ c + tol·(1+|c|)` over finite cells, as
    /// `(cell, c - Σu)`. `None` if every finite cell satisfies it.
    pub fn worst_violation(&self, model: &CostModel, space: &ProductSpace, tol: f64) -> Result<Option<(Cell, f64)>> {
        self.check_shape(space)?;
        model.check_space(space)?;
        let mut worst: Option<(Cell, f64)> = None;
        for cell in space.cells() {
            let ExtReal::Finite(c) = model.eval_cell(space, &cell)? else { continue };
            let defect = c - self.sum_at(&cell);
            if defect < -tol * (1.0 + c.abs()) && worst.as_ref().is_none_or(|(_, w)| defect < *w) {
                worst = Some((cell, defect));
            }
        }
        Ok(worst)
    }
}

/// An optimal plan with its certifying potentials.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub plan: Coupling,
    pub duals: DualPotentials,
    pub primal_value: f64,
    pub dual_value: f64,
    pub iterations: usize,
}

/// Enumeration order of LP columns. Bland's rule depends on it, so different
/// orders can land on different optimal vertices of a degenerate face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnOrder {
    #[default]
    Lexicographic,
    Shuffled(u64),
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub order: ColumnOrder,
}

pub fn solve_exact(model: &CostModel, space: &ProductSpace) -> Result<SolveResult> {
    solve_exact_with(model, space, &SolveOptions::default())
}

pub fn solve_exact_with(model: &CostModel, space: &ProductSpace, opts: &SolveOptions) -> Result<SolveResult> {
    let (mut cells, excluded) = finite_cells(space, model)?;
    if cells.is_empty() {
        return Err(Error::Infeasible { excluded });
    }
    if let ColumnOrder::Shuffled(seed) = opts.order {
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }

    let shape = space.shape();
    let n = shape.len();
    let mut offsets = Vec::with_capacity(n);
    let mut row_of = Vec::with_capacity(n);
    let mut rhs = Vec::new();
    for (i, axis) in space.axes().iter().enumerate() {
        offsets.push(rhs.len());
        let mut map = Vec::with_capacity(axis.len());
        for j in 0..axis.len() {
            // the last point of every axis after the first is implied by total mass
            if i > 0 && j + 1 == axis.len() {
                map.push(None);
            } else {
                map.push(Some(rhs.len()));
                rhs.push(axis.weight(j));
            }
        }
        row_of.push(map);
    }
    let lp = ColumnLp {
        rows: rhs.len(),
        cols: cells.iter().map(|(c, _)| c.iter().enumerate().filter_map(|(i, &j)| row_of[i][j]).collect()).collect(),
        cost: cells.iter().map(|(_, c)| *c).collect(),
        rhs,
    };

    let sol = match simplex::solve(&lp)? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => return Err(Error::Infeasible { excluded }),
    };

    let values = row_of.iter().map(|rows| rows.iter().map(|r| r.map_or(0.0, |r| sol.y[r])).collect()).collect();
    let duals = DualPotentials::new(values)?;

    let mut entries: Vec<(Cell, f64)> =
        cells.iter().zip(&sol.x).filter(|(_, &x)| x > 0.0).map(|((c, _), &x)| (c.clone(), x)).collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let primal_value = cells.iter().zip(&sol.x).map(|((_, c), x)| c * x).sum::<f64>();
    let plan = Coupling::new(shape.clone(), entries)
        .map_err(|e| Error::Internal(format!("simplex produced an invalid plan: {e}")))?;

    let bound = shape.iter().sum::<usize>() + 1 - n;
    if plan.len() > bound {
        return Err(Error::Internal(format!("plan support {} exceeds the vertex bound {bound}", plan.len())));
    }
    let dev = space.marginal_deviation(&plan);
    if dev > crate::space::MASS_TOL {
        return Err(Error::Internal(format!("plan marginals deviate by {dev:e}")));
    }
    if let Some((cell, defect)) = duals.worst_violation(model, space, TOL_DUAL)? {
        return Err(Error::Internal(format!("recovered duals are infeasible at {cell:?} (c - Σu = {defect:e})")));
    }
    for (cell, _) in plan.entries() {
        let c = model.eval_cell(space, cell)?.to_f64();
        let slack = c - duals.sum_at(cell);
        if slack.abs() > TOL_DUAL * (1.0 + c.abs()) {
            return Err(Error::Internal(format!("complementary slackness fails at {cell:?} ({slack:e})")));
        }
    }
    let dual_value = duals.dual_value(space);
    Ok(SolveResult { plan, duals, primal_value, dual_value, iterations: sol.iterations })
}

/// Result of a c-conjugate sweep on one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateUpdate {
    /// `None` where every competing cell has infinite cost or a `-∞` partner.
    pub values: Vec<Option<f64>>,
    /// Indices whose infimum was over an empty set.
    pub undefined: Vec<usize>,
}

/// `ū_i(x_i) = min_{x_j, j≠i} c(x) - Σ_{j≠i} u_j(x_j)` over the grid.
pub fn c_conjugate_update(
    model: &CostModel,
    space: &ProductSpace,
    potentials: &DualPotentials,
    axis: usize,
) -> Result<ConjugateUpdate> {
    potentials.check_shape(space)?;
    model.check_space(space)?;
    if axis >= space.n() {
        return Err(Error::arg(format!("axis {axis} out of range")));
    }
    let mut best = vec![f64::INFINITY; space.axis(axis).len()];
    for cell in space.cells() {
        let ExtReal::Finite(c) = model.eval_cell(space, &cell)? else { continue };
        let others: f64 =
            cell.iter().enumerate().filter(|(i, _)| *i != axis).map(|(i, &j)| potentials.axis(i)[j]).sum();
        let v = c - others;
        if v < best[cell[axis]] {
            best[cell[axis]] = v;
        }
    }
    let undefined = best.iter().enumerate().filter(|(_, v)| **v == f64::INFINITY).map(|(j, _)| j).collect();
    let values = best.into_iter().map(|v| (v < f64::INFINITY).then_some(v)).collect();
    Ok(ConjugateUpdate { values, undefined })
}

/// `Σ c·plan - Σ_i ⟨u_i, μ_i⟩`. Rejects potentials that violate the splitting
/// inequality by more than [`TOL_DUAL`].
pub fn duality_gap(model: &CostModel, space: &ProductSpace, plan: &Coupling, duals: &DualPotentials) -> Result<f64> {
    space.check_shape(plan)?;
    if let Some((cell, defect)) = duals.worst_violation(model, space, TOL_DUAL)? {
        return Err(Error::InvalidCertificate { cell, violation: -defect });
    }
    let mut primal = 0.0;
    for (cell, m) in plan.entries() {
        match model.eval_cell(space, cell)? {
            ExtReal::Finite(c) => primal += c * m,
            ExtReal::PosInf => return Ok(f64::INFINITY),
        }
    }
    Ok(primal - duals.dual_value(space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::UserHook;
    use crate::space::DiscreteMarginal;

    fn sq_dist() -> CostModel {
        CostModel::UserHook(UserHook::new("sqdist", |x| ExtReal::Finite((x[0][0] - x[1][0]).powi(2))).with_arity(2))
    }

    fn coulomb3(xs: &[f64]) -> ProductSpace {
        ProductSpace::repeated(DiscreteMarginal::uniform_1d(xs).unwrap(), 3).unwrap()
    }

    #[test]
    fn two_point_matching() {
        let space = ProductSpace::repeated(DiscreteMarginal::uniform_1d(&[0.0, 1.0]).unwrap(), 2).unwrap();
        let r = solve_exact(&sq_dist(), &space).unwrap();
        assert_eq!(r.primal_value, 0.0);
        assert_eq!(r.plan.len(), 2);
        assert!((r.plan.mass(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((r.plan.mass(&[1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coulomb_on_three_points() {
        let space = coulomb3(&[0.0, 1.0, 2.0]);
        let r = solve_exact(&CostModel::Coulomb1D, &space).unwrap();
        assert!((r.primal_value - 2.5).abs() < 1e-12);
        for (cell, _) in r.plan.entries() {
            let mut s = cell.clone();
            s.sort_unstable();
            assert_eq!(s, vec![0, 1, 2]);
        }
        assert!(r.primal_value - r.dual_value <= 1e-9 * (1.0 + r.primal_value.abs()));
    }

    #[test]
    fn coulomb_pigeonhole_is_infeasible() {
        let space = coulomb3(&[0.0, 1.0]);
        match solve_exact(&CostModel::Coulomb1D, &space) {
            Err(Error::Infeasible { excluded }) => assert_eq!(excluded.len(), 8),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_with_some_finite_cells() {
        // only the diagonal of a 2x2 grid is allowed but the marginals disagree
        let a = DiscreteMarginal::from_1d(&[0.0, 1.0], vec![0.3, 0.7]).unwrap();
        let b = DiscreteMarginal::from_1d(&[0.0, 1.0], vec![0.6, 0.4]).unwrap();
        let space = ProductSpace::new(vec![a, b]).unwrap();
        let diag = CostModel::UserHook(
            UserHook::new("diag", |x| if x[0] == x[1] { ExtReal::Finite(0.0) } else { ExtReal::PosInf }).with_arity(2),
        );
        match solve_exact(&diag, &space) {
            Err(Error::Infeasible { excluded }) => assert_eq!(excluded, vec![vec![0, 1], vec![1, 0]]),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn conjugate_examples() {
        let pts = DiscreteMarginal::uniform_1d(&[0.4, 1.5]).unwrap();
        let other = DiscreteMarginal::uniform_1d(&[0.0, 1.0]).unwrap();
        let space = ProductSpace::new(vec![pts, other]).unwrap();
        let u = DualPotentials::zeros(&space);
        let up = c_conjugate_update(&sq_dist(), &space, &u, 0).unwrap();
        assert!((up.values[0].unwrap() - 0.16).abs() < 1e-15);

        let a = DiscreteMarginal::uniform_1d(&[0.0]).unwrap();
        let b = DiscreteMarginal::uniform_1d(&[1.0, 2.0]).unwrap();
        let space = ProductSpace::new(vec![a, b.clone(), b]).unwrap();
        let up = c_conjugate_update(&CostModel::Coulomb1D, &space, &DualPotentials::zeros(&space), 0).unwrap();
        assert_eq!(up.values, vec![Some(2.5)]);
    }

    #[test]
    fn conjugate_reports_isolated_points() {
        let space = ProductSpace::new(vec![
            DiscreteMarginal::uniform_1d(&[0.0, 1.0]).unwrap(),
            DiscreteMarginal::uniform_1d(&[0.0]).unwrap(),
        ])
        .unwrap();
        let up = c_conjugate_update(&CostModel::Coulomb1D, &space, &DualPotentials::zeros(&space), 0).unwrap();
        assert_eq!(up.values, vec![None, Some(1.0)]);
        assert_eq!(up.undefined, vec![0]);
    }

    #[test]
    fn gap_examples() {
        let space = coulomb3(&[0.0, 1.0, 2.0]);
        let r = solve_exact(&CostModel::Coulomb1D, &space).unwrap();
        let gap0 = duality_gap(&CostModel::Coulomb1D, &space, &r.plan, &DualPotentials::zeros(&space)).unwrap();
        assert!((gap0 - 2.5).abs() < 1e-12);
        let g = duality_gap(&CostModel::Coulomb1D, &space, &r.plan, &r.duals).unwrap();
        assert!(g.abs() <= 1e-9);
        let mut lowered = r.duals.clone();
        lowered.set(1, 2, r.duals.axis(1)[2] - 0.1);
        let g2 = duality_gap(&CostModel::Coulomb1D, &space, &r.plan, &lowered).unwrap();
        assert!((g2 - g - 0.1 / 3.0).abs() < 1e-14);
        let mut raised = r.duals.clone();
        raised.set(0, 0, r.duals.axis(0)[0] + 0.1);
        assert!(matches!(
            duality_gap(&CostModel::Coulomb1D, &space, &r.plan, &raised),
            Err(Error::InvalidCertificate { .. })
        ));
    }
}
