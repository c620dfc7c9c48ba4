//! Structural analysis of couplings: splitting sets, c-monotonicity, graph
//! decompositions, twist multiplicities, and support containment.

use std::collections::BTreeMap;

use crate::cost::CostModel;
use crate::diff::grad_x1;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::solver::DualPotentials;
use crate::space::{cmp_coords, Cell, Coupling, ProductSpace};

/// Default support threshold on cell masses.
pub const TOL_MASS: f64 = 1e-10;
/// Default c-monotonicity tolerance.
pub const TOL_MONO: f64 = 1e-9;
/// Default relative radius for gradient clustering.
pub const TOL_GRAD: f64 = 1e-6;
/// Largest arity for exhaustive bipartition enumeration.
pub const MAX_MONOTONE_ARITY: usize = 6;

/// Cells where the splitting inequality is tight.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingSetReport {
    pub cells: Vec<Cell>,
    /// Largest `c - Σ u_i` over the reported cells.
    pub max_violation: f64,
    pub tol_split: f64,
}

impl SplittingSetReport {
    pub fn contains(&self, cell: &[usize]) -> bool {
        self.cells.binary_search_by(|c| c.as_slice().cmp(cell)).is_ok()
    }
}

/// Finite-cost cells with `c - Σ u_i ≤ tol_split`, in lexicographic order.
pub fn splitting_support(
    model: &CostModel,
    space: &ProductSpace,
    duals: &DualPotentials,
    tol_split: f64,
) -> Result<SplittingSetReport> {
    model.check_space(space)?;
    if duals.values().len() != space.n() {
        return Err(Error::arg("potentials do not match the grid"));
    }
    let mut cells = Vec::new();
    let mut max_violation = f64::NEG_INFINITY;
    for cell in space.cells() {
        let ExtReal::Finite(c) = model.eval_cell(space, &cell)? else { continue };
        let defect = c - duals.sum_at(&cell);
        if defect < -tol_split {
            return Err(Error::InvalidPotentials { cell, defect });
        }
        if defect <= tol_split {
            max_violation = max_violation.max(defect);
            cells.push(cell);
        }
    }
    if cells.is_empty() {
        max_violation = 0.0;
    }
    Ok(SplittingSetReport { cells, max_violation, tol_split })
}

/// A pair of cells and a bipartition on which the c-monotonicity inequality fails.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub first: Cell,
    pub second: Cell,
    /// Slots of `P₊`; the remaining slots form `P₋`.
    pub plus: Vec<usize>,
    /// `c(x) + c(x̄) - c(x₊, x̄₋) - c(x̄₊, x₋)`.
    pub defect: f64,
}

/// Checks `c(x) + c(x̄) ≤ c(x₊, x̄₋) + c(x̄₊, x₋)` for every unordered pair of
/// cells and every nontrivial bipartition of the slots.
///
/// An infinite swapped cost never counts as a violation.
pub fn check_c_monotone(
    model: &CostModel,
    space: &ProductSpace,
    cells: &[Cell],
    tol_mono: f64,
) -> Result<Vec<MonotonicityViolation>> {
    model.check_space(space)?;
    let n = space.n();
    if n > MAX_MONOTONE_ARITY {
        return Err(Error::arg(format!("c-monotonicity is enumerated for n ≤ {MAX_MONOTONE_ARITY}, got {n}")));
    }
    let mut costs = Vec::with_capacity(cells.len());
    for cell in cells {
        space.check_cell(cell)?;
        match model.eval_cell(space, cell)? {
            ExtReal::Finite(c) => costs.push(c),
            ExtReal::PosInf => return Err(Error::arg(format!("cell {cell:?} has infinite cost"))),
        }
    }
    // slot 0 always sits in P₊; masks over slots 1..n exclude the full set
    let splits: Vec<u32> = (0..(1u32 << (n - 1)) - 1).collect();
    let mut out = Vec::new();
    let mut swap_a = vec![0; n];
    let mut swap_b = vec![0; n];
    for a in 0..cells.len() {
        for b in a + 1..cells.len() {
            let (x, xb) = (&cells[a], &cells[b]);
            for &mask in &splits {
                let in_plus = |k: usize| k == 0 || mask & (1 << (k - 1)) != 0;
                for k in 0..n {
                    (swap_a[k], swap_b[k]) = if in_plus(k) { (x[k], xb[k]) } else { (xb[k], x[k]) };
                }
                let (ExtReal::Finite(ca), ExtReal::Finite(cb)) =
                    (model.eval_cell(space, &swap_a)?, model.eval_cell(space, &swap_b)?)
                else {
                    continue;
                };
                let defect = costs[a] + costs[b] - ca - cb;
                if defect > tol_mono {
                    out.push(MonotonicityViolation {
                        first: x.clone(),
                        second: xb.clone(),
                        plus: (0..n).filter(|&k| in_plus(k)).collect(),
                        defect,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One branch `x₁ ↦ target` of a graph decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Indices on axes `2..n`.
    pub target: Vec<usize>,
    pub alpha: f64,
    /// Graph label in `1..=k`.
    pub label: usize,
}

/// `γ = Σ_l α_l (Id × G_l)_# μ₁` recovered from a discrete coupling.
///
/// Branches at each axis-1 point are ordered lexicographically by target
/// coordinates and labelled `1, 2, ...` in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDecomposition {
    pub k: usize,
    /// Indexed by axis-1 point; empty for zero-weight points.
    pub branches: Vec<Vec<Branch>>,
}

impl GraphDecomposition {
    /// `alpha_l(x₁)` for `l = 1..=k`, zero where graph `l` is absent.
    pub fn alpha_table(&self) -> Vec<Vec<f64>> {
        self.branches
            .iter()
            .map(|bs| {
                let mut row = vec![0.0; self.k];
                for b in bs {
                    row[b.label - 1] = b.alpha;
                }
                row
            })
            .collect()
    }

    /// Rebuilds the coupling from `α`, the targets, and `μ₁`.
    pub fn reconstruct(&self, space: &ProductSpace) -> Result<Coupling> {
        let mu1 = space.axis(0);
        let entries = self.branches.iter().enumerate().flat_map(|(x1, bs)| {
            bs.iter().map(move |b| {
                let mut cell = Vec::with_capacity(b.target.len() + 1);
                cell.push(x1);
                cell.extend_from_slice(&b.target);
                (cell, b.alpha * mu1.weight(x1))
            })
        });
        Coupling::from_masses(space.shape(), entries)
    }
}

pub fn decompose_graphs(plan: &Coupling, space: &ProductSpace) -> Result<GraphDecomposition> {
    space.check_shape(plan)?;
    let mu1 = space.axis(0);
    let mut by_x1: Vec<Vec<(Vec<usize>, f64)>> = vec![Vec::new(); mu1.len()];
    for (cell, m) in plan.entries() {
        by_x1[cell[0]].push((cell[1..].to_vec(), m));
    }
    let mut branches = Vec::with_capacity(mu1.len());
    for (x1, mut targets) in by_x1.into_iter().enumerate() {
        let w = mu1.weight(x1);
        if w == 0.0 {
            if !targets.is_empty() {
                return Err(Error::InconsistentCoupling(format!("mass on zero-weight axis-1 point {x1}")));
            }
            branches.push(Vec::new());
            continue;
        }
        if targets.is_empty() {
            return Err(Error::InconsistentCoupling(format!("axis-1 point {x1} has weight {w} but no support")));
        }
        targets.sort_by(|(a, _), (b, _)| {
            let ka: Vec<f64> = a.iter().enumerate().flat_map(|(i, &j)| space.axis(i + 1).point(j).to_vec()).collect();
            let kb: Vec<f64> = b.iter().enumerate().flat_map(|(i, &j)| space.axis(i + 1).point(j).to_vec()).collect();
            cmp_coords(&ka, &kb)
        });
        branches.push(
            targets
                .into_iter()
                .enumerate()
                .map(|(l, (target, m))| Branch { target, alpha: m / w, label: l + 1 })
                .collect(),
        );
    }
    let k = branches.iter().map(Vec::len).max().unwrap_or(0);
    Ok(GraphDecomposition { k, branches })
}

/// Support cells at one axis-1 point sharing a first-variable gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCluster {
    pub x1: usize,
    pub cells: Vec<Cell>,
    /// Gradient at the first member.
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwistReport {
    pub clusters: Vec<GradientCluster>,
    pub max_multiplicity: usize,
    /// Axis-1 index and gradient of a largest cluster.
    pub witness: Option<(usize, Vec<f64>)>,
    /// Cells whose gradient could not be evaluated.
    pub excluded: Vec<Cell>,
}

/// Groups splitting-set cells by axis-1 point, then by single-linkage on
/// `|∇_{x₁}c|` with radius `tol_grad·(1 + |p|)`.
pub fn twist_multiplicity(
    model: &CostModel,
    report: &SplittingSetReport,
    space: &ProductSpace,
    tol_grad: f64,
) -> Result<TwistReport> {
    model.check_space(space)?;
    let mut by_x1: BTreeMap<usize, Vec<(Cell, Vec<f64>)>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for cell in &report.cells {
        space.check_cell(cell)?;
        match grad_x1(model, &space.coords(cell)) {
            Ok(g) => by_x1.entry(cell[0]).or_default().push((cell.clone(), g)),
            Err(Error::NonDifferentiable(_)) => excluded.push(cell.clone()),
            Err(e) => return Err(e),
        }
    }

    let mut clusters = Vec::new();
    for (x1, members) in by_x1 {
        let mut parent: Vec<usize> = (0..members.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                let (ga, gb) = (&members[a].1, &members[b].1);
                let dist = ga.iter().zip(gb).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                let scale = ga.iter().chain(gb).map(|v| v.abs()).fold(0.0, f64::max);
                if dist <= tol_grad * (1.0 + scale) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..members.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        for idx in groups.into_values() {
            clusters.push(GradientCluster {
                x1,
                gradient: members[idx[0]].1.clone(),
                cells: idx.into_iter().map(|i| members[i].0.clone()).collect(),
            });
        }
    }
    let best = clusters.iter().max_by(|a, b| a.cells.len().cmp(&b.cells.len()).then(b.x1.cmp(&a.x1)));
    Ok(TwistReport {
        max_multiplicity: best.map_or(0, |c| c.cells.len()),
        witness: best.map(|c| (c.x1, c.gradient.clone())),
        clusters,
        excluded,
    })
}

/// The permutation `σ` with `x_{σ(0)} < x_{σ(1)} < ...`, naming the order
/// region `A_σ` that contains the point.
pub fn region_of(point: &[f64]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..point.len()).collect();
    order.sort_by(|&a, &b| point[a].total_cmp(&point[b]));
    for w in order.windows(2) {
        if point[w[0]] == point[w[1]] {
            return Err(Error::UndefinedRegion(w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetCheck {
    pub contained: bool,
    /// A support cell of the first plan missing from the second.
    pub witness: Option<Cell>,
}

/// Whether every cell of `plan_a` with mass above `tol_mass` carries mass
/// above `tol_mass` in `plan_b`.
pub fn support_subset(plan_a: &Coupling, plan_b: &Coupling, tol_mass: f64) -> Result<SubsetCheck> {
    if plan_a.shape() != plan_b.shape() {
        return Err(Error::arg("couplings live on different grids"));
    }
    let witness = plan_a.support(tol_mass).into_iter().find(|c| plan_b.mass(c) <= tol_mass).cloned();
    Ok(SubsetCheck { contained: witness.is_none(), witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_exact;
    use crate::space::DiscreteMarginal;

    fn grid3(xs: &[f64]) -> ProductSpace {
        ProductSpace::repeated(DiscreteMarginal::uniform_1d(xs).unwrap(), 3).unwrap()
    }

    #[test]
    fn splitting_set_of_three_point_coulomb() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let r = solve_exact(&CostModel::Coulomb1D, &space).unwrap();
        let rep = splitting_support(&CostModel::Coulomb1D, &space, &r.duals, 1e-9).unwrap();
        assert_eq!(rep.cells.len(), 6);
        assert!(rep.max_violation <= 1e-9);
        for (c, _) in r.plan.entries() {
            assert!(rep.contains(c));
        }
    }

    #[test]
    fn very_negative_potentials_give_empty_set() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let u = DualPotentials::new(vec![vec![-1e6; 3]; 3]).unwrap();
        let rep = splitting_support(&CostModel::Coulomb1D, &space, &u, 1e-9).unwrap();
        assert!(rep.cells.is_empty());
    }

    #[test]
    fn potentials_above_cost_are_rejected() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let u = DualPotentials::new(vec![vec![1.0; 3]; 3]).unwrap();
        assert!(matches!(
            splitting_support(&CostModel::Coulomb1D, &space, &u, 1e-9),
            Err(Error::InvalidPotentials { .. })
        ));
    }

    #[test]
    fn xyz_pair_violates_monotonicity() {
        let space = grid3(&[0.2, 0.8]);
        let v = check_c_monotone(&CostModel::ProductXYZ, &space, &[vec![0, 0, 0], vec![1, 1, 1]], TOL_MONO).unwrap();
        // P₊ = {1} is the first bipartition with slot 0 alone
        let first = v.iter().find(|v| v.plus == vec![0]).unwrap();
        assert!((first.defect - (0.52 - 0.16)).abs() < 1e-12);
        assert_eq!(v.len(), 3);
        assert!(check_c_monotone(&CostModel::ProductXYZ, &space, &[vec![0, 1, 1]], TOL_MONO).unwrap().is_empty());
    }

    #[test]
    fn single_graph_decomposes_with_unit_alpha() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let third = 1.0 / 3.0;
        let plan =
            Coupling::new(space.shape(), [(vec![0, 1, 2], third), (vec![1, 2, 0], third), (vec![2, 0, 1], third)])
                .unwrap();
        let g = decompose_graphs(&plan, &space).unwrap();
        assert_eq!(g.k, 1);
        assert!(g.branches.iter().flatten().all(|b| b.alpha == 1.0));
        assert_eq!(g.reconstruct(&space).unwrap(), plan);
    }

    #[test]
    fn unsupported_point_is_inconsistent() {
        let space = grid3(&[0.0, 1.0]);
        let plan = Coupling::dirac(space.shape(), vec![0, 0, 0]).unwrap();
        assert!(matches!(decompose_graphs(&plan, &space), Err(Error::InconsistentCoupling(_))));
    }

    #[test]
    fn swapped_coulomb_cells_share_a_gradient() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let rep = SplittingSetReport { cells: vec![vec![0, 1, 2], vec![0, 2, 1]], max_violation: 0.0, tol_split: 1e-9 };
        let t = twist_multiplicity(&CostModel::Coulomb1D, &rep, &space, TOL_GRAD).unwrap();
        assert_eq!(t.max_multiplicity, 2);
        assert_eq!(t.witness, Some((0, vec![1.25])));
        let single = SplittingSetReport { cells: vec![vec![0, 1, 2]], ..rep };
        assert_eq!(twist_multiplicity(&CostModel::Coulomb1D, &single, &space, TOL_GRAD).unwrap().max_multiplicity, 1);
    }

    #[test]
    fn coincident_cells_are_excluded_from_twist_count() {
        let space = grid3(&[0.0, 1.0, 2.0]);
        let rep = SplittingSetReport { cells: vec![vec![0, 0, 2], vec![0, 1, 2]], max_violation: 0.0, tol_split: 1e-9 };
        let t = twist_multiplicity(&CostModel::Coulomb1D, &rep, &space, TOL_GRAD).unwrap();
        assert_eq!(t.excluded, vec![vec![0, 0, 2]]);
        assert_eq!(t.max_multiplicity, 1);
    }

    #[test]
    fn regions() {
        assert_eq!(region_of(&[0.0, 1.0, 2.0]).unwrap(), vec![0, 1, 2]);
        assert_eq!(region_of(&[1.0, 0.0, 2.0]).unwrap(), vec![1, 0, 2]);
        assert!(matches!(region_of(&[1.0, 0.0, 1.0]), Err(Error::UndefinedRegion(0, 2))));
    }

    #[test]
    fn subset_examples() {
        let space = grid3(&[0.0, 1.0]);
        let d = Coupling::dirac(space.shape(), vec![0, 0, 0]).unwrap();
        let p = Coupling::product(&space);
        assert!(support_subset(&d, &p, TOL_MASS).unwrap().contained);
        assert!(support_subset(&p, &p, TOL_MASS).unwrap().contained);
        let back = support_subset(&p, &d, TOL_MASS).unwrap();
        assert!(!back.contained);
        assert_eq!(back.witness, Some(vec![0, 0, 1]));
    }
}
