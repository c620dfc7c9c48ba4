//! Extremality in the transport polytope, the three-marginal graph criterion
//! with its θ search, and the symmetric non-uniqueness witness.

use std::collections::{BTreeMap, BTreeSet};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::space::{Cell, Coupling, ProductSpace, MASS_TOL};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalityCertificate {
    pub is_extremal: bool,
    /// Present iff not extremal: a mass shift with zero marginals, supported
    /// inside the plan, normalised to unit max-norm.
    pub kernel_direction: Option<Vec<(Cell, f64)>>,
}

/// A nonzero kernel vector of the 0/1 matrix whose columns are the given
/// row sets, or `None` if the columns are linearly independent.
fn column_kernel(rows: usize, columns: &[Vec<usize>]) -> Option<Vec<f64>> {
    let s = columns.len();
    if s == 0 {
        return None;
    }
    let scale: Vec<f64> = columns.iter().map(|c| 1.0 / (c.len().max(1) as f64).sqrt()).collect();
    let mut a = vec![0.0; rows * s];
    for (j, col) in columns.iter().enumerate() {
        for &r in col {
            a[r * s + j] += scale[j];
        }
    }
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut free = None;
    let mut row = 0;
    for col in 0..s {
        let best = (row..rows).max_by(|&x, &y| a[x * s + col].abs().total_cmp(&a[y * s + col].abs()));
        let Some(p) = best.filter(|&p| a[p * s + col].abs() > RANK_TOL) else {
            free.get_or_insert(col);
            continue;
        };
        for k in 0..s {
            a.swap(p * s + k, row * s + k);
        }
        let d = a[row * s + col];
        for k in 0..s {
            a[row * s + k] /= d;
        }
        for r in 0..rows {
            if r != row {
                let f = a[r * s + col];
                if f != 0.0 {
                    for k in 0..s {
                        a[r * s + k] -= f * a[row * s + k];
                    }
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let f = free?;
    let mut v = vec![0.0; s];
    v[f] = 1.0;
    for &(r, c) in &pivots {
        if c < f {
            v[c] = -a[r * s + f];
        }
    }
    let mut dir: Vec<f64> = v.iter().zip(&scale).map(|(x, d)| x * d).collect();
    let norm = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    dir.iter_mut().for_each(|x| *x /= norm);
    Some(dir)
}

fn marginal_rows(space_shape: &[usize], cell: &[usize]) -> Vec<usize> {
    let mut off = 0;
    cell.iter()
        .zip(space_shape)
        .map(|(&j, &n)| {
            let r = off + j;
            off += n;
            r
        })
        .collect()
}

/// Decides whether `plan` is a vertex of `Π(μ₁,...,μₙ)`: its support columns
/// in the marginal-constraint matrix must be linearly independent.
pub fn is_vertex(plan: &Coupling, space: &ProductSpace) -> Result<ExtremalityCertificate> {
    space.check_shape(plan)?;
    let shape = space.shape();
    let cells: Vec<&Cell> = plan.entries().map(|(c, _)| c).collect();
    let columns: Vec<Vec<usize>> = cells.iter().map(|c| marginal_rows(&shape, c)).collect();
    let rows = shape.iter().sum();
    Ok(match column_kernel(rows, &columns) {
        None => ExtremalityCertificate { is_extremal: true, kernel_direction: None },
        Some(dir) => ExtremalityCertificate {
            is_extremal: false,
            kernel_direction: Some(cells.into_iter().cloned().zip(dir).filter(|(_, v)| v.abs() > RANK_TOL).collect()),
        },
    })
}

/// Composed extremality test for three marginals: the projection `ν` onto
/// axes 2–3 must be a vertex of `Π(μ₂, μ₃)` and the plan a vertex of
/// `Π(μ₁, ν)`. A `true` answer implies the plan is a vertex of `Π(μ₁, μ₂, μ₃)`.
pub fn lemma_trip_check(plan: &Coupling, space: &ProductSpace) -> Result<bool> {
    if space.n() != 3 {
        return Err(Error::arg(format!("the composed check needs n = 3, got {}", space.n())));
    }
    space.check_shape(plan)?;
    let shape = space.shape();
    let nu = plan.project(&[1, 2]);
    let nu_cells: Vec<&Cell> = nu.entries().map(|(c, _)| c).collect();
    let nu_cols: Vec<Vec<usize>> = nu_cells.iter().map(|c| vec![c[0], shape[1] + c[1]]).collect();
    if column_kernel(shape[1] + shape[2], &nu_cols).is_some() {
        return Ok(false);
    }
    let nu_index: BTreeMap<&[usize], usize> = nu_cells.iter().enumerate().map(|(i, c)| (c.as_slice(), i)).collect();
    let cols: Vec<Vec<usize>> = plan.entries().map(|(c, _)| vec![c[0], shape[0] + nu_index[&c[1..]]]).collect();
    Ok(column_kernel(shape[0] + nu_cells.len(), &cols).is_none())
}

/// A pair of index maps `x₁ ↦ (H(x₁), K(x₁))` into axes 2 and 3, defined
/// where both entries are present.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMap {
    pub h: Vec<Option<usize>>,
    pub k: Vec<Option<usize>>,
}

impl GraphMap {
    pub fn from_fn(n1: usize, mut f: impl FnMut(usize) -> Option<(usize, usize)>) -> Self {
        let (h, k) = (0..n1).map(|x| f(x).map_or((None, None), |(a, b)| (Some(a), Some(b)))).unzip();
        GraphMap { h, k }
    }

    fn domain(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.h.iter().zip(&self.k).enumerate().filter_map(|(x, (h, k))| Some((x, (*h)?, (*k)?)))
    }

    /// `K ∘ H⁻¹` as a relation from axis 2 to axis 3.
    fn k_after_h_inverse(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (_, h, k) in self.domain() {
            out.entry(h).or_default().push(k);
        }
        out
    }
}

/// Outcome of the θ search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThetaOutcome {
    /// Integer labels; every constraint holds with slack at least 1.
    Found(Vec<i64>),
    /// Points `c₀, c₁, ...` with `θ(c₀) > θ(c₁) > ... > θ(c₀)` required.
    Cycle(Vec<usize>),
}

/// Solves `θ(a) > θ(b)` for each `(a, b)` over `vars` unknowns, via
/// `θ(a) ≥ θ(b) + 1` and longest paths in the constraint digraph.
/// Unconstrained points get 0.
pub fn solve_strict_order(vars: usize, constraints: &[(usize, usize)]) -> ThetaOutcome {
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); vars];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); vars];
    let mut indeg = vec![0usize; vars];
    let edges: BTreeSet<(usize, usize)> = constraints.iter().map(|&(a, b)| (b, a)).collect();
    for &(b, a) in &edges {
        if a == b {
            return ThetaOutcome::Cycle(vec![a]);
        }
        succ[b].push(a);
        pred[a].push(b);
        indeg[a] += 1;
    }
    let mut theta = vec![0i64; vars];
    let mut ready: std::collections::VecDeque<usize> = (0..vars).filter(|&v| indeg[v] == 0).collect();
    let mut done = vec![false; vars];
    while let Some(v) = ready.pop_front() {
        done[v] = true;
        for &w in &succ[v] {
            theta[w] = theta[w].max(theta[v] + 1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push_back(w);
            }
        }
    }
    let Some(start) = (0..vars).find(|&v| !done[v]) else {
        return ThetaOutcome::Found(theta);
    };
    // every unfinished vertex has an unfinished predecessor; walking them must repeat
    let mut seen = vec![usize::MAX; vars];
    let mut path = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = path.len();
        path.push(v);
        v = *pred[v].iter().find(|&&u| !done[u]).expect("unfinished vertex without unfinished predecessor");
    }
    ThetaOutcome::Cycle(path.split_off(seen[v]))
}

fn theta_constraints(maps: &[GraphMap]) -> Vec<(usize, usize)> {
    let Some(first) = maps.first() else { return Vec::new() };
    let base = first.k_after_h_inverse();
    let mut out = Vec::new();
    for m in &maps[1..] {
        for (x2, others) in m.k_after_h_inverse() {
            if let Some(tops) = base.get(&x2) {
                for &a in tops {
                    for &b in &others {
                        out.push((a, b));
                    }
                }
            }
        }
    }
    out
}

/// Searches for θ on axis 3 with `θ(K₁∘H₁⁻¹(x₂)) > θ(K_i∘H_i⁻¹(x₂))` for every
/// `i ≥ 2` and every `x₂` in both domains.
pub fn find_theta(maps: &[GraphMap], n3: usize) -> ThetaOutcome {
    solve_strict_order(n3, &theta_constraints(maps))
}

/// A point shared by two graphs whose third components must be injective
/// with disjoint ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeCollision {
    /// Map indices (0-based); equal when one map is not injective.
    pub maps: (usize, usize),
    pub axis3_point: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem41Report {
    /// Every `H_i` injective and onto the positive-weight axis-2 points.
    pub hypothesis_i: bool,
    /// `K_j` injective with pairwise disjoint ranges for `j ≥ 2`.
    pub hypothesis_ii: bool,
    pub hypothesis_iii: bool,
    pub theta: Option<Vec<f64>>,
    pub cycle: Option<Vec<usize>>,
    pub collision: Option<RangeCollision>,
    /// Human-readable reasons for failed hypotheses.
    pub failures: Vec<String>,
}

impl Theorem41Report {
    pub fn all_hold(&self) -> bool {
        self.hypothesis_i && self.hypothesis_ii && self.hypothesis_iii
    }
}

/// Checks the three hypotheses of the multi-graph extremality criterion for
/// `k` maps `x₁ ↦ (H_i, K_i)`. Without `theta`, one is searched for.
pub fn check_thm41(space: &ProductSpace, maps: &[GraphMap], theta: Option<&[f64]>) -> Result<Theorem41Report> {
    if space.n() != 3 {
        return Err(Error::arg(format!("the graph criterion is implemented for n = 3, got {}", space.n())));
    }
    let shape = space.shape();
    for (i, m) in maps.iter().enumerate() {
        if m.h.len() != shape[0] || m.k.len() != shape[0] {
            return Err(Error::arg(format!("map {i} is not defined over axis 1")));
        }
        for x in 0..shape[0] {
            match (m.h[x], m.k[x]) {
                (Some(h), Some(k)) if h >= shape[1] || k >= shape[2] => {
                    return Err(Error::arg(format!("map {i} sends {x} outside the grid")));
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::arg(format!("map {i}: H and K have different domains at {x}")));
                }
                _ => {}
            }
        }
    }
    if let Some(t) = theta {
        if t.len() != shape[2] {
            return Err(Error::arg("theta must have one value per axis-3 point"));
        }
    }

    let mut failures = Vec::new();
    let mu2 = space.axis(1);
    let mut hypothesis_i = true;
    for (i, m) in maps.iter().enumerate() {
        let mut hit = vec![0usize; shape[1]];
        for (_, h, _) in m.domain() {
            hit[h] += 1;
        }
        if let Some(x2) = hit.iter().position(|&c| c > 1) {
            hypothesis_i = false;
            failures.push(format!("H_{} is not injective: point {x2} is hit {} times", i + 1, hit[x2]));
        }
        if let Some(x2) = (0..shape[1]).find(|&x2| hit[x2] == 0 && mu2.weight(x2) > 0.0) {
            hypothesis_i = false;
            failures.push(format!("H_{} misses positive-weight axis-2 point {x2}", i + 1));
        }
    }

    let mut owner: Vec<Option<usize>> = vec![None; shape[2]];
    let mut collision = None;
    'outer: for (j, m) in maps.iter().enumerate().skip(1) {
        for (_, _, k) in m.domain() {
            if let Some(prev) = owner[k] {
                collision = Some(RangeCollision { maps: (prev, j), axis3_point: k });
                break 'outer;
            }
            owner[k] = Some(j);
        }
    }
    let hypothesis_ii = collision.is_none();
    if let Some(c) = &collision {
        failures.push(format!("K_{} and K_{} both reach axis-3 point {}", c.maps.0 + 1, c.maps.1 + 1, c.axis3_point));
    }

    let constraints = theta_constraints(maps);
    let (hypothesis_iii, theta_out, cycle) = match theta {
        Some(t) => {
            let bad = constraints.iter().find(|&&(a, b)| t[a].partial_cmp(&t[b]) != Some(std::cmp::Ordering::Greater));
            if let Some(&(a, b)) = bad {
                failures.push(format!("theta({a}) = {} is not above theta({b}) = {}", t[a], t[b]));
            }
            (bad.is_none(), Some(t.to_vec()), None)
        }
        None => match solve_strict_order(shape[2], &constraints) {
            ThetaOutcome::Found(t) => (true, Some(t.into_iter().map(|v| v as f64).collect()), None),
            ThetaOutcome::Cycle(c) => {
                failures.push(format!("no theta exists: cyclic constraints {c:?}"));
                (false, None, Some(c))
            }
        },
    };

    Ok(Theorem41Report { hypothesis_i, hypothesis_ii, hypothesis_iii, theta: theta_out, cycle, collision, failures })
}

/// A second optimizer built by redistributing mass among the six permuted boxes.
#[derive(Debug, Clone)]
pub struct WitnessReport {
    pub coupling: Coupling,
    pub cost_before: f64,
    pub cost_after: f64,
    pub tv_distance: f64,
}

const PERMS3: [[usize; 3]; 6] = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]];

/// Builds
/// `γ̄ = γ + ⅙ Σ_σ γ|σ(S₁×S₂×S₃) − ⅓ [γ|S₁×S₂×S₃ + γ|S₃×S₁×S₂ + γ|S₂×S₃×S₁]`
/// for a permutation-invariant plan on three identical marginals.
pub fn symmetry_witness(
    plan: &Coupling,
    space: &ProductSpace,
    sets: [&[usize]; 3],
    model: &CostModel,
) -> Result<WitnessReport> {
    if space.n() != 3 {
        return Err(Error::arg("the symmetric witness needs n = 3"));
    }
    space.check_shape(plan)?;
    model.check_space(space)?;
    let axis = space.axis(0);
    for other in &space.axes()[1..] {
        let same = other.len() == axis.len()
            && other.points().zip(axis.points()).all(|(a, b)| a == b)
            && other.weights().iter().zip(axis.weights()).all(|(a, b)| (a - b).abs() <= MASS_TOL);
        if !same {
            return Err(Error::Precondition("marginals are not identical".into()));
        }
    }
    let mut label = vec![None; axis.len()];
    for (s, set) in sets.iter().enumerate() {
        for &p in *set {
            if p >= axis.len() {
                return Err(Error::arg(format!("point {p} is outside the axis")));
            }
            if label[p].replace(s).is_some() {
                return Err(Error::Precondition(format!("point {p} belongs to two of the sets")));
            }
        }
    }
    for (cell, m) in plan.entries() {
        for perm in &PERMS3[1..] {
            let moved: Cell = perm.iter().map(|&p| cell[p]).collect();
            if (plan.mass(&moved) - m).abs() > MASS_TOL {
                return Err(Error::Precondition(format!("plan is not permutation invariant at {cell:?}")));
            }
        }
    }

    // box index of a cell: which set each slot falls in, if all three differ
    let box_of = |cell: &[usize]| -> Option<[usize; 3]> {
        let b = [label[cell[0]]?, label[cell[1]]?, label[cell[2]]?];
        (b[0] != b[1] && b[1] != b[2] && b[0] != b[2]).then_some(b)
    };
    let charged: f64 = plan.entries().filter(|(c, _)| box_of(c) == Some([0, 1, 2])).map(|(_, m)| m).sum();
    if charged <= 0.0 {
        return Err(Error::Precondition("plan does not charge S1 x S2 x S3".into()));
    }

    let cyclic = &PERMS3[..3];
    let entries = plan.entries().map(|(cell, m)| {
        let mut out = m;
        if let Some(b) = box_of(cell) {
            out += m / 6.0;
            if cyclic.contains(&b) {
                out -= m / 3.0;
            }
        }
        (cell.clone(), out)
    });
    let coupling = Coupling::new(space.shape(), entries.collect::<Vec<_>>())?;

    let cost =
        |p: &Coupling| -> Result<f64> { p.entries().map(|(c, m)| Ok(model.eval_cell(space, c)?.to_f64() * m)).sum() };
    Ok(WitnessReport {
        cost_before: cost(plan)?,
        cost_after: cost(&coupling)?,
        tv_distance: plan.tv_distance(&coupling),
        coupling,
    })
}
