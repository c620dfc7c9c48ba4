//! Discrete marginals, their product grid, and couplings on it.
//!
//! Every point is addressed by an axis-local index. Couplings refer to cells
//! (index tuples) only, so support comparisons are exact.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance on total mass and on marginal reproduction.
pub const MASS_TOL: f64 = 1e-12;

/// One index per axis.
pub type Cell = Vec<usize>;

/// A weighted finite point set in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMarginal {
    d: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("a marginal needs at least one point"));
        }
        if points.len() != weights.len() {
            return Err(Error::arg(format!("{} points but {} weights", points.len(), weights.len())));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::arg("point dimension must be at least 1"));
        }
        let mut coords = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::arg(format!("point {i} has dimension {}, expected {d}", p.len())));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::arg(format!("point {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg(format!("weight {i} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::arg(format!("weights sum to {total}, expected 1")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| cmp_coords(&points[a], &points[b]));
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::arg(format!("points {} and {} coincide", w[0], w[1])));
            }
        }
        Ok(DiscreteMarginal { d, coords, weights })
    }

    /// One-dimensional marginal from scalar positions.
    pub fn from_1d(xs: &[f64], weights: Vec<f64>) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), weights)
    }

    /// Equal weights on the given scalar positions.
    pub fn uniform_1d(xs: &[f64]) -> Result<Self> {
        let w = 1.0 / xs.len() as f64;
        Self::from_1d(xs, vec![w; xs.len()])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }
}

pub(crate) fn cmp_coords(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// The product `X_1 × ... × X_n` of `n ≥ 2` discrete marginals of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpace {
    axes: Vec<DiscreteMarginal>,
}

impl ProductSpace {
    pub fn new(axes: Vec<DiscreteMarginal>) -> Result<Self> {
        if axes.len() < 2 {
            return Err(Error::arg("a product space needs at least two axes"));
        }
        let d = axes[0].dim();
        if let Some(i) = axes.iter().position(|a| a.dim() != d) {
            return Err(Error::arg(format!("axis {i} has dimension {}, expected {d}", axes[i].dim())));
        }
        Ok(ProductSpace { axes })
    }

    /// `n` copies of the same marginal.
    pub fn repeated(axis: DiscreteMarginal, n: usize) -> Result<Self> {
        Self::new(vec![axis; n])
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    pub fn dim(&self) -> usize {
        self.axes[0].dim()
    }

    pub fn axes(&self) -> &[DiscreteMarginal] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &DiscreteMarginal {
        &self.axes[i]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(DiscreteMarginal::len).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(DiscreteMarginal::len).product()
    }

    /// Coordinates of a cell, one slice per axis.
    pub fn coords<'a>(&'a self, cell: &[usize]) -> Vec<&'a [f64]> {
        cell.iter().enumerate().map(|(i, &j)| self.axes[i].point(j)).collect()
    }

    pub fn check_cell(&self, cell: &[usize]) -> Result<()> {
        if cell.len() != self.n() {
            return Err(Error::arg(format!("cell {cell:?} has arity {}, expected {}", cell.len(), self.n())));
        }
        for (i, &j) in cell.iter().enumerate() {
            if j >= self.axes[i].len() {
                return Err(Error::arg(format!("cell {cell:?}: index {j} out of range on axis {i}")));
            }
        }
        Ok(())
    }

    /// All cells in lexicographic order (last axis varies fastest).
    pub fn cells(&self) -> CellIter {
        CellIter::new(self.shape())
    }

    /// Largest absolute deviation between the coupling's marginals and the axis weights.
    pub fn marginal_deviation(&self, plan: &Coupling) -> f64 {
        (0..self.n())
            .flat_map(|i| {
                let m = plan.marginal(i);
                let w = self.axes[i].weights();
                m.into_iter().zip(w).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, plan: &Coupling) -> Result<()> {
        if plan.shape() != self.shape().as_slice() {
            return Err(Error::arg(format!(
                "coupling shape {:?} does not match space shape {:?}",
                plan.shape(),
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Lexicographic enumeration of a product grid.
#[derive(Debug, Clone)]
pub struct CellIter {
    shape: Vec<usize>,
    next: Option<Cell>,
}

impl CellIter {
    pub fn new(shape: Vec<usize>) -> Self {
        let next = if shape.iter().all(|&s| s > 0) { Some(vec![0; shape.len()]) } else { None };
        CellIter { shape, next }
    }
}

impl Iterator for CellIter {
    type Item = Cell;

    fn next(&mut self) -> Option<Cell> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.shape[k] {
                self.next = Some(succ);
                return Some(cur);
            }
            succ[k] = 0;
        }
        Some(cur)
    }
}

/// A sparse probability measure on a product grid.
///
/// Only strictly positive masses are stored; entries are kept in
/// lexicographic cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    shape: Vec<usize>,
    entries: BTreeMap<Cell, f64>,
}

impl Coupling {
    /// Builds a coupling, dropping exact zeros. Negative or non-finite masses,
    /// out-of-range indices, duplicate cells, and total mass away from 1 are rejected.
    pub fn new(shape: Vec<usize>, entries: impl IntoIterator<Item = (Cell, f64)>) -> Result<Self> {
        let plan = Self::from_masses(shape, entries)?;
        let total = plan.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InconsistentCoupling(format!("total mass {total} differs from 1")));
        }
        Ok(plan)
    }

    /// Like [`Coupling::new`] without the unit-mass check. Used for sub-measures
    /// and intermediate sums.
    pub fn from_masses(shape: Vec<usize>, entries: impl IntoIterator<Item = (Cell, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (cell, mass) in entries {
            if cell.len() != shape.len() || cell.iter().zip(&shape).any(|(&j, &s)| j >= s) {
                return Err(Error::arg(format!("cell {cell:?} outside grid {shape:?}")));
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::arg(format!("cell {cell:?} has invalid mass {mass}")));
            }
            if mass == 0.0 {
                continue;
            }
            if map.insert(cell.clone(), mass).is_some() {
                return Err(Error::arg(format!("cell {cell:?} listed twice")));
            }
        }
        Ok(Coupling { shape, entries: map })
    }

    /// The product measure `μ_1 ⊗ ... ⊗ μ_n`.
    pub fn product(space: &ProductSpace) -> Self {
        let entries = space.cells().filter_map(|c| {
            let m: f64 = c.iter().enumerate().map(|(i, &j)| space.axis(i).weight(j)).product();
            (m > 0.0).then_some((c, m))
        });
        Coupling { shape: space.shape(), entries: entries.collect() }
    }

    /// Unit mass on one cell.
    pub fn dirac(shape: Vec<usize>, cell: Cell) -> Result<Self> {
        Self::new(shape, [(cell, 1.0)])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Cell, f64)> + '_ {
        self.entries.iter().map(|(c, &m)| (c, m))
    }

    pub fn mass(&self, cell: &[usize]) -> f64 {
        self.entries.get(cell).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Cells with mass above `tol_mass`.
    pub fn support(&self, tol_mass: f64) -> Vec<&Cell> {
        self.entries.iter().filter(|(_, &m)| m > tol_mass).map(|(c, _)| c).collect()
    }

    /// Mass summed over all axes but `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[axis]];
        for (c, m) in &self.entries {
            out[c[axis]] += m;
        }
        out
    }

    /// Push-forward onto the listed axes, in the given order.
    pub fn project(&self, axes: &[usize]) -> Coupling {
        let mut map: BTreeMap<Cell, f64> = BTreeMap::new();
        for (c, m) in &self.entries {
            let key: Cell = axes.iter().map(|&a| c[a]).collect();
            *map.entry(key).or_insert(0.0) += m;
        }
        Coupling { shape: axes.iter().map(|&a| self.shape[a]).collect(), entries: map }
    }

    /// Relabels slots: entry `(x_0, ..., x_{n-1})` moves to `(x_{perm[0]}, ..., x_{perm[n-1]})`.
    pub fn permute_axes(&self, perm: &[usize]) -> Coupling {
        let entries = self.entries.iter().map(|(c, &m)| (perm.iter().map(|&p| c[p]).collect::<Cell>(), m)).collect();
        Coupling { shape: perm.iter().map(|&p| self.shape[p]).collect(), entries }
    }

    /// Average of `permute_axes(σ)` over all slot permutations σ. All axes
    /// must have the same size.
    pub fn symmetrize(&self) -> Result<Coupling> {
        if self.shape.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::arg("symmetrization needs equally sized axes"));
        }
        let perms = permutations(self.n());
        let share = 1.0 / perms.len() as f64;
        let mut map: BTreeMap<Cell, f64> = BTreeMap::new();
        for perm in &perms {
            for (c, m) in &self.entries {
                *map.entry(perm.iter().map(|&p| c[p]).collect()).or_insert(0.0) += m * share;
            }
        }
        Ok(Coupling { shape: self.shape.clone(), entries: map })
    }

    /// Total-variation distance `½ Σ |a - b|`.
    pub fn tv_distance(&self, other: &Coupling) -> f64 {
        let mut sum = 0.0;
        for (c, m) in &self.entries {
            sum += (m - other.mass(c)).abs();
        }
        for (c, m) in &other.entries {
            if !self.entries.contains_key(c) {
                sum += m;
            }
        }
        0.5 * sum
    }

    /// Convex combination `t·self + (1-t)·other`.
    pub fn mix(&self, other: &Coupling, t: f64) -> Result<Coupling> {
        if self.shape != other.shape {
            return Err(Error::arg("cannot mix couplings on different grids"));
        }
        let mut map: BTreeMap<Cell, f64> = BTreeMap::new();
        for (c, m) in &self.entries {
            *map.entry(c.clone()).or_insert(0.0) += t * m;
        }
        for (c, m) in &other.entries {
            *map.entry(c.clone()).or_insert(0.0) += (1.0 - t) * m;
        }
        map.retain(|_, m| *m > 0.0);
        Ok(Coupling { shape: self.shape.clone(), entries: map })
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}
