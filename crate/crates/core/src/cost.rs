//! Built-in cost library and evaluation over product grids.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::space::{Cell, CellIter, ProductSpace};

/// Evaluation callback for [`CostModel::UserHook`]. Receives one coordinate
/// slice per axis.
pub type HookFn = dyn Fn(&[&[f64]]) -> ExtReal + Send + Sync;

/// An injectable cost function.
#[derive(Clone)]
pub struct UserHook {
    pub name: String,
    /// Required tuple arity, if fixed.
    pub arity: Option<usize>,
    /// Required point dimension, if fixed.
    pub dim: Option<usize>,
    pub symmetric: bool,
    f: Arc<HookFn>,
}

impl UserHook {
    pub fn new(name: impl Into<String>, f: impl Fn(&[&[f64]]) -> ExtReal + Send + Sync + 'static) -> Self {
        UserHook { name: name.into(), arity: None, dim: None, symmetric: false, f: Arc::new(f) }
    }

    pub fn with_arity(mut self, n: usize) -> Self {
        self.arity = Some(n);
        self
    }

    pub fn with_dim(mut self, d: usize) -> Self {
        self.dim = Some(d);
        self
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }
}

impl fmt::Debug for UserHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserHook")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// A dense n-way table of cost values keyed by grid indices.
///
/// The grid coordinates are kept alongside so that the table can also be
/// queried by point.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCost {
    shape: Vec<usize>,
    points: Vec<Vec<Vec<f64>>>,
    values: Vec<ExtReal>,
}

impl TabulatedCost {
    /// `values` are listed in lexicographic cell order of `space`.
    pub fn new(space: &ProductSpace, values: Vec<ExtReal>) -> Result<Self> {
        if values.len() != space.num_cells() {
            return Err(Error::arg(format!("table has {} values, grid has {} cells", values.len(), space.num_cells())));
        }
        let points = space.axes().iter().map(|a| a.points().map(<[f64]>::to_vec).collect()).collect();
        Ok(TabulatedCost { shape: space.shape(), points, values })
    }

    pub fn from_fn(space: &ProductSpace, mut f: impl FnMut(&[usize]) -> ExtReal) -> Result<Self> {
        let values = space.cells().map(|c| f(&c)).collect();
        Self::new(space, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.values
    }

    pub fn at(&self, cell: &[usize]) -> ExtReal {
        let mut lin = 0;
        for (k, &j) in cell.iter().enumerate() {
            lin = lin * self.shape[k] + j;
        }
        self.values[lin]
    }

    fn locate(&self, point: &[&[f64]]) -> Option<Cell> {
        point.iter().zip(&self.points).map(|(p, axis)| axis.iter().position(|q| q.as_slice() == *p)).collect()
    }
}

/// The cost functions this crate knows how to evaluate and differentiate.
#[derive(Debug, Clone)]
pub enum CostModel {
    /// `Σ_{i<j} 1/|x_i - x_j|` on the line; `+∞` on coincident coordinates.
    Coulomb1D,
    /// Three points in `R^2`:
    /// `-e^{x¹+y¹}cos(x²-y²) - e^{x¹+z¹}cos(x²-z²) - e^{y¹+z¹}cos(z²-y²)`.
    ExpCos,
    /// `xyz` on the line.
    ProductXYZ,
    /// `(x-y)² + (x-z)²(x-z+1/2)²` on the line.
    TwoWell,
    Tabulated(TabulatedCost),
    UserHook(UserHook),
}

impl CostModel {
    pub fn name(&self) -> &str {
        match self {
            CostModel::Coulomb1D => "coulomb1d",
            CostModel::ExpCos => "expcos",
            CostModel::ProductXYZ => "xyz",
            CostModel::TwoWell => "twowell",
            CostModel::Tabulated(_) => "tabulated",
            CostModel::UserHook(h) => &h.name,
        }
    }

    /// Parses a built-in cost name.
    pub fn builtin(name: &str) -> Option<CostModel> {
        match name.to_ascii_lowercase().as_str() {
            "coulomb1d" | "coulomb" => Some(CostModel::Coulomb1D),
            "expcos" => Some(CostModel::ExpCos),
            "xyz" | "productxyz" => Some(CostModel::ProductXYZ),
            "twowell" | "two-well" => Some(CostModel::TwoWell),
            _ => None,
        }
    }

    /// True if `c(σx) = c(x)` for every permutation σ of the arguments.
    pub fn is_permutation_symmetric(&self) -> bool {
        match self {
            CostModel::Coulomb1D | CostModel::ExpCos | CostModel::ProductXYZ => true,
            CostModel::TwoWell | CostModel::Tabulated(_) => false,
            CostModel::UserHook(h) => h.symmetric,
        }
    }

    /// Checks that a tuple of `n` points in `R^d` is admissible.
    pub fn check_shape(&self, n: usize, d: usize) -> Result<()> {
        let (arity, dim): (Option<usize>, Option<usize>) = match self {
            CostModel::Coulomb1D => {
                if n < 2 {
                    return Err(Error::arg(format!("coulomb1d needs at least 2 points, got {n}")));
                }
                (None, Some(1))
            }
            CostModel::ExpCos => (Some(3), Some(2)),
            CostModel::ProductXYZ | CostModel::TwoWell => (Some(3), Some(1)),
            CostModel::Tabulated(t) => (Some(t.shape.len()), t.points.first().and_then(|a| a.first()).map(Vec::len)),
            CostModel::UserHook(h) => (h.arity, h.dim),
        };
        if let Some(a) = arity {
            if a != n {
                return Err(Error::arg(format!("{} expects {a} points, got {n}", self.name())));
            }
        }
        if let Some(e) = dim {
            if e != d {
                return Err(Error::arg(format!("{} expects dimension {e}, got {d}", self.name())));
            }
        }
        Ok(())
    }

    pub fn check_space(&self, space: &ProductSpace) -> Result<()> {
        self.check_shape(space.n(), space.dim())?;
        if let CostModel::Tabulated(t) = self {
            if t.shape != space.shape() {
                return Err(Error::arg(format!("table shape {:?} does not match grid {:?}", t.shape, space.shape())));
            }
        }
        Ok(())
    }

    /// Cost of one cell of `space`. Tables are read by index.
    pub fn eval_cell(&self, space: &ProductSpace, cell: &[usize]) -> Result<ExtReal> {
        match self {
            CostModel::Tabulated(t) => Ok(t.at(cell)),
            _ => self.eval_unchecked(&space.coords(cell)),
        }
    }

    pub(crate) fn eval_unchecked(&self, x: &[&[f64]]) -> Result<ExtReal> {
        let v = match self {
            CostModel::Coulomb1D => {
                let mut sum = 0.0;
                for i in 0..x.len() {
                    for j in i + 1..x.len() {
                        let gap = (x[i][0] - x[j][0]).abs();
                        if gap == 0.0 {
                            return Ok(ExtReal::PosInf);
                        }
                        sum += 1.0 / gap;
                    }
                }
                ExtReal::Finite(sum)
            }
            CostModel::ExpCos => {
                let pair = |a: &[f64], b: &[f64]| -(a[0] + b[0]).exp() * (a[1] - b[1]).cos();
                ExtReal::Finite(pair(x[0], x[1]) + pair(x[0], x[2]) + pair(x[2], x[1]))
            }
            CostModel::ProductXYZ => ExtReal::Finite(x[0][0] * x[1][0] * x[2][0]),
            CostModel::TwoWell => {
                let (a, b, c) = (x[0][0], x[1][0], x[2][0]);
                let t = a - c;
                ExtReal::Finite((a - b).powi(2) + t * t * (t + 0.5).powi(2))
            }
            CostModel::Tabulated(t) => match t.locate(x) {
                Some(cell) => t.at(&cell),
                None => return Err(Error::arg("point is not a node of the tabulated grid")),
            },
            CostModel::UserHook(h) => (h.f)(x),
        };
        match v {
            ExtReal::Finite(y) if !y.is_finite() => {
                Err(Error::arg(format!("{} produced a non-finite value {y}", self.name())))
            }
            _ => Ok(v),
        }
    }
}

/// Evaluates the cost at a tuple of points.
pub fn eval_cost(model: &CostModel, point: &[&[f64]]) -> Result<ExtReal> {
    let d = point.first().map_or(0, |p| p.len());
    if point.iter().any(|p| p.len() != d) {
        return Err(Error::arg("points of a tuple must share one dimension"));
    }
    model.check_shape(point.len(), d)?;
    model.eval_unchecked(point)
}

/// Convenience form of [`eval_cost`] for one-dimensional tuples.
pub fn eval_cost_1d(model: &CostModel, xs: &[f64]) -> Result<ExtReal> {
    let pts: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    eval_cost(model, &refs)
}

/// Lexicographic stream of cells, optionally restricted to finite cost.
pub struct CellStream<'a> {
    inner: CellIter,
    filter: Option<(&'a CostModel, &'a ProductSpace)>,
}

impl Iterator for CellStream<'_> {
    type Item = Result<Cell>;

    fn next(&mut self) -> Option<Result<Cell>> {
        loop {
            let cell = self.inner.next()?;
            match self.filter {
                None => return Some(Ok(cell)),
                Some((model, space)) => match model.eval_cell(space, &cell) {
                    Ok(v) if v.is_finite() => return Some(Ok(cell)),
                    Ok(_) => continue,
                    Err(e) => return Some(Err(e)),
                },
            }
        }
    }
}

pub fn iterate_cells<'a>(space: &'a ProductSpace, finite_only: bool, model: &'a CostModel) -> Result<CellStream<'a>> {
    model.check_space(space)?;
    Ok(CellStream { inner: space.cells(), filter: finite_only.then_some((model, space)) })
}

/// Finite-cost cells with their costs, and the excluded `+∞` cells.
pub type CellPartition = (Vec<(Cell, f64)>, Vec<Cell>);

/// Finite-cost cells of `space` with their costs, in lexicographic order.
pub fn finite_cells(space: &ProductSpace, model: &CostModel) -> Result<CellPartition> {
    model.check_space(space)?;
    let mut finite = Vec::new();
    let mut excluded = Vec::new();
    for cell in space.cells() {
        match model.eval_cell(space, &cell)? {
            ExtReal::Finite(c) => finite.push((cell, c)),
            ExtReal::PosInf => excluded.push(cell),
        }
    }
    Ok((finite, excluded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DiscreteMarginal;

    fn grid(xs: &[f64], n: usize) -> ProductSpace {
        ProductSpace::repeated(DiscreteMarginal::uniform_1d(xs).unwrap(), n).unwrap()
    }

    #[test]
    fn coulomb_values() {
        assert_eq!(eval_cost_1d(&CostModel::Coulomb1D, &[0.0, 1.0, 2.0]).unwrap(), ExtReal::Finite(2.5));
        assert_eq!(eval_cost_1d(&CostModel::Coulomb1D, &[0.0, 0.0, 1.0]).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn xyz_and_expcos_values() {
        let v = eval_cost_1d(&CostModel::ProductXYZ, &[0.2, 0.8, 0.8]).unwrap().finite().unwrap();
        assert!((v - 0.128).abs() < 1e-15);
        let z = [0.0, 0.0];
        assert_eq!(eval_cost(&CostModel::ExpCos, &[&z, &z, &z]).unwrap(), ExtReal::Finite(-3.0));
    }

    #[test]
    fn shape_mismatch_is_an_argument_error() {
        assert!(matches!(eval_cost_1d(&CostModel::ExpCos, &[0.0, 1.0, 2.0]), Err(Error::Argument(_))));
        assert!(matches!(eval_cost_1d(&CostModel::ProductXYZ, &[0.0, 1.0]), Err(Error::Argument(_))));
        assert!(matches!(eval_cost_1d(&CostModel::Coulomb1D, &[0.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn hook_nan_is_rejected() {
        let hook = CostModel::UserHook(UserHook::new("nan", |_| ExtReal::Finite(f64::NAN)));
        assert!(eval_cost_1d(&hook, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn iterate_cells_counts() {
        let all: Vec<_> = iterate_cells(&grid(&[0.0, 1.0], 3), false, &CostModel::Coulomb1D).unwrap().collect();
        assert_eq!(all.len(), 8);
        let s = grid(&[0.0, 1.0], 3);
        assert_eq!(iterate_cells(&s, true, &CostModel::Coulomb1D).unwrap().count(), 0);
        let s = grid(&[0.0, 1.0, 2.0], 3);
        let cells: Vec<Cell> = iterate_cells(&s, true, &CostModel::Coulomb1D).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(cells.len(), 6);
        for c in cells {
            let mut sorted = c.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, vec![0, 1, 2]);
        }
    }

    #[test]
    fn table_lookup_by_index_and_point() {
        let s = grid(&[0.0, 1.0], 2);
        let t = TabulatedCost::from_fn(&s, |c| {
            if c[0] == c[1] {
                ExtReal::PosInf
            } else {
                ExtReal::Finite(c[0] as f64 + 10.0 * c[1] as f64)
            }
        })
        .unwrap();
        let m = CostModel::Tabulated(t);
        assert_eq!(m.eval_cell(&s, &[0, 1]).unwrap(), ExtReal::Finite(10.0));
        assert_eq!(m.eval_cell(&s, &[1, 1]).unwrap(), ExtReal::PosInf);
        assert_eq!(eval_cost_1d(&m, &[1.0, 0.0]).unwrap(), ExtReal::Finite(1.0));
        assert!(eval_cost_1d(&m, &[0.5, 0.0]).is_err());
    }
}
