//! First-variable gradients, off-diagonal Hessian blocks, eigenvalue
//! signatures, and the three-marginal product criterion.
//!
//! Built-in costs are differentiated analytically. Hooks go through central
//! finite differences, which are also exposed for cross-checking.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::ext::ExtReal;

/// Relative step for first differences.
pub const FD_STEP_GRAD: f64 = 1e-5;
/// Relative step for mixed second differences.
pub const FD_STEP_HESS: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-9;

fn check_point(model: &CostModel, point: &[&[f64]]) -> Result<usize> {
    let d = point.first().map_or(0, |p| p.len());
    if point.iter().any(|p| p.len() != d) {
        return Err(Error::arg("points of a tuple must share one dimension"));
    }
    model.check_shape(point.len(), d)?;
    if matches!(model, CostModel::Tabulated(_)) {
        return Err(Error::NonDifferentiable("tabulated costs are only defined on grid nodes".into()));
    }
    Ok(d)
}

fn coulomb_gaps(point: &[&[f64]]) -> Result<()> {
    for i in 0..point.len() {
        for j in i + 1..point.len() {
            if point[i][0] == point[j][0] {
                return Err(Error::NonDifferentiable(format!("coordinates {i} and {j} coincide")));
            }
        }
    }
    Ok(())
}

/// `D_{x₁}c` at a tuple of points.
pub fn grad_x1(model: &CostModel, point: &[&[f64]]) -> Result<Vec<f64>> {
    check_point(model, point)?;
    match model {
        CostModel::Coulomb1D => {
            coulomb_gaps(point)?;
            let x = point[0][0];
            let g = point[1..]
                .iter()
                .map(|p| {
                    let t = x - p[0];
                    -t.signum() / (t * t)
                })
                .sum();
            Ok(vec![g])
        }
        CostModel::ExpCos => {
            let x = point[0];
            let mut g = vec![0.0; 2];
            for y in &point[1..] {
                let e = (x[0] + y[0]).exp();
                let delta = x[1] - y[1];
                g[0] -= e * delta.cos();
                g[1] += e * delta.sin();
            }
            Ok(g)
        }
        CostModel::ProductXYZ => Ok(vec![point[1][0] * point[2][0]]),
        CostModel::TwoWell => {
            let (x, y, z) = (point[0][0], point[1][0], point[2][0]);
            let t = x - z;
            Ok(vec![2.0 * (x - y) + 2.0 * t * (t + 0.5) * (2.0 * t + 0.5)])
        }
        CostModel::Tabulated(_) | CostModel::UserHook(_) => grad_x1_fd(model, point),
    }
}

fn eval_finite(model: &CostModel, point: &[Vec<f64>]) -> Result<f64> {
    let refs: Vec<&[f64]> = point.iter().map(Vec::as_slice).collect();
    match model.eval_unchecked(&refs)? {
        ExtReal::Finite(v) => Ok(v),
        ExtReal::PosInf => Err(Error::NonDifferentiable("finite-difference stencil reaches an infinite value".into())),
    }
}

/// Rejects Coulomb points within `10h` of a coincidence for a given stencil.
fn coulomb_stencil_guard(model: &CostModel, point: &[&[f64]], rel_step: f64) -> Result<()> {
    if !matches!(model, CostModel::Coulomb1D) {
        return Ok(());
    }
    for i in 0..point.len() {
        for j in i + 1..point.len() {
            let (a, b) = (point[i][0], point[j][0]);
            let h = rel_step * (1.0 + a.abs().max(b.abs()));
            if (a - b).abs() < 10.0 * h {
                return Err(Error::NonDifferentiable(format!(
                    "coordinates {i} and {j} are closer than the finite-difference stencil allows"
                )));
            }
        }
    }
    Ok(())
}

/// Central-difference gradient in the first variable with step `1e-5·(1+|x|)`.
pub fn grad_x1_fd(model: &CostModel, point: &[&[f64]]) -> Result<Vec<f64>> {
    let d = point.first().map_or(0, |p| p.len());
    let d_model = point.iter().all(|p| p.len() == d);
    if !d_model {
        return Err(Error::arg("points of a tuple must share one dimension"));
    }
    model.check_shape(point.len(), d)?;
    coulomb_stencil_guard(model, point, FD_STEP_GRAD)?;
    let mut work: Vec<Vec<f64>> = point.iter().map(|p| p.to_vec()).collect();
    let mut g = vec![0.0; d];
    for (a, ga) in g.iter_mut().enumerate() {
        let x0 = point[0][a];
        let h = FD_STEP_GRAD * (1.0 + x0.abs());
        work[0][a] = x0 + h;
        let fp = eval_finite(model, &work)?;
        work[0][a] = x0 - h;
        let fm = eval_finite(model, &work)?;
        work[0][a] = x0;
        *ga = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Mixed second-derivative blocks `D²_{x_i x_j}c` with zero diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalHessian {
    pub n: usize,
    pub d: usize,
    /// Row-major `n × n` grid of `d × d` blocks.
    pub blocks: Vec<DMatrix<f64>>,
    /// The symmetric `nd × nd` matrix `g`.
    pub assembled: DMatrix<f64>,
}

impl OffDiagonalHessian {
    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.n + j]
    }

    fn from_upper(n: usize, d: usize, mut upper: impl FnMut(usize, usize) -> Result<DMatrix<f64>>) -> Result<Self> {
        let mut blocks = vec![DMatrix::zeros(d, d); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let b = upper(i, j)?;
                blocks[j * n + i] = b.transpose();
                blocks[i * n + j] = b;
            }
        }
        let mut assembled = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                assembled.view_mut((i * d, j * d), (d, d)).copy_from(&blocks[i * n + j]);
            }
        }
        Ok(OffDiagonalHessian { n, d, blocks, assembled })
    }
}

/// Block `D²_{ab}` of `f(a,b) = -e^{a¹+b¹}cos(a²-b²)`: `-e·[[cos, sin], [-sin, cos]]`.
fn expcos_block(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    let e = (a[0] + b[0]).exp();
    let (s, c) = (a[1] - b[1]).sin_cos();
    DMatrix::from_row_slice(2, 2, &[-e * c, -e * s, e * s, -e * c])
}

pub fn hessian_offdiag(model: &CostModel, point: &[&[f64]]) -> Result<OffDiagonalHessian> {
    let d = check_point(model, point)?;
    let n = point.len();
    let scalar = |v: f64| DMatrix::from_element(1, 1, v);
    match model {
        CostModel::Coulomb1D => {
            coulomb_gaps(point)?;
            OffDiagonalHessian::from_upper(n, 1, |i, j| Ok(scalar(-2.0 / (point[i][0] - point[j][0]).abs().powi(3))))
        }
        CostModel::ExpCos => OffDiagonalHessian::from_upper(n, 2, |i, j| Ok(expcos_block(point[i], point[j]))),
        CostModel::ProductXYZ => {
            // ∂²(xyz)/∂x_i∂x_j is the remaining coordinate
            OffDiagonalHessian::from_upper(n, 1, |i, j| Ok(scalar(point[3 - i - j][0])))
        }
        CostModel::TwoWell => {
            let t = point[0][0] - point[2][0];
            OffDiagonalHessian::from_upper(n, 1, |i, j| {
                Ok(scalar(match (i, j) {
                    (0, 1) => -2.0,
                    (0, 2) => -(12.0 * t * t + 6.0 * t + 0.5),
                    _ => 0.0,
                }))
            })
        }
        CostModel::Tabulated(_) | CostModel::UserHook(_) => hessian_offdiag_fd_inner(model, point, d),
    }
}

/// Mixed central second differences with step `1e-3·(1+|x|)` per coordinate.
pub fn hessian_offdiag_fd(model: &CostModel, point: &[&[f64]]) -> Result<OffDiagonalHessian> {
    let d = point.first().map_or(0, |p| p.len());
    if point.iter().any(|p| p.len() != d) {
        return Err(Error::arg("points of a tuple must share one dimension"));
    }
    model.check_shape(point.len(), d)?;
    hessian_offdiag_fd_inner(model, point, d)
}

fn hessian_offdiag_fd_inner(model: &CostModel, point: &[&[f64]], d: usize) -> Result<OffDiagonalHessian> {
    coulomb_stencil_guard(model, point, FD_STEP_HESS)?;
    let n = point.len();
    let mut work: Vec<Vec<f64>> = point.iter().map(|p| p.to_vec()).collect();
    OffDiagonalHessian::from_upper(n, d, |i, j| {
        let mut b = DMatrix::zeros(d, d);
        for a in 0..d {
            for c in 0..d {
                let (xa, xc) = (point[i][a], point[j][c]);
                let (ha, hc) = (FD_STEP_HESS * (1.0 + xa.abs()), FD_STEP_HESS * (1.0 + xc.abs()));
                let mut f = |sa: f64, sc: f64| -> Result<f64> {
                    work[i][a] = xa + sa * ha;
                    work[j][c] = xc + sc * hc;
                    let v = eval_finite(model, &work);
                    work[i][a] = xa;
                    work[j][c] = xc;
                    v
                };
                let v = f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?;
                b[(a, c)] = v / (4.0 * ha * hc);
            }
        }
        Ok(b)
    })
}

/// Inertia `(n₊, n₋, n₀)` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureReport {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
    pub zero_tol: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl SignatureReport {
    pub fn triple(&self) -> (usize, usize, usize) {
        (self.n_plus, self.n_minus, self.n_zero)
    }
}

/// Default zero tolerance: `1e-8` times the largest absolute row sum, which
/// bounds the spectral radius.
pub fn default_zero_tol(matrix: &DMatrix<f64>) -> f64 {
    let radius = matrix.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    1e-8 * radius
}

/// Eigenvalue sign counts; `|λ| ≤ zero_tol` counts as zero.
pub fn signature(matrix: &DMatrix<f64>, zero_tol: Option<f64>) -> Result<SignatureReport> {
    if !matrix.is_square() {
        return Err(Error::arg("signature needs a square matrix"));
    }
    let asym = (matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
        return Err(Error::arg(format!("matrix is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    let zero_tol = zero_tol.unwrap_or_else(|| default_zero_tol(matrix));
    let sym = (matrix + matrix.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let n_zero = eigenvalues.iter().filter(|l| l.abs() <= zero_tol).count();
    let n_plus = eigenvalues.iter().filter(|&&l| l > zero_tol).count();
    Ok(SignatureReport { n_plus, n_minus: eigenvalues.len() - n_plus - n_zero, n_zero, zero_tol, eigenvalues })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    /// `D²_{xy}c · [D²_{zy}c]⁻¹ · D²_{zx}c`.
    pub product: DMatrix<f64>,
    /// Eigenvalues of the symmetric part of `product`, ascending.
    pub eigenvalues: Vec<f64>,
    pub zero_tol: f64,
    pub negative_definite: bool,
}

/// Three-marginal product test. Definiteness is judged on the symmetric part.
pub fn three_marginal_criterion(model: &CostModel, point: &[&[f64]]) -> Result<CriterionReport> {
    if point.len() != 3 {
        return Err(Error::arg(format!("the product criterion needs 3 points, got {}", point.len())));
    }
    let g = hessian_offdiag(model, point)?;
    let (xy, zy, zx) = (g.block(0, 1), g.block(2, 1), g.block(2, 0));
    let scale = [xy, zy, zx].iter().map(|b| b.amax()).fold(0.0, f64::max).max(1.0);
    let sv = zy.clone().svd(false, false).singular_values;
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if sigma_min <= 1e-9 * scale {
        return Err(Error::Singular { block: "D2_zy", sigma_min });
    }
    let inv = zy.clone().try_inverse().ok_or(Error::Singular { block: "D2_zy", sigma_min })?;
    let product = xy * inv * zx;
    let sym = (&product + product.transpose()) * 0.5;
    let zero_tol = default_zero_tol(&sym);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let negative_definite = eigenvalues.iter().all(|&l| l < -zero_tol);
    Ok(CriterionReport { product, eigenvalues, zero_tol, negative_definite })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::UserHook;

    fn pt(xs: &[f64]) -> Vec<[f64; 1]> {
        xs.iter().map(|&x| [x]).collect()
    }

    fn refs(p: &[[f64; 1]]) -> Vec<&[f64]> {
        p.iter().map(|v| v.as_slice()).collect()
    }

    #[test]
    fn gradient_examples() {
        let p = pt(&[0.0, 1.0, 2.0]);
        assert_eq!(grad_x1(&CostModel::Coulomb1D, &refs(&p)).unwrap(), vec![1.25]);
        let p = pt(&[2.0, 3.0, 5.0]);
        assert_eq!(grad_x1(&CostModel::ProductXYZ, &refs(&p)).unwrap(), vec![15.0]);
        let p = pt(&[0.0, 0.0, 1.0]);
        assert!(matches!(grad_x1(&CostModel::Coulomb1D, &refs(&p)), Err(Error::NonDifferentiable(_))));
    }

    #[test]
    fn coulomb_hessian_example_and_signature() {
        let p = pt(&[0.0, 1.0, 3.0]);
        let h = hessian_offdiag(&CostModel::Coulomb1D, &refs(&p)).unwrap();
        assert_eq!(h.block(0, 1)[(0, 0)], -2.0);
        assert!((h.block(0, 2)[(0, 0)] + 2.0 / 27.0).abs() < 1e-15);
        assert_eq!(h.block(1, 2)[(0, 0)], -0.25);
        assert_eq!(h.block(1, 1)[(0, 0)], 0.0);
        assert_eq!(signature(&h.assembled, None).unwrap().triple(), (2, 1, 0));
    }

    #[test]
    fn expcos_blocks_at_origin() {
        let z = [0.0, 0.0];
        let h = hessian_offdiag(&CostModel::ExpCos, &[&z, &z, &z]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2), (2, 1)] {
            assert_eq!(h.block(i, j), &(-DMatrix::<f64>::identity(2, 2)));
        }
        let r = three_marginal_criterion(&CostModel::ExpCos, &[&z, &z, &z]).unwrap();
        assert!((r.product.clone() + DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert!(r.negative_definite);
    }

    #[test]
    fn signature_basics() {
        assert_eq!(signature(&DMatrix::zeros(3, 3), None).unwrap().triple(), (0, 0, 3));
        assert_eq!(signature(&DMatrix::identity(2, 2), None).unwrap().triple(), (2, 0, 0));
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(signature(&asym, None), Err(Error::Argument(_))));
    }

    #[test]
    fn degenerate_middle_block_is_singular() {
        let xy =
            CostModel::UserHook(UserHook::new("xy", |x| ExtReal::Finite(x[0][0] * x[1][0])).with_arity(3).with_dim(1));
        let p = pt(&[0.3, 0.7, -0.2]);
        match three_marginal_criterion(&xy, &refs(&p)) {
            Err(Error::Singular { block, .. }) => assert_eq!(block, "D2_zy"),
            other => panic!("expected a singular block, got {other:?}"),
        }
    }

    #[test]
    fn tabulated_has_no_derivatives() {
        let space =
            crate::space::ProductSpace::repeated(crate::space::DiscreteMarginal::uniform_1d(&[0.0, 1.0]).unwrap(), 2)
                .unwrap();
        let t = CostModel::Tabulated(crate::cost::TabulatedCost::from_fn(&space, |_| ExtReal::Finite(0.0)).unwrap());
        let p = pt(&[0.0, 1.0]);
        assert!(matches!(grad_x1(&t, &refs(&p)), Err(Error::NonDifferentiable(_))));
    }

    #[test]
    fn fd_rejects_near_coincident_coulomb_points() {
        let p = pt(&[0.0, 5e-5, 1.0]);
        assert!(matches!(grad_x1_fd(&CostModel::Coulomb1D, &refs(&p)), Err(Error::NonDifferentiable(_))));
    }
}
