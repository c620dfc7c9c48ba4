//! Exact discrete multi-marginal optimal transport.
//!
//! The crate solves `min Σ c·π` over couplings of `n` discrete marginals with
//! a simplex LP, recovers the Kantorovich potentials, and analyses the
//! structure of optimal plans: splitting sets, c-monotonicity, graph
//! decompositions, twist multiplicities, Hessian signatures, and
//! extremality in the transport polytope.
//!
//! ```
//! use mmot_core::{solve_exact, CostModel, DiscreteMarginal, ProductSpace};
//!
//! let axis = DiscreteMarginal::uniform_1d(&[0.0, 1.0, 2.0]).unwrap();
//! let space = ProductSpace::repeated(axis, 3).unwrap();
//! let sol = solve_exact(&CostModel::Coulomb1D, &space).unwrap();
//! assert!((sol.primal_value - 2.5).abs() < 1e-12);
//! ```

pub mod cli;
pub mod cost;
pub mod diff;
pub mod error;
pub mod ext;
pub mod extremal;
pub mod instances;
pub mod io;
pub mod solver;
pub mod space;
pub mod structure;

pub use cost::{eval_cost, eval_cost_1d, iterate_cells, CostModel, TabulatedCost, UserHook};
pub use error::{Error, Result};
pub use ext::ExtReal;
pub use solver::{
    c_conjugate_update, duality_gap, solve_exact, solve_exact_with, ColumnOrder, ConjugateUpdate, DualPotentials,
    SolveOptions, SolveResult, TOL_DUAL,
};
pub use space::{Cell, Coupling, DiscreteMarginal, ProductSpace};
