//! C ABI for `mmot-core`.
//!
//! Objects are opaque heap handles released with the matching `_free`
//! function. Every fallible call returns an [`MmotStatus`]; on failure,
//! [`mmot_last_error`] describes the problem until the next call on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mmot_core::extremal::is_vertex;
use mmot_core::io::coupling_to_json;
use mmot_core::structure::decompose_graphs;
use mmot_core::{solve_exact, CostModel, DiscreteMarginal, Error, ExtReal, ProductSpace, SolveResult, TabulatedCost};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    BufferTooSmall = 4,
    VerificationFailed = 5,
    Internal = 6,
}

/// Grid of discrete marginals.
pub struct MmotSpace(ProductSpace);

/// Cost function.
pub struct MmotCost(CostModel);

/// Optimal coupling with its potentials and the grid it was solved on.
pub struct MmotSolution {
    space: ProductSpace,
    result: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MmotStatus {
    match e {
        Error::Infeasible { .. } => MmotStatus::Infeasible,
        Error::InvalidCertificate { .. } | Error::InvalidPotentials { .. } => MmotStatus::VerificationFailed,
        Error::Internal(_) => MmotStatus::Internal,
        _ => MmotStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (MmotStatus, String)>) -> MmotStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmotStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MmotStatus::Internal
        }
    }
}

fn lib<T>(r: mmot_core::Result<T>) -> Result<T, (MmotStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MmotStatus, String)> {
    p.as_ref().ok_or_else(|| (MmotStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (MmotStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((MmotStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<T>(p: *mut T, v: T, what: &str) -> Result<(), (MmotStatus, String)> {
    if p.is_null() {
        return Err((MmotStatus::NullPointer, format!("{what} is null")));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mmot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a grid of `n_axes` one-dimensional marginals. Axis `i` has
/// `sizes[i]` points; `points` and `weights` hold all axes back to back.
///
/// # Safety
/// `sizes` must hold `n_axes` entries, `points` and `weights` the sum of
/// `sizes` entries each, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_space_new_1d(
    n_axes: usize,
    sizes: *const usize,
    points: *const f64,
    weights: *const f64,
    out_space: *mut *mut MmotSpace,
) -> MmotStatus {
    guard(|| {
        let sizes = slice(sizes, n_axes, "sizes")?;
        let total = sizes.iter().sum();
        let (pts, ws) = (slice(points, total, "points")?, slice(weights, total, "weights")?);
        let mut axes = Vec::with_capacity(n_axes);
        let mut at = 0;
        for &len in sizes {
            axes.push(lib(DiscreteMarginal::from_1d(&pts[at..at + len], ws[at..at + len].to_vec()))?);
            at += len;
        }
        let space = lib(ProductSpace::new(axes))?;
        out(out_space, Box::into_raw(Box::new(MmotSpace(space))), "out_space")
    })
}

/// Number of axes, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmot_space_num_axes(space: *const MmotSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.n())
}

/// # Safety
/// `space` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmot_space_free(space: *mut MmotSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// One of `coulomb1d`, `expcos`, `xyz`, `twowell`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out_cost` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_cost_builtin(name: *const c_char, out_cost: *mut *mut MmotCost) -> MmotStatus {
    guard(|| {
        if name.is_null() {
            return Err((MmotStatus::NullPointer, "name is null".into()));
        }
        let name =
            CStr::from_ptr(name).to_str().map_err(|_| (MmotStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let model =
            CostModel::builtin(name).ok_or_else(|| (MmotStatus::InvalidArgument, format!("unknown cost '{name}'")))?;
        out(out_cost, Box::into_raw(Box::new(MmotCost(model))), "out_cost")
    })
}

/// Cost given by its value on every cell of `space` in lexicographic order.
/// `+INFINITY` forbids a cell.
///
/// # Safety
/// `values` must hold `len` entries and `out_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_cost_tabulated(
    space: *const MmotSpace,
    values: *const f64,
    len: usize,
    out_cost: *mut *mut MmotCost,
) -> MmotStatus {
    guard(|| {
        let space = &deref(space, "space")?.0;
        let values = slice(values, len, "values")?;
        let ext = values
            .iter()
            .map(|&v| ExtReal::try_from_f64(v).ok_or((MmotStatus::InvalidArgument, format!("invalid cost value {v}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let table = lib(TabulatedCost::new(space, ext))?;
        out(out_cost, Box::into_raw(Box::new(MmotCost(CostModel::Tabulated(table)))), "out_cost")
    })
}

/// # Safety
/// `cost` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmot_cost_free(cost: *mut MmotCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// Solves the transport problem exactly and certifies the result.
///
/// # Safety
/// `space` and `cost` must be live handles and `out_solution` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solve(
    space: *const MmotSpace,
    cost: *const MmotCost,
    out_solution: *mut *mut MmotSolution,
) -> MmotStatus {
    guard(|| {
        let space = &deref(space, "space")?.0;
        let cost = &deref(cost, "cost")?.0;
        let result = lib(solve_exact(cost, space))?;
        let sol = MmotSolution { space: space.clone(), result };
        out(out_solution, Box::into_raw(Box::new(sol)), "out_solution")
    })
}

/// Primal and dual optimal values.
///
/// # Safety
/// `solution` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_values(
    solution: *const MmotSolution,
    primal: *mut f64,
    dual: *mut f64,
) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        out(primal, s.result.primal_value, "primal")?;
        out(dual, s.result.dual_value, "dual")
    })
}

/// Number of cells with positive mass.
///
/// # Safety
/// `solution` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_support_len(solution: *const MmotSolution, len: *mut usize) -> MmotStatus {
    guard(|| out(len, deref(solution, "solution")?.result.plan.len(), "len"))
}

/// Copies the support: `cells` receives `n_axes` indices per cell, row by
/// row, and `masses` one value per cell. `capacity` counts cells.
///
/// # Safety
/// `cells` must hold `capacity * n_axes` entries and `masses` `capacity`.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_support(
    solution: *const MmotSolution,
    cells: *mut usize,
    masses: *mut f64,
    capacity: usize,
) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let plan = &s.result.plan;
        if capacity < plan.len() {
            return Err((MmotStatus::BufferTooSmall, format!("need room for {} cells", plan.len())));
        }
        if plan.is_empty() {
            return Ok(());
        }
        if cells.is_null() || masses.is_null() {
            return Err((MmotStatus::NullPointer, "output buffer is null".into()));
        }
        let n = s.space.n();
        for (row, (cell, m)) in plan.entries().enumerate() {
            std::slice::from_raw_parts_mut(cells.add(row * n), n).copy_from_slice(cell);
            masses.add(row).write(m);
        }
        Ok(())
    })
}

/// Potentials of one axis; `capacity` must be at least the axis size.
///
/// # Safety
/// `values` must hold `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_potentials(
    solution: *const MmotSolution,
    axis: usize,
    values: *mut f64,
    capacity: usize,
) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if axis >= s.space.n() {
            return Err((MmotStatus::InvalidArgument, format!("axis {axis} out of range")));
        }
        let u = s.result.duals.axis(axis);
        if capacity < u.len() {
            return Err((MmotStatus::BufferTooSmall, format!("need room for {} values", u.len())));
        }
        if values.is_null() {
            return Err((MmotStatus::NullPointer, "values is null".into()));
        }
        std::slice::from_raw_parts_mut(values, u.len()).copy_from_slice(u);
        Ok(())
    })
}

/// Largest number of graphs over the first axis needed to describe the plan.
///
/// # Safety
/// `solution` must be a live handle and `k` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_graph_count(solution: *const MmotSolution, k: *mut usize) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let dec = lib(decompose_graphs(&s.result.plan, &s.space))?;
        out(k, dec.k, "k")
    })
}

/// Whether the plan is a vertex of its transport polytope.
///
/// # Safety
/// `solution` must be a live handle and `extremal` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_is_extremal(solution: *const MmotSolution, extremal: *mut bool) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let cert = lib(is_vertex(&s.result.plan, &s.space))?;
        out(extremal, cert.is_extremal, "extremal")
    })
}

/// The plan in the coupling JSON format. Release with [`mmot_string_free`].
///
/// # Safety
/// `solution` must be a live handle and `json` writable.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_to_json(solution: *const MmotSolution, json: *mut *mut c_char) -> MmotStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        let text = CString::new(coupling_to_json(&s.result.plan)).map_err(|e| (MmotStatus::Internal, e.to_string()))?;
        out(json, text.into_raw(), "json")
    })
}

/// # Safety
/// `solution` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmot_solution_free(solution: *mut MmotSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
