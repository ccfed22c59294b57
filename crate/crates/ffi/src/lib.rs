//! C ABI for the darcy-dd solver.
//!
//! Problems and solutions are opaque handles created by `*_new` or
//! `darcy_solve` and released with the matching `*_free`. Every fallible
//! function returns a [`DarcyStatus`]; on failure a description is kept per
//! thread and can be read with [`darcy_last_error_message`]. Panics are
//! caught at the boundary and reported as [`DarcyStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use darcy_dd::cases::{wheeler_case, wheeler_decomposition, ProblemDefinition};
use darcy_dd::mesh::{Mapping, MeshSpec};
use darcy_dd::postproc::compute_errors;
use darcy_dd::solver::{solve, DarcySolution, Formulation, SolverOptions, DEFAULT_MEM_BUDGET};
use darcy_dd::{Error, ErrorCategory};

/// Status codes; the non-zero values match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DarcyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfMemory = 3,
    SolverFailure = 4,
    DataError = 5,
    IoError = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DarcyFormulation {
    Continuous = 0,
    DomainDecomposition = 1,
}

/// Error norms of a solution against the exact solution of its problem.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DarcyErrors {
    pub h: f64,
    pub l2_div_residual: f64,
    pub hdiv_u_error: f64,
    pub h1_p_error: f64,
}

/// Size and timing summary of a solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DarcyReport {
    pub dof_u: u64,
    pub dof_p: u64,
    pub dof_lambda: u64,
    pub stored_entries: u64,
    pub total_seconds: f64,
    /// Largest absolute divergence-constraint residual.
    pub divergence_residual: f64,
}

/// Opaque problem handle.
pub struct DarcyProblemHandle {
    def: ProblemDefinition,
}

/// Opaque solution handle.
pub struct DarcySolutionHandle {
    solution: DarcySolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut buf = e.borrow_mut();
        buf.clear();
        buf.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> DarcyStatus {
    match err.category() {
        ErrorCategory::Config => DarcyStatus::InvalidArgument,
        ErrorCategory::OutOfMemory => DarcyStatus::OutOfMemory,
        ErrorCategory::Solver => DarcyStatus::SolverFailure,
        ErrorCategory::Data => DarcyStatus::DataError,
        ErrorCategory::Io => DarcyStatus::IoError,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DarcyStatus, String)>) -> DarcyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            DarcyStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&msg);
            DarcyStatus::Panic
        }
    }
}

fn lift(err: Error) -> (DarcyStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (DarcyStatus, String) {
    (DarcyStatus::NullPointer, format!("{what} is null"))
}

/// Creates the manufactured problem of order `order` on `k³` deformed
/// elements split into `k1³` subdomains. `k1 = 0` selects the default split.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn darcy_manufactured_new(
    order: u32,
    k: u32,
    k1: u32,
    out: *mut *mut DarcyProblemHandle,
) -> DarcyStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let (order, k, k1) = (order as usize, k as usize, k1 as usize);
        if k == 0 {
            return Err((DarcyStatus::InvalidArgument, "k must be positive".into()));
        }
        let (sub, per) = if k1 == 0 {
            wheeler_decomposition(order, k)
        } else if k % k1 == 0 {
            ([k1; 3], [k / k1; 3])
        } else {
            return Err((DarcyStatus::InvalidArgument, format!("k1={k1} does not divide k={k}")));
        };
        let spec = MeshSpec::new(order, sub, per, Mapping::WheelerDeformed).map_err(lift)?;
        let def = wheeler_case(spec).map_err(lift)?;
        *out = Box::into_raw(Box::new(DarcyProblemHandle { def }));
        Ok(())
    })
}

/// Releases a problem handle. Null is ignored.
///
/// # Safety
/// `problem` must be null or a handle from `darcy_manufactured_new` that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn darcy_problem_free(problem: *mut DarcyProblemHandle) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves a problem. `mem_budget = 0` selects the default budget of stored
/// matrix entries.
///
/// # Safety
/// `problem` must be a live problem handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn darcy_solve(
    problem: *const DarcyProblemHandle,
    formulation: DarcyFormulation,
    mem_budget: u64,
    out: *mut *mut DarcySolutionHandle,
) -> DarcyStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        let options = SolverOptions {
            mem_budget: if mem_budget == 0 {
                DEFAULT_MEM_BUDGET
            } else {
                mem_budget
            },
            condition_numbers: false,
            ..Default::default()
        };
        let formulation = match formulation {
            DarcyFormulation::Continuous => Formulation::Continuous,
            DarcyFormulation::DomainDecomposition => Formulation::DomainDecomposition,
        };
        let solution = solve(&problem.def.problem, formulation, &options).map_err(lift)?;
        *out = Box::into_raw(Box::new(DarcySolutionHandle { solution }));
        Ok(())
    })
}

/// Releases a solution handle. Null is ignored.
///
/// # Safety
/// `solution` must be null or a handle from `darcy_solve` that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn darcy_solution_free(solution: *mut DarcySolutionHandle) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Fills `out` with the size and timing summary of a solution.
///
/// # Safety
/// `solution` must be a live solution handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn darcy_solution_report(
    solution: *const DarcySolutionHandle,
    out: *mut DarcyReport,
) -> DarcyStatus {
    guard(|| {
        let s = &solution.as_ref().ok_or_else(|| null("solution"))?.solution;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = &s.report;
        *out = DarcyReport {
            dof_u: r.dof_u as u64,
            dof_p: r.dof_p as u64,
            dof_lambda: r.dof_lambda as u64,
            stored_entries: r.stored_entries,
            total_seconds: r.total_s,
            divergence_residual: s.divergence_residual().map_err(lift)?,
        };
        Ok(())
    })
}

/// Computes error norms of `solution` against the exact solution of
/// `problem`, which must be the problem it was solved from.
///
/// # Safety
/// Both handles must be live and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn darcy_solution_errors(
    problem: *const DarcyProblemHandle,
    solution: *const DarcySolutionHandle,
    out: *mut DarcyErrors,
) -> DarcyStatus {
    guard(|| {
        let p = &problem.as_ref().ok_or_else(|| null("problem"))?.def;
        let s = &solution.as_ref().ok_or_else(|| null("solution"))?.solution;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let exact = p
            .exact
            .as_ref()
            .ok_or_else(|| (DarcyStatus::InvalidArgument, "problem has no exact solution".into()))?;
        let e = compute_errors(&p.problem, s, exact).map_err(lift)?;
        *out = DarcyErrors {
            h: e.h,
            l2_div_residual: e.l2_div_residual,
            hdiv_u_error: e.hdiv_u_error,
            h1_p_error: e.h1_p_error,
        };
        Ok(())
    })
}

/// Copies the last error message of the calling thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn darcy_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn darcy_version() -> *const c_char {
    const VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string contains NUL"),
    };
    VERSION.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_match_error_categories() {
        assert_eq!(
            status_of(&Error::Config("x".into())) as i32,
            ErrorCategory::Config.exit_code()
        );
        assert_eq!(
            status_of(&Error::OutOfMemory {
                what: "x",
                required: 2,
                budget: 1
            }) as i32,
            ErrorCategory::OutOfMemory.exit_code()
        );
        assert_eq!(
            status_of(&Error::Ingest("x".into())) as i32,
            ErrorCategory::Data.exit_code()
        );
    }

    #[test]
    fn panics_become_status_codes() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, DarcyStatus::Panic);
        let mut buf = [0 as c_char; 16];
        let n = unsafe { darcy_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 4);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "boom");
    }
}
