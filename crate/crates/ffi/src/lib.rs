//! C interface to `recourse-core`.
//!
//! Objects are opaque heap handles created by `rc_*_new`/`rc_*_from_*` and
//! released by the matching `rc_*_free`. Every function returns an
//! [`RcStatus`]; on failure the message is available from
//! [`rc_last_error_message`] on the same thread. Panics never cross the
//! boundary.
//!
//! Matrices are passed row-major. Output buffers are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use recourse_core::geometry::{enumerate_dual_vertices, DualVertexFan, RecourseData};
use recourse_core::linalg::DenseMatrix;
use recourse_core::measures::{self, BoxDensityMeasure, DiscreteMeasure, Measure};
use recourse_core::risk::{self, Quadrature, RiskSpec};
use recourse_core::solver::{solve_two_stage, SolveOptions, TwoStageProblem};
use recourse_core::Error;

/// Result codes. `RC_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    RcOk = 0,
    RcNullPointer = 1,
    RcInvalidInput = 2,
    RcDimension = 3,
    RcAssumption = 4,
    RcInfeasible = 5,
    RcUnbounded = 6,
    RcNonConvergence = 7,
    RcNumeric = 8,
    RcBufferTooSmall = 9,
    RcPanic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcRiskKind {
    RcExpectation = 0,
    RcExpectedExcess = 1,
    RcUpperSemideviation = 2,
}

/// Risk functional selector. `kind` takes an `rc_risk_kind` value; `eta`
/// is read only for the expected excess.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RcRisk {
    pub kind: u32,
    pub eta: f64,
}

fn risk_spec(r: RcRisk) -> Result<RiskSpec, Fail> {
    match r.kind {
        k if k == RcRiskKind::RcExpectation as u32 => Ok(RiskSpec::Expectation),
        k if k == RcRiskKind::RcExpectedExcess as u32 => Ok(RiskSpec::ExpectedExcess { eta: r.eta }),
        k if k == RcRiskKind::RcUpperSemideviation as u32 => Ok(RiskSpec::UpperSemideviation),
        k => Err(Fail(RcStatus::RcInvalidInput, format!("unknown risk kind {k}"))),
    }
}

/// Dual vertices of a recourse matrix.
pub struct RcFan(DualVertexFan);

/// A probability measure prepared for integration.
pub struct RcMeasure {
    measure: Measure,
    quad: Quadrature,
}

/// A parsed two-stage problem.
pub struct RcProblem(TwoStageProblem);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(RcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Dimension(_) | Error::OracleDimension(_) => RcStatus::RcDimension,
            Error::InvalidInput(_) | Error::InsufficientData(_) => RcStatus::RcInvalidInput,
            Error::Assumption { .. } | Error::ConeDegenerate(_) => RcStatus::RcAssumption,
            Error::Infeasible(_) => RcStatus::RcInfeasible,
            Error::Unbounded(_) => RcStatus::RcUnbounded,
            Error::NonConvergence { .. } => RcStatus::RcNonConvergence,
            Error::Numeric(_) => RcStatus::RcNumeric,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RcStatus::RcNullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RcStatus::RcOk
        }
        Ok(Err(Fail(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic");
            RcStatus::RcPanic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a live handle of type `T`.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    // SAFETY: non-null and caller-provided for writing.
    unsafe { out.write(v) };
    Ok(())
}

fn write_buf(out: *mut f64, cap: usize, v: &[f64]) -> Result<(), Fail> {
    if v.len() > cap {
        return Err(Fail(
            RcStatus::RcBufferTooSmall,
            format!("buffer holds {cap} values, need {}", v.len()),
        ));
    }
    if v.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    // SAFETY: non-null with room for `cap >= v.len()` values.
    unsafe { ptr::copy_nonoverlapping(v.as_ptr(), out, v.len()) };
    Ok(())
}

/// Message of the last failed call on this thread (empty after a success).
/// The pointer stays valid until the next `rc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Enumerates the dual vertices of `W` (`s × m`, row-major) and `q` (length `m`).
///
/// # Safety
/// `w` must hold `s*m` values, `q` must hold `m`, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_new(
    w: *const f64,
    s: usize,
    m: usize,
    q: *const f64,
    out: *mut *mut RcFan,
) -> RcStatus {
    guard(|| {
        let w = slice(w, s * m, "W")?;
        let q = slice(q, m, "q")?;
        let rd = RecourseData::new(DenseMatrix::from_row_major(s, m, w.to_vec())?, q.to_vec())?;
        let fan = enumerate_dual_vertices(&rd)?;
        write_out(out, Box::into_raw(Box::new(RcFan(fan))))
    })
}

/// # Safety
/// `fan` must be null or a handle from [`rc_fan_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_free(fan: *mut RcFan) {
    if !fan.is_null() {
        drop(Box::from_raw(fan));
    }
}

/// # Safety
/// `fan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_num_vertices(fan: *const RcFan, out: *mut usize) -> RcStatus {
    guard(|| write_out(out, handle(fan, "fan")?.0.len()))
}

/// # Safety
/// `fan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_dim(fan: *const RcFan, out: *mut usize) -> RcStatus {
    guard(|| write_out(out, handle(fan, "fan")?.0.dim))
}

/// Copies vertex `i` into `out` (capacity `cap`).
///
/// # Safety
/// `fan` must be a live handle; `out` must have room for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_vertex(fan: *const RcFan, i: usize, out: *mut f64, cap: usize) -> RcStatus {
    guard(|| {
        let f = &handle(fan, "fan")?.0;
        let v = f
            .vertices
            .get(i)
            .ok_or_else(|| Fail(RcStatus::RcInvalidInput, format!("vertex index {i} out of range")))?;
        write_buf(out, cap, v)
    })
}

/// `φ(t) = max_i d_iᵀt`.
///
/// # Safety
/// `fan` must be a live handle; `t` must hold `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_fan_phi(fan: *const RcFan, t: *const f64, len: usize, out: *mut f64) -> RcStatus {
    guard(|| {
        let f = &handle(fan, "fan")?.0;
        let t = slice(t, len, "t")?;
        if len != f.dim {
            return Err(Error::Dimension(format!("t has {len} entries, fan dimension {}", f.dim)).into());
        }
        write_out(out, f.phi(t))
    })
}

/// Discrete measure with `n` atoms in dimension `dim` (atoms row-major).
///
/// # Safety
/// `atoms` must hold `n*dim` values, `weights` `n`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_measure_discrete(
    atoms: *const f64,
    weights: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut RcMeasure,
) -> RcStatus {
    guard(|| {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()).into());
        }
        let a = slice(atoms, n * dim, "atoms")?;
        let w = slice(weights, n, "weights")?;
        let d = DiscreteMeasure::new(a.chunks(dim).map(<[f64]>::to_vec).collect(), w.to_vec())?;
        let measure = Measure::Discrete(d);
        let quad = Quadrature::new(&measure, None)?;
        write_out(out, Box::into_raw(Box::new(RcMeasure { measure, quad })))
    })
}

/// Uniform density on the box `[lo, hi]`. `resolution` cells per axis are
/// used for integration; `0` requests exact integration (dimension 1 only).
///
/// # Safety
/// `lo` and `hi` must hold `dim` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_measure_uniform_box(
    lo: *const f64,
    hi: *const f64,
    dim: usize,
    resolution: usize,
    out: *mut *mut RcMeasure,
) -> RcStatus {
    guard(|| {
        let lo = slice(lo, dim, "lo")?;
        let hi = slice(hi, dim, "hi")?;
        let measure = Measure::UniformBox(BoxDensityMeasure::new(lo.to_vec(), hi.to_vec())?);
        let quad = Quadrature::new(&measure, (resolution > 0).then_some(resolution))?;
        write_out(out, Box::into_raw(Box::new(RcMeasure { measure, quad })))
    })
}

/// # Safety
/// `m` must be null or a live measure handle.
#[no_mangle]
pub unsafe extern "C" fn rc_measure_free(m: *mut RcMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Value of the selected risk functional at `x` (length `len`).
///
/// # Safety
/// Handles must be live; `x` must hold `len` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_eval_q(
    fan: *const RcFan,
    measure: *const RcMeasure,
    risk: RcRisk,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> RcStatus {
    guard(|| {
        let f = &handle(fan, "fan")?.0;
        let m = handle(measure, "measure")?;
        let x = slice(x, len, "x")?;
        write_out(out, risk::eval_q(f, &m.quad, risk_spec(risk)?, x)?)
    })
}

/// Gradient of the selected risk functional at `x`, written to `grad` (length `len`).
///
/// # Safety
/// Handles must be live; `x` and `grad` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn rc_grad_q(
    fan: *const RcFan,
    measure: *const RcMeasure,
    risk: RcRisk,
    x: *const f64,
    len: usize,
    grad: *mut f64,
) -> RcStatus {
    guard(|| {
        let f = &handle(fan, "fan")?.0;
        let m = handle(measure, "measure")?;
        let x = slice(x, len, "x")?;
        let g = risk::grad_q(f, &m.quad, risk_spec(risk)?, x)?;
        write_buf(grad, len, &g)
    })
}

/// L1-Wasserstein distance between two discrete measures.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_wasserstein1(a: *const RcMeasure, b: *const RcMeasure, out: *mut f64) -> RcStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        match (&a.measure, &b.measure) {
            (Measure::Discrete(x), Measure::Discrete(y)) => write_out(out, measures::wasserstein1(x, y)?),
            _ => Err(Error::InvalidInput("wasserstein1 needs discrete measures".into()).into()),
        }
    })
}

/// Parses a two-stage problem from a NUL-terminated JSON string.
///
/// # Safety
/// `json` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_from_json(json: *const c_char, out: *mut *mut RcProblem) -> RcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(RcStatus::RcInvalidInput, format!("json is not UTF-8: {e}")))?;
        let p: TwoStageProblem =
            serde_json::from_str(text).map_err(|e| Fail(RcStatus::RcInvalidInput, format!("problem json: {e}")))?;
        p.validate()?;
        write_out(out, Box::into_raw(Box::new(RcProblem(p))))
    })
}

/// # Safety
/// `p` must be null or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_free(p: *mut RcProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of first-stage variables.
///
/// # Safety
/// `p` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_num_vars(p: *const RcProblem, out: *mut usize) -> RcStatus {
    guard(|| write_out(out, handle(p, "problem")?.0.first_stage.n()))
}

/// Solves the problem. `tol` is the gap target of the subgradient path
/// (`<= 0` selects the default); `resolution` is used for box densities
/// (`0` for none). The minimizer goes to `x` (capacity `cap`).
///
/// # Safety
/// `p` must be a live handle; `x` must have room for `cap` values; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_problem_solve(
    p: *const RcProblem,
    tol: f64,
    resolution: usize,
    x: *mut f64,
    cap: usize,
    value: *mut f64,
) -> RcStatus {
    guard(|| {
        let p = &handle(p, "problem")?.0;
        let mut opts = SolveOptions {
            resolution: (resolution > 0).then_some(resolution),
            ..Default::default()
        };
        if tol > 0.0 {
            opts.tol = tol;
        }
        let r = solve_two_stage(p, &opts)?;
        write_buf(x, cap, &r.x)?;
        write_out(value, r.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        let f: Fail = Error::Unbounded("x".into()).into();
        assert_eq!(f.0, RcStatus::RcUnbounded);
        let f: Fail = Error::Assumption {
            assumption: "A1",
            detail: "d".into(),
        }
        .into();
        assert_eq!(f.0, RcStatus::RcAssumption);
    }

    #[test]
    fn panics_are_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RcStatus::RcPanic);
        let msg = unsafe { CStr::from_ptr(rc_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
