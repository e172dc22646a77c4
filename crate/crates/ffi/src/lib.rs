//! C ABI over `flowtree`.
//!
//! Objects are opaque heap handles created by `ft_*_new`-style constructors
//! and released with the matching `ft_*_free`. Every fallible call returns an
//! [`FtStatus`]; on failure `ft_last_error` describes the error for the
//! calling thread. Strings returned through out-parameters are owned by the
//! caller and must be released with `ft_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use flowtree::numeric::parse_rational;
use flowtree::scenario::{self, Scenario};
use flowtree::trapezoid::{Beta, Window};
use flowtree::weights::{a1_constant, ap_constant, Backend, LevelWeight, Weight};
use flowtree::{FlowError, FlowMeasure, Rational, TruncatedTree, VertexId};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    InvalidArgument = 1,
    TooLarge = 2,
    WindowTooSmall = 3,
    FlowViolation = 4,
    Inapplicable = 5,
    EmptyWindow = 6,
    Numeric = 7,
    Parse = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

pub struct FtTree(Arc<TruncatedTree>);
pub struct FtMeasure(FlowMeasure);
pub struct FtWeight(Weight);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Fail {
    Flow(FlowError),
    Null(&'static str),
}

impl From<FlowError> for Fail {
    fn from(e: FlowError) -> Self {
        Fail::Flow(e)
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail::Flow(FlowError::Json(e))
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &FlowError) -> FtStatus {
    match e {
        FlowError::InvalidArgument(_) => FtStatus::InvalidArgument,
        FlowError::TooLarge { .. } => FtStatus::TooLarge,
        FlowError::WindowTooSmall(_) => FtStatus::WindowTooSmall,
        FlowError::FlowViolation(_) => FtStatus::FlowViolation,
        FlowError::Inapplicable(_) => FtStatus::Inapplicable,
        FlowError::EmptyWindow => FtStatus::EmptyWindow,
        FlowError::Numeric(_) => FtStatus::Numeric,
        FlowError::Parse(_) | FlowError::Json(_) => FtStatus::Parse,
        FlowError::Io(_) => FtStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FtStatus::Ok
        }
        Ok(Err(Fail::Flow(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            FtStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic");
            FtStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn cstr<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Flow(FlowError::Parse(format!("{what} is not UTF-8"))))
}

unsafe fn rationals(vals: *const *const c_char, len: usize) -> Result<Vec<Rational>, Fail> {
    if vals.is_null() {
        return Err(Fail::Null("values"));
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        out.push(parse_rational(cstr(*vals.add(i), "value")?)?);
    }
    Ok(out)
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Slab of the homogeneous tree `T_q` between two levels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_tree_homogeneous_slab(q: u32, level_top: i64, level_bot: i64, out: *mut *mut FtTree) -> FtStatus {
    guard(|| {
        let t = TruncatedTree::homogeneous_slab(q, level_top, level_bot)?;
        put(out, Box::into_raw(Box::new(FtTree(Arc::new(t)))), "out")
    })
}

/// Ball of radius `radius` in `T_q`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_tree_ball(q: u32, radius: u32, out: *mut *mut FtTree) -> FtStatus {
    guard(|| {
        let t = TruncatedTree::ball(q, radius)?;
        put(out, Box::into_raw(Box::new(FtTree(Arc::new(t)))), "out")
    })
}

/// # Safety
/// `tree` must come from a tree constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ft_tree_free(tree: *mut FtTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Number of vertices; 0 for a null handle.
///
/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_tree_len(tree: *const FtTree) -> usize {
    tree.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `tree` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_tree_level(tree: *const FtTree, vertex: u32, out: *mut i64) -> FtStatus {
    guard(|| {
        let t = &get(tree, "tree")?.0;
        t.check(VertexId(vertex))?;
        put(out, t.level(VertexId(vertex)), "out")
    })
}

/// The canonical flow `q^{ℓ − level_bot}` (slabs) or `q^ℓ` (balls).
///
/// # Safety
/// `tree` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_measure_canonical(tree: *const FtTree, out: *mut *mut FtMeasure) -> FtStatus {
    guard(|| {
        let m = FlowMeasure::canonical(get(tree, "tree")?.0.clone())?;
        put(out, Box::into_raw(Box::new(FtMeasure(m))), "out")
    })
}

/// Flow aggregated upward from `len` bottom values given as rational strings.
///
/// # Safety
/// `values` must point to `len` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ft_measure_from_bottom(
    tree: *const FtTree,
    values: *const *const c_char,
    len: usize,
    out: *mut *mut FtMeasure,
) -> FtStatus {
    guard(|| {
        let m = FlowMeasure::from_bottom(get(tree, "tree")?.0.clone(), &rationals(values, len)?)?;
        put(out, Box::into_raw(Box::new(FtMeasure(m))), "out")
    })
}

/// # Safety
/// `m` must come from a measure constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ft_measure_free(m: *mut FtMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `μ(vertex)` as an exact `"p/q"` string.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_measure_value(m: *const FtMeasure, vertex: u32, out: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let m = &get(m, "measure")?.0;
        m.tree().check(VertexId(vertex))?;
        put(out, owned_string(m.value(VertexId(vertex)).to_string()), "out")
    })
}

/// Level weight `W(ℓ) = pattern[ℓ mod len]`.
///
/// # Safety
/// `pattern` must point to `len` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ft_weight_periodic(
    tree: *const FtTree,
    pattern: *const *const c_char,
    len: usize,
    out: *mut *mut FtWeight,
) -> FtStatus {
    guard(|| {
        let t = &get(tree, "tree")?.0;
        let w = Weight::from_level(t, &LevelWeight::periodic(rationals(pattern, len)?)?);
        put(out, Box::into_raw(Box::new(FtWeight(w))), "out")
    })
}

/// Weight with one value per vertex, in construction order.
///
/// # Safety
/// `values` must point to `len` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ft_weight_from_values(
    tree: *const FtTree,
    values: *const *const c_char,
    len: usize,
    out: *mut *mut FtWeight,
) -> FtStatus {
    guard(|| {
        let t = &get(tree, "tree")?.0;
        let w = Weight::from_values(rationals(values, len)?)?;
        w.check_tree(t)?;
        put(out, Box::into_raw(Box::new(FtWeight(w))), "out")
    })
}

/// # Safety
/// `w` must come from a weight constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ft_weight_free(w: *mut FtWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

unsafe fn constant_out(
    c: &flowtree::ConstantValue,
    json: String,
    out_lo: *mut f64,
    out_hi: *mut f64,
    out_json: *mut *mut c_char,
) -> Result<(), Fail> {
    put(out_lo, c.lo(), "out_lo")?;
    put(out_hi, c.hi(), "out_hi")?;
    if !out_json.is_null() {
        out_json.write(owned_string(json));
    }
    Ok(())
}

/// `[w]_{A_p(μ)}` over the full window. The constant lies in `[*out_lo, *out_hi]`
/// (equal bounds when exact). `out_json` may be null; otherwise it receives the report.
///
/// # Safety
/// Handles must be live, `p` NUL-terminated, `out_lo`/`out_hi` valid.
#[no_mangle]
pub unsafe extern "C" fn ft_ap_constant(
    w: *const FtWeight,
    m: *const FtMeasure,
    p: *const c_char,
    beta: u32,
    exact: bool,
    out_lo: *mut f64,
    out_hi: *mut f64,
    out_json: *mut *mut c_char,
) -> FtStatus {
    guard(|| {
        let (w, m) = (&get(w, "weight")?.0, &get(m, "measure")?.0);
        let p = parse_rational(cstr(p, "p")?)?;
        let backend = if exact { Backend::Exact } else { Backend::Float };
        let r = ap_constant(w, m, &Window::full(Beta::new(beta)?), &p, backend)?;
        constant_out(&r.constant, serde_json::to_string(&r)?, out_lo, out_hi, out_json)
    })
}

/// `[w]_{A_1(μ)}` over the full window; outputs as in [`ft_ap_constant`].
///
/// # Safety
/// Handles must be live, `out_lo`/`out_hi` valid.
#[no_mangle]
pub unsafe extern "C" fn ft_a1_constant(
    w: *const FtWeight,
    m: *const FtMeasure,
    beta: u32,
    out_lo: *mut f64,
    out_hi: *mut f64,
    out_json: *mut *mut c_char,
) -> FtStatus {
    guard(|| {
        let (w, m) = (&get(w, "weight")?.0, &get(m, "measure")?.0);
        let r = a1_constant(w, m, &Window::full(Beta::new(beta)?))?;
        constant_out(&r.constant, serde_json::to_string(&r)?, out_lo, out_hi, out_json)
    })
}

/// Runs a scenario given as JSON text. `out_report` may be null.
///
/// # Safety
/// `json` must be NUL-terminated and `out_passed` valid.
#[no_mangle]
pub unsafe extern "C" fn ft_run_scenario(json: *const c_char, out_passed: *mut bool, out_report: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let sc = Scenario::from_json(cstr(json, "json")?)?;
        let out = scenario::execute(&sc)?;
        put(out_passed, out.report.passed, "out_passed")?;
        if !out_report.is_null() {
            out_report.write(owned_string(out.report.to_json()));
        }
        Ok(())
    })
}

/// The full property battery at the given depth. `out_report` may be null.
///
/// # Safety
/// `out_passed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ft_verify(depth: u32, out_passed: *mut bool, out_report: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let out = scenario::verify_all(depth)?;
        put(out_passed, out.report.passed, "out_passed")?;
        if !out_report.is_null() {
            out_report.write(owned_string(out.report.to_json()));
        }
        Ok(())
    })
}
