//! C interface to `homlab`.
//!
//! Every function returns an [`HlStatus`]; on failure the message is kept
//! per thread and can be read with [`hl_last_error`]. Objects are opaque
//! handles released with their matching `*_free` function. Panics never
//! cross the boundary; they surface as `HL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use homlab::cell::{solve_cell_1d, solve_cell_2d};
use homlab::coefficients::{parse_coefficient, reperiodize, Mat, MultiscaleCoefficient};
use homlab::diophantine::simultaneous_approx;
use homlab::elliptic::{solve_dirichlet, Domain, Forcing, Scalar, SolveOptions};
use homlab::grid::GridField;
use homlab::coefficients::FieldExpr;
use homlab::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    CapExceeded = 3,
    NoApproximation = 4,
    DimensionMismatch = 5,
    Parse = 6,
    NonElliptic = 7,
    NoConvergence = 8,
    UnresolvedScale = 9,
    BufferTooSmall = 10,
    Other = 11,
    Panic = 12,
}

impl From<&Error> for HlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::DegenerateMatrix | Error::WindowEmpty { .. } => HlStatus::InvalidInput,
            Error::CapExceeded { .. } => HlStatus::CapExceeded,
            Error::NoApproximation { .. } => HlStatus::NoApproximation,
            Error::DimensionMismatch { .. } => HlStatus::DimensionMismatch,
            Error::Parse { .. } | Error::Config { .. } => HlStatus::Parse,
            Error::NonElliptic { .. } => HlStatus::NonElliptic,
            Error::NoConvergence { .. } => HlStatus::NoConvergence,
            Error::UnresolvedScale { .. } => HlStatus::UnresolvedScale,
            _ => HlStatus::Other,
        }
    }
}

/// Opaque multiscale coefficient.
pub struct HlCoefficient(MultiscaleCoefficient);

/// Opaque grid field.
pub struct HlField(GridField);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|b| *b != 0));
    });
}

enum Fail {
    Status(HlStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(HlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            HlStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic");
            HlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Status(HlStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn write_mat(m: &Mat, out: &mut [f64]) {
    out[0] = m[(0, 0)];
    out[1] = m[(0, 1)];
    out[2] = m[(1, 0)];
    out[3] = m[(1, 1)];
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns its full length in bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn hl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Simultaneous approximation of `alpha[0..m]` with separation target `big_q`.
/// Writes `q`, the numerators `p[0..m]` and residuals `gamma[0..m]`.
///
/// # Safety
/// `alpha`, `p` and `gamma` must hold `m` elements; `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_simultaneous_approx(
    alpha: *const f64,
    m: usize,
    big_q: f64,
    cap: u64,
    q: *mut u64,
    p: *mut i64,
    gamma: *mut f64,
) -> HlStatus {
    guard(|| {
        let alpha = slice_arg(alpha, m, "alpha")?;
        if q.is_null() {
            return Err(null("q"));
        }
        let p = out_slice(p, m, "p")?;
        let gamma = out_slice(gamma, m, "gamma")?;
        let a = simultaneous_approx(alpha, big_q, cap)?;
        *q = a.q;
        p.copy_from_slice(&a.p);
        gamma.copy_from_slice(&a.gamma);
        Ok(())
    })
}

/// Parses a coefficient expression with `n_scales` scales (nonincreasing).
///
/// # Safety
/// `expr` must be a NUL-terminated string, `scales` must hold `n_scales`
/// values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_parse(
    expr: *const c_char,
    dim: usize,
    scales: *const f64,
    n_scales: usize,
    lambda: f64,
    out: *mut *mut HlCoefficient,
) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let expr = str_arg(expr, "expr")?;
        let scales = slice_arg(scales, n_scales, "scales")?;
        let c = MultiscaleCoefficient::from_expr(expr, dim, scales.to_vec(), lambda)?;
        *out = Box::into_raw(Box::new(HlCoefficient(c)));
        Ok(())
    })
}

/// Releases a coefficient; null is ignored.
///
/// # Safety
/// `c` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_free(c: *mut HlCoefficient) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Spatial dimension, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_dim(c: *const HlCoefficient) -> usize {
    c.as_ref().map_or(0, |c| c.0.dim())
}

/// Number of scales, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_num_scales(c: *const HlCoefficient) -> usize {
    c.as_ref().map_or(0, |c| c.0.scales.len())
}

/// Copies the scales into `out[0..len]`.
///
/// # Safety
/// `c` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_scales(c: *const HlCoefficient, out: *mut f64, len: usize) -> HlStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("coefficient"))?;
        let n = c.0.scales.len();
        if len < n {
            return Err(Fail::Status(HlStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        out_slice(out, n, "out")?.copy_from_slice(&c.0.scales);
        Ok(())
    })
}

/// Evaluates the coefficient at `x[0..dim]`; writes the row-major 2x2
/// matrix to `out[0..4]` (only `out[0]` is meaningful in one dimension).
///
/// # Safety
/// `c` must be a live handle, `x` must hold `dim` values, `out` four.
#[no_mangle]
pub unsafe extern "C" fn hl_coefficient_eval(c: *const HlCoefficient, x: *const f64, out: *mut f64) -> HlStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("coefficient"))?;
        let x = slice_arg(x, c.0.dim(), "x")?;
        let out = out_slice(out, 4, "out")?;
        write_mat(&c.0.eval(x), out);
        Ok(())
    })
}

/// Reperiodizes `c` at separation target `big_q`; the rewritten coefficient
/// is stored in `out` and its denominator in `q`.
///
/// # Safety
/// `c` must be a live handle; `out` and `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_reperiodize(c: *const HlCoefficient, big_q: f64, out: *mut *mut HlCoefficient, q: *mut u64) -> HlStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("coefficient"))?;
        if out.is_null() || q.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let r = reperiodize(&c.0, big_q)?;
        *q = r.approx.q;
        *out = Box::into_raw(Box::new(HlCoefficient(r.sharp)));
        Ok(())
    })
}

/// Solves the periodic cell problem for a one-slot kernel `expr` in `y1`
/// and writes the row-major effective matrix to `out[0..4]`.
///
/// # Safety
/// `expr` must be NUL-terminated and `out` must hold four values.
#[no_mangle]
pub unsafe extern "C" fn hl_cell_solve(expr: *const c_char, dim: usize, cells: usize, out: *mut f64) -> HlStatus {
    guard(|| {
        let text = str_arg(expr, "expr")?;
        let out = out_slice(out, 4, "out")?;
        let e = parse_coefficient(text, dim)?;
        if e.n_slots() > 1 {
            return Err(Fail::Status(HlStatus::InvalidInput, "cell kernels have one slot `y1`".into()));
        }
        let origin = [0.0; 2];
        let eff = if dim == 1 {
            solve_cell_1d(&|y: f64| e.eval_scalar(&origin[..1], &[y]), cells)?.1
        } else {
            let a = |y: &[f64]| {
                let mut m = [[0.0; 2]; 2];
                e.eval_entries(&origin, y, &mut m);
                Mat::new(m[0][0], m[0][1], m[1][0], m[1][1])
            };
            solve_cell_2d(&a, cells)?.1
        };
        write_mat(&eff.value, out);
        Ok(())
    })
}

/// Solves `-div(A grad u) = F` on the unit interval or square with `u = g`
/// on the boundary; `big_f` and `boundary` are expressions in `x` or null
/// for zero. The nodal solution is stored in `out`.
///
/// # Safety
/// `c` must be a live handle, the strings null or NUL-terminated, and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_dirichlet(
    c: *const HlCoefficient,
    cells: usize,
    big_f: *const c_char,
    boundary: *const c_char,
    out: *mut *mut HlField,
) -> HlStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("coefficient"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let d = c.0.dim();
        let scalar = |s: Option<&str>| -> Result<Scalar, Fail> {
            Ok(match s {
                None => Scalar::Zero,
                Some(t) => Scalar::expr(FieldExpr::parse(t, d)?),
            })
        };
        let forcing = Forcing {
            big_f: scalar(opt_str_arg(big_f, "F")?)?,
            boundary: scalar(opt_str_arg(boundary, "boundary")?)?,
            ..Default::default()
        };
        let sol = solve_dirichlet(&c.0, &Domain::unit(d), &forcing, &SolveOptions::new(cells))?;
        *out = Box::into_raw(Box::new(HlField(sol.u)));
        Ok(())
    })
}

/// Number of stored values (points times components), or 0 for null.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_field_len(f: *const HlField) -> usize {
    f.as_ref().map_or(0, |f| f.0.values.len())
}

/// Points per axis, or 0 for null.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_field_per_side(f: *const HlField) -> usize {
    f.as_ref().map_or(0, |f| f.0.per_side())
}

/// Copies the values (axis 0 fastest, components interleaved) into
/// `out[0..len]`.
///
/// # Safety
/// `f` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn hl_field_values(f: *const HlField, out: *mut f64, len: usize) -> HlStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("field"))?;
        let n = f.0.values.len();
        if len < n {
            return Err(Fail::Status(HlStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        out_slice(out, n, "out")?.copy_from_slice(&f.0.values);
        Ok(())
    })
}

/// Releases a field; null is ignored.
///
/// # Safety
/// `f` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_field_free(f: *mut HlField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
