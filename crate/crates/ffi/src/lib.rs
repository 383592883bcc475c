//! C ABI for the mudkit whitening operators.
//!
//! Matrices cross the boundary as opaque `MudkitMatrix` handles holding
//! row-major `double` data. Every fallible call returns a `MudkitStatus`;
//! on failure a message is available from `mudkit_last_error_message` on
//! the same thread. Panics are caught and reported as `MUDKIT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mudkit::whitening::{self, WhitenConfig, WhitenReport};
use mudkit::{Error, FlopConvention, Matrix};

/// Opaque matrix handle. Create with `mudkit_matrix_new` or
/// `mudkit_matrix_from_data`, release with `mudkit_matrix_free`.
pub struct MudkitMatrix {
    inner: Matrix,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MudkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Not SPD, singular factor, rank deficient or an iteration limit.
    Numerical = 4,
    Panic = 5,
}

/// Optional diagnostics filled in by the whitening calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MudkitWhitenStats {
    /// `‖QQᵀ - I‖_F` along the smaller dimension.
    pub ortho_residual: f64,
    /// Multiply-add count times two, excluding reductions.
    pub flops: u64,
    pub wall_seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> MudkitStatus {
    match err {
        Error::DimensionMismatch { .. } => MudkitStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::DuplicateName(_) => MudkitStatus::InvalidArgument,
        _ => MudkitStatus::Numerical,
    }
}

fn fail(status: MudkitStatus, msg: &str) -> MudkitStatus {
    set_last_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), MudkitStatus>) -> MudkitStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MudkitStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(MudkitStatus::Panic, &format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: mudkit::Result<T>) -> Result<T, MudkitStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn matrix_ref<'a>(m: *const MudkitMatrix, what: &str) -> Result<&'a Matrix, MudkitStatus> {
    m.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(MudkitStatus::NullPointer, &format!("{what} is null")))
}

fn check_out<T>(out: *mut T, what: &str) -> Result<(), MudkitStatus> {
    if out.is_null() {
        Err(fail(MudkitStatus::NullPointer, &format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn emit(out: *mut *mut MudkitMatrix, m: Matrix) {
    *out = Box::into_raw(Box::new(MudkitMatrix { inner: m }));
}

unsafe fn emit_report(
    out: *mut *mut MudkitMatrix,
    stats: *mut MudkitWhitenStats,
    r: WhitenReport,
) {
    if let Some(s) = stats.as_mut() {
        *s = MudkitWhitenStats {
            ortho_residual: r.ortho_residual,
            flops: r.ledger.total(FlopConvention::Table),
            wall_seconds: r.wall_seconds,
        };
    }
    emit(out, r.output);
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next mudkit call on this thread.
#[no_mangle]
pub extern "C" fn mudkit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mudkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Zero matrix of the given shape. Both dimensions must be positive.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_new(
    rows: usize,
    cols: usize,
    out: *mut *mut MudkitMatrix,
) -> MudkitStatus {
    guard(|| {
        check_out(out, "out")?;
        if rows == 0 || cols == 0 {
            return Err(fail(MudkitStatus::InvalidArgument, "rows and cols must be positive"));
        }
        emit(out, Matrix::zeros(rows, cols));
        Ok(())
    })
}

/// Matrix copied from `len = rows * cols` row-major values.
///
/// # Safety
/// `data` must point to `len` readable doubles and `out` to writable
/// storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_from_data(
    rows: usize,
    cols: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut MudkitMatrix,
) -> MudkitStatus {
    guard(|| {
        check_out(out, "out")?;
        check_out(data.cast_mut(), "data")?;
        if rows == 0 || cols == 0 {
            return Err(fail(MudkitStatus::InvalidArgument, "rows and cols must be positive"));
        }
        if rows.checked_mul(cols) != Some(len) {
            return Err(fail(
                MudkitStatus::DimensionMismatch,
                &format!("{rows}x{cols} matrix needs {} values, got {len}", rows.saturating_mul(cols)),
            ));
        }
        let values = std::slice::from_raw_parts(data, len).to_vec();
        emit(out, lift(Matrix::from_vec(rows, cols, values))?);
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_free(m: *mut MudkitMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_rows(m: *const MudkitMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.rows())
}

/// Column count, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_cols(m: *const MudkitMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.cols())
}

/// Copy the row-major values into `dst`, which must hold exactly
/// `rows * cols` doubles.
///
/// # Safety
/// `m` must be a live handle and `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mudkit_matrix_copy_data(
    m: *const MudkitMatrix,
    dst: *mut f64,
    len: usize,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(dst, "dst")?;
        let src = a.as_slice();
        if src.len() != len {
            return Err(fail(
                MudkitStatus::DimensionMismatch,
                &format!("buffer holds {len} values, matrix has {}", src.len()),
            ));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
        Ok(())
    })
}

/// MUD whitening with `passes` rounds and row-norm floor `eps`.
///
/// # Safety
/// `m` must be a live handle, `out` writable, `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mudkit_whiten_mud(
    m: *const MudkitMatrix,
    passes: usize,
    eps: f64,
    out: *mut *mut MudkitMatrix,
    stats: *mut MudkitWhitenStats,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(out, "out")?;
        let cfg = WhitenConfig {
            passes,
            eps,
            ..WhitenConfig::default()
        };
        emit_report(out, stats, lift(whitening::mud_whiten(a, &cfg))?);
        Ok(())
    })
}

/// Muon Newton-Schulz orthogonalization with `iters` quintic steps.
///
/// # Safety
/// `m` must be a live handle, `out` writable, `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mudkit_whiten_muon(
    m: *const MudkitMatrix,
    iters: usize,
    out: *mut *mut MudkitMatrix,
    stats: *mut MudkitWhitenStats,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(out, "out")?;
        let cfg = WhitenConfig::with_ns_iters(iters);
        emit_report(out, stats, lift(whitening::muon_ns(a, &cfg))?);
        Ok(())
    })
}

/// Exact polar factor from a thin SVD. Fails on rank-deficient input.
///
/// # Safety
/// `m` must be a live handle, `out` writable, `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mudkit_whiten_polar(
    m: *const MudkitMatrix,
    out: *mut *mut MudkitMatrix,
    stats: *mut MudkitWhitenStats,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(out, "out")?;
        emit_report(out, stats, lift(whitening::polar_exact(a))?);
        Ok(())
    })
}

/// CholeskyQR whitening. Fails when the Gram matrix is not numerically SPD.
///
/// # Safety
/// `m` must be a live handle, `out` writable, `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mudkit_whiten_cholqr(
    m: *const MudkitMatrix,
    out: *mut *mut MudkitMatrix,
    stats: *mut MudkitWhitenStats,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(out, "out")?;
        emit_report(out, stats, lift(whitening::cholqr_whiten(a))?);
        Ok(())
    })
}

/// One step of the MUD map on a unit-diagonal SPD Gram matrix.
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mudkit_gram_map(
    g: *const MudkitMatrix,
    out: *mut *mut MudkitMatrix,
) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(g, "matrix")?;
        check_out(out, "out")?;
        emit(out, lift(whitening::gram_map(a))?);
        Ok(())
    })
}

/// `‖QQᵀ - I‖_F` along the smaller dimension of `m`.
///
/// # Safety
/// `m` must be a live handle and `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn mudkit_ortho_residual(m: *const MudkitMatrix, out: *mut f64) -> MudkitStatus {
    guard(|| {
        let a = matrix_ref(m, "matrix")?;
        check_out(out, "out")?;
        ptr::write(out, whitening::ortho_residual(a));
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, MudkitStatus::Panic);
        let msg = unsafe { CStr::from_ptr(mudkit_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
        assert_eq!(guard(|| Ok(())), MudkitStatus::Ok);
        let msg = unsafe { CStr::from_ptr(mudkit_last_error_message()) };
        assert!(msg.to_bytes().is_empty());
    }

    #[test]
    fn error_classes() {
        let dim = Error::DimensionMismatch { op: "x", left: (1, 2), right: (3, 4) };
        assert_eq!(status_of(&dim), MudkitStatus::DimensionMismatch);
        assert_eq!(status_of(&Error::NotSpd { pivot: 0, value: -1.0 }), MudkitStatus::Numerical);
        assert_eq!(status_of(&Error::RankDeficient { ratio: 0.0 }), MudkitStatus::Numerical);
        assert_eq!(status_of(&Error::InvalidArgument("x".into())), MudkitStatus::InvalidArgument);
    }
}
