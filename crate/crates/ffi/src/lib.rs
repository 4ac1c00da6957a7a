//! C ABI over `koopman-laplace`.
//!
//! Objects cross the boundary as opaque handles created by `kl_*` constructors
//! and released with the matching `kl_*_free`. Every fallible call returns a
//! [`KlStatus`]; on failure [`kl_last_error_message`] describes the cause.
//! Matrices are dense row-major `double` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use koopman_laplace::dynsys::{self, DynSystem, Signal, Trajectory};
use koopman_laplace::limit_cycle::LimitCycleInfo;
use koopman_laplace::modes;
use koopman_laplace::resolvent::{self, PoleResidueSet};
use koopman_laplace::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    BufferTooSmall = 4,
    StepSizeUnderflow = 10,
    NonFinite = 11,
    MissingJacobian = 12,
    NoLimitCycle = 13,
    NonConvergence = 14,
    PhaseBlind = 15,
    DegenerateFit = 16,
    RocViolation = 17,
    Singular = 18,
    Aliasing = 19,
    Numeric = 20,
    Config = 21,
    Io = 22,
    Panic = 99,
}

/// A dynamical system `ẋ = F(x)`.
pub struct KlSystem {
    inner: DynSystem,
}

/// Uniformly sampled trajectory.
pub struct KlTrajectory {
    inner: Trajectory,
}

/// Located limit cycle with its Floquet data.
pub struct KlLimitCycle {
    inner: LimitCycleInfo,
}

/// Poles and residues of a truncated Laplace-domain expansion.
pub struct KlPoleSet {
    inner: PoleResidueSet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Buffer { need: usize, cap: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn status_of(e: &Error) -> KlStatus {
    match e {
        Error::InvalidInput(_) => KlStatus::InvalidInput,
        Error::DimensionMismatch { .. } => KlStatus::DimensionMismatch,
        Error::StepSizeUnderflow { .. } => KlStatus::StepSizeUnderflow,
        Error::NonFinite { .. } => KlStatus::NonFinite,
        Error::MissingJacobian => KlStatus::MissingJacobian,
        Error::NoLimitCycle(_) => KlStatus::NoLimitCycle,
        Error::NonConvergence { .. } => KlStatus::NonConvergence,
        Error::PhaseBlind { .. } => KlStatus::PhaseBlind,
        Error::DegenerateFit(_) => KlStatus::DegenerateFit,
        Error::RocViolation { .. } => KlStatus::RocViolation,
        Error::Singular(_) => KlStatus::Singular,
        Error::Aliasing(_) => KlStatus::Aliasing,
        Error::Numeric(_) => KlStatus::Numeric,
        Error::Config(_) => KlStatus::Config,
        Error::Io(_) => KlStatus::Io,
    }
}

fn set_last_error(msg: String) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KlStatus {
    set_last_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KlStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            KlStatus::NullPointer
        }
        Ok(Err(Fail::Buffer { need, cap })) => {
            set_last_error(format!("buffer holds {cap} values, {need} needed"));
            KlStatus::BufferTooSmall
        }
        Err(_) => {
            set_last_error("internal panic".into());
            KlStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, cap: usize, need: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if need > cap {
        return Err(Fail::Buffer { need, cap });
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    put(out, Box::into_raw(Box::new(value)), "out")
}

unsafe fn square(a: *const f64, n: usize) -> Result<DMatrix<f64>, Fail> {
    Ok(DMatrix::from_row_slice(n, n, slice_in(a, n * n, "a")?))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kl_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Message for the most recent failure on this thread; empty after a success.
/// Valid until the next `kl_*` call on the same thread.
#[no_mangle]
pub extern "C" fn kl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Van der Pol oscillator with parameter `eps`.
#[no_mangle]
pub unsafe extern "C" fn kl_system_vdp(eps: f64, out: *mut *mut KlSystem) -> KlStatus {
    guard(|| {
        if !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be finite, got {eps}")).into());
        }
        put_handle(out, KlSystem { inner: dynsys::builtin_vdp(eps) })
    })
}

/// Two coupled van der Pol oscillators in state order `(x, ẋ, y, ẏ)`.
#[no_mangle]
pub unsafe extern "C" fn kl_system_coupled_vdp(eps: f64, kx: f64, ky: f64, kc: f64, out: *mut *mut KlSystem) -> KlStatus {
    guard(|| {
        if ![eps, kx, ky, kc].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()).into());
        }
        put_handle(out, KlSystem { inner: dynsys::builtin_coupled_vdp(eps, kx, ky, kc) })
    })
}

/// Linear system `ẋ = A x` with `A` given as an `n × n` row-major array.
#[no_mangle]
pub unsafe extern "C" fn kl_system_linear(a: *const f64, n: usize, out: *mut *mut KlSystem) -> KlStatus {
    guard(|| {
        let a = square(a, n)?;
        put_handle(out, KlSystem { inner: dynsys::builtin_linear(&a)? })
    })
}

/// `ẋ₁ = λ₁x₁`, `ẋ₂ = λ₂x₂ + x₁²`.
#[no_mangle]
pub unsafe extern "C" fn kl_system_quadratic_equilibrium(lambda1: f64, lambda2: f64, out: *mut *mut KlSystem) -> KlStatus {
    guard(|| put_handle(out, KlSystem { inner: dynsys::builtin_quadratic_equilibrium(lambda1, lambda2)? }))
}

/// State dimension, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kl_system_dim(sys: *const KlSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.inner.dim())
}

#[no_mangle]
pub unsafe extern "C" fn kl_system_free(sys: *mut KlSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Integrates from `x0` (length `n`) to `t_end`, sampled every `dt`.
#[no_mangle]
pub unsafe extern "C" fn kl_integrate(
    sys: *const KlSystem,
    x0: *const f64,
    n: usize,
    t_end: f64,
    dt: f64,
    tol: f64,
    out: *mut *mut KlTrajectory,
) -> KlStatus {
    guard(|| {
        let sys = handle(sys, "sys")?;
        let x0 = slice_in(x0, n, "x0")?;
        put_handle(out, KlTrajectory { inner: dynsys::integrate(&sys.inner, x0, t_end, dt, tol)? })
    })
}

/// Number of samples, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kl_trajectory_len(traj: *const KlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn kl_trajectory_dim(traj: *const KlTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.dim())
}

#[no_mangle]
pub unsafe extern "C" fn kl_trajectory_dt(traj: *const KlTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.inner.dt())
}

/// Copies the states into `buf` as a `len × dim` row-major array.
#[no_mangle]
pub unsafe extern "C" fn kl_trajectory_states(traj: *const KlTrajectory, buf: *mut f64, cap: usize) -> KlStatus {
    guard(|| {
        let flat = handle(traj, "traj")?.inner.as_flat();
        slice_out(buf, cap, flat.len(), "buf")?.copy_from_slice(flat);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn kl_trajectory_free(traj: *mut KlTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Settles from `x0` for `t_settle`, then measures period and Floquet data.
#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_locate(
    sys: *const KlSystem,
    x0: *const f64,
    n: usize,
    t_settle: f64,
    tol: f64,
    out: *mut *mut KlLimitCycle,
) -> KlStatus {
    guard(|| {
        let sys = handle(sys, "sys")?;
        let x0 = slice_in(x0, n, "x0")?;
        put_handle(out, KlLimitCycle { inner: LimitCycleInfo::locate(&sys.inner, x0, t_settle, tol)? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_period(lc: *const KlLimitCycle, out: *mut f64) -> KlStatus {
    guard(|| put(out, handle(lc, "lc")?.inner.period, "out"))
}

#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_omega(lc: *const KlLimitCycle, out: *mut f64) -> KlStatus {
    guard(|| put(out, handle(lc, "lc")?.inner.omega, "out"))
}

#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_trivial_multiplier(lc: *const KlLimitCycle, re: *mut f64, im: *mut f64) -> KlStatus {
    guard(|| {
        let m = handle(lc, "lc")?.inner.trivial_multiplier;
        put(re, m.re, "re")?;
        put(im, m.im, "im")
    })
}

/// Number of non-trivial Floquet exponents, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_exponent_count(lc: *const KlLimitCycle) -> usize {
    lc.as_ref().map_or(0, |l| l.inner.exponents.len())
}

/// Non-trivial exponents `ln μ / T`, slowest decay first.
#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_exponents(lc: *const KlLimitCycle, re: *mut f64, im: *mut f64, cap: usize) -> KlStatus {
    guard(|| {
        let ex = &handle(lc, "lc")?.inner.exponents;
        let re = slice_out(re, cap, ex.len(), "re")?;
        let im = slice_out(im, cap, ex.len(), "im")?;
        for (k, z) in ex.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn kl_limit_cycle_free(lc: *mut KlLimitCycle) {
    if !lc.is_null() {
        drop(Box::from_raw(lc));
    }
}

/// Truncated Laplace transform of a real scalar sequence sampled every `dt`,
/// with the tail bound `max|y| e^{−Re s T}/Re s`.
#[no_mangle]
pub unsafe extern "C" fn kl_laplace_numeric(
    samples: *const f64,
    len: usize,
    dt: f64,
    s_re: f64,
    s_im: f64,
    t_max: f64,
    out_re: *mut f64,
    out_im: *mut f64,
    out_bound: *mut f64,
) -> KlStatus {
    guard(|| {
        let signal = Signal::real(dt, slice_in(samples, len, "samples")?)?;
        let v = resolvent::laplace_numeric(&signal, Complex64::new(s_re, s_im), t_max)?;
        put(out_re, v.value[0].re, "out_re")?;
        put(out_im, v.value[0].im, "out_im")?;
        put(out_bound, v.bound, "out_bound")
    })
}

/// Prony fit of order `order`. `im` may be null for real data.
#[no_mangle]
pub unsafe extern "C" fn kl_prony(
    re: *const f64,
    im: *const f64,
    len: usize,
    dt: f64,
    order: usize,
    out: *mut *mut KlPoleSet,
) -> KlStatus {
    guard(|| {
        let re = slice_in(re, len, "re")?;
        let samples: Vec<Complex64> = if im.is_null() {
            re.iter().map(|&x| Complex64::new(x, 0.0)).collect()
        } else {
            let im = slice_in(im, len, "im")?;
            re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()
        };
        put_handle(out, KlPoleSet { inner: modes::prony(&samples, dt, order)? })
    })
}

/// Eigen-expansion of `cᵀ(sI − A)⁻¹x₀`; `a` is `n × n` row-major.
#[no_mangle]
pub unsafe extern "C" fn kl_linear_expansion(
    a: *const f64,
    n: usize,
    c: *const f64,
    x0: *const f64,
    out: *mut *mut KlPoleSet,
) -> KlStatus {
    guard(|| {
        let a = square(a, n)?;
        let set = resolvent::linear_expansion(&a, slice_in(c, n, "c")?, slice_in(x0, n, "x0")?)?;
        put_handle(out, KlPoleSet { inner: set })
    })
}

/// Number of poles, 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_len(set: *const KlPoleSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.entries.len())
}

/// Number of observable components per residue.
#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_dim(set: *const KlPoleSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.dim())
}

#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_roc_abscissa(set: *const KlPoleSet) -> f64 {
    set.as_ref().map_or(f64::NAN, |s| s.inner.roc_abscissa)
}

#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_pole(set: *const KlPoleSet, k: usize, re: *mut f64, im: *mut f64) -> KlStatus {
    guard(|| {
        let set = &handle(set, "set")?.inner;
        let e = set
            .entries
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("pole index {k} out of range ({})", set.entries.len())))?;
        put(re, e.pole.re, "re")?;
        put(im, e.pole.im, "im")
    })
}

/// Residue vector of pole `k` (length [`kl_pole_set_dim`]).
#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_residue(set: *const KlPoleSet, k: usize, re: *mut f64, im: *mut f64, cap: usize) -> KlStatus {
    guard(|| {
        let set = &handle(set, "set")?.inner;
        let e = set
            .entries
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("pole index {k} out of range ({})", set.entries.len())))?;
        let re = slice_out(re, cap, e.residue.len(), "re")?;
        let im = slice_out(im, cap, e.residue.len(), "im")?;
        for (j, r) in e.residue.iter().enumerate() {
            re[j] = r.re;
            im[j] = r.im;
        }
        Ok(())
    })
}

/// `Σ r_k / (s − s_k)` per component; fails with `ROC_VIOLATION` left of the abscissa.
#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_eval(
    set: *const KlPoleSet,
    s_re: f64,
    s_im: f64,
    re: *mut f64,
    im: *mut f64,
    cap: usize,
) -> KlStatus {
    guard(|| {
        let v = resolvent::expansion_eval(&handle(set, "set")?.inner, Complex64::new(s_re, s_im))?;
        let re = slice_out(re, cap, v.len(), "re")?;
        let im = slice_out(im, cap, v.len(), "im")?;
        for (j, z) in v.iter().enumerate() {
            re[j] = z.re;
            im[j] = z.im;
        }
        Ok(())
    })
}

/// JSON text of the set; release with [`kl_string_free`].
#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_to_json(set: *const KlPoleSet, out: *mut *mut c_char) -> KlStatus {
    guard(|| {
        let text = handle(set, "set")?.inner.to_json()?;
        let c = CString::new(text).map_err(|e| Error::Numeric(e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn kl_pole_set_free(set: *mut KlPoleSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn kl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

