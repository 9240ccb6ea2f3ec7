//! C ABI over the `ovalflow` solvers.
//!
//! Every function returns an `i32` status (`OVALFLOW_OK` or a negative
//! code) and writes results through out-pointers. Objects are opaque
//! handles released with their `_free` function. The message for the
//! last failure on the calling thread is available from
//! [`ovalflow_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ovalflow::bryant::{asymptotic_summary, solve_bryant, BryantProfile};
use ovalflow::cli::{parse_config, run_in, RunConfig};
use ovalflow::flow::{calibrate_extinction, curvature_and_pic, make_oval_initial_data, OvalParams, ProfileState};
use ovalflow::spectral::SpectralSpace;
use ovalflow::Error;

pub const OVALFLOW_OK: i32 = 0;
pub const OVALFLOW_ERR_NULL: i32 = -1;
pub const OVALFLOW_ERR_PARAM: i32 = -2;
pub const OVALFLOW_ERR_NUMERIC: i32 = -3;
pub const OVALFLOW_ERR_RANGE: i32 = -4;
pub const OVALFLOW_ERR_BUFFER: i32 = -5;
pub const OVALFLOW_ERR_CONFIG: i32 = -6;
pub const OVALFLOW_ERR_IO: i32 = -7;
pub const OVALFLOW_ERR_PANIC: i32 = -8;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Dimension(_) | Error::Param { .. } | Error::Inadmissible(_) => OVALFLOW_ERR_PARAM,
        Error::Range(_) | Error::Grid(_) | Error::HistoryTooShort { .. } => OVALFLOW_ERR_RANGE,
        Error::Config { .. } => OVALFLOW_ERR_CONFIG,
        Error::Io(_) => OVALFLOW_ERR_IO,
        _ => OVALFLOW_ERR_NUMERIC,
    }
}

fn guard(f: impl FnOnce() -> Result<(), i32>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OVALFLOW_OK,
        Ok(Err(code)) => code,
        Err(_) => {
            set_error("panic inside ovalflow");
            OVALFLOW_ERR_PANIC
        }
    }
}

fn lift<T>(r: ovalflow::Result<T>) -> Result<T, i32> {
    r.map_err(|e| {
        set_error(e.to_string());
        code_of(&e)
    })
}

fn null_err(what: &str) -> i32 {
    set_error(format!("null pointer: {what}"));
    OVALFLOW_ERR_NULL
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, i32> {
    p.as_ref().ok_or_else(|| null_err(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, i32> {
    p.as_mut().ok_or_else(|| null_err(what))
}

unsafe fn fill(src: &[f64], dst: *mut f64, cap: usize, what: &str) -> Result<(), i32> {
    if src.len() > cap {
        set_error(format!("{what}: need {} slots, got {cap}", src.len()));
        return Err(OVALFLOW_ERR_BUFFER);
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null_err(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length, or 0
/// when there is none.
///
/// # Safety
/// `buf` must be writable for `len` bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_last_error(buf: *mut c_char, len: usize) -> i32 {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() as i32
    })
}

/// Soliton profile handle.
pub struct OvalflowBryant(BryantProfile);

/// Profile state handle.
pub struct OvalflowProfile(ProfileState);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OvalflowAsymptotics {
    pub r_large: f64,
    pub r2_phi_large: f64,
    pub r2_phi_limit_expected: f64,
    pub k_orb_tip: f64,
    pub k_rad_tip: f64,
    pub scalar_tip: f64,
    pub ode_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OvalflowPic {
    pub uniform_pic: f64,
    pub pic_min: f64,
    pub pic2_min: f64,
    pub r_min: f64,
}

/// Solves the soliton ODE out to `r_max`.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to be
/// released with [`ovalflow_bryant_free`].
#[no_mangle]
pub unsafe extern "C" fn ovalflow_bryant_solve(n: u32, r_max: f64, tol: f64, out: *mut *mut OvalflowBryant) -> i32 {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = lift(solve_bryant(n as usize, r_max, tol))?;
        *out = Box::into_raw(Box::new(OvalflowBryant(p)));
        Ok(())
    })
}

/// `Φ(r)` and `Φ'(r)`.
///
/// # Safety
/// `h` must come from [`ovalflow_bryant_solve`]; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_bryant_eval(h: *const OvalflowBryant, r: f64, phi: *mut f64, dphi: *mut f64) -> i32 {
    guard(|| {
        let p = &deref(h, "handle")?.0;
        let (phi, dphi) = (deref_mut(phi, "phi")?, deref_mut(dphi, "dphi")?);
        let (a, b) = p.eval(r).ok_or_else(|| {
            set_error(format!("r = {r} outside [0, {}]", p.r_max()));
            OVALFLOW_ERR_RANGE
        })?;
        *phi = a;
        *dphi = b;
        Ok(())
    })
}

/// Large-r and tip summary at `r_large`.
///
/// # Safety
/// `h` from [`ovalflow_bryant_solve`]; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_bryant_summary(h: *const OvalflowBryant, r_large: f64, out: *mut OvalflowAsymptotics) -> i32 {
    guard(|| {
        let p = &deref(h, "handle")?.0;
        let out = deref_mut(out, "out")?;
        if !(r_large > 0.0 && r_large <= p.r_max()) {
            set_error(format!("r_large = {r_large} outside (0, {}]", p.r_max()));
            return Err(OVALFLOW_ERR_RANGE);
        }
        let s = asymptotic_summary(p, r_large);
        *out = OvalflowAsymptotics {
            r_large: s.r_large,
            r2_phi_large: s.r2_phi_large,
            r2_phi_limit_expected: s.r2_phi_limit_expected,
            k_orb_tip: s.k_orb_tip,
            k_rad_tip: s.k_rad_tip,
            scalar_tip: s.scalar_tip,
            ode_residual: s.ode_residual,
        };
        Ok(())
    })
}

/// # Safety
/// `h` must be null or come from [`ovalflow_bryant_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_bryant_free(h: *mut OvalflowBryant) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Round cylinder of radius `sqrt(2(n-2)(-t))` on `[-half_width, half_width]`.
///
/// # Safety
/// `out` valid; release the handle with [`ovalflow_profile_free`].
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_cylinder(n: u32, t: f64, half_width: f64, points: u32, out: *mut *mut OvalflowProfile) -> i32 {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let s = lift(ProfileState::cylinder(n as usize, t, half_width, points as usize))?;
        *out = Box::into_raw(Box::new(OvalflowProfile(s)));
        Ok(())
    })
}

/// Approximate oval at `t0 = -exp(log_t0)`; with `calibrate != 0` the
/// clock is shifted so that extinction happens at `t = 0`.
///
/// # Safety
/// `out` valid; release the handle with [`ovalflow_profile_free`].
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_oval(n: u32, log_t0: f64, points: u32, calibrate: i32, out: *mut *mut OvalflowProfile) -> i32 {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = OvalParams { points: points as usize, ..Default::default() };
        let (mut s, _) = lift(make_oval_initial_data(n as usize, -log_t0.exp(), &p))?;
        if calibrate != 0 {
            s = lift(calibrate_extinction(&s, 1e-3))?;
        }
        *out = Box::into_raw(Box::new(OvalflowProfile(s)));
        Ok(())
    })
}

/// Evolves the profile in place to `t_end`.
///
/// # Safety
/// `h` from one of the profile constructors.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_evolve_to(h: *mut OvalflowProfile, t_end: f64, safety: f64) -> i32 {
    guard(|| {
        let s = deref_mut(h, "handle")?;
        s.0 = lift(s.0.evolve_to(t_end, safety))?;
        Ok(())
    })
}

/// Node count and current time.
///
/// # Safety
/// `h` valid; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_info(h: *const OvalflowProfile, len: *mut usize, t: *mut f64) -> i32 {
    guard(|| {
        let s = &deref(h, "handle")?.0;
        *deref_mut(len, "len")? = s.len();
        *deref_mut(t, "t")? = s.t;
        Ok(())
    })
}

/// Copies the grid and `F` into caller buffers of capacity `cap`.
///
/// # Safety
/// `z` and `f` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_copy(h: *const OvalflowProfile, z: *mut f64, f: *mut f64, cap: usize) -> i32 {
    guard(|| {
        let s = &deref(h, "handle")?.0;
        fill(&s.z_grid, z, cap, "z")?;
        fill(&s.f, f, cap, "f")
    })
}

/// PIC / PIC2 summary away from the tips.
///
/// # Safety
/// `h` valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_pic(h: *const OvalflowProfile, out: *mut OvalflowPic) -> i32 {
    guard(|| {
        let s = &deref(h, "handle")?.0;
        let out = deref_mut(out, "out")?;
        let (_, r) = curvature_and_pic(s);
        *out = OvalflowPic { uniform_pic: r.uniform_pic, pic_min: r.pic_min, pic2_min: r.pic2_min, r_min: r.r_min };
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a profile handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_profile_free(h: *mut OvalflowProfile) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Eigenvalues of the weighted Ornstein-Uhlenbeck operator on the first
/// `kmax + 1` Hermite modes, in ascending mode order.
///
/// # Safety
/// `out` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_operator_spectrum(kmax: u32, out: *mut f64, cap: usize) -> i32 {
    guard(|| {
        let r = SpectralSpace::default().operator_spectrum(kmax as usize);
        fill(&r.eigenvalues, out, cap, "out")
    })
}

/// Runs a scenario from `key = value` config text into `dir`.
/// `passed` receives 1 when every checked invariant holds.
///
/// # Safety
/// `config` and `dir` must be NUL-terminated strings; `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn ovalflow_run(config: *const c_char, dir: *const c_char, passed: *mut i32) -> i32 {
    guard(|| {
        if config.is_null() || dir.is_null() {
            return Err(null_err("config or dir"));
        }
        let passed = deref_mut(passed, "passed")?;
        let utf8 = |p: *const c_char| {
            CStr::from_ptr(p).to_str().map_err(|_| {
                set_error("strings must be UTF-8");
                OVALFLOW_ERR_PARAM
            })
        };
        let (text, dir) = (utf8(config)?, utf8(dir)?);
        let mut cfg = RunConfig::default();
        let origin = lift(parse_config(text, &mut cfg))?;
        lift(cfg.validate(&origin))?;
        let m = lift(run_in(&cfg, std::path::Path::new(dir)))?;
        *passed = m.pass as i32;
        Ok(())
    })
}
