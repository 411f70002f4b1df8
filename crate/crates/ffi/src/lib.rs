//! C ABI over the constitutive and cell-problem layers.
//!
//! Every fallible call returns a [`KwStatus`]; on failure the message is
//! available from [`kw_last_error`] on the same thread. Handles are opaque and
//! must be released with their `_free` function.

use korteweg::cell_problem::{permeability_with, CellMethod, UZAWA_TOL};
use korteweg::constitutive::{check_admissibility, make_pressure, LawKind, PressureLaw};
use korteweg::geometry::{build_unit_cell, Grain, UnitCell};
use korteweg::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KwStatus {
    Ok = 0,
    Config = 1,
    Geometry = 2,
    Range = 3,
    Precondition = 4,
    NotApplicable = 5,
    Solver = 6,
    StepTooLarge = 7,
    Internal = 8,
    Contract = 9,
    Io = 10,
    Parse = 11,
    NullPointer = 12,
    Panic = 13,
}

/// Pressure-law families, parameters `a, b, c, d` in this order:
/// polytropic `coef, exponent`; cubic `amp, center, kappa`; van der Waals
/// `a, b, r_gas, temp`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KwLawKind {
    Polytropic = 0,
    Cubic = 1,
    Vdw = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KwCellMethod {
    Uzawa = 0,
    Direct = 1,
}

/// Opaque pressure law.
pub struct KwPressureLaw(PressureLaw);

/// Opaque unit cell.
pub struct KwUnitCell(UnitCell);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KwStatus {
    match e {
        Error::Config(_) => KwStatus::Config,
        Error::Geometry(_) => KwStatus::Geometry,
        Error::Range { .. } => KwStatus::Range,
        Error::Precondition(_) => KwStatus::Precondition,
        Error::NotApplicable(_) => KwStatus::NotApplicable,
        Error::Solver { .. } => KwStatus::Solver,
        Error::StepTooLarge { .. } => KwStatus::StepTooLarge,
        Error::Internal(_) => KwStatus::Internal,
        Error::Contract(_) => KwStatus::Contract,
        Error::Io { .. } => KwStatus::Io,
        Error::Parse { .. } => KwStatus::Parse,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KwStatus::Ok
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            KwStatus::NullPointer
        }
        Err(_) => {
            set_error("panic inside the library");
            KwStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn kw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out_law` must be a valid pointer; the result is freed with [`kw_pressure_law_free`].
#[no_mangle]
pub unsafe extern "C" fn kw_pressure_law_new(
    kind: KwLawKind,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    gamma: f64,
    rho_s: f64,
    r_max: f64,
    out_law: *mut *mut KwPressureLaw,
) -> KwStatus {
    guard(|| {
        let slot = out(out_law, "out_law")?;
        *slot = std::ptr::null_mut();
        let kind = match kind {
            KwLawKind::Polytropic => LawKind::Polytropic { coef: a, exponent: b },
            KwLawKind::Cubic => LawKind::Cubic { amp: a, center: b, kappa: c },
            KwLawKind::Vdw => LawKind::Vdw { a, b, r_gas: c, temp: d },
        };
        let law = make_pressure(kind, gamma, rho_s, r_max)?;
        *slot = Box::into_raw(Box::new(KwPressureLaw(law)));
        Ok(())
    })
}

/// # Safety
/// `law` must come from [`kw_pressure_law_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kw_pressure_law_free(law: *mut KwPressureLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Evaluate `p, p', p'', P` at `r` (any output may be null).
///
/// # Safety
/// `law` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn kw_pressure_eval(
    law: *const KwPressureLaw,
    r: f64,
    p: *mut f64,
    dp: *mut f64,
    d2p: *mut f64,
    big_p: *mut f64,
) -> KwStatus {
    guard(|| {
        let law = &obj(law, "law")?.0;
        law.check_range(r)?;
        for (ptr, v) in [(p, law.p(r)), (dp, law.dp(r)), (d2p, law.d2p(r)), (big_p, law.big_p(r))] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Admissibility of the generalized pressure on `[0, r_max]`.
///
/// # Safety
/// `law` must be a live handle; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn kw_pressure_check(
    law: *const KwPressureLaw,
    r_max: f64,
    n_samples: usize,
    admissible: *mut bool,
    alpha: *mut f64,
) -> KwStatus {
    guard(|| {
        let law = &obj(law, "law")?.0;
        let adm = out(admissible, "admissible")?;
        let al = out(alpha, "alpha")?;
        let rep = check_admissibility(law, r_max, n_samples)?;
        *adm = rep.admissible;
        *al = rep.alpha;
        Ok(())
    })
}

/// Unit cell with a centred disc grain of radius `r` on an `m x m` grid.
///
/// # Safety
/// `out_cell` must be valid; the result is freed with [`kw_unit_cell_free`].
#[no_mangle]
pub unsafe extern "C" fn kw_unit_cell_disc(r: f64, m: usize, out_cell: *mut *mut KwUnitCell) -> KwStatus {
    guard(|| {
        let slot = out(out_cell, "out_cell")?;
        *slot = std::ptr::null_mut();
        let cell = build_unit_cell(Grain::centered_disc(r), m)?;
        *slot = Box::into_raw(Box::new(KwUnitCell(cell)));
        Ok(())
    })
}

/// # Safety
/// `cell` must come from [`kw_unit_cell_disc`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn kw_unit_cell_free(cell: *mut KwUnitCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// # Safety
/// `cell` must be a live handle; `theta` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kw_unit_cell_porosity(cell: *const KwUnitCell, theta: *mut f64) -> KwStatus {
    guard(|| {
        *out(theta, "theta")? = obj(cell, "cell")?.0.theta;
        Ok(())
    })
}

/// Permeability matrix, written row-major into `a[0..4]`. `tol <= 0` selects
/// the default Uzawa tolerance.
///
/// # Safety
/// `cell` must be a live handle; `a` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kw_permeability(
    cell: *const KwUnitCell,
    method: KwCellMethod,
    tol: f64,
    a: *mut f64,
) -> KwStatus {
    guard(|| {
        let cell = &obj(cell, "cell")?.0;
        if a.is_null() {
            return Err(Fail::Null("a"));
        }
        let method = match method {
            KwCellMethod::Uzawa => CellMethod::Uzawa,
            KwCellMethod::Direct => CellMethod::Direct,
        };
        let pm = permeability_with(cell, method, if tol > 0.0 { tol } else { UZAWA_TOL })?;
        let dst = std::slice::from_raw_parts_mut(a, 4);
        dst.copy_from_slice(&[pm.a[0][0], pm.a[0][1], pm.a[1][0], pm.a[1][1]]);
        Ok(())
    })
}
