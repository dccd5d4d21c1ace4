//! C ABI for the ion-crystal heat-transport library.
//!
//! The surface follows the usual opaque-handle pattern: `ionheat_system_new`
//! solves one steady-state problem end to end and returns a handle; getters
//! copy results into caller-provided buffers; every call returns a status
//! code and the last error message is retrievable as a string.

use ionheat::crystal::{find_equilibrium, CrystalParams, OptimizerOpts};
use ionheat::network::{
    apply_disorder_tolerant, build_hessian, make_bath, BathConfig, BathRegion, DisorderAxes,
    DisorderSpec,
};
use ionheat::qep::{solve_qep_with, ModeSet, QepOpts};
use ionheat::seeding::split_seed;
use ionheat::transport::{
    central_gradient, conductivity, coordinate_temperatures, covariance, heat_current,
    mode_currents, transverse_ion_temperatures, TemperatureMode,
};
use ionheat::Error;
use libc::{c_char, size_t};
use std::cell::RefCell;

/// Status code returned by every FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonheatStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// The problem description was invalid.
    InvalidConfig = 2,
    /// A numeric or convergence failure occurred.
    NumericError = 3,
    /// The caller-provided buffer is too small.
    BufferTooSmall = 4,
}

/// Which diagonal entries the pinning disorder multiplies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IonheatDisorderAxes {
    Xy = 0,
    X = 1,
    Xyz = 2,
}

impl From<IonheatDisorderAxes> for DisorderAxes {
    fn from(a: IonheatDisorderAxes) -> Self {
        match a {
            IonheatDisorderAxes::Xy => DisorderAxes::Xy,
            IonheatDisorderAxes::X => DisorderAxes::X,
            IonheatDisorderAxes::Xyz => DisorderAxes::Xyz,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> IonheatStatus {
    match err {
        Error::Config(_) | Error::InvalidRegion(_) => IonheatStatus::InvalidConfig,
        _ => IonheatStatus::NumericError,
    }
}

fn fail(err: Error) -> IonheatStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// One solved steady-state transport problem (opaque).
pub struct IonheatSystem {
    positions: Vec<[f64; 3]>,
    length: f64,
    bath: BathConfig,
    modes: ModeSet,
    q_dot: f64,
    mode_currents: Vec<f64>,
    ion_temps: Vec<f64>,
}

fn build_system(
    n_ions: usize,
    alpha: f64,
    gamma0: f64,
    t_left: f64,
    t_right: f64,
    region_fraction: f64,
    disorder: f64,
    axes: IonheatDisorderAxes,
    seed: u64,
) -> Result<IonheatSystem, Error> {
    let params = CrystalParams::new(n_ions, alpha)?;
    let config = find_equilibrium(&params, split_seed(seed, 0, 0), &OptimizerOpts::default())?;
    let mut v = build_hessian(&params, &config)?;
    if disorder > 0.0 {
        let spec = DisorderSpec::draw(disorder, split_seed(seed, 1, 0), n_ions, axes.into());
        v = apply_disorder_tolerant(&v, &spec)?.0;
    }
    let bath = make_bath(gamma0, t_left, t_right, BathRegion::Fraction(region_fraction), n_ions)?;
    let qep_opts = QepOpts {
        jitter_seed: Some(split_seed(seed, 2, 0)),
        allow_unstable: true,
        ..QepOpts::default()
    };
    let modes = solve_qep_with(&v, &bath, &qep_opts)?;
    let q_dot = heat_current(&modes, &bath)?;
    let per_mode = mode_currents(&modes, &bath)?;
    let cov = covariance(&modes, &bath)?;
    let pp_diag: Vec<f64> = cov.pp.diag().to_vec();
    let v_diag: Vec<f64> = v.matrix().diag().to_vec();
    let coord_temps = coordinate_temperatures(&pp_diag, &v_diag, TemperatureMode::HighT)?;
    let ion_temps = transverse_ion_temperatures(&coord_temps, n_ions);
    Ok(IonheatSystem {
        positions: config.positions.clone(),
        length: config.length(),
        bath,
        modes,
        q_dot,
        mode_currents: per_mode,
        ion_temps,
    })
}

/// Solve a steady-state transport problem. On success writes a new handle to
/// `out` and returns Ok; the handle must be released with
/// `ionheat_system_free`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_system_new(
    n_ions: size_t,
    alpha: f64,
    gamma0: f64,
    t_left: f64,
    t_right: f64,
    region_fraction: f64,
    disorder: f64,
    disorder_axes: IonheatDisorderAxes,
    seed: u64,
    out: *mut *mut IonheatSystem,
) -> IonheatStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return IonheatStatus::NullArgument;
    }
    match build_system(
        n_ions,
        alpha,
        gamma0,
        t_left,
        t_right,
        region_fraction,
        disorder,
        disorder_axes,
        seed,
    ) {
        Ok(sys) => {
            *out = Box::into_raw(Box::new(sys));
            IonheatStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a handle created by `ionheat_system_new`. A null handle is a no-op.
///
/// # Safety
/// `sys` must be null or a pointer returned by `ionheat_system_new` that has
/// not already been freed.
#[no_mangle]
pub unsafe extern "C" fn ionheat_system_free(sys: *mut IonheatSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

unsafe fn with_system<T>(
    sys: *const IonheatSystem,
    out: *mut T,
    f: impl FnOnce(&IonheatSystem) -> Result<T, Error>,
) -> IonheatStatus {
    if sys.is_null() || out.is_null() {
        set_error("null argument");
        return IonheatStatus::NullArgument;
    }
    match f(&*sys) {
        Ok(v) => {
            *out = v;
            IonheatStatus::Ok
        }
        Err(e) => fail(e),
    }
}

unsafe fn copy_slice(src: &[f64], dst: *mut f64, len: size_t) -> IonheatStatus {
    if dst.is_null() {
        set_error("null buffer");
        return IonheatStatus::NullArgument;
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, {} required", src.len()));
        return IonheatStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    IonheatStatus::Ok
}

/// Number of ions.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_n_ions(
    sys: *const IonheatSystem,
    out: *mut size_t,
) -> IonheatStatus {
    with_system(sys, out, |s| Ok(s.positions.len()))
}

/// Number of normal modes (2 x 3 x n_ions).
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_n_modes(
    sys: *const IonheatSystem,
    out: *mut size_t,
) -> IonheatStatus {
    with_system(sys, out, |s| Ok(s.modes.len()))
}

/// Axial extent of the crystal.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_length(
    sys: *const IonheatSystem,
    out: *mut f64,
) -> IonheatStatus {
    with_system(sys, out, |s| Ok(s.length))
}

/// Stationary heat current from the left bath into the crystal.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_heat_current(
    sys: *const IonheatSystem,
    out: *mut f64,
) -> IonheatStatus {
    with_system(sys, out, |s| Ok(s.q_dot))
}

/// Thermal conductivity kappa = |Qdot| L / |T_L - T_R|. Fails when the bath
/// temperatures are equal.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_conductivity(
    sys: *const IonheatSystem,
    out: *mut f64,
) -> IonheatStatus {
    with_system(sys, out, |s| {
        conductivity(s.q_dot, s.length, s.bath.t_left, s.bath.t_right)
    })
}

/// Normalized central slope of the transverse temperature profile. Fails when
/// the bath temperatures are equal.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ionheat_central_gradient(
    sys: *const IonheatSystem,
    out: *mut f64,
) -> IonheatStatus {
    with_system(sys, out, |s| {
        let zs: Vec<f64> = s.positions.iter().map(|p| p[2]).collect();
        central_gradient(&s.ion_temps, &zs, s.bath.t_left, s.bath.t_right)
    })
}

/// Copy the equilibrium positions as n_ions (x, y, z) triples; `buffer` must
/// hold at least 3 * n_ions values.
///
/// # Safety
/// `sys` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ionheat_positions(
    sys: *const IonheatSystem,
    buffer: *mut f64,
    len: size_t,
) -> IonheatStatus {
    if sys.is_null() {
        set_error("null handle");
        return IonheatStatus::NullArgument;
    }
    let s = &*sys;
    let flat: Vec<f64> = s.positions.iter().flatten().copied().collect();
    copy_slice(&flat, buffer, len)
}

/// Copy the complex mode frequencies; each buffer must hold `n_modes` values.
///
/// # Safety
/// `sys` must be a live handle; `re` and `im` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ionheat_mode_frequencies(
    sys: *const IonheatSystem,
    re: *mut f64,
    im: *mut f64,
    len: size_t,
) -> IonheatStatus {
    if sys.is_null() {
        set_error("null handle");
        return IonheatStatus::NullArgument;
    }
    let s = &*sys;
    let (res, ims): (Vec<f64>, Vec<f64>) =
        (0..s.modes.len()).map(|g| { let w = s.modes.frequency(g); (w.re, w.im) }).unzip();
    let status = copy_slice(&res, re, len);
    if status != IonheatStatus::Ok {
        return status;
    }
    copy_slice(&ims, im, len)
}

/// Copy the per-mode heat currents; `buffer` must hold `n_modes` values.
///
/// # Safety
/// `sys` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ionheat_mode_currents(
    sys: *const IonheatSystem,
    buffer: *mut f64,
    len: size_t,
) -> IonheatStatus {
    if sys.is_null() {
        set_error("null handle");
        return IonheatStatus::NullArgument;
    }
    copy_slice(&(*sys).mode_currents, buffer, len)
}

/// Copy the per-ion transverse temperatures; `buffer` must hold `n_ions`
/// values.
///
/// # Safety
/// `sys` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ionheat_ion_temperatures(
    sys: *const IonheatSystem,
    buffer: *mut f64,
    len: size_t,
) -> IonheatStatus {
    if sys.is_null() {
        set_error("null handle");
        return IonheatStatus::NullArgument;
    }
    copy_slice(&(*sys).ion_temps, buffer, len)
}

/// Copy the last error message of this thread as a NUL-terminated string.
/// Returns the number of bytes written (including the terminator), or the
/// required size if `buffer` is null or too small.
///
/// # Safety
/// `buffer` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ionheat_last_error(buffer: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let needed = msg.len() + 1;
        if buffer.is_null() || len < needed {
            return needed;
        }
        std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buffer, msg.len());
        *buffer.add(msg.len()) = 0;
        needed
    })
}
