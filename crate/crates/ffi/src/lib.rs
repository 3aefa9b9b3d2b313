//! C ABI for the solver: opaque network handles, status codes, and the
//! scalar physics/benchmark helpers other languages bind against. The
//! header `include/meltpinn.h` is generated at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use meltpinn::network::{
    forward, forward_with_input_derivs, load_checkpoint, save_checkpoint, NetworkParams,
};
use meltpinn::physics::{cooling_rate, laser_flux, liquid_fraction, LaserSpec};
use meltpinn::stefan::{analytic_interface, analytic_temperature};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpStatus {
    MpOk = 0,
    MpInvalidArgument = 1,
    MpIoError = 2,
    MpFormatError = 3,
    MpNumericError = 4,
    MpPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn guard<F: FnOnce() -> MpStatus>(f: F) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            MpStatus::MpPanic
        }
    }
}

/// Opaque network handle.
pub struct MpNetwork {
    inner: NetworkParams,
}

/// Library version as a NUL-terminated static string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message for this thread into `buf` (truncated to
/// `len` bytes including the terminator). Returns the full message
/// length, excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn mp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = len.min(bytes.len());
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

unsafe fn path_from(ptr: *const c_char) -> Result<&'static Path, MpStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(MpStatus::MpInvalidArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(MpStatus::MpInvalidArgument)
        }
    }
}

/// Glorot-initialized network from a layer-size list.
///
/// # Safety
/// `sizes` must point to `n_sizes` readable entries; `out` must be a
/// valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_network_init(
    sizes: *const u32,
    n_sizes: usize,
    seed: u64,
    out: *mut *mut MpNetwork,
) -> MpStatus {
    guard(|| {
        if sizes.is_null() || out.is_null() {
            set_error("null argument");
            return MpStatus::MpInvalidArgument;
        }
        let sizes: Vec<usize> =
            std::slice::from_raw_parts(sizes, n_sizes).iter().map(|&s| s as usize).collect();
        match NetworkParams::init(&sizes, seed) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(MpNetwork { inner: p }));
                MpStatus::MpOk
            }
            Err(e) => {
                set_error(&e.to_string());
                MpStatus::MpInvalidArgument
            }
        }
    })
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_network_load(path: *const c_char, out: *mut *mut MpNetwork) -> MpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output handle");
            return MpStatus::MpInvalidArgument;
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(MpNetwork { inner: p }));
                MpStatus::MpOk
            }
            Err(e) => {
                set_error(&e.to_string());
                match e {
                    meltpinn::network::NetworkError::Io(_) => MpStatus::MpIoError,
                    _ => MpStatus::MpFormatError,
                }
            }
        }
    })
}

/// Save a checkpoint file (lossless round-trip).
///
/// # Safety
/// `net` must be a live handle from this library; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mp_network_save(net: *const MpNetwork, path: *const c_char) -> MpStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            set_error("null network handle");
            return MpStatus::MpInvalidArgument;
        };
        let path = match path_from(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_checkpoint(&net.inner, path) {
            Ok(()) => MpStatus::MpOk,
            Err(e) => {
                set_error(&e.to_string());
                MpStatus::MpIoError
            }
        }
    })
}

/// Release a handle. Passing NULL is a no-op.
///
/// # Safety
/// `net` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mp_network_free(net: *mut MpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input dimension; 0 for a null handle.
///
/// # Safety
/// `net` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn mp_network_num_inputs(net: *const MpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.n_inputs())
}

/// Output dimension; 0 for a null handle.
///
/// # Safety
/// `net` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn mp_network_num_outputs(net: *const MpNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.n_outputs())
}

/// Raw forward pass (hidden swish layers, affine output).
///
/// # Safety
/// `input` holds `n_in` values, `out` has room for `n_out`.
#[no_mangle]
pub unsafe extern "C" fn mp_network_forward(
    net: *const MpNetwork,
    input: *const f64,
    n_in: usize,
    out: *mut f64,
    n_out: usize,
) -> MpStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            set_error("null network handle");
            return MpStatus::MpInvalidArgument;
        };
        if input.is_null() || out.is_null() {
            set_error("null buffer");
            return MpStatus::MpInvalidArgument;
        }
        if n_out != net.inner.n_outputs() {
            set_error("output buffer length does not match the network");
            return MpStatus::MpInvalidArgument;
        }
        let x = std::slice::from_raw_parts(input, n_in);
        match forward(&net.inner, x) {
            Ok(y) => {
                std::ptr::copy_nonoverlapping(y.as_ptr(), out, n_out);
                MpStatus::MpOk
            }
            Err(e) => {
                set_error(&e.to_string());
                MpStatus::MpInvalidArgument
            }
        }
    })
}

/// Forward pass with exact input derivatives. `values` receives n_out
/// entries; `grad` and `hess_diag` receive n_out * n_in entries in
/// row-major (output, input) order.
///
/// # Safety
/// Buffers must be sized as documented.
#[no_mangle]
pub unsafe extern "C" fn mp_network_forward_with_derivs(
    net: *const MpNetwork,
    input: *const f64,
    n_in: usize,
    values: *mut f64,
    grad: *mut f64,
    hess_diag: *mut f64,
) -> MpStatus {
    guard(|| {
        let Some(net) = net.as_ref() else {
            set_error("null network handle");
            return MpStatus::MpInvalidArgument;
        };
        if input.is_null() || values.is_null() || grad.is_null() || hess_diag.is_null() {
            set_error("null buffer");
            return MpStatus::MpInvalidArgument;
        }
        let x = std::slice::from_raw_parts(input, n_in);
        match forward_with_input_derivs(&net.inner, x) {
            Ok(duals) => {
                for (o, d) in duals.iter().enumerate() {
                    *values.add(o) = d.value;
                    for i in 0..n_in {
                        *grad.add(o * n_in + i) = d.input_grad[i];
                        *hess_diag.add(o * n_in + i) = d.input_hess_diag[i];
                    }
                }
                MpStatus::MpOk
            }
            Err(e) => {
                set_error(&e.to_string());
                MpStatus::MpInvalidArgument
            }
        }
    })
}

fn write_out(out: *mut f64, value: Result<f64, String>) -> MpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return MpStatus::MpInvalidArgument;
    }
    match value {
        Ok(v) => {
            unsafe { *out = v };
            MpStatus::MpOk
        }
        Err(msg) => {
            set_error(&msg);
            MpStatus::MpInvalidArgument
        }
    }
}

/// Solid-liquid interface position of the solidification benchmark (m).
///
/// # Safety
/// `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_stefan_interface_position(t: f64, out: *mut f64) -> MpStatus {
    guard(|| write_out(out, analytic_interface(t).map_err(|e| e.to_string())))
}

/// Closed-form benchmark temperature (K) at position x (m), time t (s).
///
/// # Safety
/// `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_stefan_temperature(x: f64, t: f64, out: *mut f64) -> MpStatus {
    guard(|| write_out(out, analytic_temperature(x, t).map_err(|e| e.to_string())))
}

/// Liquid fraction of the mushy-zone ramp.
///
/// # Safety
/// `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_liquid_fraction(
    temp: f64,
    t_solidus: f64,
    t_liquidus: f64,
    out: *mut f64,
) -> MpStatus {
    guard(|| write_out(out, liquid_fraction(temp, t_solidus, t_liquidus).map_err(|e| e.to_string())))
}

/// Moving Gaussian laser flux (W/m^2).
///
/// # Safety
/// `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_laser_flux(
    x: f64,
    y: f64,
    t: f64,
    power: f64,
    absorptivity: f64,
    beam_radius: f64,
    scan_speed: f64,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let laser = LaserSpec { power, absorptivity, beam_radius, scan_speed };
        if let Err(e) = laser.validate() {
            set_error(&e.to_string());
            return MpStatus::MpInvalidArgument;
        }
        write_out(out, Ok(laser_flux(x, y, t, &laser)))
    })
}

/// Cooling rate (K/s) from the solidus-to-1273.15 K distance.
///
/// # Safety
/// `out` must be a valid write target.
#[no_mangle]
pub unsafe extern "C" fn mp_cooling_rate(
    d_s: f64,
    d_1273: f64,
    v_s: f64,
    t_solidus: f64,
    out: *mut f64,
) -> MpStatus {
    guard(|| write_out(out, cooling_rate(d_s, d_1273, v_s, t_solidus).map_err(|e| e.to_string())))
}


impl MpNetwork {
    #[cfg(test)]
    fn inner_ref(&self) -> &NetworkParams {
        &self.inner
    }
}
