//! C ABI for deploying trained policies.
//!
//! Mirrors the on-robot inference path: load actor weights from the
//! universal CSV format, then run forward passes from any language with
//! a C FFI. Handles are opaque; every fallible call returns a
//! [`BounderStatus`] and writes results through out-pointers.
//!
//! The generated header lives at `include/bounder.h`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bounder::error::BounderError;
use bounder::neural::{csv_io, NetworkWeights};
use bounder::observation;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BounderStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    ParseError = 4,
    DimensionMismatch = 5,
    InternalError = 6,
}

/// Opaque handle to a loaded policy network.
pub struct BounderPolicy {
    weights: NetworkWeights,
}

/// Length of the raw observation vector.
pub const BOUNDER_RAW_OBSERVATION_LEN: usize = 34;

/// Length of the feature-engineered observation vector.
pub const BOUNDER_ENGINEERED_OBSERVATION_LEN: usize = 30;

fn status_of(err: &BounderError) -> BounderStatus {
    match err {
        BounderError::Io { .. } => BounderStatus::IoError,
        BounderError::MalformedHeader { .. }
        | BounderError::UnparsableNumber { .. }
        | BounderError::DimensionMismatch { .. } => BounderStatus::ParseError,
        BounderError::Dimension { .. } => BounderStatus::DimensionMismatch,
        _ => BounderStatus::InternalError,
    }
}

/// Load actor weights from a CSV file. On success writes a handle to
/// `out`; the caller owns it and must release it with
/// [`bounder_policy_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn bounder_policy_load(
    path: *const c_char,
    out: *mut *mut BounderPolicy,
) -> BounderStatus {
    if path.is_null() || out.is_null() {
        return BounderStatus::NullArgument;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return BounderStatus::InvalidUtf8,
        };
        match csv_io::import_csv(Path::new(path)) {
            Ok(weights) => {
                *out = Box::into_raw(Box::new(BounderPolicy { weights }));
                BounderStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    }));
    result.unwrap_or(BounderStatus::InternalError)
}

/// Release a handle returned by [`bounder_policy_load`]. Null is a no-op.
///
/// # Safety
/// `policy` must be null or a pointer previously returned by
/// [`bounder_policy_load`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bounder_policy_free(policy: *mut BounderPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Input width of the loaded network.
///
/// # Safety
/// `policy` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bounder_policy_input_len(
    policy: *const BounderPolicy,
    out: *mut usize,
) -> BounderStatus {
    if policy.is_null() || out.is_null() {
        return BounderStatus::NullArgument;
    }
    *out = (*policy).weights.input_dim();
    BounderStatus::Ok
}

/// Output width of the loaded network (12 joint position targets).
///
/// # Safety
/// `policy` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bounder_policy_output_len(
    policy: *const BounderPolicy,
    out: *mut usize,
) -> BounderStatus {
    if policy.is_null() || out.is_null() {
        return BounderStatus::NullArgument;
    }
    *out = (*policy).weights.output_dim();
    BounderStatus::Ok
}

/// Run one forward pass: `input` holds `input_len` observation values,
/// `output` receives `output_len` joint position targets. Lengths must
/// match the network exactly.
///
/// # Safety
/// `policy`, `input` and `output` must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn bounder_policy_infer(
    policy: *const BounderPolicy,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> BounderStatus {
    if policy.is_null() || input.is_null() || output.is_null() {
        return BounderStatus::NullArgument;
    }
    let policy = &*policy;
    if input_len != policy.weights.input_dim() || output_len != policy.weights.output_dim() {
        return BounderStatus::DimensionMismatch;
    }
    let input = std::slice::from_raw_parts(input, input_len);
    let result = catch_unwind(AssertUnwindSafe(|| match policy.weights.forward(input) {
        Ok(values) => {
            let out = std::slice::from_raw_parts_mut(output, output_len);
            out.copy_from_slice(&values);
            BounderStatus::Ok
        }
        Err(e) => status_of(&e),
    }));
    result.unwrap_or(BounderStatus::InternalError)
}

/// Apply the front-minus-hind feature engineering to a raw 34-value
/// observation, producing the 30-value engineered form.
///
/// # Safety
/// `raw` and `out` must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn bounder_feature_engineer(
    raw: *const f64,
    raw_len: usize,
    out: *mut f64,
    out_len: usize,
) -> BounderStatus {
    if raw.is_null() || out.is_null() {
        return BounderStatus::NullArgument;
    }
    if raw_len != BOUNDER_RAW_OBSERVATION_LEN || out_len != BOUNDER_ENGINEERED_OBSERVATION_LEN {
        return BounderStatus::DimensionMismatch;
    }
    let raw = std::slice::from_raw_parts(raw, raw_len);
    match observation::apply_feature_engineering(raw) {
        Ok(values) => {
            let out = std::slice::from_raw_parts_mut(out, out_len);
            out.copy_from_slice(&values);
            BounderStatus::Ok
        }
        Err(_) => BounderStatus::DimensionMismatch,
    }
}

/// Static name of a status code (never null).
#[no_mangle]
pub extern "C" fn bounder_status_name(status: BounderStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        BounderStatus::Ok => b"ok\0",
        BounderStatus::NullArgument => b"null argument\0",
        BounderStatus::InvalidUtf8 => b"invalid utf-8\0",
        BounderStatus::IoError => b"io error\0",
        BounderStatus::ParseError => b"parse error\0",
        BounderStatus::DimensionMismatch => b"dimension mismatch\0",
        BounderStatus::InternalError => b"internal error\0",
    };
    name.as_ptr() as *const c_char
}
