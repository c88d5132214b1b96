//! Exercise the C ABI end to end from Rust.

use std::ffi::CString;

use bounder::neural::{csv_io, MlpSpec, NetworkWeights};
use bounder::rng::Stream;
use bounder_ffi::*;

fn write_test_weights(dir: &std::path::Path, sizes: Vec<usize>) -> (std::path::PathBuf, NetworkWeights) {
    let mut stream = Stream::seeded(77);
    let net = NetworkWeights::init(&MlpSpec::new(sizes), &mut stream).with_action_std(0.1);
    let path = dir.join("actor.csv");
    csv_io::export_csv(&net, &path).unwrap();
    (path, net)
}

#[test]
fn load_infer_free_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (path, net) = write_test_weights(dir.path(), vec![34, 16, 12]);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    unsafe {
        let mut handle: *mut BounderPolicy = std::ptr::null_mut();
        assert_eq!(bounder_policy_load(cpath.as_ptr(), &mut handle), BounderStatus::Ok);
        assert!(!handle.is_null());

        let mut input_len = 0usize;
        let mut output_len = 0usize;
        assert_eq!(bounder_policy_input_len(handle, &mut input_len), BounderStatus::Ok);
        assert_eq!(bounder_policy_output_len(handle, &mut output_len), BounderStatus::Ok);
        assert_eq!(input_len, 34);
        assert_eq!(output_len, 12);

        let input: Vec<f64> = (0..34).map(|i| (i as f64 * 0.21).sin()).collect();
        let mut output = vec![0.0; 12];
        assert_eq!(
            bounder_policy_infer(handle, input.as_ptr(), 34, output.as_mut_ptr(), 12),
            BounderStatus::Ok
        );
        // Bit-identical to the in-process forward pass.
        let expected = net.forward(&input).unwrap();
        assert_eq!(output, expected);

        bounder_policy_free(handle);
    }
}

#[test]
fn dimension_and_null_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_test_weights(dir.path(), vec![8, 6, 12]);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    unsafe {
        let mut handle: *mut BounderPolicy = std::ptr::null_mut();
        assert_eq!(bounder_policy_load(cpath.as_ptr(), &mut handle), BounderStatus::Ok);

        let input = vec![0.0; 7];
        let mut output = vec![0.0; 12];
        assert_eq!(
            bounder_policy_infer(handle, input.as_ptr(), 7, output.as_mut_ptr(), 12),
            BounderStatus::DimensionMismatch
        );
        assert_eq!(
            bounder_policy_infer(
                std::ptr::null(),
                input.as_ptr(),
                7,
                output.as_mut_ptr(),
                12
            ),
            BounderStatus::NullArgument
        );
        bounder_policy_free(handle);
        bounder_policy_free(std::ptr::null_mut());

        let mut missing: *mut BounderPolicy = std::ptr::null_mut();
        let bad = CString::new("/nonexistent/weights.csv").unwrap();
        assert_eq!(
            bounder_policy_load(bad.as_ptr(), &mut missing),
            BounderStatus::IoError
        );
    }
}

#[test]
fn malformed_weight_file_is_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garbage.csv");
    std::fs::write(&path, "# layer 0 2 2\n1,2\n").unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut handle: *mut BounderPolicy = std::ptr::null_mut();
        assert_eq!(
            bounder_policy_load(cpath.as_ptr(), &mut handle),
            BounderStatus::ParseError
        );
        assert!(handle.is_null());
    }
}

#[test]
fn feature_engineering_through_the_abi() {
    let raw: Vec<f64> = (0..34).map(|i| i as f64 * 0.1).collect();
    let mut out = vec![0.0; 30];
    unsafe {
        assert_eq!(
            bounder_feature_engineer(raw.as_ptr(), 34, out.as_mut_ptr(), 30),
            BounderStatus::Ok
        );
        let expected = bounder::observation::apply_feature_engineering(&raw).unwrap();
        assert_eq!(out, expected);

        assert_eq!(
            bounder_feature_engineer(raw.as_ptr(), 33, out.as_mut_ptr(), 30),
            BounderStatus::DimensionMismatch
        );
    }
}

#[test]
fn status_names_are_nul_terminated() {
    for status in [
        BounderStatus::Ok,
        BounderStatus::NullArgument,
        BounderStatus::InvalidUtf8,
        BounderStatus::IoError,
        BounderStatus::ParseError,
        BounderStatus::DimensionMismatch,
        BounderStatus::InternalError,
    ] {
        let ptr = bounder_status_name(status);
        assert!(!ptr.is_null());
        let name = unsafe { std::ffi::CStr::from_ptr(ptr) }.to_str().unwrap();
        assert!(!name.is_empty());
    }
}

#[test]
fn generated_header_is_in_sync() {
    // The build script regenerates include/bounder.h on every build;
    // spot-check the committed header carries the exported surface.
    let header = include_str!("../include/bounder.h");
    for symbol in [
        "bounder_policy_load",
        "bounder_policy_infer",
        "bounder_policy_free",
        "bounder_feature_engineer",
        "bounder_status_name",
        "BounderStatus",
        "BounderPolicy",
    ] {
        assert!(header.contains(symbol), "header missing {symbol}");
    }
}
