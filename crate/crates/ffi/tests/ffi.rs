use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ultrastf_ffi::*;

fn last_error() -> String {
    let p = ustf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_spec() -> UstfModelSpec {
    UstfModelSpec {
        t_in: 24,
        t_out: 12,
        period: 4,
        shapes: 4,
        blocks: 2,
        ..ustf_model_spec_default()
    }
}

#[test]
fn default_spec_has_known_count() {
    let spec = ustf_model_spec_default();
    let mut n = 0usize;
    assert_eq!(unsafe { ustf_count_params(&spec, &mut n) }, UstfStatus::Ok);
    assert_eq!(n, 12985);
    let sparse = UstfModelSpec {
        kind: UstfModelKind::SparseTsf,
        ..spec
    };
    assert_eq!(unsafe { ustf_count_params(&sparse, &mut n) }, UstfStatus::Ok);
    assert_eq!(n, 73);
}

#[test]
fn multi_head_count_falls_back_to_enumeration() {
    let spec = UstfModelSpec { heads: 2, ..small_spec() };
    let mut counted = 0usize;
    assert_eq!(unsafe { ustf_count_params(&spec, &mut counted) }, UstfStatus::Ok);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ustf_model_new(&spec, 1, &mut model) }, UstfStatus::Ok);
    let mut held = 0usize;
    assert_eq!(unsafe { ustf_model_param_count(model, &mut held) }, UstfStatus::Ok);
    assert_eq!(counted, held);
    unsafe { ustf_model_free(model) };
}

#[test]
fn forecast_save_load_round_trip() {
    let spec = small_spec();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ustf_model_new(&spec, 7, &mut model) }, UstfStatus::Ok);
    let x: Vec<f64> = (0..2 * 24).map(|i| (i as f64 * 0.7).sin()).collect();
    let mut y = vec![0.0; 2 * 12];
    assert_eq!(
        unsafe { ustf_model_forecast(model, x.as_ptr(), 2, 24, y.as_mut_ptr(), y.len()) },
        UstfStatus::Ok
    );
    assert!(y.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ustf_model_save(model, path.as_ptr()) }, UstfStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { ustf_model_load(path.as_ptr(), &mut loaded) }, UstfStatus::Ok);
    let mut y2 = vec![0.0; 2 * 12];
    assert_eq!(
        unsafe { ustf_model_forecast(loaded, x.as_ptr(), 2, 24, y2.as_mut_ptr(), y2.len()) },
        UstfStatus::Ok
    );
    assert_eq!(y, y2);
    unsafe {
        ustf_model_free(model);
        ustf_model_free(loaded);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut model = ptr::null_mut();
    let bad = UstfModelSpec { period: 0, ..small_spec() };
    assert_eq!(unsafe { ustf_model_new(&bad, 0, &mut model) }, UstfStatus::InvalidConfig);
    assert!(model.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { ustf_model_new(ptr::null(), 0, &mut model) }, UstfStatus::NullPointer);
    assert!(last_error().contains("spec"));

    assert_eq!(unsafe { ustf_model_new(&small_spec(), 0, &mut model) }, UstfStatus::Ok);
    assert!(ustf_last_error_message().is_null());
    let x = [0.0; 23];
    let mut y = vec![0.0; 12];
    assert_eq!(
        unsafe { ustf_model_forecast(model, x.as_ptr(), 1, 23, y.as_mut_ptr(), 12) },
        UstfStatus::ShapeMismatch
    );
    let missing = CString::new("/no/such/dir/m.ckpt").unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { ustf_model_load(missing.as_ptr(), &mut loaded) }, UstfStatus::IoError);
    unsafe {
        ustf_model_free(model);
        ustf_model_free(ptr::null_mut());
    }
}

#[test]
fn nearest_match_finds_planted_copy() {
    let shape = [0.0, 1.0, 0.5, -1.0];
    let mut series: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64).collect();
    for (k, v) in shape.iter().enumerate() {
        series[17 + k] = 3.0 * v + 10.0;
    }
    let (mut off, mut d) = (0usize, f64::NAN);
    let s = unsafe { ustf_nearest_match(shape.as_ptr(), 4, series.as_ptr(), series.len(), &mut off, &mut d) };
    assert_eq!(s, UstfStatus::Ok);
    assert_eq!(off, 17);
    assert!(d < 1e-9);
    let s = unsafe { ustf_nearest_match(shape.as_ptr(), 4, series.as_ptr(), 3, &mut off, &mut d) };
    assert_eq!(s, UstfStatus::NoMatch);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(ustf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("ultrastf.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["ustf_model_new", "ustf_model_forecast", "ustf_last_error_message", "USTF_STATUS_OK"] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ UstfModelSpec s = ustf_model_spec_default(); return (int)s.t_in; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).status() {
        Ok(st) => assert!(st.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found, skipping header compile check"),
    }
}
