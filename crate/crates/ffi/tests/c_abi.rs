use std::ffi::{CStr, CString};
use std::ptr;

use singstab::builtin::{self, ExampleVariant};
use singstab_ffi::*;

fn handle(json: &str) -> *mut SingstabFamily {
    let text = CString::new(json).unwrap();
    let mut h = ptr::null_mut();
    let status = unsafe { singstab_family_from_json(text.as_ptr(), &mut h) };
    assert_eq!(status, SingstabStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = singstab_last_error_message();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

#[test]
fn shape_and_hurwitz() {
    let h = handle(&builtin::example_family(0.45, ExampleVariant::Printed).to_json());
    let (mut d, mut n) = (0usize, 0usize);
    assert_eq!(unsafe { singstab_family_shape(h, &mut d, &mut n) }, SingstabStatus::Ok);
    assert_eq!((d, n), (2, 2));
    let mut pass = true;
    let mut abscissas = [0.0f64; 2];
    let status = unsafe { singstab_d_hurwitz(h, &mut pass, abscissas.as_mut_ptr(), 2) };
    assert_eq!(status, SingstabStatus::Ok);
    assert!(!pass);
    assert_eq!(abscissas, [-1.0, 1.0]);
    let status = unsafe { singstab_d_hurwitz(h, &mut pass, abscissas.as_mut_ptr(), 1) };
    assert_eq!(status, SingstabStatus::Dimension);
    assert!(last_error().contains("2 modes"));
    unsafe { singstab_family_free(h) };
}

#[test]
fn estimate_of_single_mode_family() {
    let h = handle(&builtin::classic_family(1.0).to_json());
    let mut opts = singstab_estimate_options_default();
    opts.depth = 4;
    opts.budget = 100_000;
    let mut b = SingstabBounds {
        certified_lower: 0.0,
        heuristic_upper: 0.0,
        abscissa_floor: 0.0,
        upper_grid_certified: false,
        depth_reached: 0,
    };
    let status = unsafe { singstab_lambda_estimate(h, SingstabTarget::SigmaBar, &opts, &mut b) };
    assert_eq!(status, SingstabStatus::Ok, "{}", last_error());
    // one mode with identity jump: the reduced exponent is alpha(M) = -0.5
    assert!((b.certified_lower + 0.5).abs() < 1e-9, "{b:?}");
    assert!(b.heuristic_upper >= b.certified_lower);
    unsafe { singstab_family_free(h) };
}

#[test]
fn precondition_failure_is_reported() {
    let h = handle(&builtin::example_family(0.45, ExampleVariant::Printed).to_json());
    let opts = singstab_estimate_options_default();
    let mut b = unsafe { std::mem::zeroed::<SingstabBounds>() };
    let status = unsafe { singstab_lambda_estimate(h, SingstabTarget::SigmaBar, &opts, &mut b) };
    assert_eq!(status, SingstabStatus::Precondition);
    assert!(last_error().contains("Hurwitz"));
    unsafe { singstab_family_free(h) };
}

#[test]
fn simulate_returns_csv() {
    let h = handle(&builtin::classic_family(0.0).to_json());
    let signal = CString::new(r#"{"pieces": [{"mode": 0, "duration": 0.5}], "final_mode": 0}"#).unwrap();
    let x0 = [1.0, 1.0];
    let mut csv = ptr::null_mut();
    let status = unsafe {
        singstab_simulate_csv(h, SingstabTarget::SigmaEps, signal.as_ptr(), x0.as_ptr(), 2, 1.0, 0.1, 0.1, &mut csv)
    };
    assert_eq!(status, SingstabStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_owned();
    unsafe { singstab_string_free(csv) };
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,mode"));
    assert!(text.lines().count() > 10);
    unsafe { singstab_family_free(h) };
}

#[test]
fn bad_inputs() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { singstab_family_from_json(ptr::null(), &mut h) },
        SingstabStatus::NullPointer
    );
    let bad = CString::new(r#"{"d": 2, "tau": 0, "modes": [], "extra": 1}"#).unwrap();
    assert_eq!(unsafe { singstab_family_from_json(bad.as_ptr(), &mut h) }, SingstabStatus::Schema);
    assert!(h.is_null());
    assert!(last_error().contains("extra"), "{}", last_error());
    let singular = CString::new(
        r#"{"d": 2, "tau": 0, "modes": [{"l": 1, "P": [[1, 1], [1, 1]], "Lambda": [[-1, 0], [0, -1]], "R": [[1, 0], [0, 1]]}]}"#,
    )
    .unwrap();
    assert_eq!(unsafe { singstab_family_from_json(singular.as_ptr(), &mut h) }, SingstabStatus::Schema);
    assert!(last_error().contains("modes[0].P"), "{}", last_error());
    let mut d = 0usize;
    let mut n = 0usize;
    assert_eq!(unsafe { singstab_family_shape(ptr::null(), &mut d, &mut n) }, SingstabStatus::NullPointer);
    // a successful call clears the message
    assert!(!singstab_version().is_null());
    let ok = handle(&builtin::classic_family(0.0).to_json());
    assert!(singstab_last_error_message().is_null());
    unsafe { singstab_family_free(ok) };
    unsafe { singstab_family_free(ptr::null_mut()) };
}

#[test]
fn header_is_current_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/singstab.h")).unwrap();
    for name in [
        "singstab_family_from_json",
        "singstab_family_free",
        "singstab_d_hurwitz",
        "singstab_lambda_estimate",
        "singstab_simulate_csv",
        "singstab_string_free",
        "singstab_last_error_message",
        "SINGSTAB_STATUS_PRECONDITION = 7",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let src = std::env::temp_dir().join(format!("singstab_header_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"singstab.h\"\nint main(void) { return singstab_version() == 0; }\n").unwrap();
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .unwrap();
    let _ = std::fs::remove_file(&src);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
