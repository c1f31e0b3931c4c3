use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use homlab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        hl_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn parse(expr: &str, dim: usize, scales: &[f64]) -> *mut HlCoefficient {
    let e = CString::new(expr).unwrap();
    let mut c = ptr::null_mut();
    let s = unsafe { hl_coefficient_parse(e.as_ptr(), dim, scales.as_ptr(), scales.len(), 0.25, &mut c) };
    assert_eq!(s, HlStatus::Ok, "{}", last_error());
    c
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(hl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn approximation_matches_worked_example() {
    let alpha = [1.0 / 3.0 + 0.01];
    let (mut q, mut p, mut g) = (0u64, [0i64], [0.0f64]);
    let s = unsafe { hl_simultaneous_approx(alpha.as_ptr(), 1, 30.0, 1_000_000, &mut q, p.as_mut_ptr(), g.as_mut_ptr()) };
    assert_eq!(s, HlStatus::Ok);
    assert_eq!((q, p[0]), (3, 1));
    assert!((g[0] - 0.01).abs() < 1e-12);
}

#[test]
fn bad_q_sets_error() {
    let alpha = [0.5];
    let (mut q, mut p, mut g) = (0u64, [0i64], [0.0f64]);
    let s = unsafe { hl_simultaneous_approx(alpha.as_ptr(), 1, 0.5, 1000, &mut q, p.as_mut_ptr(), g.as_mut_ptr()) };
    assert_eq!(s, HlStatus::InvalidInput);
    assert!(last_error().contains("Q"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut c = ptr::null_mut();
    let s = unsafe { hl_coefficient_parse(ptr::null(), 1, ptr::null(), 0, 0.25, &mut c) };
    assert_eq!(s, HlStatus::NullPointer);
    assert!(c.is_null());
    assert_eq!(unsafe { hl_coefficient_dim(ptr::null()) }, 0);
    unsafe {
        hl_coefficient_free(ptr::null_mut());
        hl_field_free(ptr::null_mut());
    }
}

#[test]
fn parse_error_code() {
    let e = CString::new("2 + sin(").unwrap();
    let mut c = ptr::null_mut();
    let s = unsafe { hl_coefficient_parse(e.as_ptr(), 1, [0.1].as_ptr(), 1, 0.25, &mut c) };
    assert_eq!(s, HlStatus::Parse);
    assert!(!last_error().is_empty());
}

#[test]
fn coefficient_round_trip_and_reperiodize() {
    let c = parse("(2 + sin(2*pi*y1))*(2 + cos(2*pi*y2))", 1, &[1.0, 1.0 / 3.0 + 0.01]);
    unsafe {
        assert_eq!(hl_coefficient_dim(c), 1);
        assert_eq!(hl_coefficient_num_scales(c), 2);
        let mut s = [0.0; 2];
        assert_eq!(hl_coefficient_scales(c, s.as_mut_ptr(), 1), HlStatus::BufferTooSmall);
        assert_eq!(hl_coefficient_scales(c, s.as_mut_ptr(), 2), HlStatus::Ok);
        assert_eq!(s[0], 1.0);

        let mut sharp = ptr::null_mut();
        let mut q = 0;
        assert_eq!(hl_reperiodize(c, 30.0, &mut sharp, &mut q), HlStatus::Ok);
        assert_eq!(q, 3);
        for x in [0.1, 0.37, 0.9] {
            let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
            assert_eq!(hl_coefficient_eval(c, [x].as_ptr(), a.as_mut_ptr()), HlStatus::Ok);
            assert_eq!(hl_coefficient_eval(sharp, [x].as_ptr(), b.as_mut_ptr()), HlStatus::Ok);
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        hl_coefficient_free(sharp);
        hl_coefficient_free(c);
    }
}

#[test]
fn cell_solve_gives_harmonic_mean() {
    let e = CString::new("2 + sin(2*pi*y1)").unwrap();
    let mut out = [0.0; 4];
    assert_eq!(unsafe { hl_cell_solve(e.as_ptr(), 1, 256, out.as_mut_ptr()) }, HlStatus::Ok);
    assert!((out[0] - 3f64.sqrt()).abs() < 1e-10);
    let e = CString::new("2 + sin(2*pi*y1) + cos(2*pi*y2)").unwrap();
    assert_eq!(unsafe { hl_cell_solve(e.as_ptr(), 1, 64, out.as_mut_ptr()) }, HlStatus::InvalidInput);
}

#[test]
fn dirichlet_solve_constant_coefficient() {
    // -(2u')' = 1, u(0) = u(1) = 0: u = x(1 - x)/4.
    let c = parse("2", 1, &[0.5]);
    let f = CString::new("1").unwrap();
    let mut field = ptr::null_mut();
    unsafe {
        assert_eq!(hl_solve_dirichlet(c, 64, f.as_ptr(), ptr::null(), &mut field), HlStatus::Ok);
        let n = hl_field_len(field);
        assert_eq!(n, 65);
        assert_eq!(hl_field_per_side(field), 65);
        let mut v = vec![0.0; n];
        assert_eq!(hl_field_values(field, v.as_mut_ptr(), n), HlStatus::Ok);
        for (i, u) in v.iter().enumerate() {
            let x = i as f64 / 64.0;
            assert!((u - x * (1.0 - x) / 4.0).abs() < 1e-12);
        }
        hl_field_free(field);
        hl_coefficient_free(c);
    }
}

#[test]
fn unresolved_grid_is_reported() {
    let c = parse("2 + sin(2*pi*y1)", 1, &[0.01]);
    let mut field = ptr::null_mut();
    unsafe {
        assert_eq!(hl_solve_dirichlet(c, 16, ptr::null(), ptr::null(), &mut field), HlStatus::UnresolvedScale);
        assert!(field.is_null());
        hl_coefficient_free(c);
    }
}

#[test]
fn header_declares_the_interface() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/homlab.h")).unwrap();
    for name in [
        "hl_version",
        "hl_last_error",
        "hl_simultaneous_approx",
        "hl_coefficient_parse",
        "hl_coefficient_eval",
        "hl_reperiodize",
        "hl_cell_solve",
        "hl_solve_dirichlet",
        "hl_field_values",
        "hl_field_free",
        "HL_STATUS_UNRESOLVED_SCALE",
    ] {
        assert!(header.contains(name), "{name} missing");
    }
    // The header must compile as C when a compiler is available.
    let src = std::env::temp_dir().join("homlab_header_check.c");
    std::fs::write(&src, "#include \"homlab.h\"\nint main(void) { return hl_version() == 0; }\n").unwrap();
    if let Ok(out) = Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-I").arg(dir.join("include")).arg(&src).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
