use std::ffi::{c_char, CString};
use std::ptr;

use ovalflow_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { ovalflow_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n >= 0);
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn bryant_handle_round_trip() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ovalflow_bryant_solve(4, 100.0, 1e-10, &mut h) }, OVALFLOW_OK);
    assert!(!h.is_null());
    let (mut phi, mut dphi) = (0.0, 0.0);
    assert_eq!(unsafe { ovalflow_bryant_eval(h, 0.0, &mut phi, &mut dphi) }, OVALFLOW_OK);
    assert_eq!(phi, 1.0);
    let mut s = OvalflowAsymptotics::default();
    assert_eq!(unsafe { ovalflow_bryant_summary(h, 50.0, &mut s) }, OVALFLOW_OK);
    assert!((s.r2_phi_large / 4.0 - 1.0).abs() < 0.01);
    assert!((s.k_orb_tip - 1.0 / 12.0).abs() < 1e-6);
    assert_eq!(unsafe { ovalflow_bryant_eval(h, 1e4, &mut phi, &mut dphi) }, OVALFLOW_ERR_RANGE);
    assert!(last_error().contains("outside"));
    unsafe { ovalflow_bryant_free(h) };
    unsafe { ovalflow_bryant_free(ptr::null_mut()) };
}

#[test]
fn errors_map_to_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ovalflow_bryant_solve(3, 100.0, 1e-10, &mut h) }, OVALFLOW_ERR_PARAM);
    assert!(h.is_null());
    assert!(last_error().contains("n = 3"));
    assert_eq!(unsafe { ovalflow_bryant_solve(4, 100.0, 1e-10, ptr::null_mut()) }, OVALFLOW_ERR_NULL);
    let mut s = OvalflowPic::default();
    assert_eq!(unsafe { ovalflow_profile_pic(ptr::null(), &mut s) }, OVALFLOW_ERR_NULL);
    // a short message buffer still yields the full length
    let mut one = [0 as c_char; 4];
    let n = unsafe { ovalflow_last_error(one.as_mut_ptr(), one.len()) };
    assert!(n > 4);
    assert_eq!(one[3], 0);
}

#[test]
fn cylinder_keeps_its_radius() {
    let mut h = ptr::null_mut();
    let t0 = -10.0;
    assert_eq!(unsafe { ovalflow_profile_cylinder(4, t0, 5.0, 65, &mut h) }, OVALFLOW_OK);
    assert_eq!(unsafe { ovalflow_profile_evolve_to(h, t0 + 1.0, 1.0) }, OVALFLOW_OK);
    let (mut len, mut t) = (0usize, 0.0);
    assert_eq!(unsafe { ovalflow_profile_info(h, &mut len, &mut t) }, OVALFLOW_OK);
    assert_eq!((len, t), (65, t0 + 1.0));
    let (mut z, mut f) = (vec![0.0; len], vec![0.0; len]);
    assert_eq!(unsafe { ovalflow_profile_copy(h, z.as_mut_ptr(), f.as_mut_ptr(), len - 1) }, OVALFLOW_ERR_BUFFER);
    assert_eq!(unsafe { ovalflow_profile_copy(h, z.as_mut_ptr(), f.as_mut_ptr(), len) }, OVALFLOW_OK);
    let r = (2.0f64 * 2.0 * -(t0 + 1.0)).sqrt();
    assert!(f.iter().all(|v| (v - r).abs() < 1e-6 * r));
    assert_eq!((z[0], z[len - 1]), (-5.0, 5.0));
    let mut p = OvalflowPic::default();
    assert_eq!(unsafe { ovalflow_profile_pic(h, &mut p) }, OVALFLOW_OK);
    assert!(p.r_min > 0.0);
    unsafe { ovalflow_profile_free(h) };
}

#[test]
fn oval_is_calibrated() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ovalflow_profile_oval(4, 10.0, 201, 1, &mut h) }, OVALFLOW_OK);
    let (mut len, mut t) = (0usize, 0.0);
    unsafe { ovalflow_profile_info(h, &mut len, &mut t) };
    assert_eq!(len, 201);
    assert!(t < 0.0 && (t / -(10f64).exp() - 1.0).abs() < 0.5);
    unsafe { ovalflow_profile_free(h) };
}

#[test]
fn spectrum_is_exact() {
    let mut e = [0.0; 11];
    assert_eq!(unsafe { ovalflow_operator_spectrum(10, e.as_mut_ptr(), e.len()) }, OVALFLOW_OK);
    for (k, v) in e.iter().enumerate() {
        assert!((v - (1.0 - k as f64 / 2.0)).abs() < 1e-8);
    }
    assert_eq!(unsafe { ovalflow_operator_spectrum(10, e.as_mut_ptr(), 5) }, OVALFLOW_ERR_BUFFER);
}

#[test]
fn run_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut passed = -1;
    let bad = CString::new("command = bryant\ntheta = ?\n").unwrap();
    assert_eq!(unsafe { ovalflow_run(bad.as_ptr(), d.as_ptr(), &mut passed) }, OVALFLOW_ERR_CONFIG);
    assert!(last_error().contains("line 2"));
    let good = CString::new("command = bryant\n").unwrap();
    assert_eq!(unsafe { ovalflow_run(good.as_ptr(), d.as_ptr(), &mut passed) }, OVALFLOW_OK);
    assert_eq!(passed, 1);
    assert!(dir.path().join("manifest.json").is_file());
}
