use std::ffi::{CStr, CString};
use std::ptr;

use flowtree_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ft_last_error()).to_string_lossy().into_owned() }
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s).to_string_lossy().into_owned() };
    unsafe { ft_string_free(s) };
    out
}

#[test]
fn handles_round_trip() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ft_tree_homogeneous_slab(2, 4, 0, &mut t), FtStatus::Ok);
        assert_eq!(ft_tree_len(t), 31);
        let mut lvl = 0i64;
        assert_eq!(ft_tree_level(t, 0, &mut lvl), FtStatus::Ok);
        assert_eq!(lvl, 4);

        let mut m = ptr::null_mut();
        assert_eq!(ft_measure_canonical(t, &mut m), FtStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(ft_measure_value(m, 0, &mut s), FtStatus::Ok);
        assert_eq!(take(s), "16");

        let pat = [CString::new("2").unwrap(), CString::new("1").unwrap()];
        let ptrs: Vec<_> = pat.iter().map(|c| c.as_ptr()).collect();
        let mut w = ptr::null_mut();
        assert_eq!(ft_weight_periodic(t, ptrs.as_ptr(), ptrs.len(), &mut w), FtStatus::Ok);

        let p = CString::new("2").unwrap();
        let (mut lo, mut hi) = (0.0, 0.0);
        let mut json = ptr::null_mut();
        assert_eq!(ft_ap_constant(w, m, p.as_ptr(), 12, true, &mut lo, &mut hi, &mut json), FtStatus::Ok);
        assert_eq!(lo, hi);
        assert!(lo > 1.0);
        assert!(take(json).contains("argmax_trapezoid"));

        let (mut a1lo, mut a1hi) = (0.0, 0.0);
        assert_eq!(ft_a1_constant(w, m, 12, &mut a1lo, &mut a1hi, ptr::null_mut()), FtStatus::Ok);
        assert!(hi <= a1hi);

        let (mut flo, mut fhi) = (0.0, 0.0);
        assert_eq!(ft_ap_constant(w, m, p.as_ptr(), 12, false, &mut flo, &mut fhi, ptr::null_mut()), FtStatus::Ok);
        assert!(flo <= lo && lo <= fhi);

        ft_weight_free(w);
        ft_measure_free(m);
        ft_tree_free(t);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ft_tree_homogeneous_slab(0, 4, 0, &mut t), FtStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(ft_tree_homogeneous_slab(2, 3, 0, ptr::null_mut()), FtStatus::NullPointer);
        assert!(last_error().contains("null"));

        assert_eq!(ft_tree_homogeneous_slab(2, 3, 0, &mut t), FtStatus::Ok);
        assert!(last_error().is_empty());
        let mut lvl = 0i64;
        assert_eq!(ft_tree_level(t, 999, &mut lvl), FtStatus::InvalidArgument);

        let mut m = ptr::null_mut();
        assert_eq!(ft_measure_canonical(t, &mut m), FtStatus::Ok);
        let bad = [CString::new("0").unwrap()];
        let ptrs: Vec<_> = bad.iter().map(|c| c.as_ptr()).collect();
        let mut w = ptr::null_mut();
        assert_ne!(ft_weight_periodic(t, ptrs.as_ptr(), 1, &mut w), FtStatus::Ok);
        assert_ne!(ft_weight_from_values(t, ptrs.as_ptr(), 1, &mut w), FtStatus::Ok);

        let p = CString::new("1").unwrap();
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(ft_ap_constant(ptr::null(), m, p.as_ptr(), 12, true, &mut lo, &mut hi, ptr::null_mut()), FtStatus::NullPointer);

        let mut passed = false;
        let junk = CString::new("{ not json").unwrap();
        assert_eq!(ft_run_scenario(junk.as_ptr(), &mut passed, ptr::null_mut()), FtStatus::Parse);
        assert_eq!(ft_verify(0, &mut passed, ptr::null_mut()), FtStatus::InvalidArgument);

        ft_measure_free(m);
        ft_tree_free(t);
        ft_tree_free(ptr::null_mut());
        ft_string_free(ptr::null_mut());
    }
}

#[test]
fn scenario_through_the_abi() {
    let sc = CString::new(r#"{"tree": {"kind": "homogeneous-slab", "q": 2, "level_top": 3}, "suites": ["ap", "bmo"]}"#).unwrap();
    let mut passed = false;
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(ft_run_scenario(sc.as_ptr(), &mut passed, &mut report), FtStatus::Ok);
    }
    assert!(passed);
    let text = take(report);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn header_is_valid_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/flowtree.h")).unwrap();
    for name in ["ft_last_error", "ft_string_free", "ft_tree_homogeneous_slab", "ft_ap_constant", "ft_run_scenario", "typedef struct FtTree FtTree"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("flowtree_header_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"flowtree.h\"\nint main(void) { FtTree *t = 0; return ft_tree_homogeneous_slab(2, 3, 0, &t) == FT_STATUS_OK ? 0 : 1; }\n").unwrap();
    let status = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .expect("a C compiler");
    std::fs::remove_file(&src).ok();
    assert!(status.success());
}
