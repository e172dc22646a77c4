use std::path::PathBuf;
use std::process::{Command, Output};

fn flowtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowtree")).args(args).output().expect("spawn flowtree")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name).display().to_string()
}

#[test]
fn verify_rejects_zero_depth() {
    let out = flowtree(&["verify", "--depth", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
}

#[test]
fn shipped_scenarios_pass() {
    for name in ["trivial.json", "th01.json", "iso-not-ap.json"] {
        let out = flowtree(&["run", &scenario(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["passed"], true, "{name}");
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = flowtree(&["run", &scenario("trivial.json")]);
    let b = flowtree(&["run", &scenario("trivial.json")]);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_scenario_field_is_an_error() {
    let path = std::env::temp_dir().join(format!("flowtree-bad-{}.json", std::process::id()));
    std::fs::write(&path, r#"{"tree": {"kind": "ball", "q": 2, "radius": 2}, "colour": 1}"#).unwrap();
    let out = flowtree(&["run", path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn ap_constant_of_alternating_weight() {
    let out = flowtree(&["ap-constant", "--q", "2", "--depth", "6", "--weight", "periodic:2,1", "--p", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["constant"].is_object());
}

#[test]
fn jacobian_demo_prints_csv() {
    let out = flowtree(&["jacobian-demo", "--n-max", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,xi,image_ratio,bound,mu_image_e,consistent");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("3,1/8,48/55,"));
}
