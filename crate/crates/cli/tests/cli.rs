use std::path::Path;
use std::process::{Command, Output};

fn adspec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adspec")).args(args).current_dir(cwd).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn help_lists_every_command_and_version_prints() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adspec(&["--help"], tmp.path());
    assert!(o.status.success());
    let t = text(&o);
    for c in ["fhn-phase", "neutral-curve", "resolvent", "burgers-opt", "verify"] {
        assert!(t.contains(c), "{c} missing from help");
    }
    let o = adspec(&["resolvent", "--help"], tmp.path());
    let t = text(&o);
    assert!(t.contains("--omega-count") && t.contains("--config") && t.contains("--out"), "{t}");

    let o = adspec(&["--version"], tmp.path());
    assert!(o.status.success());
    assert!(text(&o).starts_with("adspec 0.1.0"), "{}", text(&o));
}

#[test]
fn bad_input_exits_with_code_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adspec(&["burgers-opt", "--nu", "-1", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("nu"), "{}", text(&o));
    assert!(!tmp.path().join("x").exists());

    let o = adspec(&["resolvent", "--bogus", "1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(tmp.path().join("c.cfg"), "typo_key = 3\n").unwrap();
    let o = adspec(&["resolvent", "--config", "c.cfg"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("typo_key"), "{}", text(&o));

    let o = adspec(&["resolvent", "--config", "missing.cfg"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resolvent_run_writes_csv_and_summary_with_flags_over_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("r.cfg"),
        "# small sweep\nn_modes = 32\nomega_min = -1\nomega_max = 1\nomega_count = 7\n",
    )
    .unwrap();
    let o = adspec(&["resolvent", "--config", "r.cfg", "--omega-count", "3", "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    let dir = tmp.path().join("r");
    let gains = std::fs::read_to_string(dir.join("gains.csv")).unwrap();
    let mut lines = gains.lines();
    assert_eq!(lines.next(), Some("omega,sigma1,sigma2,iterations1,iterations2"));
    assert_eq!(lines.count(), 3);
    let profiles = std::fs::read_to_string(dir.join("optimal_profiles.csv")).unwrap();
    assert!(profiles.starts_with("x,forcing_re,forcing_im,response_re,response_im\n"));

    let s = summary(&dir);
    assert_eq!(s["command"], "resolvent");
    assert!(s["version"].as_str().unwrap().starts_with("0.1.0"));
    assert!(s["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(s["diagnostics"]["factorizations"].is_u64());
    assert_eq!(s["config"]["n_modes"], 32);
    assert_eq!(s["config"]["omega_count"], 3);
    assert_eq!(s["config"]["omega_min"], -1.0);
}

#[test]
fn verify_with_injected_fault_exits_1_naming_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adspec(&["verify", "--inject-fault", "true", "--fhn", "false", "--graphs", "5", "--out", "v"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("resolvent_dot"), "{t}");
    assert!(t.contains("transform_forward_fourier"), "{t}");
    let report = std::fs::read_to_string(tmp.path().join("v/verify_report.csv")).unwrap();
    assert!(report.starts_with("name,value,lower,upper,passed,detail\n"));
    assert!(report.lines().any(|l| l.starts_with("resolvent_dot,") && l.contains(",false,")));
    let s = summary(&tmp.path().join("v"));
    assert_eq!(s["results"]["passed"], false);
    assert_eq!(s["diagnostics"]["adjoint_factorizations"], 0);
}

#[test]
fn burgers_at_target_stops_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adspec(&["burgers-opt", "--perturbation", "0", "--out", "b"], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("b/trace.json")).unwrap()).unwrap();
    assert_eq!(trace.as_array().unwrap().len(), 1);
    let s = summary(&tmp.path().join("b"));
    assert_eq!(s["results"]["iterations"], 0);
    assert_eq!(s["results"]["outcome"], "converged");
    let fields = std::fs::read_to_string(tmp.path().join("b/fields.csv")).unwrap();
    assert!(fields.starts_with("x,u0,u0_true,u_final,u_target\n"));
}

#[test]
fn default_output_directory_is_per_command() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adspec(&["resolvent", "--n-modes", "16", "--omega-count", "1"], tmp.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(tmp.path().join("adspec-out/resolvent/summary.json").exists());
}
