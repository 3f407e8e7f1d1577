use std::fs;
use std::path::Path;
use std::process::Command;

fn qnnv_in(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qnnv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn qnnv");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn qnnv(args: &[&str]) -> (i32, String, String) {
    qnnv_in(Path::new(env!("CARGO_MANIFEST_DIR")), args)
}

const SMALL: &[&str] = &["--net", "bundled:small", "--point", "0.749,0.498", "--assert", "y0 >= 2.7"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(args: &[String]) -> (i32, String, String) {
    qnnv(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out, _) = qnnv(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["verify", "sweep", "intervals", "replay", "lut", "emit-smt", "export-ce"] {
        assert!(out.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(qnnv(&["--version"]).0, 0);
}

#[test]
fn usage_errors_exit_above_two() {
    let (code, _, err) = qnnv(&["verify", "--frobnicate"]);
    assert!(code > 2, "{code}");
    assert!(err.contains("frobnicate"));
    // two domains at once
    let (code, ..) = run(&with(&["verify"], &[SMALL, &["--real", "--float32"]].concat()));
    assert!(code > 2);
}

#[test]
fn runtime_errors_exit_above_two() {
    let (code, _, err) = qnnv(&["verify", "--net", "/no/such.nnet", "--point", "0", "--assert", "y0 > 0"]);
    assert!(code > 2);
    assert!(err.contains("/no/such.nnet"), "{err}");
    let (code, _, err) = qnnv(&["verify", "--net", "bundled:small", "--point", "0,0", "--assert", "y0 >"]);
    assert!(code > 2, "{err}");
    let (code, _, err) = qnnv(&["verify", "--net", "bundled:small", "--point", "0,0,0", "--assert", "y0 > 0"]);
    assert!(code > 2 && err.contains("dimension"), "{err}");
    let (code, ..) = run(&with(&["verify"], &[SMALL, &["--fxp", "Q0.4"]].concat()));
    assert!(code > 2);
}

#[test]
fn verdict_exit_codes() {
    let real = run(&with(&["verify"], &[SMALL, &["--real"]].concat()));
    assert_eq!(real.0, 0, "{}", real.1);
    assert!(real.1.contains("verdict:  safe"));
    let q = run(&with(&["verify"], &[SMALL, &["--fxp", "Q4.6"]].concat()));
    assert_eq!(q.0, 1);
    assert!(q.1.contains("output:   [2.6875]"), "{}", q.1);
    let missing = run(&with(&["verify"], &[SMALL, &["--fxp", "Q4.6", "--solver", "/no/such/solver"]].concat()));
    assert_eq!(missing.0, 2, "{}", missing.1);
    assert!(missing.1.contains("solver error"), "{}", missing.1);
}

#[test]
fn json_report_round_trips_through_export_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&with(&["verify", "--json"], &[SMALL, &["--fxp", "Q4.6"]].concat()));
    assert_eq!(code, 1);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["verdict"], "Falsified");
    let path = dir.path().join("report.json");
    fs::write(&path, &out).unwrap();
    let (code, out, err) = qnnv_in(dir.path(), &["export-ce", "--ce", "report.json", "--out", "ce", "--shape", "1x2"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("ce.json") && out.contains("ce.pgm"));
    let pgm = fs::read(dir.path().join("ce.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n2 1\n255\n"));
    let (code, out, _) = qnnv_in(dir.path(), &["replay", "--net", "bundled:small", "--ce", "ce.json", "--assert", "y0 >= 2.7"]);
    assert_eq!(code, 1);
    assert!(out.contains("y0:      2.6875 [0010|101100]"), "{out}");
    assert!(out.contains("verdict: violated"));
    // a safe report has nothing to export
    let (_, safe, _) = run(&with(&["verify", "--json"], &[SMALL, &["--real"]].concat()));
    fs::write(dir.path().join("safe.json"), safe).unwrap();
    let (code, _, err) = qnnv_in(dir.path(), &["export-ce", "--ce", "safe.json", "--out", "x"]);
    assert!(code > 2 && err.contains("no counterexample"), "{err}");
}

#[test]
fn replay_prints_trace_and_wraps() {
    let (code, out, _) = qnnv(&["replay", "--net", "bundled:small", "--fxp", "Q4.6", "--input", "0.749,0.498", "--trace"]);
    assert_eq!(code, 0, "no assertion means nothing to violate");
    assert!(out.contains("layer 0 potential:"));
    assert!(out.contains("wraps:   none"));
    assert!(!out.contains("verdict"));
    // 2 * 7 leaves the Q4.0 range [-8, 7]
    let (_, out, _) = qnnv(&["replay", "--net", "bundled:guarded", "--fxp", "Q4.0", "--input", "7,0"]);
    assert!(out.contains("wraps:   ") && !out.contains("wraps:   none"), "{out}");
}

#[test]
fn config_file_fills_in_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("qnnv.toml"), "domain = \"Q4.6\"\ntimeout = 30\n").unwrap();
    let args: Vec<&str> = ["verify"].iter().chain(SMALL).copied().collect();
    let (code, out, _) = qnnv_in(dir.path(), &args);
    assert_eq!(code, 1, "config domain applies: {out}");
    let with_flag: Vec<&str> = args.iter().copied().chain(["--real"]).collect();
    let (code, ..) = qnnv_in(dir.path(), &with_flag);
    assert_eq!(code, 0, "explicit flag wins");
    fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    let bad: Vec<&str> = args.iter().copied().chain(["--config", "bad.toml"]).collect();
    let (code, _, err) = qnnv_in(dir.path(), &bad);
    assert!(code > 2 && err.contains("bad.toml"), "{err}");
}

#[test]
fn emit_smt_writes_script_ssa_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["emit-smt", "--net", "bundled:guarded", "--region", "0:1,0:1", "--assert", "y0 <= 1", "--fxp", "Q8.0"];
    let (code, out, _) = qnnv(&base);
    assert_eq!(code, 0);
    assert!(out.contains("(set-logic QF_BV)") && out.contains("(check-sat)"), "{out}");
    let dot = dir.path().join("g.dot");
    let args: Vec<&str> = base.iter().copied().chain(["--ssa", "--dot", dot.to_str().unwrap(), "--names", "x,y;a,b,f"]).collect();
    let (code, out, _) = qnnv(&args);
    assert_eq!(code, 0);
    assert!(out.contains("x1 == nondet_symbol(nondet0)"), "{out}");
    assert!(out.contains("(assert) a2 <= 1"), "{out}");
    assert!(fs::read_to_string(dot).unwrap().starts_with("digraph"));
    let (code, out, _) = qnnv(&["emit-smt", "--net", "bundled:small", "--point", "0.5,0.5", "--assert", "y0 > 0", "--real", "--no-intervals"]);
    assert_eq!(code, 0);
    assert!(out.contains("QF_LRA"));
}

#[test]
fn intervals_table_and_json() {
    let (code, out, _) = qnnv(&["intervals", "--net", "bundled:guarded", "--region", "0:1,0:1"]);
    assert_eq!(code, 0);
    assert!(out.contains("[-3, 2]") && out.contains("open"), "{out}");
    assert!(out.contains("integer bits needed: 4"), "{out}");
    let (code, out, _) = qnnv(&["intervals", "--net", "bundled:guarded", "--region", "0:1,0:1", "--fxp", "Q3.0", "--json"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    // the weight 4 wraps to -4 in Q3.0, so b = x - 4y
    assert_eq!(doc["intervals"]["layers"][0][1]["pre"], serde_json::json!([-4.0, 1.0]));
    assert_eq!(doc["range"]["candidate"]["any_wrap_risk"], true, "4 does not fit Q3.0");
}

#[test]
fn sweep_with_explicit_formats_and_widths() {
    let (code, out, _) = qnnv(&[
        "sweep", "--net", "bundled:small", "--region", "0:1,0:1", "--assert", "y0 <= 5", "--formats", "Q4.2,Q5.3",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("Q4.2") && out.contains("Q5.3"), "{out}");
    let (code, _, err) = qnnv(&["sweep", "--net", "bundled:small", "--region", "0:1,0:1", "--assert", "y0 <= 5", "--widths", "9..6"]);
    assert!(code > 2, "{err}");
}

#[test]
fn lut_build_writes_csv_and_fixed_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let (code, out, _) = qnnv(&[
        "lut", "build", "--activation", "tanh", "--epsilon", "0.05", "--cutoff", "4", "--table-fxp", "Q2.6",
        "--check-points", "1000", "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("tails:      2") && out.contains("Q2.6"), "{out}");
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("input,output\n"));
    let (code, out, _) = qnnv(&["lut", "build", "--grid-step", "0.5", "--cutoff", "2", "--check-points", "100"]);
    assert_eq!(code, 0);
    assert!(out.contains("samples     [-2, 2]: 9"), "{out}");
}
