use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn singstab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singstab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let classic = data("classic.json");
    let ok = singstab(dir.path(), &["validate", classic.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stderr));
    let report = read_json(&dir.path().join("validation.json"));
    assert_eq!(report["d"], 2);

    let bad = singstab(dir.path(), &["validate", data("singular_p.json").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad.stderr).contains("modes[1].P"), "{}", text(&bad.stderr));

    let unstable = singstab(dir.path(), &["validate", data("unstable_fast.json").to_str().unwrap()]);
    assert_eq!(unstable.status.code(), Some(2));

    let missing = singstab(dir.path(), &["validate", "/nonexistent/system.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn signal_admissibility_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let classic = data("classic.json");
    let signal = data("signal.json");
    let ok = singstab(dir.path(), &["validate", classic.to_str().unwrap(), "--signal", signal.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stderr));

    let short = dir.path().join("short.json");
    fs::write(&short, r#"{"pieces": [{"mode": 0, "duration": 0.1}], "final_mode": 1}"#).unwrap();
    let rejected = singstab(dir.path(), &["validate", classic.to_str().unwrap(), "--signal", short.to_str().unwrap()]);
    assert_eq!(rejected.status.code(), Some(1));
    assert!(text(&rejected.stderr).contains("dwell time"), "{}", text(&rejected.stderr));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan");
    let classic = data("classic.json");
    let run = singstab(&out, &["--dry-run", "exponent", classic.to_str().unwrap(), "--depth", "3"]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    assert!(!text(&run.stdout).is_empty());
    assert!(!out.exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let classic = data("classic.json");
    let args = ["exponent", classic.to_str().unwrap(), "--target", "sigma-bar", "--depth", "4", "--grid", "0.5:5:4"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = singstab(out, &args);
        assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    }
    let file = "exponent-sigma-bar.json";
    assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap());
    let meta = read_json(&a.join("metadata.json"));
    assert_eq!(meta["command"], "exponent");
}

#[test]
fn simulate_writes_requested_formats() {
    let dir = tempfile::tempdir().unwrap();
    let classic = data("classic.json");
    let run = singstab(
        dir.path(),
        &[
            "simulate",
            classic.to_str().unwrap(),
            "--periodic",
            "0,1",
            "--piece",
            "0.5",
            "--t-end",
            "2",
            "--dt",
            "0.1",
            "--format",
            "csv,json,svg",
        ],
    );
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,mode"));
    // 21 output times plus a repeated row for each of the 3 jumps
    assert_eq!(lines.count(), 24);
    assert!(dir.path().join("trajectory.json").exists());
    assert!(fs::read_to_string(dir.path().join("trajectory.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn sweep_over_mu_shifts_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let classic = data("classic.json");
    let run = singstab(
        dir.path(),
        &[
            "sweep",
            classic.to_str().unwrap(),
            "--param",
            "mu",
            "--from",
            "-1",
            "--to",
            "1",
            "--steps",
            "3",
            "--target",
            "sigma-bar",
            "--depth",
            "3",
        ],
    );
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let lower: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!((lower[1] - lower[0] - 1.0).abs() <= 1e-9);
    assert!((lower[2] - lower[1] - 1.0).abs() <= 1e-9);
}

#[test]
fn complementary_reports_the_stable_branch() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("complementary.json");
    let run = singstab(dir.path(), &["complementary", input.to_str().unwrap(), "--l", "1", "--tau", "0.5"]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    let report = read_json(&dir.path().join("complementary.json"));
    assert_eq!(report["report"]["verdict"], "ES", "{report}");
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let run = singstab(dir.path(), &["validate", "--bogus"]);
    assert_eq!(run.status.code(), Some(1));
    let help = singstab(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
}
