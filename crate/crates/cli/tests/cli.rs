use std::fs;
use std::path::Path;
use std::process::Command;

use sic_core::harness::ScenarioConfig;
use sic_core::Algorithm;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sic-bench"))
}

fn small_scenario(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ScenarioConfig::reference();
    cfg.segments[0].symbols = 1000;
    cfg.segments[1].symbols = 1000;
    cfg.channel.change_interval = 1000;
    cfg.select(&[Algorithm::WhLms, Algorithm::WihLms, Algorithm::AopLms]).unwrap();
    let path = dir.join("small.scenario");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn run_writes_selected_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let out = dir.path().join("out");
    let status = bench()
        .args(["run", scenario.to_str().unwrap(), "--algos", "wh-lms,aop-lms", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("aop-lms"));
    let mut names: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["aop-lms_trace.csv", "run.log", "summary.csv", "wh-lms_trace.csv"]
    );
}

#[test]
fn seed_override_changes_the_traces() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path());
    let mut traces = Vec::new();
    for (name, seed) in [("a", "1"), ("b", "1"), ("c", "9")] {
        let out = dir.path().join(name);
        let ok = bench()
            .args([
                "run",
                scenario.to_str().unwrap(),
                "--algos",
                "wih-lms",
                "--seed-override",
                seed,
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(ok.success());
        traces.push(fs::read(out.join("wih-lms_trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_ne!(traces[0], traces[2]);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = bench().args(["run", "/nonexistent/x.scenario"]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("x.scenario"));

    let broken = dir.path().join("broken.scenario");
    fs::write(&broken, "[power]\ntx_dbm = \"loud\"\n").unwrap();
    let out = bench().args(["run", broken.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tx_dbm"));

    let scenario = small_scenario(dir.path());
    let out = bench()
        .args(["run", scenario.to_str().unwrap(), "--algos", "magic"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
