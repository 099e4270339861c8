use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rdv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn scenario(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn verify_default_is_safe_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", "{}");
    let out = rdv(&["verify", "s.json", "--out", "run"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("run/report.json")).unwrap();
    assert!(report.contains("\"verdict\": \"safe\""));
    assert!(report.contains("\"violations\": []"));
    let csv = fs::read_to_string(dir.path().join("run/flowpipe.csv")).unwrap();
    assert!(csv.starts_with("step,time_s,mode,lo_1,lo_2,lo_3,lo_4,hi_1,hi_2,hi_3,hi_4,flags\n"));
    assert!(dir.path().join("run/xy.svg").exists());
}

#[test]
fn verify_prints_report_without_out() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", r#"{"t1_s": 7200, "t2_s": 7230}"#);
    let out = rdv(&["verify", "s.json", "--window", "10"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"windows\""));
    assert!(text.contains("7220.0"));
}

#[test]
fn inflated_separation_is_unsafe_and_falsified() {
    let dir = tempfile::tempdir().unwrap();
    scenario(
        dir.path(),
        "big.json",
        r#"{"properties": {"separation_half_width_m": 50}}"#,
    );
    assert_eq!(code(&rdv(&["verify", "big.json"], dir.path())), 1);
    let out = rdv(
        &[
            "falsify",
            "big.json",
            "--samples",
            "40",
            "--seed",
            "1",
            "--out",
            "cx.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("separation"));
    assert!(fs::read_to_string(dir.path().join("cx.csv"))
        .unwrap()
        .starts_with("time_s,mode,"));
}

#[test]
fn falsify_default_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", "{}");
    let out = rdv(&["falsify", "s.json", "--samples", "20", "--seed", "4"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no counterexample"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rdv(&["launch"], dir.path())), 2);
    assert_eq!(code(&rdv(&[], dir.path())), 2);
    scenario(dir.path(), "s.json", "{}");
    assert_eq!(code(&rdv(&["verify", "s.json", "--bogus"], dir.path())), 2);
    scenario(dir.path(), "bad.json", r#"{"t1_s": 9000}"#);
    let out = rdv(&["verify", "bad.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/t1_s"));
    scenario(dir.path(), "typo.json", r#"{"init_center": [1, 2, "x", 4]}"#);
    let out = rdv(&["verify", "typo.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/init_center/2"));
    assert_eq!(code(&rdv(&["verify", "missing.json"], dir.path())), 2);
    assert_eq!(code(&rdv(&["sweep", "s.json", "--angles", "10:0:5"], dir.path())), 2);
    assert_eq!(code(&rdv(&["--help"], dir.path())), 0);
}

#[test]
fn plot_planes_and_recompute() {
    let dir = tempfile::tempdir().unwrap();
    scenario(
        dir.path(),
        "s.json",
        r#"{"variant": "lin_prox_th_tracking", "t1_s": 7200, "t2_s": 7210}"#,
    );
    assert_eq!(code(&rdv(&["verify", "s.json", "--out", "run"], dir.path())), 0);
    let out = rdv(&["plot", "run/report.json", "--plane", "uxuy"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let saved = fs::read_to_string(dir.path().join("run/uxuy.svg")).unwrap();
    assert!(saved.contains("<rect"));
    // without the sibling flowpipe the plot is recomputed from the config echo
    fs::remove_file(dir.path().join("run/flowpipe.csv")).unwrap();
    let out = rdv(
        &["plot", "run/report.json", "--plane", "uxuy", "--out", "again.svg"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(dir.path().join("again.svg")).unwrap(), saved);
    assert_eq!(code(&rdv(&["plot", "run/report.json", "--plane", "xz"], dir.path())), 2);

    scenario(dir.path(), "lin.json", "{}");
    assert_eq!(code(&rdv(&["verify", "lin.json", "--out", "lin"], dir.path())), 0);
    assert_eq!(
        code(&rdv(&["plot", "lin/report.json", "--plane", "uxuy"], dir.path())),
        2
    );
}

#[test]
fn sweep_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", "{}");
    let out = rdv(
        &["sweep", "s.json", "--angles", "180:230:50", "--out", "sw"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "angle_deg,radius_m,max_safe_T_s");
    assert!(lines[2].starts_with("230,950,-1"));
    assert!(fs::read_to_string(dir.path().join("sw/sweep.svg"))
        .unwrap()
        .starts_with("<svg"));

    let out = rdv(&["simulate", "s.json", "--samples", "2", "--out", "tr"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("tr/trajectory_1.csv").exists());
    let out = rdv(&["simulate", "s.json"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 16201 + 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", r#"{"t1_s": 7200, "t2_s": 7260, "seed": 9}"#);
    for run in ["a", "b"] {
        assert_eq!(
            code(&rdv(&["verify", "s.json", "--out", run, "--window", "30"], dir.path())),
            0
        );
        let report = format!("{run}/report.json");
        assert_eq!(code(&rdv(&["plot", &report, "--plane", "vxvy"], dir.path())), 0);
        let cx = format!("{run}/sim");
        assert_eq!(
            code(&rdv(
                &["simulate", "s.json", "--samples", "2", "--out", &cx],
                dir.path()
            )),
            0
        );
        let sweep = format!("{run}/sweep");
        let out = rdv(
            &["sweep", "s.json", "--angles", "180:180:5", "--out", &sweep],
            dir.path(),
        );
        assert_eq!(code(&out), 0);
    }
    for f in [
        "report.json",
        "flowpipe.csv",
        "xy.svg",
        "vxvy.svg",
        "sim/trajectory_0.csv",
        "sweep/sweep.csv",
        "sweep/sweep.svg",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let f1 = rdv(&["falsify", "s.json", "--samples", "10"], dir.path());
    let f2 = rdv(&["falsify", "s.json", "--samples", "10"], dir.path());
    assert_eq!(f1.stdout, f2.stdout);
}
