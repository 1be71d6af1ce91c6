//! The `cdctw` binary: exit codes, config precedence and file plumbing.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdctw"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn manifest_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("manifest.conf")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from manifest"))
        .to_string()
}

#[test]
fn unknown_method_exits_2_and_lists_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["align", "--method", "gtw", "--x", "a", "--y", "b", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["dtw-raw", "pca-dtw", "ctw", "dctw", "cstw", "astw", "cdctw", "cdctw-astw"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["align", "--x", "a.csv"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.conf"), "[align]\nepochz = 3\n").unwrap();
    let out = run(&["align", "--config", "bad.conf", "--x", "a", "--y", "b", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
    fs::write(dir.path().join("sec.conf"), "[alignn]\nepochs = 3\n").unwrap();
    let out = run(&["align", "--config", "sec.conf", "--x", "a", "--y", "b", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["align", "--x", "missing.csv", "--y", "missing.csv", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["gen-mnist", "--out", "m"], dir.path());
    assert_eq!(out.status.code(), Some(1), "no digit source");
}

#[test]
fn help_documents_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let top = ok(&["--help"], dir.path());
    for sub in ["gen-synthetic", "gen-mnist", "align", "bench", "score"] {
        assert!(top.contains(sub), "{sub}");
    }
    let align = ok(&["align", "--help"], dir.path());
    for needle in ["--ctx-x", "--lambda-x", "[default: 300]", "[default: cdctw]", "[default: auto]"] {
        assert!(align.contains(needle), "{needle}");
    }
    let bench = ok(&["bench", "--help"], dir.path());
    assert!(bench.contains("--jobs") && bench.contains("[default: 0..9]"));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-synthetic", "--out", "syn"], d);
    fs::write(
        d.join("run.conf"),
        "[align]\nx = syn/x.csv\ny = syn/y.csv\nmethod = ctw\nepochs = 7\nridge = 0.01\n\n[bench]\njobs = 4\n",
    )
    .unwrap();
    ok(&["align", "--config", "run.conf", "--epochs", "3", "--out", "r"], d);
    let r = d.join("r");
    assert_eq!(manifest_value(&r, "epochs"), "3");
    assert_eq!(manifest_value(&r, "ridge"), "0.01");
    assert_eq!(manifest_value(&r, "method"), "ctw");
    assert_eq!(manifest_value(&r, "patience"), "20");
    assert!(r.join("path.csv").exists());
}

#[test]
fn context_auto_and_file_both_work() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-synthetic", "--out", "syn", "--base-length", "20"], d);
    let frames = |name: &str| {
        let text = fs::read_to_string(d.join("syn").join(name)).unwrap();
        let header = text.lines().next().unwrap();
        header.split(',').nth(1).unwrap().trim().parse::<usize>().unwrap()
    };
    let (nx, ny) = (frames("x.csv"), frames("y.csv"));
    let ctx = |n: usize| {
        let row: Vec<String> = (0..n).map(|t| format!("{}", t % 3)).collect();
        format!("2,{n}\n{}\n{}\n", row.join(","), row.join(","))
    };
    fs::write(d.join("cx.csv"), ctx(nx)).unwrap();
    fs::write(d.join("cy.csv"), ctx(ny)).unwrap();
    let base = ["align", "--x", "syn/x.csv", "--y", "syn/y.csv", "--epochs", "4", "--lambda-x", "0.05"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> { [&base[..], extra].concat() };
    ok(&with(&["--ctx-x", "auto", "--ctx-y", "auto", "--out", "auto"]), d);
    ok(&with(&["--ctx-x", "cx.csv", "--ctx-y", "cy.csv", "--out", "file"]), d);
    assert!(d.join("auto/gates_x.bin").exists() && d.join("file/gates_x.bin").exists());
    assert_ne!(
        fs::read(d.join("auto/epochs.csv")).unwrap(),
        fs::read(d.join("file/epochs.csv")).unwrap()
    );
    // wrong frame count
    fs::write(d.join("short.csv"), "1,2\n1,2\n").unwrap();
    let out = run(&with(&["--ctx-x", "short.csv", "--out", "bad"]), d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_bench_and_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-synthetic", "--out", "a", "--seed", "1"], d);
    ok(&["gen-mnist", "--out", "b", "--fallback-digits", "true", "--canvas", "32", "--frames", "12"], d);
    assert!(d.join("b/mask_x.bin").exists());
    fs::write(d.join("sets.txt"), "a\nb\n").unwrap();
    let out = ok(
        &["bench", "--datasets", "sets.txt", "--methods", "ctw,dtw-raw", "--seeds", "0..1", "--out", "rep"],
        d,
    );
    assert!(out.contains("dtw-raw") && out.contains("ctw"));
    let agg = fs::read_to_string(d.join("rep/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next(), Some("method,dataset,mean,std"));
    assert_eq!(agg.lines().count(), 5);
    ok(&["bench", "--datasets", "a", "--methods", "ctw", "--seeds", "0", "--format", "json", "--out", "js"], d);
    assert!(d.join("js/report.json").exists());

    let perfect = ok(&["score", "--pred", "a/truth.csv", "--truth", "a/truth.csv", "--ann-x", "a/ann_x.txt", "--ann-y", "a/ann_y.txt"], d);
    assert_eq!(perfect.trim(), "1.000000");
    let micro = ok(&["score", "--pred", "a/truth.csv", "--ann-x", "a/ann_x.txt", "--ann-y", "a/ann_y.txt", "--averaging", "micro"], d);
    assert_eq!(micro.trim(), "1.000000");
    // truth from another pair ends elsewhere
    let out = run(&["score", "--pred", "a/truth.csv", "--truth", "b/truth.csv", "--ann-x", "a/ann_x.txt", "--ann-y", "a/ann_y.txt"], d);
    assert_eq!(out.status.code(), Some(1));
}
