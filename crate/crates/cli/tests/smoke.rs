//! End-to-end smoke tests over the compiled binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_textmountain"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("spawn");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn synth_detect_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let dets = dir.path().join("dets.txt");
    let (code, _, err) = run(&[
        "synth",
        "--n",
        "3",
        "--size",
        "320x320",
        "--polys",
        "4",
        "--seed",
        "7",
        "-o",
        scenes.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "synth failed: {err}");
    assert!(scenes.join("scene_000").join("ts.tmm").is_file());
    assert!(scenes.join("scene_000").join("gt.txt").is_file());

    let (code, _, err) = run(&[
        "detect",
        scenes.to_str().unwrap(),
        "-o",
        dets.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "detect failed: {err}");

    let (code, out, err) = run(&[
        "eval",
        dets.to_str().unwrap(),
        scenes.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "eval failed: {err}");
    assert!(out.contains("F=1.000"), "expected perfect F, got: {out}");
}

#[test]
fn eval_missing_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "eval",
        dir.path().join("missing.txt").to_str().unwrap(),
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "expected runtime error exit: {err}");
    assert!(!err.is_empty());
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _, _) = run(&["detect", "--no-such-flag"]);
    assert_eq!(code, 2);
}

#[test]
fn bench_prints_timings() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let (code, _, _) = run(&[
        "synth",
        "--n",
        "1",
        "--size",
        "320x320",
        "--seed",
        "3",
        "-o",
        scenes.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, out, err) = run(&[
        "bench",
        scenes.join("scene_000").to_str().unwrap(),
        "--iterations",
        "2",
    ]);
    assert_eq!(code, 0, "bench failed: {err}");
    assert!(
        out.contains("sequential") && out.contains("parallel") && out.contains("speedup"),
        "unexpected bench output: {out}"
    );
}

#[test]
fn gen_labels_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.txt");
    std::fs::write(&ann, "10,10,80,10,80,40,10,40,hello\n20,60,90,60,90,85,20,85,###\n").unwrap();
    let labels = dir.path().join("labels");
    let (code, _, err) = run(&[
        "gen-labels",
        ann.to_str().unwrap(),
        "100x100",
        "-o",
        labels.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "gen-labels failed: {err}");
    for f in ["ts.tmm", "tcbp.tmm", "tcd.tmm", "ignore.tmm"] {
        assert!(labels.join(f).is_file(), "missing {f}");
    }
    let ppm = dir.path().join("tcbp.ppm");
    let (code, _, err) = run(&[
        "render",
        labels.join("tcbp.tmm").to_str().unwrap(),
        "-o",
        ppm.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "render failed: {err}");
    let head = std::fs::read(&ppm).unwrap();
    assert_eq!(&head[..2], b"P6");
}

#[test]
fn detect_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let (code, _, _) = run(&[
        "synth", "--n", "1", "--size", "320x320", "--seed", "11", "-o",
        scenes.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let dets = dir.path().join(format!("dets_{workers}.txt"));
        let (code, _, err) = run(&[
            "--workers",
            workers,
            "detect",
            scenes.to_str().unwrap(),
            "-o",
            dets.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "detect failed: {err}");
        outputs.push(std::fs::read_to_string(&dets).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(Path::new(&scenes).exists());
}
