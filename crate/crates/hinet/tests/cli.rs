use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hinet::hvol;
use hinet_core::data::{make_phantom, LabelVolume};

fn hinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hinet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn labels_file(dir: &Path, name: &str, dims: [usize; 3], data: Vec<u8>) -> String {
    let path = dir.join(name);
    hvol::write_labels(&path, &LabelVolume::new(dims, data).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn initial_checkpoint(dir: &Path, levels: usize) -> PathBuf {
    let cfg = dir.join("init.json");
    let out = dir.join("init");
    fs::write(
        &cfg,
        format!(
            r#"{{"epochs": 0, "levels": {levels}, "base_filters": 2, "extent": 16, "output_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = hinet(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{:?}", text(&run));
    out.join("checkpoint.hint")
}

#[test]
fn evaluate_identical_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..64).map(|i| [0, 1, 2, 4][i % 4]).collect();
    let a = labels_file(dir.path(), "a.hvol", [4, 4, 4], labels.clone());
    let b = labels_file(dir.path(), "b.hvol", [4, 4, 4], labels);
    let out = hinet(&["evaluate", "--pred", &a, "--gt", &b]);
    assert_eq!(code(&out), 0);
    let (stdout, _) = text(&out);
    for region in ["WT", "TC", "ET"] {
        let row = stdout.lines().find(|l| l.starts_with(region)).unwrap();
        assert_eq!(row.matches("100.000").count(), 3, "{row}");
    }
}

#[test]
fn evaluate_hand_case_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let gt = labels_file(dir.path(), "gt.hvol", [1, 1, 4], vec![2, 2, 0, 0]);
    let pred = labels_file(dir.path(), "pred.hvol", [1, 1, 4], vec![2, 0, 0, 2]);
    let json = dir.path().join("m.json");
    let out = hinet(&[
        "evaluate",
        "--pred",
        &pred,
        "--gt",
        &gt,
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (stdout, _) = text(&out);
    let wt = stdout.lines().find(|l| l.starts_with("WT")).unwrap();
    assert_eq!(wt.matches("50.000").count(), 3, "{wt}");
    assert!(stdout.contains('*'));

    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let wt = &v["regions"][0];
    assert_eq!(wt["region"], "WT");
    assert_eq!(
        (
            wt["tp"].as_u64(),
            wt["fp"].as_u64(),
            wt["tn"].as_u64(),
            wt["fn"].as_u64()
        ),
        (Some(1), Some(1), Some(1), Some(1))
    );
    assert_eq!(wt["sensitivity"], 0.5);
    assert_eq!(wt["specificity"], 0.5);
    assert_eq!(wt["dsc"], 0.5);
    let et = &v["regions"][2];
    assert_eq!(et["dsc"], 1.0);
    assert_eq!(et["sensitivity"], 1.0);
    assert_eq!(et["degenerate"], serde_json::json!(["dsc", "sensitivity"]));
}

#[test]
fn evaluate_disjoint_masks_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let gt = labels_file(dir.path(), "gt.hvol", [1, 2, 2], vec![4, 4, 0, 0]);
    let pred = labels_file(dir.path(), "pred.hvol", [1, 2, 2], vec![0, 0, 4, 4]);
    let json = dir.path().join("m.json");
    let out = hinet(&[
        "evaluate",
        "--pred",
        &pred,
        "--gt",
        &gt,
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    for r in 0..3 {
        assert_eq!(v["regions"][r]["dsc"], 0.0);
    }
}

#[test]
fn evaluate_extent_mismatch_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = labels_file(dir.path(), "a.hvol", [1, 1, 4], vec![0; 4]);
    let b = labels_file(dir.path(), "b.hvol", [1, 2, 2], vec![0; 4]);
    assert_eq!(code(&hinet(&["evaluate", "--pred", &a, "--gt", &b])), 2);
}

#[test]
fn predict_untrained_network() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = initial_checkpoint(dir.path(), 2);
    let input = dir.path().join("in.hvol");
    hvol::write_volume(&input, &make_phantom(1, 16).unwrap()).unwrap();
    let out_path = dir.path().join("out.hvol");
    let out = hinet(&[
        "predict",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--in",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{:?}", text(&out));
    let pred = hvol::read_volume(&out_path).unwrap();
    assert_eq!(pred.labels.dims(), [16, 16, 16]);
    assert!(pred.labels.data().iter().all(|v| [0, 1, 2, 4].contains(v)));
}

#[test]
fn predict_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.hvol");
    hvol::write_volume(&input, &make_phantom(1, 18).unwrap()).unwrap();
    let out_path = dir.path().join("out.hvol");
    let (i, o) = (input.to_str().unwrap(), out_path.to_str().unwrap());

    let missing = hinet(&["predict", "--ckpt", "/nonexistent/x.hint", "--in", i, "--out", o]);
    assert_eq!(code(&missing), 2);

    let ckpt = initial_checkpoint(dir.path(), 3);
    let out = hinet(&["predict", "--ckpt", ckpt.to_str().unwrap(), "--in", i, "--out", o]);
    assert_eq!(code(&out), 2);
    let (_, stderr) = text(&out);
    assert!(stderr.contains("18") && stderr.contains("divisible by 4"), "{stderr}");
}

#[test]
fn gradcheck_passes_and_reports_injected_fault() {
    let out = hinet(&["gradcheck"]);
    let (stdout, stderr) = text(&out);
    assert_eq!(code(&out), 0, "{stdout}{stderr}");
    let rows = stdout.lines().filter(|l| l.ends_with(" ok")).count();
    assert!(rows >= 10, "{stdout}");

    let out = hinet(&["gradcheck", "--inject-fault", "up_transition"]);
    assert_eq!(code(&out), 1);
    let (stdout, stderr) = text(&out);
    let failing: Vec<&str> = stdout.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{stdout}");
    assert!(failing[0].starts_with("up_transition"));
    assert!(stderr.contains("up_transition"));
}

#[test]
fn bench_reports_counts() {
    let out = hinet(&["bench", "--channels", "8", "--extent", "8", "--repeats", "1"]);
    assert_eq!(code(&out), 0);
    let (stdout, _) = text(&out);
    let full = stdout.lines().find(|l| l.starts_with("full")).unwrap();
    let fact = stdout.lines().find(|l| l.starts_with("factorized")).unwrap();
    assert!(
        full.contains("1736") && full.contains(&(1728 * 512).to_string()),
        "{full}"
    );
    assert!(
        fact.contains("876") && fact.contains(&(864 * 512).to_string()),
        "{fact}"
    );
}

#[test]
fn usage_errors() {
    assert_eq!(code(&hinet(&[])), 2);
    assert_eq!(code(&hinet(&["train"])), 2);
    assert_eq!(code(&hinet(&["bench", "--channels", "1"])), 2);
    assert_eq!(code(&hinet(&["train", "--config", "/nonexistent.json"])), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_hinet"))
        .args(["bench", "--extent", "4", "--repeats", "1"])
        .env("HINET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_help_documents_defaults() {
    let (stdout, _) = text(&hinet(&["train", "--help"]));
    for key in [
        "\"epochs\": 30",
        "\"steps_per_epoch\": 10",
        "\"extent\": 32",
        "\"base_filters\": 4",
        "\"dice_r\": 1.0",
    ] {
        assert!(stdout.contains(key), "{key} missing from\n{stdout}");
    }
}
