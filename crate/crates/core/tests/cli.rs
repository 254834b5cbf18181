use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"
output_dir = "unused"

[[hierarchy.levels]]
names = ["benign", "malignant"]
chain = true

[[hierarchy.levels]]
names = ["normal", "atypical", "invasive"]
parents = [0, 0, 1]
chain = true

[synth]
feature_dim = 4
instances_min = 3
instances_max = 8
class_centers = { layout = "chain", spacing = 2.0, offset = 1.0 }
noise_sigma = 1.0
background_fraction = 0.3
bags_per_class = 6
seed = 5

[train]
epochs = 3
batch_size = 4
loss = "msce_ha"
seed = 1

[train.optimizer]
lr = 0.01

[train.remix]
method = "sfr"
probability = 0.5

[remix.sfr]
num_clusters = 5
refine_iters = 2
top_k = 2
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sevmil"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("cfg.toml")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn error_of(out: &Output) -> (i32, String) {
    let v: Value = serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)));
    (
        out.status.code().unwrap(),
        v["error"]["code"].as_str().unwrap().to_string(),
    )
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn pipeline_is_reproducible() {
    let ws = Workspace::new();
    let mut snapshots = Vec::new();
    for round in 0..2 {
        let d = format!("run{round}");
        ws.ok(&["--out", &format!("{d}/data"), "gen"]);
        ws.ok(&[
            "--out",
            &format!("{d}/model"),
            "train",
            "--data",
            &format!("{d}/data/manifest.json"),
        ]);
        ws.ok(&[
            "--out",
            &format!("{d}/eval"),
            "eval",
            "--checkpoint",
            &format!("{d}/model/model.ckpt"),
            "--data",
            &format!("{d}/data/manifest.json"),
        ]);
        let files = [
            "data/manifest.json",
            "data/bags/bag00000.milb",
            "model/model.ckpt",
            "model/trace.csv",
            "eval/report.json",
            "eval/confusion_level1.csv",
        ];
        snapshots.push(files.map(|f| read(&ws.path(&format!("{d}/{f}")))));
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let trace = String::from_utf8(snapshots[0][3].clone()).unwrap();
    assert_eq!(trace.lines().count(), 4);
    let report: Value = serde_json::from_slice(&snapshots[0][4]).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
}

#[test]
fn seed_flag_changes_output() {
    let ws = Workspace::new();
    ws.ok(&["--out", "a", "gen"]);
    ws.ok(&["--out", "b", "--seed", "99", "gen"]);
    ws.ok(&["--out", "c", "--seed", "5", "gen"]);
    let bag = |d: &str| read(&ws.path(&format!("{d}/bags/bag00000.milb")));
    assert_ne!(bag("a"), bag("b"));
    assert_eq!(bag("a"), bag("c"));
}

#[test]
fn metrics_from_confusion_csv() {
    let ws = Workspace::new();
    fs::write(
        ws.path("diag.csv"),
        "true,pred,count\n0,0,2\n1,1,3\n2,2,1\n",
    )
    .unwrap();
    let v: Value = serde_json::from_str(&ws.ok(&["metrics", "--confusion", "diag.csv"])).unwrap();
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["ascc"], 1.0);
    assert_eq!(v["asmc"], "inf");

    // one invasive case called normal: W = 1 + 2 + 2
    fs::write(ws.path("severe.csv"), "true,pred,count\n2,0,1\n").unwrap();
    let v: Value = serde_json::from_str(&ws.ok(&["metrics", "--confusion", "severe.csv"])).unwrap();
    assert!((v["ascc"].as_f64().unwrap() - 0.2).abs() < 1e-15);
    assert!((v["asmc"].as_f64().unwrap() - 0.25).abs() < 1e-15);

    let csv = ws.ok(&[
        "--format",
        "csv",
        "metrics",
        "--confusion",
        "severe.csv",
        "--penalty",
        "0",
    ]);
    assert!(csv.starts_with("level,metric,value\n"));
    assert!(csv.contains("ascc,0.3333333333333333"));
}

#[test]
fn remix_writes_a_consistent_selection() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "gen"]);
    let manifest: Value = serde_json::from_slice(&read(&ws.path("data/manifest.json"))).unwrap();
    let entries = manifest.as_array().unwrap();
    let path_of = |leaf: u64| {
        let e = entries.iter().find(|e| e["labels"][1] == leaf).unwrap();
        format!("data/{}", e["path"].as_str().unwrap())
    };
    let (a, b) = (path_of(2), path_of(0));
    for method in ["sfr", "random-mix"] {
        let out = format!("remix-{method}");
        let log: Value = serde_json::from_str(&ws.ok(&[
            "--out",
            &out,
            "remix",
            "--bag-a",
            &a,
            "--bag-b",
            &b,
            "--method",
            method,
            "--manifest",
            "data/manifest.json",
        ]))
        .unwrap();
        let n_a = log["donor_instances"].as_u64().unwrap();
        let sel: Vec<u64> = log["selected"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap())
            .collect();
        assert!(!sel.is_empty());
        assert!(sel.windows(2).all(|w| w[0] < w[1]) && sel.iter().all(|&i| i < n_a));
        let remixed = read(&ws.path(&format!("{out}/remixed.milb")));
        let n_b = log["recipient_instances"].as_u64().unwrap();
        assert_eq!(remixed.len() as u64, 16 + 4 * 4 * (n_b + sel.len() as u64));
        let m: Value =
            serde_json::from_slice(&read(&ws.path(&format!("{out}/remixed.manifest.json"))))
                .unwrap();
        assert_eq!(m[0]["labels"], serde_json::json!([1, 2]));
    }

    // labels from flags instead of a manifest
    ws.ok(&[
        "--out",
        "flags",
        "remix",
        "--bag-a",
        &a,
        "--bag-b",
        &b,
        "--label-a",
        "2",
        "--label-b",
        "0",
    ]);
}

#[test]
fn bench_reports_timings() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "gen"]);
    ws.ok(&[
        "--out",
        "bench",
        "bench",
        "--method",
        "random-mix",
        "--reps",
        "2",
        "--data",
        "data/manifest.json",
    ]);
    let v: Value = serde_json::from_slice(&read(&ws.path("bench/bench_random_mix.json"))).unwrap();
    assert_eq!(v["timing"]["per_repetition"].as_array().unwrap().len(), 2);
}

#[test]
fn failures_are_reported_as_json() {
    let ws = Workspace::new();

    fs::write(ws.path("bad.toml"), format!("{CONFIG}\n[extra]\nkey = 1\n")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sevmil"))
        .current_dir(ws.dir.path())
        .args(["--config", "bad.toml", "gen"])
        .output()
        .unwrap();
    assert_eq!(error_of(&out), (2, "config_invalid".into()));

    fs::write(ws.path("junk.milb"), b"NOPE0000000000000000").unwrap();
    fs::write(ws.path("ok.milb"), b"NOPE").unwrap();
    let out = ws.run(&[
        "remix",
        "--bag-a",
        "junk.milb",
        "--bag-b",
        "ok.milb",
        "--label-a",
        "2",
        "--label-b",
        "0",
    ]);
    assert_eq!(error_of(&out), (3, "bag_bad_magic".into()));

    ws.ok(&["--out", "data", "gen"]);
    let (a, b) = ("data/bags/bag00000.milb", "data/bags/bag00001.milb");
    let out = ws.run(&[
        "remix",
        "--bag-a",
        a,
        "--bag-b",
        b,
        "--label-a",
        "0",
        "--label-b",
        "2",
    ]);
    assert_eq!(error_of(&out), (4, "precondition_violated".into()));

    let out = ws.run(&["metrics", "--confusion", "missing.csv"]);
    let (code, kind) = error_of(&out);
    assert_eq!((code, kind.as_str()), (5, "io"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let out = ws.run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
}
