//! End-to-end runs of the `adspoi` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn adspoi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adspoi"))
        .args(args)
        .env("ADSPOI_THREADS", "2")
        .output()
        .expect("spawn adspoi")
}

fn ok(args: &[&str]) -> String {
    let out = adspoi(args);
    assert!(
        out.status.success(),
        "adspoi {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

const SMALL: &str = "\
[model]
d_e = 8
k = 2
d_s = 4
d_slot = 4
d_dist = 4
d_spatial = 4

[objective]
n_neg = 5
hard_negatives = 2

[optim]
batch_size = 8
lr = 1e-2
epochs = 2

[run]
seeds = [0, 1]
";

/// A temp dir holding the cycle dataset and a small config.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace {
            dir: tempfile::tempdir().unwrap(),
        };
        ok(&[
            "synth",
            "--preset",
            "cycle",
            "--seed",
            "3",
            "--out",
            s(&ws.path("data.jsonl")),
        ]);
        ws.write("small.toml", &format!("{SMALL}\n[data]\ndataset = \"data.jsonl\"\n"));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn train(&self, out: &str, extra: &[&str]) -> String {
        let cfg = self.path("small.toml");
        let out = self.path(out);
        let mut args = vec![
            "train",
            "--config",
            s(&cfg),
            "--seed",
            "4",
            "--deterministic",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args)
    }
}

#[test]
fn synth_is_reproducible() {
    let ws = Workspace::new();
    let again = ws.path("again.jsonl");
    ok(&["synth", "--preset", "cycle", "--seed", "3", "--out", s(&again)]);
    assert_eq!(fs::read(ws.path("data.jsonl")).unwrap(), fs::read(&again).unwrap());
    let other = ws.path("other.jsonl");
    ok(&["synth", "--preset", "cycle", "--seed", "4", "--out", s(&other)]);
    assert_ne!(fs::read(&again).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn train_then_eval_is_byte_reproducible() {
    let ws = Workspace::new();
    let summary = json(&ws.train("a.ckpt", &[]));
    assert_eq!(summary["epochs"], 2);
    assert_eq!(summary["seed"], 4);
    ws.train("b.ckpt", &[]);
    assert_eq!(
        fs::read(ws.path("a.ckpt")).unwrap(),
        fs::read(ws.path("b.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(ws.path("a.ckpt.history.csv")).unwrap(),
        fs::read(ws.path("b.ckpt.history.csv")).unwrap()
    );
    let history = fs::read_to_string(ws.path("a.ckpt.history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,ce,bpr,val_mrr"));
    assert_eq!(history.lines().count(), 3);

    for (ckpt, report) in [("a.ckpt", "a.json"), ("b.ckpt", "b.json")] {
        let out = json(&ok(&[
            "eval",
            "--checkpoint",
            s(&ws.path(ckpt)),
            "--config",
            s(&ws.path("small.toml")),
            "--out",
            s(&ws.path(report)),
        ]));
        assert_eq!(out["split"], "test");
        assert_eq!(out["n_instances"], 20);
        let mrr = out["metrics"]["mrr"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mrr), "{out}");
    }
    assert_eq!(
        fs::read(ws.path("a.json")).unwrap(),
        fs::read(ws.path("b.json")).unwrap()
    );
    assert_eq!(fs::read(ws.path("a.csv")).unwrap(), fs::read(ws.path("b.csv")).unwrap());
    let csv = fs::read_to_string(ws.path("a.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("dataset,variant,split,seed,metric,value"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn resume_continues_the_epoch_count() {
    let ws = Workspace::new();
    ws.train("first.ckpt", &[]);
    let longer = ws.write(
        "longer.toml",
        &format!(
            "{}\n[data]\ndataset = \"data.jsonl\"\n",
            SMALL.replace("epochs = 2", "epochs = 4")
        ),
    );
    let out = ws.path("resumed.ckpt");
    let summary = json(&ok(&[
        "train",
        "--config",
        s(&longer),
        "--seed",
        "4",
        "--deterministic",
        "--resume",
        s(&ws.path("first.ckpt")),
        "--out",
        s(&out),
    ]));
    assert_eq!(summary["epochs"], 4);
    let history = fs::read_to_string(ws.path("resumed.ckpt.history.csv")).unwrap();
    let epochs: Vec<&str> = history.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4"]);

    // four epochs in one go give the same file
    let straight = ws.path("straight.ckpt");
    ok(&[
        "train",
        "--config",
        s(&longer),
        "--seed",
        "4",
        "--deterministic",
        "--out",
        s(&straight),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&straight).unwrap());
}

#[test]
fn mismatched_config_or_dataset_is_refused() {
    let ws = Workspace::new();
    ws.train("a.ckpt", &[]);
    let other = ws.write(
        "other.toml",
        &format!(
            "{}\n[data]\ndataset = \"data.jsonl\"\n",
            SMALL.replace("d_s = 4", "d_s = 6")
        ),
    );
    let out = adspoi(&["eval", "--checkpoint", s(&ws.path("a.ckpt")), "--config", s(&other)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");

    let data2 = ws.path("data2.jsonl");
    ok(&["synth", "--preset", "cycle", "--seed", "9", "--out", s(&data2)]);
    let out = adspoi(&["eval", "--checkpoint", s(&ws.path("a.ckpt")), "--dataset", s(&data2)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different dataset"));

    let out = adspoi(&["eval", "--checkpoint", s(&ws.path("missing.ckpt"))]);
    assert!(!out.status.success());
}

#[test]
fn unknown_variant_is_rejected() {
    let ws = Workspace::new();
    let out = adspoi(&[
        "train",
        "--config",
        s(&ws.path("small.toml")),
        "--variant",
        "tiny",
        "--out",
        "x.ckpt",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tiny"));
    assert!(!Path::new("x.ckpt").exists());
}

#[test]
fn gradcheck_passes_and_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc.json");
    let stdout = ok(&["gradcheck", "--seed", "1", "--out", s(&out)]);
    let v = json(&stdout);
    assert_eq!(v["passed"], true);
    assert!(v["report"]["max_rel_error"].as_f64().unwrap() <= v["tolerance"].as_f64().unwrap());
    assert_eq!(json(&fs::read_to_string(&out).unwrap()), v);
}

#[test]
fn bench_reports_every_field() {
    let ws = Workspace::new();
    ws.train("a.ckpt", &[]);
    let v = json(&ok(&[
        "bench",
        "--checkpoint",
        s(&ws.path("a.ckpt")),
        "--seq-len",
        "16",
        "--repetitions",
        "100",
    ]));
    assert!(v["latency_ms"].as_f64().unwrap() > 0.0);
    assert!(v["throughput_qps"].as_f64().unwrap() > 0.0);
    assert!(v["flops_estimate"].as_f64().unwrap() > v["recurrent_flops"].as_f64().unwrap());
    assert!(v.get("peak_memory_mb").is_some());
    assert_eq!(v["seq_len"], 16);
    assert_eq!(v["n_pois"], 50);
}

#[test]
fn ablate_sweep_and_plot_data() {
    let ws = Workspace::new();
    let cfg = ws.path("small.toml");
    let dir = ws.path("ablation");
    let summary = json(&ok(&[
        "ablate",
        "--config",
        s(&cfg),
        "--seeds",
        "0,1",
        "--deterministic",
        "--variant",
        "full,single_small,uniform_agg",
        "--out",
        s(&dir),
    ]));
    assert_eq!(summary["variants"].as_array().unwrap().len(), 3);
    let tests = summary["paired_ttests"].as_array().unwrap();
    assert_eq!(tests.len(), 2);
    // pooled over two seeds of 20 test users
    assert!(tests.iter().all(|t| t["df"] == 39.0), "{tests:?}");

    let tidy = ws.path("tidy.csv");
    let reports: Vec<PathBuf> = ["full", "single_small", "uniform_agg"]
        .iter()
        .map(|v| dir.join(format!("{v}.json")))
        .collect();
    let mut args = vec!["plot-data", "--out", s(&tidy)];
    args.extend(reports.iter().map(|p| s(p)));
    ok(&args);
    let csv = fs::read_to_string(&tidy).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,variant,metric,mean,std"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 5);
    assert!(rows.iter().all(|r| r.len() == 5 && !r[4].is_empty()));

    let sweep = ws.path("sweep.csv");
    let stdout = ok(&[
        "sweep",
        "--config",
        s(&cfg),
        "--seed",
        "0",
        "--axis",
        "K",
        "--values",
        "1,3",
        "--out",
        s(&sweep),
    ]);
    assert_eq!(stdout, fs::read_to_string(&sweep).unwrap());
    let rows: Vec<Vec<String>> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let (k, d_s, d): (usize, usize, usize) = (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert_eq!(d, k * d_s);
        assert_eq!(d_s, 4);
    }
}

#[test]
fn train_variants_change_the_parameter_count() {
    let ws = Workspace::new();
    let sizes: Vec<f64> = ["monolithic", "single_small"]
        .iter()
        .map(|v| {
            let ckpt = format!("{v}.ckpt");
            ws.train(&ckpt, &["--variant", v]);
            json(&ok(&["bench", "--checkpoint", s(&ws.path(&ckpt)), "--seq-len", "4"]))["n_params"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert!(sizes[0] > sizes[1], "{sizes:?}");
}

/// Five users, hand-traced through dedup and the 3-user / 2-POI filters.
const GOWALLA: &str = "\
1\t2012-04-02T08:00:00Z\t40.70\t-74.00\t100
1\t2012-04-02T09:00:00Z\t40.71\t-74.01\t200
1\t2012-04-02T10:00:00Z\t40.70\t-74.00\t100
1\t2012-04-02T11:00:00Z\t40.71\t-74.01\t200
2\t2012-04-02T08:00:00Z\t40.70\t-74.00\t100
2\t2012-04-02T09:00:00Z\t40.70\t-74.00\t100
2\t2012-04-02T10:00:00Z\t40.71\t-74.01\t200
2\t2012-04-02T11:00:00Z\t40.72\t-74.02\t300
3\t2012-04-02T08:00:00Z\t40.71\t-74.01\t200
3\t2012-04-02T09:00:00Z\t40.73\t-74.03\t400
4\t2012-04-02T08:00:00Z\t40.72\t-74.02\t300
4\t2012-04-02T09:00:00Z\t40.72\t-74.02\t300
4\t2012-04-02T10:00:00Z\t40.72\t-74.02\t300
5\t2012-04-02T08:00:00Z\t40.70\t-74.00\t100
5\t2012-04-02T09:00:00Z\t40.71\t-74.01\t200
5\t2012-04-02T10:00:00Z\t40.73\t-74.03\t400
5\t2012-04-02T11:00:00Z\t40.70\t-74.00\t100
not a check-in line
";

#[test]
fn preprocess_counts_match_a_hand_trace() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, GOWALLA).unwrap();
    let out = dir.path().join("clean.jsonl");
    let args = [
        "preprocess",
        s(&raw),
        "--format",
        "gowalla",
        "--out",
        s(&out),
        "--min-user",
        "3",
        "--min-poi",
        "2",
    ];
    let run = adspoi(&args);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(!String::from_utf8_lossy(&run.stderr).contains("warning"));
    let v = json(&String::from_utf8(run.stdout).unwrap());
    assert_eq!(v["skipped_lines"], 1);
    assert_eq!(
        v["before"],
        serde_json::json!({ "users": 5, "pois": 4, "checkins": 17 })
    );
    // user 2 loses POI 300 and drops below 3; user 5 keeps 100, 200, 100
    assert_eq!(v["after"], serde_json::json!({ "users": 2, "pois": 2, "checkins": 7 }));
    assert_eq!(v["dataset"], "raw");

    let again = dir.path().join("again.jsonl");
    let mut args2 = args;
    args2[5] = s(&again);
    ok(&args2);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn preprocess_warns_on_the_wrong_format() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    fs::write(&raw, GOWALLA).unwrap();
    let out = dir.path().join("clean.jsonl");
    let run = adspoi(&["preprocess", s(&raw), "--format", "foursquare", "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("--format"));
}
