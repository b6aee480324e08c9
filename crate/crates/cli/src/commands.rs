//! Command implementations. Every output goes through an atomic write, and
//! nothing time-dependent is written except by `bench`.

use std::path::{Path, PathBuf};

use adspoi::config::Variant;
use adspoi::evaluation::{evaluate, multi_seed, paired_ttest, tidy_csv, RankingReport, ReportLabels, TTest};
use adspoi::ingest::{
    parse_foursquare, parse_gowalla, preprocess as clean, read_dataset, split_leave_one_out, synth_generate,
    write_atomic, write_dataset, DatasetSplit, SplitKind, Summary, SynthConfig,
};
use adspoi::training::{
    grad_check, history_csv, load_checkpoint, save_checkpoint, train_from, Checkpoint, GradCheckProblem, TrainState,
};
use adspoi::RunConfig;
use anyhow::{bail, Context, Result};
use serde_json::json;

use crate::{Axis, Format, Preset, RunArgs};

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Config from `--config` with command-line overrides applied.
fn run_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = load_config(run.config.as_deref())?;
    if let Some(ds) = &run.dataset {
        cfg.data.dataset = Some(ds.clone());
    }
    if let Some(seeds) = &run.seeds {
        cfg.run.seeds = seeds.clone();
    }
    if let Some(seed) = run.seed {
        cfg.run.seeds = vec![seed];
    }
    if run.deterministic {
        cfg.run.deterministic = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Data {
    split: DatasetSplit,
    labels: ReportLabels,
}

fn load_data(cfg: &RunConfig, variant: &str) -> Result<Data> {
    let path = cfg
        .data
        .dataset
        .as_ref()
        .context("no dataset: set data.dataset in the config or pass --dataset")?;
    let ds = read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(Data {
        split: split_leave_one_out(&ds.checkins),
        labels: ReportLabels {
            dataset: cfg.data.name.clone().unwrap_or(ds.name),
            variant: variant.to_string(),
            dataset_fingerprint: ds.fingerprint,
        },
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn preprocess(
    input: &Path,
    format: Format,
    out: &Path,
    name: Option<String>,
    min_user: usize,
    min_poi: usize,
) -> Result<()> {
    let parsed = match format {
        Format::Foursquare => parse_foursquare(input)?,
        Format::Gowalla => parse_gowalla(input)?,
    };
    let total = parsed.checkins.len() + parsed.skipped;
    if parsed.skipped * 2 > total {
        eprintln!(
            "warning: skipped {} of {} lines; is --format right for {}?",
            parsed.skipped,
            total,
            input.display()
        );
    }
    let before = Summary::of(&parsed.checkins);
    let cleaned = clean(&parsed.checkins, min_user, min_poi);
    let after = Summary::of(&cleaned);
    let name = name.unwrap_or_else(|| {
        input
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    });
    write_dataset(out, &name, &cleaned)?;
    print_json(&json!({
        "dataset": name,
        "skipped_lines": parsed.skipped,
        "before": before,
        "after": after,
        "out": out,
    }))
}

pub fn synth(config: Option<&Path>, preset: Preset, seed: u64, out: &Path) -> Result<()> {
    let cfg = match (config, preset) {
        (Some(p), _) => SynthConfig::load(p)?,
        (None, Preset::TwoRegime) => SynthConfig::two_regime(),
        (None, Preset::Cycle) => SynthConfig::cycle(20, 50, 60),
    };
    let data = synth_generate(&cfg, seed)?;
    write_dataset(out, &cfg.name, &data)?;
    print_json(&json!({ "dataset": cfg.name, "seed": seed, "summary": Summary::of(&data), "out": out }))
}

pub fn train(run: &RunArgs, variant: Option<Variant>, out: &Path, resume: Option<&Path>) -> Result<()> {
    let base = run_config(run)?;
    let cfg = variant.map_or(base.clone(), |v| v.apply(&base));
    let data = load_data(&cfg, variant.map_or("full", Variant::name))?;
    let state = match resume {
        Some(p) => {
            let ckpt = load_checkpoint(p, Some(&cfg.hash()))?;
            if let Some(fp) = &ckpt.dataset_fingerprint {
                if *fp != data.labels.dataset_fingerprint {
                    bail!("{} was trained on a different dataset", p.display());
                }
            }
            ckpt.state
        }
        None => {
            let seed = *cfg.run.seeds.first().context("run.seeds is empty")?;
            TrainState::new(adspoi::params::init_params(&cfg, data.split.catalog.len(), seed), seed)
        }
    };
    let state = train_from(&data.split, &cfg, state)?;
    let history = sibling(out, ".history.csv");
    write(&history, &history_csv(&state.history))?;
    let summary = json!({
        "seed": state.seed,
        "epochs": state.epoch,
        "best_epoch": state.best_epoch,
        "best_val_mrr": state.best_mrr,
        "stopped_early": state.stopped,
        "checkpoint": out,
        "history": history,
    });
    save_checkpoint(
        out,
        &Checkpoint {
            config: cfg,
            dataset_fingerprint: Some(data.labels.dataset_fingerprint),
            state,
        },
    )?;
    print_json(&summary)
}

fn write_report(report: &RankingReport, json_path: &Path) -> Result<()> {
    write(json_path, &report.to_json()?)?;
    write(&json_path.with_extension("csv"), &report.to_csv())
}

pub fn eval(
    checkpoint: &Path,
    config: Option<&Path>,
    dataset: Option<&Path>,
    split: SplitKind,
    label: &str,
    out: Option<&Path>,
) -> Result<()> {
    let expected = config.map(|p| load_config(Some(p))).transpose()?.map(|c| c.hash());
    let ckpt = load_checkpoint(checkpoint, expected.as_deref())?;
    let mut cfg = ckpt.config.clone();
    if let Some(ds) = dataset {
        cfg.data.dataset = Some(ds.to_path_buf());
    }
    let data = load_data(&cfg, label)?;
    if let Some(fp) = &ckpt.dataset_fingerprint {
        if *fp != data.labels.dataset_fingerprint {
            bail!("{} was trained on a different dataset", checkpoint.display());
        }
    }
    let e = evaluate(&ckpt.state.best, &cfg, &data.split, split)?;
    let report = RankingReport::from_evaluations(&data.labels, &cfg.hash(), split, &[ckpt.state.seed], &[e]);
    if let Some(p) = out {
        write_report(&report, p)?;
    }
    print_json(&json!({
        "split": report.split,
        "n_instances": report.n_instances,
        "metrics": report.mean,
    }))
}

fn ttest_json(name: &str, t: &TTest) -> serde_json::Value {
    json!({ "variant": name, "against": "full", "t": t.t, "p": t.p, "df": t.df, "mean_diff": t.mean_diff, "degenerate": t.degenerate })
}

pub fn ablate(run: &RunArgs, variants: Option<Vec<Variant>>, out: &Path) -> Result<()> {
    let base = run_config(run)?;
    let variants = variants.unwrap_or_else(|| Variant::ALL.to_vec());
    let data = load_data(&base, "full")?;
    let mut reports: Vec<(Variant, RankingReport)> = Vec::new();
    for v in variants {
        let cfg = v.apply(&base);
        let labels = ReportLabels {
            variant: v.name().into(),
            ..data.labels.clone()
        };
        let (report, _) = multi_seed(&data.split, &cfg, &cfg.run.seeds, SplitKind::Test, &labels)?;
        write_report(&report, &out.join(format!("{}.json", v.name())))?;
        eprintln!("{:<13} MRR {:.4}", v.name(), report.mean.mrr);
        reports.push((v, report));
    }
    let mut tests = Vec::new();
    if let Some((_, full)) = reports.iter().find(|(v, _)| *v == Variant::Full) {
        let a = full.pooled_reciprocal_ranks();
        for (v, r) in reports.iter().filter(|(v, _)| *v != Variant::Full) {
            tests.push(ttest_json(v.name(), &paired_ttest(&a, &r.pooled_reciprocal_ranks())?));
        }
    }
    let summary = json!({
        "variants": reports.iter().map(|(v, r)| json!({ "variant": v.name(), "mean": r.mean, "std": r.std })).collect::<Vec<_>>(),
        "paired_ttests": tests,
    });
    write(
        &out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    print_json(&summary)
}

pub fn sweep(run: &RunArgs, axis: Axis, values: &[usize], out: &Path) -> Result<()> {
    let base = run_config(run)?;
    let data = load_data(&base, "full")?;
    let mut csv = String::from("dataset,axis,value,K,d_s,d,HR@10,NDCG@10,MRR\n");
    for &value in values {
        let mut cfg = base.clone();
        match axis {
            Axis::K => cfg.model.k = value,
            Axis::D => {
                cfg.model.k = 1;
                cfg.model.d_s = value;
            }
        }
        cfg.validate()?;
        let (axis_name, label) = match axis {
            Axis::K => ("K", format!("K={value}")),
            Axis::D => ("d", format!("d={value}")),
        };
        let labels = ReportLabels {
            variant: label,
            ..data.labels.clone()
        };
        let (r, _) = multi_seed(&data.split, &cfg, &cfg.run.seeds, SplitKind::Test, &labels)?;
        let m = &cfg.model;
        csv.push_str(&format!(
            "{},{axis_name},{value},{},{},{},{},{},{}\n",
            r.dataset,
            m.k,
            m.d_s,
            m.k * m.d_s,
            r.mean.hr10,
            r.mean.ndcg10,
            r.mean.mrr
        ));
        eprintln!("{axis_name}={value}: MRR {:.4}", r.mean.mrr);
    }
    write(out, &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn gradcheck(config: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<bool> {
    let cfg = load_config(config)?;
    let problem = GradCheckProblem::new(&cfg, seed)?;
    let report = grad_check(&problem, cfg.gradcheck.fd_step, None)?;
    let passed = report.passed(cfg.gradcheck.tolerance);
    let v = json!({ "tolerance": cfg.gradcheck.tolerance, "passed": passed, "report": report });
    if let Some(p) = out {
        write(p, &(serde_json::to_string_pretty(&v)? + "\n"))?;
    }
    print_json(&v)?;
    Ok(passed)
}

pub fn bench(checkpoint: &Path, seq_len: usize, repetitions: usize, out: Option<&Path>) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint, None)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let report = pool.install(|| adspoi::evaluation::bench(&ckpt.state.best, &ckpt.config, seq_len, repetitions))?;
    let v = serde_json::to_value(&report)?;
    if let Some(p) = out {
        write(p, &(serde_json::to_string_pretty(&v)? + "\n"))?;
    }
    print_json(&v)
}

pub fn plot_data(paths: &[PathBuf], out: &Path) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RankingReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    write(out, &tidy_csv(&reports))
}
