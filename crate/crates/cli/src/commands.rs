use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use hsmtl::corpus::{
    compute_stats, load_corpus, split_corpus, Corpus, CorpusFormat, HierarchyPolicy, SplitFractions, SplitStrategy,
};
use hsmtl::encoder::load_embeddings;
use hsmtl::evaluation::{compare_runs, evaluate as evaluate_preds, AnalysisTables, EvaluationReport};
use hsmtl::model::model_forward;
use hsmtl::predictions::{align_with_gold, correct_records, ensemble_records, read_records, write_records, PredictionRecord};
use hsmtl::synthetic::{generate, SyntheticConfig};
use hsmtl::training::{self, Checkpoint, TrainLogRow};
use hsmtl::Task;

use crate::config::{self, LoadedConfig, Overrides, Purpose, RunConfig};
use crate::manifest::{sha256_bytes, sidecar_path, ManifestBuilder};
use crate::sources::PredictionSource;
use crate::{CorpusArgs, TrainFlags, UsageError};

const RANKINGS_FILE: &str = "rankings.json";

fn read_corpus(path: &Path, format: Option<CorpusFormat>, policy: HierarchyPolicy) -> anyhow::Result<Corpus> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    Ok(load_corpus(path, format, policy)?)
}

fn attach(corpus: &mut Corpus, embeddings: Option<&Path>) -> anyhow::Result<()> {
    if let Some(p) = embeddings {
        corpus.attach_embeddings(&load_embeddings(p)?);
    }
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates the directory that will hold `path`.
fn create_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    create_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn stats(args: &CorpusArgs, json: bool) -> anyhow::Result<()> {
    let corpus = read_corpus(&args.corpus, args.format, args.policy())?;
    let stats = compute_stats(&corpus)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{stats}");
    }
    Ok(())
}

pub fn synth(out: &Path, samples: usize, seed: u64) -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig {
        samples,
        seed,
        ..SyntheticConfig::default()
    })?;
    create_parent(out)?;
    corpus.write_tsv(out)?;
    let mut m = ManifestBuilder::start("synth");
    m.seed(seed).output(out).write(&sidecar_path(out))?;
    println!("wrote {} samples to {}", corpus.len(), out.display());
    Ok(())
}

fn parse_fractions(s: &str) -> Result<SplitFractions, UsageError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| UsageError(format!("bad --fractions `{s}`: {e}")))?;
    match parts.as_slice() {
        &[train, dev, test] => Ok(SplitFractions { train, dev, test }),
        _ => Err(UsageError(format!("--fractions needs three values, got `{s}`"))),
    }
}

pub fn split(args: &CorpusArgs, out_dir: &Path, seed: u64, fractions: &str, strategy: SplitStrategy) -> anyhow::Result<()> {
    let fractions = parse_fractions(fractions)?;
    let corpus = read_corpus(&args.corpus, args.format, args.policy())?;
    let (train, dev, test) = split_corpus(&corpus, fractions, seed, strategy)?;
    create_dir(out_dir)?;
    let mut m = ManifestBuilder::start("split");
    m.seed(seed).input(&args.corpus);
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        let path = out_dir.join(format!("{name}.tsv"));
        part.write_tsv(&path)?;
        m.output(&path);
        println!("{name}: {} samples", part.len());
    }
    m.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn overrides(flags: &TrainFlags) -> Overrides {
    Overrides {
        train: flags.train.clone(),
        dev: flags.dev.clone(),
        embeddings: flags.embeddings.clone(),
        seed: flags.seed,
        task_mask: flags.task_mask,
        epochs: flags.epochs,
        batch_size: flags.batch_size,
        peak_lr: flags.peak_lr,
        warmup_steps: flags.warmup_steps,
        finetune_epochs: flags.finetune_epochs,
    }
}

/// Explicit `--out`, or `<run root>/<command>-<config hash prefix>`.
fn run_dir(flags: &TrainFlags, root: &Path, command: &str, config_toml: &str) -> PathBuf {
    flags
        .out
        .clone()
        .unwrap_or_else(|| root.join(format!("{command}-{}", &sha256_bytes(config_toml.as_bytes())[..12])))
}

fn load_data(cfg: &RunConfig) -> anyhow::Result<(Corpus, Corpus)> {
    let read = |p: &Option<PathBuf>| -> anyhow::Result<Corpus> {
        let path = p.as_deref().expect("validated");
        let mut c = read_corpus(path, cfg.data.format, cfg.data.hierarchy_policy)?;
        attach(&mut c, cfg.data.embeddings.as_deref())?;
        Ok(c)
    };
    Ok((read(&cfg.data.train)?, read(&cfg.data.dev)?))
}

fn data_inputs(m: &mut ManifestBuilder, cfg: &RunConfig) {
    for p in [&cfg.data.train, &cfg.data.dev, &cfg.data.embeddings].into_iter().flatten() {
        m.input(p);
    }
}

fn checkpoint_name(task: Task) -> String {
    format!("best_{}.ckpt", task.as_str())
}

/// Writes per-subtask checkpoints and the training log into `dir`.
fn write_run(
    dir: &Path,
    best: &BTreeMap<Task, Checkpoint>,
    log: &[TrainLogRow],
    m: &mut ManifestBuilder,
) -> anyhow::Result<()> {
    create_dir(dir)?;
    for (task, ckpt) in best {
        let path = dir.join(checkpoint_name(*task));
        ckpt.save(&path)?;
        m.output(&path);
    }
    let log_path = dir.join("train_log.jsonl");
    write_jsonl(&log_path, log)?;
    m.output(&log_path);
    Ok(())
}

fn start_run(flags: &TrainFlags, root: &Path, command: &str, purpose: Purpose) -> anyhow::Result<(LoadedConfig, PathBuf, ManifestBuilder)> {
    let loaded = config::load(flags.config.as_deref(), &overrides(flags), purpose)?;
    let toml_text = config::to_toml(&loaded.config)?;
    let dir = run_dir(flags, root, command, &toml_text);
    create_dir(&dir)?;
    let echo = dir.join("config.toml");
    fs::write(&echo, &toml_text).with_context(|| format!("writing {}", echo.display()))?;
    let mut m = ManifestBuilder::start(command);
    m.config(loaded.path.as_deref(), &loaded.config)?
        .seed(loaded.config.train.seed)
        .output(&echo);
    data_inputs(&mut m, &loaded.config);
    Ok((loaded, dir, m))
}

fn print_best(best: &BTreeMap<Task, Checkpoint>) {
    for (task, c) in best {
        println!("{task}: best dev macro-F1 {:.4} at step {}", c.meta.dev_f1_macro, c.meta.step);
    }
}

pub fn train(flags: &TrainFlags, root: &Path) -> anyhow::Result<()> {
    let (loaded, dir, mut m) = start_run(flags, root, "train", Purpose::Train)?;
    let cfg = &loaded.config;
    let (train_c, dev_c) = load_data(cfg)?;
    let outcome = training::train(&train_c, &dev_c, &cfg.model(), &cfg.train)?;
    write_run(&dir, &outcome.best, &outcome.log, &mut m)?;
    m.write(&dir.join("manifest.json"))?;
    print_best(&outcome.best);
    println!("artifacts in {}", dir.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRunSummary {
    pub run: usize,
    pub dir: String,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub seed: u64,
    pub dev_f1: BTreeMap<Task, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRankings {
    pub runs: Vec<GridRunSummary>,
    /// Run indices per subtask, best first.
    pub rankings: BTreeMap<Task, Vec<usize>>,
}

fn run_dir_name(index: usize) -> String {
    format!("run_{index:02}")
}

pub fn grid(flags: &TrainFlags, root: &Path) -> anyhow::Result<()> {
    let (loaded, dir, mut m) = start_run(flags, root, "grid", Purpose::Grid)?;
    let cfg = &loaded.config;
    let (train_c, dev_c) = load_data(cfg)?;
    let outcome = training::grid_search(&train_c, &dev_c, &cfg.grid, &cfg.model(), &cfg.train)?;
    let mut runs = Vec::new();
    for run in &outcome.runs {
        let name = run_dir_name(run.index);
        write_run(&dir.join(&name), &run.best, &run.log, &mut m)?;
        runs.push(GridRunSummary {
            run: run.index,
            dir: name,
            batch_size: run.config.batch_size,
            peak_lr: run.config.peak_lr,
            seed: run.config.seed,
            dev_f1: run.best.iter().map(|(t, c)| (*t, c.meta.dev_f1_macro)).collect(),
        });
    }
    let rankings = GridRankings {
        runs,
        rankings: outcome.rankings.clone(),
    };
    let rank_path = dir.join(RANKINGS_FILE);
    write_json(&rank_path, &rankings)?;
    m.output(&rank_path);
    m.write(&dir.join("manifest.json"))?;
    for (task, order) in &rankings.rankings {
        let best = &rankings.runs[order[0]];
        println!(
            "{task}: best {} (batch {}, lr {:e}) dev macro-F1 {:.4}",
            best.dir, best.batch_size, best.peak_lr, best.dev_f1[task]
        );
    }
    println!("{} runs in {}", rankings.runs.len(), dir.display());
    Ok(())
}

pub fn finetune(checkpoint: &Path, flags: &TrainFlags, root: &Path) -> anyhow::Result<()> {
    let start = Checkpoint::load(checkpoint)?;
    let (loaded, dir, mut m) = start_run(flags, root, "finetune-hsc", Purpose::Finetune)?;
    m.input(checkpoint);
    let cfg = &loaded.config;
    let (train_c, dev_c) = load_data(cfg)?;
    let tuned = training::finetune_hsc(&start, &train_c, &dev_c, &cfg.train)?;
    let path = dir.join(checkpoint_name(Task::Hsc));
    tuned.save(&path)?;
    m.output(&path);
    m.write(&dir.join("manifest.json"))?;
    println!(
        "HSC dev macro-F1 {:.4} (started from {:.4}); wrote {}",
        tuned.meta.dev_f1_macro,
        start.meta.dev_f1_macro,
        path.display()
    );
    Ok(())
}

fn predict_records(ckpt: &Checkpoint, corpus: &Corpus) -> anyhow::Result<Vec<PredictionRecord>> {
    corpus
        .samples()
        .iter()
        .map(|s| Ok(PredictionRecord::from_probs(s.id.clone(), model_forward(s, &ckpt.params, &ckpt.meta.model)?)))
        .collect()
}

fn predict_corpus(args: &CorpusArgs, embeddings: Option<&Path>) -> anyhow::Result<Corpus> {
    let mut corpus = read_corpus(&args.corpus, args.format, args.policy())?;
    attach(&mut corpus, embeddings)?;
    Ok(corpus)
}

pub fn predict_one(args: &CorpusArgs, checkpoint: &Path, out: Option<&Path>, embeddings: Option<&Path>) -> anyhow::Result<()> {
    let out = out.ok_or_else(|| UsageError("--out is required with --checkpoint".into()))?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let corpus = predict_corpus(args, embeddings)?;
    let records = predict_records(&ckpt, &corpus)?;
    create_parent(out)?;
    write_records(out, &records)?;
    let mut m = ManifestBuilder::start("predict");
    m.input(checkpoint).input(&args.corpus);
    if let Some(e) = embeddings {
        m.input(e);
    }
    m.output(out).write(&sidecar_path(out))?;
    println!("wrote {} rows to {}", records.len(), out.display());
    Ok(())
}

pub fn predict_grid(
    args: &CorpusArgs,
    grid: &Path,
    task: Task,
    top_k: Option<usize>,
    out_dir: Option<&Path>,
    embeddings: Option<&Path>,
) -> anyhow::Result<()> {
    let out_dir = out_dir.ok_or_else(|| UsageError("--out-dir is required with --grid".into()))?;
    let rank_path = grid.join(RANKINGS_FILE);
    let text = fs::read_to_string(&rank_path).with_context(|| format!("reading {}", rank_path.display()))?;
    let rankings: GridRankings = serde_json::from_str(&text).map_err(hsmtl::Error::from)?;
    let order = rankings
        .rankings
        .get(&task)
        .ok_or_else(|| UsageError(format!("grid has no {task} checkpoints")))?;
    let k = top_k.unwrap_or(order.len());
    if k == 0 {
        bail!(UsageError("--top-k must be at least 1".into()));
    }
    let corpus = predict_corpus(args, embeddings)?;
    create_dir(out_dir)?;
    let mut m = ManifestBuilder::start("predict");
    m.input(&rank_path).input(&args.corpus);
    if let Some(e) = embeddings {
        m.input(e);
    }
    for &run in order.iter().take(k) {
        let summary = rankings
            .runs
            .get(run)
            .ok_or_else(|| UsageError(format!("{} lists unknown run {run}", rank_path.display())))?;
        let ckpt_path = grid.join(&summary.dir).join(checkpoint_name(task));
        let ckpt = Checkpoint::load(&ckpt_path)?;
        let out = out_dir.join(format!("{}.jsonl", summary.dir));
        write_records(&out, &predict_records(&ckpt, &corpus)?)?;
        m.input(&ckpt_path).output(&out);
    }
    m.write(&out_dir.join("manifest.json"))?;
    println!("wrote {} prediction files to {}", k.min(order.len()), out_dir.display());
    Ok(())
}

pub fn ensemble(inputs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let files = inputs.iter().map(|p| read_records(p)).collect::<Result<Vec<_>, _>>()?;
    let combined = ensemble_records(&files)?;
    create_parent(out)?;
    write_records(out, &combined)?;
    let mut m = ManifestBuilder::start("ensemble");
    for p in inputs {
        m.input(p);
    }
    m.output(out).write(&sidecar_path(out))?;
    println!("combined {} files ({} rows) into {}", inputs.len(), combined.len(), out.display());
    Ok(())
}

pub fn correct(input: &Path, out: &Path) -> anyhow::Result<()> {
    let records = read_records(input)?;
    let (corrected, summary) = correct_records(&records);
    create_parent(out)?;
    write_records(out, &corrected)?;
    let mut m = ManifestBuilder::start("correct");
    m.input(input).output(out).write(&sidecar_path(out))?;
    println!(
        "unchanged {}, promoted {}, demoted {}",
        summary.none, summary.promoted, summary.demoted
    );
    Ok(())
}

#[derive(Serialize)]
struct NamedReport<'a> {
    name: &'a str,
    report: &'a EvaluationReport,
}

#[derive(Serialize)]
struct ComparisonOutput<'a> {
    reports: Vec<NamedReport<'a>>,
    comparison: hsmtl::evaluation::ComparisonTable,
}

pub fn evaluate(
    gold: &Path,
    format: Option<CorpusFormat>,
    predictions: &str,
    compare: &[String],
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let corpus = read_corpus(gold, format, HierarchyPolicy::Reject)?;
    let mut sources = vec![PredictionSource::parse(predictions)?];
    for spec in compare {
        sources.push(PredictionSource::parse(spec)?);
    }
    let reports: Vec<(String, EvaluationReport)> = sources
        .iter()
        .map(|s| Ok((s.name.clone(), s.report(&corpus)?)))
        .collect::<anyhow::Result<_>>()?;

    let mut m = ManifestBuilder::start("evaluate");
    m.input(gold);
    for s in &sources {
        for p in s.paths() {
            m.input(p);
        }
    }
    if reports.len() == 1 {
        let report = &reports[0].1;
        println!("{report}");
        if let Some(out) = out {
            write_json(out, report)?;
        }
    } else {
        let table = compare_runs(&reports)?;
        println!("{table}");
        if let Some(out) = out {
            let output = ComparisonOutput {
                reports: reports.iter().map(|(name, report)| NamedReport { name, report }).collect(),
                comparison: table,
            };
            write_json(out, &output)?;
        }
    }
    if let Some(out) = out {
        m.output(out).write(&sidecar_path(out))?;
    }
    Ok(())
}

pub fn analyze(gold: &Path, format: Option<CorpusFormat>, predictions: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let corpus = read_corpus(gold, format, HierarchyPolicy::Reject)?;
    let records = read_records(predictions)?;
    // correction is recomputed from the probabilities, so raw and corrected
    // files give the same analysis
    let (corrected, _) = correct_records(&records);
    let aligned = align_with_gold(&corpus, &corrected)?;
    let report = evaluate_preds(&aligned.gold, &aligned.predictions, aligned.corrected.as_deref())?;
    let analysis = report.analysis.expect("single-source report has an analysis");
    println!("{}", AnalysisTables(&analysis));
    if let Some(out) = out {
        write_json(out, &analysis)?;
        ManifestBuilder::start("analyze")
            .input(gold)
            .input(predictions)
            .output(out)
            .write(&sidecar_path(out))?;
    }
    std::io::stdout().flush().ok();
    Ok(())
}
