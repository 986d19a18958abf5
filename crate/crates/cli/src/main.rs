//! `seqclass` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use seqclass::baselines::{majority_baseline, train_l1};
use seqclass::data::{
    load_manifest, normalize_features, parse_sparse_rows, split_indices, tfidf_vectorize, RawCorpus, ScalingRecord, TabularDataset,
};
use seqclass::dwsc::{DwscModel, Featurization, RewardParams};
use seqclass::eval::{evaluate_l1, evaluate_majority, evaluate_policy, evaluate_text, sweep_lambda, CurvePoint, SparsityAccuracyCurve};
use seqclass::learner::{derive_seed, train, DwscDomain, IterationDiagnostics, RolloutConfig, TextDomain};
use seqclass::model_io::{write_atomic, ModelKind, SavedModel};
use seqclass::text::{LabelMode, TextModel};

mod report;

const TARGETS: [f64; 3] = [0.8, 0.6, 0.4];

#[derive(Parser)]
#[command(name = "seqclass", version, about = "Datum-wise sparse and sentence-level text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a feature-acquisition policy on a sparse tabular file.
    Train(TrainArgs),
    /// Evaluate a saved tabular model.
    Eval(EvalArgs),
    /// Train one policy per lambda and write the sparsity/accuracy curve.
    Sweep(SweepArgs),
    /// Train a sentence-reading policy on a corpus manifest.
    TextTrain(TextTrainArgs),
    /// Evaluate a saved text model.
    TextEval(TextEvalArgs),
    /// L1-regularized logistic regression over a grid of strengths.
    Baseline(BaselineArgs),
    /// Accuracy at sparsity 0.8/0.6/0.4 for several training-set sizes.
    Report(ReportArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Sparse `label idx:val` file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LearnerArgs {
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Sampled states per iteration.
    #[arg(long, default_value_t = 2000)]
    rollout_states: usize,
    /// Probability of following the new policy during rollouts.
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Write per-iteration diagnostics (JSON lines) here instead of stderr.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

impl LearnerArgs {
    fn config(&self, seed: u64) -> RolloutConfig {
        RolloutConfig { num_states: self.rollout_states, iterations: self.iterations, alpha: self.alpha, seed, ..RolloutConfig::default() }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// One global acquisition order for all inputs.
    #[arg(long)]
    constrained: bool,
    /// Model file; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Evaluate only the held-out part of this split (same seed as training).
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-datum action traces as CSV.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    lambda_grid: Vec<f64>,
    #[arg(long)]
    constrained: bool,
    /// Independent splits; the curve averages them per lambda.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Curve CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mono,
    Multi,
}

impl From<Mode> for LabelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Mono => LabelMode::Mono,
            Mode::Multi => LabelMode::Multi,
        }
    }
}

#[derive(Args)]
struct TextTrainArgs {
    /// Corpus manifest of `<doc-path>\t<cat,cat,...>` lines.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Multi)]
    mode: Mode,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TextEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    l1_grid: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25,0.5")]
    train_fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.001,0.01,0.05,0.1,0.2,0.5")]
    lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.0003,0.001,0.003,0.01,0.03,0.1,0.3")]
    l1_grid: Vec<f64>,
    #[arg(long)]
    constrained: bool,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(message: impl std::fmt::Display) -> anyhow::Error {
    Cli::command().error(clap::error::ErrorKind::ValueValidation, message).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<clap::Error>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<seqclass::Error>() {
            return match e {
                seqclass::Error::NumericalFailure(_) | seqclass::Error::Truncated(_) => 3,
                seqclass::Error::InvalidArgument(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<clap::Error>() {
                Some(usage) => {
                    let _ = usage.print();
                }
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::TextTrain(a) => cmd_text_train(a),
        Command::TextEval(a) => cmd_text_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Report(a) => report::run(a),
    }
}

fn load_tabular(path: &Path) -> Result<TabularDataset<f64>> {
    parse_sparse_rows(path).with_context(|| format!("reading {}", path.display()))
}

/// Seeded split, then min-max scaling fitted on the training part.
fn prepare(
    data: &TabularDataset<f64>,
    train_fraction: f64,
    seed: u64,
) -> Result<(TabularDataset<f64>, TabularDataset<f64>, ScalingRecord<f64>)> {
    let (train_set, test_set) = data.split(train_fraction, seed)?;
    let (train_set, record) = normalize_features(&train_set)?;
    let test_set = record.apply(&test_set)?;
    Ok((train_set, test_set, record))
}

fn featurization(constrained: bool) -> Featurization {
    if constrained {
        Featurization::Constrained
    } else {
        Featurization::Unconstrained
    }
}

/// Seed for repeat `r`; the first repeat uses the master seed itself.
fn repeat_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, r as u64)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

struct DiagnosticsSink {
    lines: Vec<String>,
    path: Option<PathBuf>,
}

impl DiagnosticsSink {
    fn new(path: Option<&Path>) -> Self {
        DiagnosticsSink { lines: Vec::new(), path: path.map(Path::to_path_buf) }
    }

    fn push(&mut self, diags: &[IterationDiagnostics], extra: serde_json::Value) -> Result<()> {
        for d in diags {
            let mut value = serde_json::to_value(d)?;
            if let (Some(obj), Some(more)) = (value.as_object_mut(), extra.as_object()) {
                obj.extend(more.clone());
            }
            let line = value.to_string();
            if self.path.is_none() {
                eprintln!("{line}");
            }
            self.lines.push(line);
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(p) = &self.path {
            let mut text = self.lines.join("\n");
            text.push('\n');
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    }
}

fn print_json(value: serde_json::Value) -> Result<()> {
    println!("{value}");
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = load_tabular(&a.split.data)?;
    let (train_set, test_set, record) = prepare(&data, a.split.train_fraction, a.split.seed)?;
    let layout = featurization(a.constrained);
    let model = DwscModel::new(train_set.num_features(), train_set.num_classes(), layout, RewardParams::new(a.lambda)?)?;
    let config = a.learner.config(a.split.seed);
    let outcome = train(&DwscDomain::new(&model, &train_set)?, &config)?;

    let mut sink = DiagnosticsSink::new(a.learner.diagnostics.as_deref());
    sink.push(&outcome.diagnostics, json!({}))?;
    sink.finish()?;

    let saved = SavedModel {
        kind: ModelKind::Dwsc { n: model.num_features(), c: model.num_labels(), featurization: layout },
        policy: outcome.policy,
        lambda: a.lambda,
        scaling: Some(record),
        vocabulary: None,
        label_names: train_set.label_names().to_vec(),
    };
    let provenance = json!({
        "command": "train",
        "data": a.split.data,
        "train_fraction": a.split.train_fraction,
        "seed": a.split.seed,
        "lambda": a.lambda,
        "constrained": a.constrained,
        "iterations": config.iterations,
        "rollout_states": config.num_states,
        "alpha": config.alpha,
    });
    saved.save(&a.out, &provenance).with_context(|| format!("writing {}", a.out.display()))?;

    let (report, _) = evaluate_policy(&model, &saved.policy, &test_set)?;
    print_json(serde_json::to_value(&report)?)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let saved = SavedModel::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let ModelKind::Dwsc { n, .. } = saved.kind else {
        bail!(usage(format!("{} is a text model; use text-eval", a.model.display())));
    };
    let model = saved.dwsc_model()?;
    let mut data = load_tabular(&a.data)?.align_to(n, &saved.label_names)?;
    if let Some(fraction) = a.train_fraction {
        data = data.split(fraction, a.seed)?.1;
    }
    if let Some(record) = &saved.scaling {
        data = record.apply(&data)?;
    }
    let (report, outcomes) = evaluate_policy(&model, &saved.policy, &data)?;
    if let Some(path) = &a.traces {
        let mut csv = String::from("row,truth,predicted,actions\n");
        for (i, (row, c)) in data.rows().iter().zip(&outcomes).enumerate() {
            let actions: Vec<String> =
                c.actions.iter().map(|id| if id.0 < n { format!("f{}", id.0) } else { format!("c{}", id.0 - n) }).collect();
            csv.push_str(&format!("{i},{},{},{}\n", saved.label_names[row.label], saved.label_names[c.label], actions.join(" ")));
        }
        write_output(Some(path), &csv)?;
    }
    print_json(serde_json::to_value(&report)?)
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        bail!(usage(format!("--{name} needs non-negative finite values")));
    }
    Ok(())
}

/// Per-lambda means of several sweeps over the same grid.
fn mean_points(runs: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let k = runs.len() as f64;
    (0..runs[0].len())
        .map(|i| CurvePoint {
            lambda: runs[0][i].lambda,
            sparsity: runs.iter().map(|r| r[i].sparsity).sum::<f64>() / k,
            accuracy: runs.iter().map(|r| r[i].accuracy).sum::<f64>() / k,
        })
        .collect()
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    check_grid("lambda-grid", &a.lambda_grid)?;
    if a.repeats == 0 {
        bail!(usage("--repeats must be at least 1"));
    }
    let data = load_tabular(&a.split.data)?;
    let mut sink = DiagnosticsSink::new(a.learner.diagnostics.as_deref());
    let mut runs = Vec::with_capacity(a.repeats);
    for r in 0..a.repeats {
        let seed = repeat_seed(a.split.seed, r);
        let (train_set, test_set, _) = prepare(&data, a.split.train_fraction, seed)?;
        let sweep = sweep_lambda(&train_set, &test_set, &a.lambda_grid, &a.learner.config(seed), featurization(a.constrained))?;
        for cell in &sweep.cells {
            sink.push(&cell.diagnostics, json!({ "lambda": cell.lambda, "repeat": r }))?;
        }
        runs.push(sweep.raw_points());
    }
    sink.finish()?;
    let curve = SparsityAccuracyCurve::from_points(mean_points(&runs))?;
    let mut csv = String::new();
    if a.repeats > 1 {
        csv.push_str(&format!("# mean over {} splits\n", a.repeats));
    }
    csv.push_str(&curve.to_csv());
    write_output(a.out.as_deref(), &csv)
}

/// Label indices of `raw` re-expressed in `names` order.
fn remap_labels(raw: &mut RawCorpus, names: &[String]) -> Result<()> {
    let remap: Vec<usize> = raw
        .label_names
        .iter()
        .map(|l| names.iter().position(|n| n == l).with_context(|| format!("category {l:?} was not seen in training")))
        .collect::<Result<_>>()?;
    for doc in &mut raw.docs {
        for k in &mut doc.labels {
            *k = remap[*k];
        }
    }
    raw.label_names = names.to_vec();
    Ok(())
}

fn text_action_name(model: &TextModel, id: usize, names: &[String]) -> String {
    let c = model.num_labels();
    match id {
        k if k < c => format!("classify:{}", names[k]),
        k if k == c => "next".into(),
        _ => "stop".into(),
    }
}

fn cmd_text_train(a: TextTrainArgs) -> Result<()> {
    let raw = load_manifest(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let (train_idx, test_idx) = split_indices(raw.docs.len(), a.train_fraction, a.seed)?;
    let corpus = tfidf_vectorize::<f64>(&raw.subset(&train_idx))?;
    let test_docs = corpus.transform(&raw.subset(&test_idx).docs)?;
    let model = TextModel::new(corpus.index.dim(), raw.label_names.len(), a.mode.into())?;
    let config = a.learner.config(a.seed);
    let outcome = train(&TextDomain::new(&model, &corpus.docs)?, &config)?;

    let mut sink = DiagnosticsSink::new(a.learner.diagnostics.as_deref());
    sink.push(&outcome.diagnostics, json!({}))?;
    sink.finish()?;

    let saved = SavedModel {
        kind: ModelKind::Text { vocab_dim: model.vocab_dim(), num_labels: model.num_labels(), mode: model.mode() },
        policy: outcome.policy,
        lambda: 0.0,
        scaling: None,
        vocabulary: Some(corpus.index.clone()),
        label_names: raw.label_names.clone(),
    };
    let provenance = json!({
        "command": "text-train",
        "data": a.data,
        "train_fraction": a.train_fraction,
        "seed": a.seed,
        "mode": match a.mode { Mode::Mono => "mono", Mode::Multi => "multi" },
        "iterations": config.iterations,
        "rollout_states": config.num_states,
        "alpha": config.alpha,
    });
    saved.save(&a.out, &provenance).with_context(|| format!("writing {}", a.out.display()))?;

    if test_docs.is_empty() {
        log::warn!("no held-out documents to evaluate");
        return Ok(());
    }
    let (report, _) = evaluate_text(&model, &saved.policy, &test_docs)?;
    print_json(serde_json::to_value(&report)?)
}

fn cmd_text_eval(a: TextEvalArgs) -> Result<()> {
    let saved = SavedModel::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let (ModelKind::Text { .. }, Some(vocabulary)) = (saved.kind, saved.vocabulary.as_ref()) else {
        bail!(usage(format!("{} is not a text model; use eval", a.model.display())));
    };
    let model = saved.text_model()?;
    let mut raw = load_manifest(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    remap_labels(&mut raw, &saved.label_names)?;
    if let Some(fraction) = a.train_fraction {
        let (_, test_idx) = split_indices(raw.docs.len(), fraction, a.seed)?;
        raw = raw.subset(&test_idx);
    }
    let docs = raw.docs.iter().map(|d| vocabulary.vectorize(d, model.num_labels())).collect::<seqclass::Result<Vec<_>>>()?;
    let (report, predictions) = evaluate_text(&model, &saved.policy, &docs)?;
    if let Some(path) = &a.traces {
        let names = &saved.label_names;
        let join = |labels: &seqclass::text::LabelVector| labels.ones().map(|k| names[k].as_str()).collect::<Vec<_>>().join(";");
        let mut csv = String::from("doc,truth,predicted,sentences_read,actions\n");
        for (d, p) in docs.iter().zip(&predictions) {
            let actions: Vec<String> = p.actions.iter().map(|id| text_action_name(&model, id.0, names)).collect();
            csv.push_str(&format!("{},{},{},{},{}\n", d.doc.id(), join(&d.labels), join(&p.labels), p.sentences_read, actions.join(" ")));
        }
        write_output(Some(path), &csv)?;
    }
    print_json(serde_json::to_value(&report)?)
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    check_grid("l1-grid", &a.l1_grid)?;
    let data = load_tabular(&a.split.data)?;
    let (train_set, test_set, _) = prepare(&data, a.split.train_fraction, a.split.seed)?;
    let points = l1_points(&train_set, &test_set, &a.l1_grid, a.max_iters)?;
    let majority = evaluate_majority(&majority_baseline(&train_set)?, train_set.num_classes(), &test_set)?;
    let mut csv = format!("# majority accuracy: {}\n", majority.accuracy);
    csv.push_str(&SparsityAccuracyCurve::from_points(points)?.to_csv());
    write_output(a.out.as_deref(), &csv)
}

fn l1_points(train_set: &TabularDataset<f64>, test_set: &TabularDataset<f64>, grid: &[f64], max_iters: usize) -> Result<Vec<CurvePoint>> {
    grid.iter()
        .map(|&strength| {
            let model = train_l1(train_set, strength, max_iters, 1e-7)?;
            let report = evaluate_l1(&model, test_set)?;
            Ok(CurvePoint { lambda: strength, sparsity: report.mean_sparsity, accuracy: report.accuracy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_exit_codes() {
        let code = |e: seqclass::Error| exit_code(&anyhow::Error::from(e).context("while running"));
        assert_eq!(code(seqclass::Error::NumericalFailure("singular".into())), 3);
        assert_eq!(code(seqclass::Error::Truncated(9)), 3);
        assert_eq!(code(seqclass::Error::InvalidArgument("alpha".into())), 1);
        assert_eq!(code(seqclass::Error::Parse { line: 1, message: "bad".into() }), 2);
        assert_eq!(code(seqclass::Error::InvalidDataset("empty".into())), 2);
        assert_eq!(exit_code(&usage("--repeats")), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 2);
    }

    #[test]
    fn repeat_seeds_are_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..5).map(|r| repeat_seed(3, r)).collect();
        assert_eq!(seeds.len(), 5);
        assert_eq!(repeat_seed(3, 0), 3);
    }
}
