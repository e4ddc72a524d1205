//! `oodbench` command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{
    emit_report, run_benchmark, synth_bundle, BenchGrid, BenchSource, Pipeline, ReportFormat,
    SynthConfig,
};
use crate::bundle::DatasetBundle;
use crate::config::{LogitSource, Method, RunConfig};
use crate::dsgf::{fuse_features, train_head, Head, Stage2Preset, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_suite, id_accuracy, SuiteScores};
use crate::io::{load_features, load_label_values, load_logits, load_scores, save_matrix};
use crate::knn::{fused_knn_score_batch, knn_score_batch, FusedVariant, Index};
use crate::matrix::{Labels, Logits, Scores};
use crate::sample::Shots;
use crate::scores::score_batch;

#[derive(Debug, Parser)]
#[command(
    name = "oodbench",
    version,
    about = "Few-shot OOD scoring, feature fusion and benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic two-stream bundle.
    Synth(SynthArgs),
    /// Score one logit file (or feature file, for knn) with one method.
    Score(ScoreArgs),
    /// Build a cosine index over training features and score queries.
    Knn(KnnArgs),
    /// Train a linear head on (optionally fused) features.
    TrainHead(TrainHeadArgs),
    /// FPR@95 and AUROC from precomputed score files.
    Eval(EvalArgs),
    /// Run the full benchmark grid.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for the NPY files and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "OODBENCH_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    dim_orig: Option<usize>,
    #[arg(long)]
    dim_ft: Option<usize>,
    #[arg(long)]
    num_ood_sets: Option<usize>,
    #[arg(long)]
    n_ood: Option<usize>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Logit matrix (f4 or f8); required for logit methods.
    #[arg(long, required_unless_present = "features")]
    logits: Option<PathBuf>,
    /// Query features; used with `--method knn`.
    #[arg(long, requires = "train")]
    features: Option<PathBuf>,
    /// Training features for `--method knn`.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KnnArgs {
    /// Training features (the pre-trained stream when fusing).
    #[arg(long)]
    train: PathBuf,
    /// Query features (the pre-trained stream when fusing).
    #[arg(long)]
    query: PathBuf,
    /// Fine-tuned training features; enables fused scoring.
    #[arg(long, requires = "query_ft")]
    train_ft: Option<PathBuf>,
    #[arg(long, requires = "train_ft")]
    query_ft: Option<PathBuf>,
    #[arg(long, default_value = "normalize-then-concat")]
    variant: FusedVariant,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainHeadArgs {
    /// Training features (the pre-trained stream when fusing).
    #[arg(long)]
    features: PathBuf,
    /// Second feature stream to concatenate after `--features`.
    #[arg(long)]
    fuse_with: Option<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    /// Defaults to one more than the largest label.
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    #[arg(long, env = "OODBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Writes `<out>.weights.npy`, `<out>.bias.npy` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    id_scores: PathBuf,
    /// `name=path`; repeat for several OOD sets.
    #[arg(long = "ood", value_parser = parse_named_path, required = true)]
    ood: Vec<(String, PathBuf)>,
    /// Label for the score column in the report.
    #[arg(long, default_value = "score")]
    method: String,
    /// ID test logits, for classification accuracy.
    #[arg(long, requires = "labels")]
    logits: Option<PathBuf>,
    #[arg(long, requires = "logits")]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output file extension.
    #[arg(long)]
    format: Option<ReportFormat>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(
        long,
        conflicts_with = "synth_default",
        required_unless_present = "synth_default"
    )]
    manifest: Option<PathBuf>,
    /// Use the built-in synthetic bundle.
    #[arg(long)]
    synth_default: bool,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    shots: Vec<Shots>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "energy,entropy,variance,msp,maxlogit,knn"
    )]
    methods: Vec<Method>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "baseline-ft,baseline-orig,dsgf"
    )]
    pipelines: Vec<Pipeline>,
    /// Fused k-NN variant used by the dsgf pipeline.
    #[arg(long, default_value = "normalize-then-concat")]
    variant: FusedVariant,
    /// Fused k-NN variants reported side by side.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "concat-then-normalize,normalize-then-concat,score-sum"
    )]
    variants: Vec<FusedVariant>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, env = "OODBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Source of baseline-ft logits: auto, supplied or retrained.
    #[arg(long, default_value = "auto")]
    baseline_logits: LogitSource,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Per-shot head settings for a known ID dataset and fine-tuning
    /// paradigm, e.g. food101:vpt. Overrides --lr, --weight-decay and
    /// --batch-size.
    #[arg(long)]
    preset: Option<Stage2Preset>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output file extension.
    #[arg(long)]
    format: Option<ReportFormat>,
    /// Record the wall-clock time in the report metadata.
    #[arg(long)]
    timestamp: bool,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Score(a) => score(a),
        Command::Knn(a) => knn(a),
        Command::TrainHead(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    }
}

/// Logits stored as either f4 or f8.
fn load_any_logits(path: &Path) -> Result<Logits<f64>> {
    match load_logits::<f32>(path) {
        Ok(l) => Logits::new(l.matrix().map()),
        Err(Error::Dtype { .. }) => load_logits::<f64>(path),
        Err(e) => Err(e),
    }
}

fn load_any_scores(path: &Path) -> Result<Scores<f64>> {
    match load_scores::<f64>(path) {
        Err(Error::Dtype { .. }) => Scores::new(
            load_scores::<f32>(path)?
                .values()
                .iter()
                .map(|&v| v as f64)
                .collect(),
        ),
        r => r,
    }
}

fn load_labels_inferred(path: &Path, num_classes: Option<usize>) -> Result<Labels> {
    let raw = load_label_values(path)?;
    let k = match num_classes {
        Some(k) => k,
        None => raw.iter().copied().max().map_or(0, |m| m.max(-1) + 1) as usize,
    };
    Labels::from_i64(&raw, k).map_err(|e| e.context(path.display().to_string()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seed: a.seed.unwrap_or(d.seed),
        num_classes: a.num_classes.unwrap_or(d.num_classes),
        train_per_class: a.train_per_class.unwrap_or(d.train_per_class),
        test_per_class: a.test_per_class.unwrap_or(d.test_per_class),
        dim_orig: a.dim_orig.unwrap_or(d.dim_orig),
        dim_ft: a.dim_ft.unwrap_or(d.dim_ft),
        num_ood_sets: a.num_ood_sets.unwrap_or(d.num_ood_sets),
        n_ood: a.n_ood.unwrap_or(d.n_ood),
        ..d
    };
    let manifest = synth_bundle(&cfg)?.save(&a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let scores = match a.method {
        Method::Logit(m) => {
            let path = a
                .logits
                .ok_or_else(|| Error::Config(format!("--logits is required for method {m}")))?;
            score_batch::<f64, f64>(&load_any_logits(&path)?, m, a.temperature)?
        }
        Method::Knn => {
            let (Some(train), Some(query)) = (a.train, a.features) else {
                return Err(Error::Config(
                    "method knn needs --train and --features".into(),
                ));
            };
            let index = Index::<f64>::build(&load_features::<f32>(&train)?)?;
            knn_score_batch(&index, &load_features::<f32>(&query)?, a.k)?
        }
    };
    save_matrix(&scores, &a.out)
}

fn knn(a: KnnArgs) -> Result<()> {
    let train = load_features::<f32>(&a.train)?;
    let query = load_features::<f32>(&a.query)?;
    let index = Index::<f64>::build(&train)?;
    let scores = match (a.train_ft, a.query_ft) {
        (Some(train_ft), Some(query_ft)) => {
            let index_ft = Index::<f64>::build(&load_features::<f32>(&train_ft)?)?;
            let q_ft = load_features::<f32>(&query_ft)?;
            fused_knn_score_batch(&index, &index_ft, &query, &q_ft, a.variant, a.k)?
        }
        _ => knn_score_batch(&index, &query, a.k)?,
    };
    save_matrix(&scores, &a.out)
}

#[derive(Serialize)]
struct HeadSidecar<'a> {
    num_classes: usize,
    dim: usize,
    fused: bool,
    train: &'a TrainConfig,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(a: TrainHeadArgs) -> Result<()> {
    let mut features = load_features::<f32>(&a.features)?;
    if let Some(other) = &a.fuse_with {
        features = fuse_features(&features, &load_features::<f32>(other)?)?;
    }
    let labels = load_labels_inferred(&a.labels, a.num_classes)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        momentum: a.momentum,
        seed: a.seed,
    };
    let head: Head<f64> = train_head(&features, &labels, &cfg)?;
    save_matrix(&head.weights(), &with_suffix(&a.out, ".weights.npy"))?;
    save_matrix(
        &Scores::new(head.bias().to_vec())?,
        &with_suffix(&a.out, ".bias.npy"),
    )?;
    let sidecar = HeadSidecar {
        num_classes: head.num_classes(),
        dim: head.dim(),
        fused: a.fuse_with.is_some(),
        train: &cfg,
    };
    let path = with_suffix(&a.out, ".json");
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut scores = SuiteScores::default();
    scores.insert_id(&a.method, load_any_scores(&a.id_scores)?);
    let mut names = Vec::new();
    for (name, path) in &a.ood {
        if names.contains(name) {
            return Err(Error::Config(format!("duplicate OOD set name {name:?}")));
        }
        scores.insert_ood(&a.method, name, load_any_scores(path)?);
        names.push(name.clone());
    }
    let accuracy = match (&a.logits, &a.labels) {
        (Some(l), Some(y)) => {
            let logits = load_any_logits(l)?;
            let labels = load_labels_inferred(y, Some(logits.num_classes()))?;
            Some(id_accuracy(&logits, &labels)?)
        }
        _ => None,
    };
    let report = evaluate_suite(std::slice::from_ref(&a.method), &names, &scores, accuracy)?;
    let text = match a.format.unwrap_or_else(|| ReportFormat::from_path(&a.out)) {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => {
            let mut t = serde_json::to_string_pretty(&report)?;
            t.push('\n');
            t
        }
    };
    write_text(&a.out, text)
}

fn bench(a: BenchArgs) -> Result<()> {
    let (bundle, source) = match &a.manifest {
        Some(path) => (
            DatasetBundle::load(path)?,
            BenchSource::Manifest(path.clone()),
        ),
        None => {
            let cfg = SynthConfig::default();
            (synth_bundle(&cfg)?, BenchSource::Synthetic(cfg))
        }
    };
    let run = RunConfig {
        temperature: a.temperature,
        knn_k: a.k,
        shots: Shots::All,
        seed: a.seed,
        methods: a.methods.clone(),
        variant: a.variant,
        baseline_logits: a.baseline_logits,
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            learning_rate: a.lr,
            weight_decay: a.weight_decay,
            momentum: a.momentum,
            seed: a.seed,
        },
        preset: a.preset,
    };
    let grid = BenchGrid {
        shots: a.shots,
        pipelines: a.pipelines,
        methods: a.methods,
        variants: a.variants,
    };
    let mut report = run_benchmark(&bundle, source, &grid, &run)?;
    if a.timestamp {
        report.metadata.timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    emit_report(
        &report,
        a.format.unwrap_or_else(|| ReportFormat::from_path(&a.out)),
        &a.out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_named_paths() {
        assert_eq!(
            parse_named_path("a=b.npy").unwrap(),
            ("a".to_string(), PathBuf::from("b.npy"))
        );
        assert!(parse_named_path("ab.npy").is_err());
        assert!(parse_named_path("=b").is_err());
    }

    #[test]
    fn unknown_subcommand_fails() {
        assert_ne!(cli_main(["oodbench", "frobnicate"]), 0);
    }

    #[test]
    fn unknown_method_fails() {
        assert_ne!(
            cli_main([
                "oodbench", "score", "--method", "foo", "--logits", "x.npy", "--out", "y.npy"
            ]),
            0
        );
    }

    #[test]
    fn suffix_appends_to_prefix() {
        assert_eq!(
            with_suffix(Path::new("d/head"), ".bias.npy"),
            PathBuf::from("d/head.bias.npy")
        );
    }
}
