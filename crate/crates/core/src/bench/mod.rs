//! Benchmark grid: shots × pipelines × methods × OOD sets, plus the
//! side-by-side comparison of the three fused k-NN variants.

pub mod synth;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{validate_bundle, DatasetBundle};
use crate::config::{LogitSource, Method, RunConfig};
use crate::dsgf::{dsgf_pipeline, head_forward, train_head, Head};
use crate::error::{Error, Result};
use crate::eval::{
    auroc, evaluate_suite, fpr_at_tpr, id_accuracy, EvalReport, Metrics, SuiteScores, TPR_TARGET,
};
use crate::knn::{
    divergence_witness, fused_knn_score_batch, knn_score_batch, DivergenceWitness, FusedVariant,
    Index,
};
use crate::matrix::{Features, Labels, Logits, Scores};
use crate::sample::{few_shot_indices, Shots};
use crate::scalar::Scalar;
use crate::scores::score_batch;

pub use synth::{synth_bundle, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Fine-tuned stream only.
    BaselineFt,
    /// Pre-trained stream only.
    BaselineOrig,
    /// Both streams fused.
    Dsgf,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::BaselineFt, Pipeline::BaselineOrig, Pipeline::Dsgf];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::BaselineFt => "baseline-ft",
            Pipeline::BaselineOrig => "baseline-orig",
            Pipeline::Dsgf => "dsgf",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown pipeline {s:?}; valid: baseline-ft, baseline-orig, dsgf"
                ))
            })
    }
}

/// Which cells to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub shots: Vec<Shots>,
    pub pipelines: Vec<Pipeline>,
    pub methods: Vec<Method>,
    /// Fused k-NN variants reported side by side (may be empty).
    pub variants: Vec<FusedVariant>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            shots: vec![
                Shots::Count(2),
                Shots::Count(4),
                Shots::Count(8),
                Shots::Count(16),
            ],
            pipelines: Pipeline::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            variants: FusedVariant::ALL.to_vec(),
        }
    }
}

impl BenchGrid {
    fn validate(&self) -> Result<()> {
        if self.shots.is_empty() || self.pipelines.is_empty() || self.methods.is_empty() {
            return Err(Error::Config(
                "benchmark grid must have at least one shot, pipeline and method".into(),
            ));
        }
        Ok(())
    }
}

/// Where the benchmark data came from; part of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchSource {
    Synthetic(SynthConfig),
    Manifest(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    pub source: BenchSource,
    pub run: RunConfig,
    pub grid: BenchGrid,
    pub ood_sets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub shots: Shots,
    pub pipeline: Pipeline,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCell {
    pub shots: Shots,
    pub variant: FusedVariant,
    pub ood_sets: BTreeMap<String, Metrics>,
    pub average: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metadata: BenchMetadata,
    pub cells: Vec<BenchCell>,
    pub fused_variants: Vec<VariantCell>,
    pub divergence_witness: DivergenceWitness,
}

impl BenchReport {
    pub fn cell(&self, shots: Shots, pipeline: Pipeline) -> Option<&EvalReport> {
        self.cells
            .iter()
            .find(|c| c.shots == shots && c.pipeline == pipeline)
            .map(|c| &c.report)
    }

    pub fn variant(&self, shots: Shots, variant: FusedVariant) -> Option<&VariantCell> {
        self.fused_variants
            .iter()
            .find(|c| c.shots == shots && c.variant == variant)
    }

    /// Number of `(shot, pipeline, method, ood set)` metric cells.
    pub fn metric_cell_count(&self) -> usize {
        self.cells
            .iter()
            .map(|c| c.report.methods.values().map(BTreeMap::len).sum::<usize>())
            .sum()
    }
}

/// First 16 hex digits of SHA-256 over the canonical JSON of the inputs.
pub fn config_hash(source: &BenchSource, run: &RunConfig, grid: &BenchGrid) -> Result<String> {
    let text = serde_json::to_string(&(source, run, grid))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(hex::encode(&digest[..8]))
}

/// One stream (or the fused pair) reduced to what scoring needs.
struct StreamScores {
    id: BTreeMap<String, Scores<f64>>,
    ood: BTreeMap<(String, String), Scores<f64>>,
    accuracy: f64,
}

fn logit_scores(
    out: &mut SuiteScores,
    methods: &[Method],
    temperature: f64,
    id: &Logits<impl Scalar>,
    ood: &[(String, Logits<impl Scalar>)],
) -> Result<()> {
    for m in methods {
        if let Method::Logit(sm) = m {
            out.insert_id(m.name(), score_batch(id, *sm, temperature)?);
            for (name, l) in ood {
                out.insert_ood(m.name(), name, score_batch(l, *sm, temperature)?);
            }
        }
    }
    Ok(())
}

struct HeadOutputs {
    id: Logits<f64>,
    ood: Vec<(String, Logits<f64>)>,
}

fn head_outputs(
    head: &Head<f64>,
    id: &Features<f32>,
    ood: &[(&str, &Features<f32>)],
) -> Result<HeadOutputs> {
    Ok(HeadOutputs {
        id: head_forward(head, id)?,
        ood: ood
            .iter()
            .map(|(n, f)| Ok((n.to_string(), head_forward(head, f)?)))
            .collect::<Result<_>>()?,
    })
}

/// ID logits borrowed from the bundle plus owned `(name, logits)` per OOD set.
type SuppliedLogits<'a> = (&'a Logits<f32>, Vec<(String, Logits<f32>)>);

/// One feature stream of the bundle after few-shot subsampling.
struct Stream<'a> {
    train: Features<f32>,
    train_labels: &'a Labels,
    id: &'a Features<f32>,
    ood: Vec<(&'a str, &'a Features<f32>)>,
}

/// Scores a single-stream baseline.
fn single_stream(
    bundle: &DatasetBundle,
    cfg: &RunConfig,
    methods: &[Method],
    stream: Stream<'_>,
    supplied: Option<SuppliedLogits<'_>>,
) -> Result<StreamScores> {
    let Stream {
        train,
        train_labels,
        id,
        ood,
    } = stream;
    let ood = ood.as_slice();
    let train = &train;
    let mut scores = SuiteScores::default();
    let accuracy = match supplied {
        Some((id_logits, ood_logits)) => {
            logit_scores(
                &mut scores,
                methods,
                cfg.temperature,
                id_logits,
                &ood_logits,
            )?;
            id_accuracy(id_logits, &bundle.id_test_labels)?
        }
        None => {
            let head: Head<f64> = train_head(train, train_labels, &cfg.train_for(cfg.shots)?)?;
            let out = head_outputs(&head, id, ood)?;
            logit_scores(&mut scores, methods, cfg.temperature, &out.id, &out.ood)?;
            id_accuracy(&out.id, &bundle.id_test_labels)?
        }
    };
    if methods.contains(&Method::Knn) {
        let index = Index::<f64>::build(train)?;
        scores.insert_id("knn", knn_score_batch(&index, id, cfg.knn_k)?);
        for (name, f) in ood {
            scores.insert_ood("knn", name, knn_score_batch(&index, *f, cfg.knn_k)?);
        }
    }
    Ok(StreamScores {
        id: scores.id,
        ood: scores.ood,
        accuracy,
    })
}

fn supplied_ft_logits(
    bundle: &DatasetBundle,
    source: LogitSource,
) -> Result<Option<SuppliedLogits<'_>>> {
    let available = bundle.id_test_logits.as_ref().map(|id| {
        let ood = bundle
            .ood_sets
            .iter()
            .filter_map(|s| s.logits.clone().map(|l| (s.name.clone(), l)))
            .collect::<Vec<_>>();
        (id, ood)
    });
    match (source, available) {
        (LogitSource::Retrained, _) => Ok(None),
        (LogitSource::Auto, a) => Ok(a),
        (LogitSource::Supplied, Some(a)) => Ok(Some(a)),
        (LogitSource::Supplied, None) => Err(Error::Config(
            "baseline logits requested from the bundle, but it carries none".into(),
        )),
    }
}

fn run_pipeline(
    bundle: &DatasetBundle,
    cfg: &RunConfig,
    methods: &[Method],
    pipeline: Pipeline,
) -> Result<StreamScores> {
    let idx = few_shot_indices(&bundle.train_labels, cfg.shots, cfg.seed)?;
    let train_labels = bundle.train_labels.select(&idx)?;
    match pipeline {
        Pipeline::BaselineOrig => {
            let stream = Stream {
                train: bundle.train_orig.select_rows(&idx)?,
                train_labels: &train_labels,
                id: &bundle.id_test_orig,
                ood: bundle
                    .ood_sets
                    .iter()
                    .map(|s| (s.name.as_str(), &s.orig))
                    .collect(),
            };
            single_stream(bundle, cfg, methods, stream, None)
        }
        Pipeline::BaselineFt => {
            let stream = Stream {
                train: bundle.train_ft.select_rows(&idx)?,
                train_labels: &train_labels,
                id: &bundle.id_test_ft,
                ood: bundle
                    .ood_sets
                    .iter()
                    .map(|s| (s.name.as_str(), &s.ft))
                    .collect(),
            };
            let supplied = supplied_ft_logits(bundle, cfg.baseline_logits)?;
            single_stream(bundle, cfg, methods, stream, supplied)
        }
        Pipeline::Dsgf => {
            let out = dsgf_pipeline::<f64>(bundle, cfg)?;
            let mut scores = SuiteScores::default();
            let ood_logits: Vec<(String, Logits<f64>)> = out
                .ood
                .iter()
                .map(|(n, _, l)| (n.clone(), l.clone()))
                .collect();
            logit_scores(
                &mut scores,
                methods,
                cfg.temperature,
                &out.id_logits,
                &ood_logits,
            )?;
            if methods.contains(&Method::Knn) {
                let knn = fused_knn(
                    bundle,
                    &out.train_orig,
                    &out.train_ft,
                    cfg.variant,
                    cfg.knn_k,
                )?;
                scores.insert_id("knn", knn.0);
                for (name, s) in knn.1 {
                    scores.insert_ood("knn", &name, s);
                }
            }
            Ok(StreamScores {
                id: scores.id,
                ood: scores.ood,
                accuracy: id_accuracy(&out.id_logits, &bundle.id_test_labels)?,
            })
        }
    }
}

type FusedScores = (Scores<f64>, Vec<(String, Scores<f64>)>);

fn fused_knn(
    bundle: &DatasetBundle,
    train_orig: &Features<f32>,
    train_ft: &Features<f32>,
    variant: FusedVariant,
    k: usize,
) -> Result<FusedScores> {
    let index_o = Index::<f64>::build(train_orig)?;
    let index_ft = Index::<f64>::build(train_ft)?;
    let id = fused_knn_score_batch(
        &index_o,
        &index_ft,
        &bundle.id_test_orig,
        &bundle.id_test_ft,
        variant,
        k,
    )?;
    let ood = bundle
        .ood_sets
        .iter()
        .map(|s| {
            Ok((
                s.name.clone(),
                fused_knn_score_batch(&index_o, &index_ft, &s.orig, &s.ft, variant, k)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok((id, ood))
}

/// Runs every grid cell on `bundle`. Deterministic given the inputs.
pub fn run_benchmark(
    bundle: &DatasetBundle,
    source: BenchSource,
    grid: &BenchGrid,
    cfg: &RunConfig,
) -> Result<BenchReport> {
    grid.validate()?;
    cfg.validate()?;
    validate_bundle(bundle)?;
    let ood_names: Vec<String> = bundle.ood_sets.iter().map(|s| s.name.clone()).collect();
    let method_names: Vec<String> = grid.methods.iter().map(|m| m.name().to_string()).collect();

    let mut cells = Vec::new();
    let mut fused_variants = Vec::new();
    for &shots in &grid.shots {
        let cell_cfg = RunConfig {
            shots,
            methods: grid.methods.clone(),
            ..cfg.clone()
        };
        for &pipeline in &grid.pipelines {
            let at = format!("grid cell shots={shots} pipeline={pipeline}");
            let s = run_pipeline(bundle, &cell_cfg, &grid.methods, pipeline)
                .map_err(|e| e.context(&at))?;
            let scores = SuiteScores {
                id: s.id,
                ood: s.ood,
            };
            let report = evaluate_suite(&method_names, &ood_names, &scores, Some(s.accuracy))
                .map_err(|e| e.context(&at))?;
            cells.push(BenchCell {
                shots,
                pipeline,
                report,
            });
        }
        if !grid.variants.is_empty() {
            let idx = few_shot_indices(&bundle.train_labels, shots, cfg.seed)?;
            let train_orig = bundle.train_orig.select_rows(&idx)?;
            let train_ft = bundle.train_ft.select_rows(&idx)?;
            for &variant in &grid.variants {
                let (id, ood) = fused_knn(bundle, &train_orig, &train_ft, variant, cfg.knn_k)?;
                let mut per_set = BTreeMap::new();
                for (name, o) in &ood {
                    per_set.insert(
                        name.clone(),
                        Metrics {
                            fpr95: fpr_at_tpr(&id, o, TPR_TARGET)?,
                            auroc: auroc(&id, o)?,
                        },
                    );
                }
                let n = per_set.len() as f64;
                let average = Metrics {
                    fpr95: per_set.values().map(|m| m.fpr95).sum::<f64>() / n,
                    auroc: per_set.values().map(|m| m.auroc).sum::<f64>() / n,
                };
                fused_variants.push(VariantCell {
                    shots,
                    variant,
                    ood_sets: per_set,
                    average,
                });
            }
        }
    }

    Ok(BenchReport {
        metadata: BenchMetadata {
            config_hash: config_hash(&source, cfg, grid)?,
            seed: cfg.seed,
            timestamp_unix: None,
            source,
            run: cfg.clone(),
            grid: grid.clone(),
            ood_sets: ood_names,
        },
        cells,
        fused_variants,
        divergence_witness: divergence_witness()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` means CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!(
                "unknown report format {s:?}; valid: json, csv"
            ))),
        }
    }
}

pub fn report_to_json(report: &BenchReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

/// One row per `(shot, pipeline, method, ood set)` with the config hash
/// and seed repeated on every row.
pub fn report_to_csv(report: &BenchReport) -> String {
    let meta = &report.metadata;
    let mut out =
        String::from("config_hash,seed,shots,pipeline,method,ood_set,fpr95,auroc,id_accuracy\n");
    for cell in &report.cells {
        let acc = cell
            .report
            .id_accuracy
            .map(|a| a.to_string())
            .unwrap_or_default();
        for (method, sets) in &cell.report.methods {
            for (set, m) in sets {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{method},{set},{},{},{acc}",
                    meta.config_hash, meta.seed, cell.shots, cell.pipeline, m.fpr95, m.auroc
                );
            }
        }
    }
    out
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
