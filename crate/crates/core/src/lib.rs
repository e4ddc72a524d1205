//! Few-shot out-of-distribution detection over exported embeddings.
//!
//! The crate consumes feature and logit matrices exported from a frozen
//! pre-trained backbone ("orig" stream) and its fine-tuned counterpart
//! ("ft" stream), and provides:
//!
//! * [`scores`]: energy, entropy, variance, MSP and max-logit scores;
//! * [`knn`]: exact cosine k-NN scoring and the three two-stream fusions;
//! * [`dsgf`]: feature concatenation and linear-head retraining;
//! * [`eval`]: FPR@95, AUROC and ID accuracy;
//! * [`bench`]: a synthetic two-stream generator and the benchmark grid.
//!
//! Numerics are generic over [`Scalar`]; the aliases below fix the
//! precisions used by the file formats and the CLI.

pub mod bench;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod dsgf;
pub mod error;
pub mod eval;
pub mod io;
pub mod knn;
pub mod matrix;
pub mod npy;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod scores;

pub use bundle::{validate_bundle, DatasetBundle, OodSet};
pub use config::{LogitSource, Method, RunConfig};
pub use dsgf::{Head, Stage2Preset, TrainConfig};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use knn::{FusedVariant, Index};
pub use matrix::{l2_normalize_rows, Features, Labels, Logits, Matrix, Scores};
pub use sample::Shots;
pub use scalar::Scalar;
pub use scores::ScoreMethod;

/// Sample embeddings as exported (32-bit).
pub type FeatureMatrix = Features<f32>;
/// Classifier outputs as exported (32-bit).
pub type LogitMatrix = Logits<f32>;
/// Logits produced by a retrained head.
pub type HeadLogits = Logits<f64>;
pub type LabelVector = Labels;
/// Uncertainty scores; larger means more likely OOD.
pub type ScoreVector = Scores<f64>;
pub type LinearHead = Head<f64>;
pub type KnnIndex = Index<f64>;
