//! Run-level configuration shared by the pipeline, evaluation and CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsgf::{Stage2Preset, TrainConfig};
use crate::error::{Error, Result};
use crate::knn::FusedVariant;
use crate::sample::Shots;
use crate::scores::ScoreMethod;

/// Any of the six uncertainty scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    Logit(ScoreMethod),
    Knn,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Logit(ScoreMethod::Energy),
        Method::Logit(ScoreMethod::Entropy),
        Method::Logit(ScoreMethod::Variance),
        Method::Logit(ScoreMethod::Msp),
        Method::Logit(ScoreMethod::MaxLogit),
        Method::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Logit(m) => m.name(),
            Method::Knn => "knn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                "unknown method {s:?}; valid methods: energy, entropy, variance, msp, maxlogit, knn"
            ))
            })
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Where the fine-tuned baseline gets its logits from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitSource {
    /// Supplied logits when the bundle has them, otherwise retrained.
    #[default]
    Auto,
    Supplied,
    /// A linear head trained on the few-shot fine-tuned features.
    Retrained,
}

impl FromStr for LogitSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(LogitSource::Auto),
            "supplied" => Ok(LogitSource::Supplied),
            "retrained" => Ok(LogitSource::Retrained),
            _ => Err(Error::Config(format!(
                "unknown logit source {s:?}; valid: auto, supplied, retrained"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub temperature: f64,
    pub knn_k: usize,
    pub shots: Shots,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub variant: FusedVariant,
    pub baseline_logits: LogitSource,
    pub train: TrainConfig,
    /// When set, overrides the learning rate, weight decay and batch size
    /// of `train` per shot setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Stage2Preset>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            knn_k: 1,
            shots: Shots::All,
            seed: 0,
            methods: Method::ALL.to_vec(),
            variant: FusedVariant::NormalizeThenConcat,
            baseline_logits: LogitSource::Auto,
            train: TrainConfig::default(),
            preset: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn k must be at least 1".into()));
        }
        if self.shots == Shots::Count(0) {
            return Err(Error::Config("shot count must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config(
                "at least one score method is required".into(),
            ));
        }
        self.train.validate()?;
        if let Some(preset) = self.preset {
            preset.train_config(self.shots, &self.train)?;
        }
        Ok(())
    }

    /// Head-training settings for `shots`, resolved through the preset.
    pub fn train_for(&self, shots: Shots) -> Result<TrainConfig> {
        match self.preset {
            Some(preset) => preset.train_config(shots, &self.train),
            None => Ok(self.train.clone()),
        }
    }
}
