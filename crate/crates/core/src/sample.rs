//! Deterministic few-shot subsampling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Features, Labels};
use crate::rng::{shuffle, SplitMix64};
use crate::scalar::Scalar;

/// Training samples kept per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Shots {
    Count(usize),
    All,
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Count(m) => write!(f, "{m}"),
            Shots::All => f.write_str("all"),
        }
    }
}

impl FromStr for Shots {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Shots::All);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::Config("shot count must be at least 1".into())),
            Ok(m) => Ok(Shots::Count(m)),
            Err(_) => Err(Error::Config(format!(
                "invalid shot setting {s:?} (integer or \"all\")"
            ))),
        }
    }
}

impl From<Shots> for String {
    fn from(s: Shots) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Shots {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Row indices of a per-class subsample, sorted ascending.
///
/// For each class `c` the rows labelled `c` are shuffled by Fisher–Yates
/// driven by `SplitMix64(seed ^ c)` and the first `m` are kept.
pub fn few_shot_indices(labels: &Labels, shots: Shots, seed: u64) -> Result<Vec<usize>> {
    let m = match shots {
        Shots::All => return Ok((0..labels.len()).collect()),
        Shots::Count(0) => return Err(Error::Config("shot count must be at least 1".into())),
        Shots::Count(m) => m,
    };
    let mut by_class = vec![Vec::new(); labels.num_classes()];
    for (i, &y) in labels.values().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut picked = Vec::with_capacity(m * by_class.len());
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.len() < m {
            return Err(Error::TooFewSamples {
                class,
                available: rows.len(),
                requested: m,
            });
        }
        let mut rng = SplitMix64::new(seed ^ class as u64);
        shuffle(&mut rows, &mut rng);
        picked.extend_from_slice(&rows[..m]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Subsamples `features`/`labels`; reuse the returned indices to cut a
/// paired feature stream identically.
pub fn few_shot_subsample<T: Scalar>(
    features: &Features<T>,
    labels: &Labels,
    shots: Shots,
    seed: u64,
) -> Result<(Features<T>, Labels, Vec<usize>)> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let idx = few_shot_indices(labels, shots, seed)?;
    Ok((features.select_rows(&idx)?, labels.select(&idx)?, idx))
}
