//! Logit-based uncertainty scores with temperature scaling.
//!
//! Every score is oriented so that larger means more likely OOD:
//!
//! | method     | value                                   |
//! |------------|-----------------------------------------|
//! | energy     | `-log Σ exp(z_j / T)`                   |
//! | entropy    | `-Σ p_i ln p_i`,  `p = softmax(z / T)`  |
//! | variance   | `-(1/K) Σ (p_i - 1/K)²`                 |
//! | msp        | `-max_i p_i`                            |
//! | maxlogit   | `-max_i z_i / T`                        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Logits, Scores};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Energy,
    Entropy,
    Variance,
    Msp,
    #[serde(rename = "maxlogit")]
    MaxLogit,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 5] = [
        ScoreMethod::Energy,
        ScoreMethod::Entropy,
        ScoreMethod::Variance,
        ScoreMethod::Msp,
        ScoreMethod::MaxLogit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::Energy => "energy",
            ScoreMethod::Entropy => "entropy",
            ScoreMethod::Variance => "variance",
            ScoreMethod::Msp => "msp",
            ScoreMethod::MaxLogit => "maxlogit",
        }
    }

    pub fn score<T: Scalar>(self, z: &[T], temperature: T) -> Result<T> {
        match self {
            ScoreMethod::Energy => energy_score(z, temperature),
            ScoreMethod::Entropy => entropy_score(z, temperature),
            ScoreMethod::Variance => variance_score(z, temperature),
            ScoreMethod::Msp => msp_score(z, temperature),
            ScoreMethod::MaxLogit => maxlogit_score(z, temperature),
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown score method {s:?}; valid methods: energy, entropy, variance, msp, maxlogit"
                ))
            })
    }
}

fn check_row<T: Scalar>(z: &[T], temperature: T) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::Shape(format!(
            "logit row needs at least 2 classes, got {}",
            z.len()
        )));
    }
    if !(temperature.is_finite() && temperature > T::zero()) {
        return Err(Error::Config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if let Some(col) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col });
    }
    Ok(())
}

/// Shared pieces of a stable softmax over `z / T`.
struct Scaled<T> {
    /// `z_i / T - max_j z_j / T`, all `<= 0`.
    shifted: Vec<T>,
    max: T,
    /// `Σ exp(shifted)`.
    norm: T,
    /// `ln Σ exp(shifted)`, evaluated as `ln_1p` of the non-max terms.
    log_norm: T,
}

impl<T: Scalar> Scaled<T> {
    fn new(z: &[T], temperature: T) -> Result<Self> {
        check_row(z, temperature)?;
        let scaled: Vec<T> = z.iter().map(|&v| v / temperature).collect();
        let (argmax, max) = argmax(&scaled);
        let shifted: Vec<T> = scaled.iter().map(|&v| v - max).collect();
        let rest: T = shifted
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != argmax)
            .map(|(_, &s)| s.exp())
            .sum();
        Ok(Self {
            shifted,
            max,
            norm: T::one() + rest,
            log_norm: rest.ln_1p(),
        })
    }

    fn log_probs(&self) -> impl Iterator<Item = T> + '_ {
        self.shifted.iter().map(move |&s| s - self.log_norm)
    }

    fn probs(&self) -> Vec<T> {
        self.shifted.iter().map(|&s| s.exp() / self.norm).collect()
    }
}

/// First index of the maximum (lowest index wins ties).
pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> (usize, T) {
    let mut best = (0, xs[0]);
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Temperature-scaled softmax, computed with max subtraction.
pub fn softmax<T: Scalar>(z: &[T], temperature: T) -> Result<Vec<T>> {
    Ok(Scaled::new(z, temperature)?.probs())
}

/// `log Σ exp(z_j / T)`.
pub fn log_sum_exp<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    let s = Scaled::new(z, temperature)?;
    Ok(s.max + s.log_norm)
}

pub fn energy_score<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    Ok(-log_sum_exp(z, temperature)?)
}

/// Shannon entropy (nats) of the softmax; `0 ln 0` contributes nothing.
pub fn entropy_score<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    let s = Scaled::new(z, temperature)?;
    Ok(s.log_probs()
        .map(|lp| {
            let p = lp.exp();
            if p == T::zero() {
                T::zero()
            } else {
                -p * lp
            }
        })
        .sum())
}

/// Negative population variance of the softmax probabilities.
pub fn variance_score<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    let p = softmax(z, temperature)?;
    let k: T = cast(p.len());
    let mean = T::one() / k;
    let ss: T = p.iter().map(|&pi| (pi - mean) * (pi - mean)).sum();
    Ok(-(ss / k))
}

pub fn msp_score<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    let s = Scaled::new(z, temperature)?;
    Ok(-(-s.log_norm).exp())
}

pub fn maxlogit_score<T: Scalar>(z: &[T], temperature: T) -> Result<T> {
    check_row(z, temperature)?;
    let (_, max) = argmax(z);
    Ok(-(max / temperature))
}

/// Applies `method` to every row; errors carry the offending row index.
pub fn score_batch<S: Scalar, T: Scalar>(
    logits: &Logits<S>,
    method: ScoreMethod,
    temperature: T,
) -> Result<Scores<T>> {
    let mut row_buf: Vec<T> = Vec::with_capacity(logits.num_classes());
    let mut out = Vec::with_capacity(logits.rows());
    for (i, row) in logits.iter_rows().enumerate() {
        row_buf.clear();
        row_buf.extend(row.iter().map(|&v| cast::<T, S>(v)));
        let score = method.score(&row_buf, temperature).map_err(|e| match e {
            Error::NonFinite { col, .. } => Error::NonFinite { row: i, col },
            other => other.context(format!("row {i}")),
        })?;
        out.push(score);
    }
    Scores::new(out)
}
