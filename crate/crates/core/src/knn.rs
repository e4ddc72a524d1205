//! Exact cosine-similarity nearest-neighbour scoring against a training
//! feature bank, plus the three ways of combining two feature streams.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Features, Scores, MIN_ROW_NORM};
use crate::scalar::{cast, Scalar};

/// L2-normalised copy of the training features. The original row norms
/// are kept so raw concatenations can be reconstructed for fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Index<T> {
    unit_rows: Vec<T>,
    norms: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Index<T> {
    pub fn build<S: Scalar>(train: &Features<S>) -> Result<Self> {
        let dim = train.dim();
        let mut unit_rows = Vec::with_capacity(train.rows() * dim);
        let mut norms = Vec::with_capacity(train.rows());
        for (row, r) in train.iter_rows().enumerate() {
            let norm = norm_of::<S, T>(r);
            if cast::<f64, T>(norm) <= MIN_ROW_NORM {
                return Err(Error::ZeroNormRow {
                    row,
                    norm: cast(norm),
                });
            }
            unit_rows.extend(r.iter().map(|&x| cast::<T, S>(x) / norm));
            norms.push(norm);
        }
        Ok(Self {
            unit_rows,
            norms,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unit_row(&self, j: usize) -> &[T] {
        &self.unit_rows[j * self.dim..(j + 1) * self.dim]
    }

    /// L2 norm of training row `j` before normalisation.
    pub fn raw_norm(&self, j: usize) -> T {
        self.norms[j]
    }

    /// Cosine similarity of `query` with every training row, plus the
    /// query's own norm.
    pub fn similarities<S: Scalar>(&self, query: &[S]) -> Result<(Vec<T>, T)> {
        if query.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        if let Some(col) = query.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        let norm = norm_of::<S, T>(query);
        if cast::<f64, T>(norm) <= MIN_ROW_NORM {
            return Err(Error::ZeroNormRow {
                row: 0,
                norm: cast(norm),
            });
        }
        let q: Vec<T> = query.iter().map(|&x| cast::<T, S>(x) / norm).collect();
        let sims = self
            .unit_rows
            .chunks_exact(self.dim)
            .map(|t| dot(&q, t))
            .collect();
        Ok((sims, norm))
    }
}

fn norm_of<S: Scalar, T: Scalar>(row: &[S]) -> T {
    row.iter()
        .map(|&x| {
            let v: T = cast(x);
            v * v
        })
        .sum::<T>()
        .sqrt()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {n} training rows"
        )));
    }
    Ok(())
}

/// k-th largest value (1-based). Sorting is descending and stable by
/// training-row index.
pub fn kth_largest<T: Scalar>(values: &[T], k: usize) -> T {
    if k == 1 {
        return values.iter().copied().fold(T::neg_infinity(), T::max);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("finite similarities")
    });
    values[order[k - 1]]
}

/// Negative k-th largest cosine similarity between `query` and the bank.
pub fn knn_score<T: Scalar, S: Scalar>(index: &Index<T>, query: &[S], k: usize) -> Result<T> {
    check_k(k, index.len())?;
    let (sims, _) = index.similarities(query)?;
    Ok(-kth_largest(&sims, k))
}

pub fn knn_score_batch<T: Scalar, S: Scalar>(
    index: &Index<T>,
    queries: &Features<S>,
    k: usize,
) -> Result<Scores<T>> {
    check_k(k, index.len())?;
    let scores = queries
        .iter_rows()
        .enumerate()
        .map(|(i, q)| knn_score(index, q, k).map_err(|e| e.context(format!("query row {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Scores::new(scores)
}

/// How two paired feature streams are combined for k-NN scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusedVariant {
    /// Concatenate raw features, then normalise the concatenation.
    ConcatThenNormalize,
    /// Normalise each stream, then concatenate.
    NormalizeThenConcat,
    /// Score each normalised stream separately and add the two scores.
    ScoreSum,
}

impl FusedVariant {
    pub const ALL: [FusedVariant; 3] = [
        FusedVariant::ConcatThenNormalize,
        FusedVariant::NormalizeThenConcat,
        FusedVariant::ScoreSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusedVariant::ConcatThenNormalize => "concat-then-normalize",
            FusedVariant::NormalizeThenConcat => "normalize-then-concat",
            FusedVariant::ScoreSum => "score-sum",
        }
    }
}

impl fmt::Display for FusedVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusedVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusedVariant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown fused variant {s:?}; valid variants: concat-then-normalize, normalize-then-concat, score-sum"
            ))
        })
    }
}

/// Fused k-NN score for one sample described by both streams.
///
/// Both indices must hold the same training samples in the same order.
pub fn fused_knn_score<T: Scalar, S: Scalar>(
    index_o: &Index<T>,
    index_ft: &Index<T>,
    q_o: &[S],
    q_ft: &[S],
    variant: FusedVariant,
    k: usize,
) -> Result<T> {
    if index_o.len() != index_ft.len() {
        return Err(Error::Shape(format!(
            "unpaired indices: {} original rows vs {} fine-tuned rows",
            index_o.len(),
            index_ft.len()
        )));
    }
    check_k(k, index_o.len())?;
    let (s_o, n_o) = index_o.similarities(q_o)?;
    let (s_ft, n_ft) = index_ft.similarities(q_ft)?;
    let two: T = cast(2.0);
    Ok(match variant {
        FusedVariant::ScoreSum => -kth_largest(&s_o, k) - kth_largest(&s_ft, k),
        FusedVariant::NormalizeThenConcat => {
            let fused: Vec<T> = s_o
                .iter()
                .zip(&s_ft)
                .map(|(&a, &b)| (a + b) / two)
                .collect();
            -kth_largest(&fused, k)
        }
        FusedVariant::ConcatThenNormalize => {
            // cos([q_o, q_ft], [t_o, t_ft]) rebuilt from per-stream cosines and norms.
            let q_norm = (n_o * n_o + n_ft * n_ft).sqrt();
            let fused: Vec<T> = (0..index_o.len())
                .map(|j| {
                    let (t_o, t_ft) = (index_o.raw_norm(j), index_ft.raw_norm(j));
                    let t_norm = (t_o * t_o + t_ft * t_ft).sqrt();
                    (n_o * t_o * s_o[j] + n_ft * t_ft * s_ft[j]) / (q_norm * t_norm)
                })
                .collect();
            -kth_largest(&fused, k)
        }
    })
}

pub fn fused_knn_score_batch<T: Scalar, S: Scalar>(
    index_o: &Index<T>,
    index_ft: &Index<T>,
    q_o: &Features<S>,
    q_ft: &Features<S>,
    variant: FusedVariant,
    k: usize,
) -> Result<Scores<T>> {
    if q_o.rows() != q_ft.rows() {
        return Err(Error::Shape(format!(
            "unpaired queries: {} original rows vs {} fine-tuned rows",
            q_o.rows(),
            q_ft.rows()
        )));
    }
    let scores = q_o
        .iter_rows()
        .zip(q_ft.iter_rows())
        .enumerate()
        .map(|(i, (a, b))| {
            fused_knn_score(index_o, index_ft, a, b, variant, k)
                .map_err(|e| e.context(format!("query row {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Scores::new(scores)
}

/// A hand-built instance on which two fusion variants rank the same pair
/// of queries in opposite order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceWitness {
    pub train_orig: Vec<Vec<f64>>,
    pub train_ft: Vec<Vec<f64>>,
    pub queries_orig: Vec<Vec<f64>>,
    pub queries_ft: Vec<Vec<f64>>,
    /// Scores of the two queries under normalize-then-concat.
    pub normalize_then_concat: [f64; 2],
    /// Scores of the two queries under score-sum.
    pub score_sum: [f64; 2],
    /// True when the two variants order the queries differently.
    pub orderings_differ: bool,
}

/// Two training rows on orthogonal axes in both streams. Query A matches
/// row 0 in one stream and row 1 in the other; query B sits at 45 degrees
/// to both rows in both streams. Per-row averaging penalises A's split
/// match, while summing per-stream maxima rewards it.
pub fn divergence_witness() -> Result<DivergenceWitness> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let train_orig = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let train_ft = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let queries_orig = vec![vec![1.0, 0.0], vec![h, h]];
    let queries_ft = vec![vec![0.0, 1.0], vec![h, h]];

    let index_o = Index::<f64>::build(&Features::from_rows(&train_orig)?)?;
    let index_ft = Index::<f64>::build(&Features::from_rows(&train_ft)?)?;
    let score = |variant, q: usize| {
        fused_knn_score(
            &index_o,
            &index_ft,
            &queries_orig[q],
            &queries_ft[q],
            variant,
            1,
        )
    };
    let ntc = [
        score(FusedVariant::NormalizeThenConcat, 0)?,
        score(FusedVariant::NormalizeThenConcat, 1)?,
    ];
    let sum = [
        score(FusedVariant::ScoreSum, 0)?,
        score(FusedVariant::ScoreSum, 1)?,
    ];
    let orderings_differ = (ntc[0] - ntc[1]).signum() != (sum[0] - sum[1]).signum();
    Ok(DivergenceWitness {
        train_orig,
        train_ft,
        queries_orig,
        queries_ft,
        normalize_then_concat: ntc,
        score_sum: sum,
        orderings_differ,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(rows: &[Vec<f64>]) -> Index<f64> {
        Index::build(&Features::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn build_normalises_rows() {
        let idx = index(&[vec![3.0, 4.0]]);
        assert_eq!(idx.unit_row(0), &[0.6, 0.8]);
        assert_eq!(idx.raw_norm(0), 5.0);
        let idx = index(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]);
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn self_query_and_orthogonal_query() {
        let idx = index(&[vec![1.0, 2.0, 0.0], vec![-2.0, 1.0, 0.0]]);
        assert!((knn_score(&idx, &[1.0, 2.0, 0.0], 1).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(knn_score(&idx, &[0.0, 0.0, 5.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_case() {
        let idx = index(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        let s = knn_score(&idx, &[1.0, 0.0], 1).unwrap();
        assert!((s + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // second-nearest is the orthogonal row
        assert_eq!(knn_score(&idx, &[1.0, 0.0], 2).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let idx = index(&[vec![1.0, 0.0]]);
        assert!(knn_score(&idx, &[1.0, 0.0, 0.0], 1).is_err());
        assert!(knn_score(&idx, &[1.0, 0.0], 2).is_err());
        assert!(knn_score(&idx, &[0.0, 0.0], 1).is_err());
        let other = index(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(fused_knn_score(
            &idx,
            &other,
            &[1.0, 0.0],
            &[1.0, 0.0],
            FusedVariant::ScoreSum,
            1
        )
        .is_err());
    }

    #[test]
    fn fused_self_match() {
        let o = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let ft = vec![vec![0.5, 0.5, 2.0], vec![-1.0, 4.0, 0.0]];
        let (io, ift) = (index(&o), index(&ft));
        for j in 0..2 {
            for v in FusedVariant::ALL {
                let s = fused_knn_score(&io, &ift, &o[j], &ft[j], v, 1).unwrap();
                let expected = if v == FusedVariant::ScoreSum {
                    -2.0
                } else {
                    -1.0
                };
                assert!((s - expected).abs() < 1e-12, "{v}: {s}");
            }
        }
    }

    #[test]
    fn normalize_then_concat_averages() {
        // s_o = 0.6, s_ft = 1.0 against the single training pair
        let io = index(&[vec![0.6, 0.8]]);
        let ift = index(&[vec![0.0, 1.0]]);
        let s = fused_knn_score(
            &io,
            &ift,
            &[1.0, 0.0],
            &[0.0, 1.0],
            FusedVariant::NormalizeThenConcat,
            1,
        )
        .unwrap();
        assert!((s + 0.8).abs() < 1e-12);
        let s = fused_knn_score(
            &io,
            &ift,
            &[1.0, 0.0],
            &[0.0, 1.0],
            FusedVariant::ScoreSum,
            1,
        )
        .unwrap();
        assert!((s + 1.6).abs() < 1e-12);
    }

    #[test]
    fn witness_orders_differ() {
        let w = divergence_witness().unwrap();
        assert!(w.orderings_differ);
        assert!((w.normalize_then_concat[0] + 0.5).abs() < 1e-12);
        assert!((w.score_sum[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn parse_variant() {
        assert_eq!(
            "score-sum".parse::<FusedVariant>().unwrap(),
            FusedVariant::ScoreSum
        );
        assert!("sum".parse::<FusedVariant>().is_err());
    }
}
