//! Threshold detector and OOD metrics with in-distribution as the positive
//! class: FPR at a target TPR, AUROC, and ID classification accuracy.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Labels, Logits, Scores};
use crate::scalar::Scalar;
use crate::scores::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Id,
    Ood,
}

/// `Ood` iff the score exceeds `lambda`; scores equal to `lambda` are ID.
pub fn detect<T: Scalar>(scores: &Scores<T>, lambda: T) -> Result<Vec<Decision>> {
    if !lambda.is_finite() {
        return Err(Error::Config(format!(
            "threshold must be finite, got {lambda}"
        )));
    }
    Ok(scores
        .values()
        .iter()
        .map(|&s| {
            if s > lambda {
                Decision::Ood
            } else {
                Decision::Id
            }
        })
        .collect())
}

fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

/// Probability that a random ID sample has lower uncertainty than a random
/// OOD sample, ties counting one half.
///
/// Computed from average ranks in O(n log n). Ranks are kept doubled so
/// the Mann–Whitney statistic stays an integer and the single final
/// division matches the pairwise definition bit for bit.
pub fn auroc<T: Scalar>(id_scores: &Scores<T>, ood_scores: &Scores<T>) -> Result<f64> {
    if id_scores.is_empty() {
        return Err(Error::Empty("ID scores"));
    }
    if ood_scores.is_empty() {
        return Err(Error::Empty("OOD scores"));
    }
    let mut all: Vec<(T, bool)> = id_scores
        .values()
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.values().iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| total_cmp(&a.0, &b.0));

    // Sum over OOD samples of twice their 1-based average rank.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let doubled_rank = (i + 1 + j) as u128;
        let ood_in_group = all[i..j].iter().filter(|e| e.1).count() as u128;
        doubled_rank_sum += doubled_rank * ood_in_group;
        i = j;
    }
    let n_ood = ood_scores.len() as u128;
    let n_id = id_scores.len() as u128;
    let doubled_u = doubled_rank_sum - n_ood * (n_ood + 1);
    Ok(doubled_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Fraction of OOD samples accepted as ID at the smallest observed ID score
/// `λ` for which at least `tpr_target` of ID samples satisfy `S ≤ λ`.
pub fn fpr_at_tpr<T: Scalar>(
    id_scores: &Scores<T>,
    ood_scores: &Scores<T>,
    tpr_target: f64,
) -> Result<f64> {
    if id_scores.is_empty() {
        return Err(Error::Empty("ID scores"));
    }
    if ood_scores.is_empty() {
        return Err(Error::Empty("OOD scores"));
    }
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::Config(format!(
            "TPR target must be in (0, 1], got {tpr_target}"
        )));
    }
    let lambda = tpr_threshold(id_scores, tpr_target);
    let accepted = ood_scores.values().iter().filter(|&&s| s <= lambda).count();
    Ok(accepted as f64 / ood_scores.len() as f64)
}

/// The threshold used by [`fpr_at_tpr`].
pub fn tpr_threshold<T: Scalar>(id_scores: &Scores<T>, tpr_target: f64) -> T {
    let mut id = id_scores.values().to_vec();
    id.sort_by(total_cmp);
    let n = id.len() as f64;
    let mut k = 0;
    while k < id.len() {
        // extend to the end of the tie group
        let mut end = k + 1;
        while end < id.len() && id[end] == id[k] {
            end += 1;
        }
        if end as f64 / n >= tpr_target {
            return id[k];
        }
        k = end;
    }
    id[id.len() - 1]
}

/// Fraction of rows whose arg-max logit (lowest index on ties) equals the label.
pub fn id_accuracy<T: Scalar>(logits: &Logits<T>, labels: &Labels) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.num_classes() != labels.num_classes() {
        return Err(Error::Shape(format!(
            "logits have {} classes, labels span {}",
            logits.num_classes(),
            labels.num_classes()
        )));
    }
    let correct = logits
        .iter_rows()
        .zip(labels.values())
        .filter(|(z, &y)| argmax(z).0 == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fpr95: f64,
    pub auroc: f64,
}

/// Per-method, per-OOD-set metrics plus cross-set averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: BTreeMap<String, BTreeMap<String, Metrics>>,
    pub averages: BTreeMap<String, Metrics>,
    pub id_accuracy: Option<f64>,
}

/// Score vectors for the ID test set and every OOD set, keyed by method.
#[derive(Debug, Clone, Default)]
pub struct SuiteScores {
    pub id: BTreeMap<String, Scores<f64>>,
    /// Keyed by `(method, ood set)`.
    pub ood: BTreeMap<(String, String), Scores<f64>>,
}

impl SuiteScores {
    pub fn insert_id(&mut self, method: &str, scores: Scores<f64>) {
        self.id.insert(method.to_string(), scores);
    }

    pub fn insert_ood(&mut self, method: &str, set: &str, scores: Scores<f64>) {
        self.ood
            .insert((method.to_string(), set.to_string()), scores);
    }
}

pub const TPR_TARGET: f64 = 0.95;

/// Evaluates every `(method, ood set)` cell; a missing score vector is an
/// error naming the cell.
pub fn evaluate_suite(
    methods: &[String],
    ood_sets: &[String],
    scores: &SuiteScores,
    id_accuracy: Option<f64>,
) -> Result<EvalReport> {
    if methods.is_empty() || ood_sets.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    let mut report = EvalReport {
        methods: BTreeMap::new(),
        averages: BTreeMap::new(),
        id_accuracy,
    };
    for method in methods {
        let id = scores
            .id
            .get(method)
            .ok_or_else(|| Error::MissingScores(format!("method {method}, ID test set")))?;
        let mut per_set = BTreeMap::new();
        for set in ood_sets {
            let ood = scores
                .ood
                .get(&(method.clone(), set.clone()))
                .ok_or_else(|| Error::MissingScores(format!("method {method}, OOD set {set}")))?;
            let m = Metrics {
                fpr95: fpr_at_tpr(id, ood, TPR_TARGET)?,
                auroc: auroc(id, ood)?,
            };
            per_set.insert(set.clone(), m);
        }
        let n = per_set.len() as f64;
        let avg = Metrics {
            fpr95: per_set.values().map(|m| m.fpr95).sum::<f64>() / n,
            auroc: per_set.values().map(|m| m.auroc).sum::<f64>() / n,
        };
        report.averages.insert(method.clone(), avg);
        report.methods.insert(method.clone(), per_set);
    }
    Ok(report)
}

impl EvalReport {
    /// Flat CSV: `method,ood_set,fpr95,auroc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,ood_set,fpr95,auroc\n");
        for (method, sets) in &self.methods {
            for (set, m) in sets {
                let _ = writeln!(out, "{method},{set},{},{}", m.fpr95, m.auroc);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Scores<f64> {
        Scores::new(v.to_vec()).unwrap()
    }

    #[test]
    fn detect_boundary_is_id() {
        assert_eq!(
            detect(&s(&[0.2, 0.8]), 0.5).unwrap(),
            vec![Decision::Id, Decision::Ood]
        );
        assert_eq!(detect(&s(&[0.5]), 0.5).unwrap(), vec![Decision::Id]);
        assert!(detect(&s(&[1.0, 2.0]), 1e300)
            .unwrap()
            .iter()
            .all(|d| *d == Decision::Id));
        assert!(detect(&s(&[1.0]), f64::NAN).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&s(&[0.1, 0.2]), &s(&[0.3, 0.4])).unwrap(), 1.0);
        assert_eq!(auroc(&s(&[0.5, 0.5]), &s(&[0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(auroc(&s(&[0.1, 0.3]), &s(&[0.2, 0.4])).unwrap(), 0.75);
        assert!(auroc(&s(&[]), &s(&[1.0])).is_err());
    }

    #[test]
    fn fpr_examples() {
        let id: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(
            fpr_at_tpr(&s(&id), &s(&[10.0, 18.0, 19.5, 25.0]), 0.95).unwrap(),
            0.5
        );
        assert_eq!(tpr_threshold(&s(&id), 0.95), 19.0);
        assert_eq!(fpr_at_tpr(&s(&id), &s(&[21.0, 30.0]), 0.95).unwrap(), 0.0);
        assert_eq!(fpr_at_tpr(&s(&id), &s(&[-1.0, 0.0]), 0.95).unwrap(), 1.0);
        assert!(fpr_at_tpr(&s(&id), &s(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let l = Logits::from_rows(&[vec![2.0f64, 1.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(
            id_accuracy(&l, &Labels::new(vec![0, 1], 2).unwrap()).unwrap(),
            1.0
        );
        let tie = Logits::from_rows(&[vec![1.0f64, 1.0]]).unwrap();
        assert_eq!(
            id_accuracy(&tie, &Labels::new(vec![1], 2).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn suite_averages_and_missing_cells() {
        let mut scores = SuiteScores::default();
        scores.insert_id("msp", s(&[0.1, 0.3]));
        scores.insert_ood("msp", "a", s(&[0.2, 0.4]));
        scores.insert_ood("msp", "b", s(&[0.5, 0.6]));
        let methods = vec!["msp".to_string()];
        let sets = vec!["a".to_string(), "b".to_string()];
        let r = evaluate_suite(&methods, &sets, &scores, Some(0.9)).unwrap();
        assert_eq!(r.averages["msp"].auroc, (0.75 + 1.0) / 2.0);
        let one = evaluate_suite(&methods, &sets[..1], &scores, None).unwrap();
        assert_eq!(one.averages["msp"], one.methods["msp"]["a"]);

        let err = evaluate_suite(&["knn".to_string()], &sets, &scores, None).unwrap_err();
        assert!(err.to_string().contains("knn"));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("method,ood_set,fpr95,auroc\nmsp,a,"));
    }
}
