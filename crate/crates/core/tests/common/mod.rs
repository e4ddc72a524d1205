//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the library code it is used to check.

#![allow(dead_code)]

use fewshot_ood::rng::SplitMix64;

/// O(n·m) AUROC: each (ID, OOD) pair scores 2 if the ID sample is less
/// uncertain, 1 on a tie. One final division.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice: u128 = 0;
    for &a in id {
        for &b in ood {
            if a < b {
                twice += 2;
            } else if a == b {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// Tries every observed score as the threshold, smallest first, and
/// reports the OOD acceptance rate at the first one reaching the TPR target.
pub fn scanned_fpr(id: &[f64], ood: &[f64], target: f64) -> f64 {
    let mut candidates: Vec<f64> = id.iter().chain(ood).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for lambda in candidates {
        let tpr = id.iter().filter(|&&s| s <= lambda).count() as f64 / id.len() as f64;
        if tpr >= target {
            return ood.iter().filter(|&&s| s <= lambda).count() as f64 / ood.len() as f64;
        }
    }
    unreachable!("the largest score always reaches any target <= 1")
}

/// Score vectors drawn from a small integer alphabet so ties are common.
pub fn tied_instance(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(seed);
    let n_id = 1 + (rng.next_u64() % 200) as usize;
    let n_ood = 1 + (rng.next_u64() % 200) as usize;
    let levels = 2 + rng.next_u64() % 30;
    let offset = (rng.next_u64() % 5) as f64;
    let id = (0..n_id)
        .map(|_| (rng.next_u64() % levels) as f64)
        .collect();
    let ood = (0..n_ood)
        .map(|_| (rng.next_u64() % levels) as f64 + offset)
        .collect();
    (id, ood)
}

pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn unit(a: &[f64]) -> Vec<f64> {
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().map(|x| x / n).collect()
}

/// Two unit-variance Gaussian classes centred at (-3, 0) and (3, 0),
/// `per_class` rows each, class 0 first.
pub fn two_gaussians(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = SplitMix64::new(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (class, mean) in [(0usize, -3.0), (1, 3.0)] {
        for _ in 0..per_class {
            let x = mean + rng.next_normal();
            let y = rng.next_normal();
            rows.push(vec![x, y]);
            labels.push(class);
        }
    }
    (rows, labels)
}

/// `|a - b| / |b|`, or `|a|` when the reference is exactly zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}
