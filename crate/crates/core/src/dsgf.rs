//! Feature fusion and the linear classification head retrained on fused
//! features: concatenation, forward pass, softmax cross-entropy, its
//! analytic gradient, and a deterministic minibatch SGD trainer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bundle::{validate_bundle, DatasetBundle};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::matrix::{Features, Labels, Logits, Matrix};
use crate::rng::{shuffle, SplitMix64};
use crate::sample::{few_shot_subsample, Shots};
use crate::scalar::{cast, Scalar};
use crate::scores::log_sum_exp;

/// Row-wise concatenation `[f_o | f_ft]`.
pub fn fuse_features<T: Scalar>(f_o: &Features<T>, f_ft: &Features<T>) -> Result<Features<T>> {
    if f_o.rows() != f_ft.rows() {
        return Err(Error::Shape(format!(
            "cannot fuse {} original rows with {} fine-tuned rows",
            f_o.rows(),
            f_ft.rows()
        )));
    }
    let dim = f_o.dim() + f_ft.dim();
    let mut data = Vec::with_capacity(f_o.rows() * dim);
    for (a, b) in f_o.iter_rows().zip(f_ft.iter_rows()) {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    Features::from_vec(f_o.rows(), dim, data)
}

/// Fully-connected classifier `z = W x + b` with `W` of shape K×D.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    weights: Vec<T>,
    bias: Vec<T>,
    num_classes: usize,
    dim: usize,
}

impl<T: Scalar> Head<T> {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![T::zero(); num_classes * dim],
            bias: vec![T::zero(); num_classes],
            num_classes,
            dim,
        }
    }

    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias has {} entries, weights have {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        if weights
            .as_slice()
            .iter()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("head parameters must be finite".into()));
        }
        Ok(Self {
            num_classes: weights.rows(),
            dim: weights.cols(),
            weights: weights.into_vec(),
            bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> Matrix<T> {
        Matrix::from_vec(self.num_classes, self.dim, self.weights.clone())
            .expect("head shape is non-empty")
    }

    pub fn weight_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    fn logits_into(&self, x: &[T], out: &mut [T]) {
        for (c, z) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *z = self.bias[c] + w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    fn weight_sq_norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum()
    }
}

fn check_dim<T, S: Scalar>(head: &Head<T>, features: &Features<S>) -> Result<()> {
    if features.dim() != head.dim {
        return Err(Error::Shape(format!(
            "features have dimension {}, head expects {}",
            features.dim(),
            head.dim
        )));
    }
    Ok(())
}

fn check_labels<S: Scalar>(
    num_classes: usize,
    features: &Features<S>,
    labels: &Labels,
) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    if labels.num_classes() != num_classes {
        return Err(Error::Shape(format!(
            "labels span {} classes, head has {num_classes}",
            labels.num_classes()
        )));
    }
    Ok(())
}

pub fn head_forward<S: Scalar, T: Scalar>(
    head: &Head<T>,
    features: &Features<S>,
) -> Result<Logits<T>> {
    check_dim(head, features)?;
    let mut x = vec![T::zero(); head.dim];
    let mut data = vec![T::zero(); features.rows() * head.num_classes];
    for (row, out) in features
        .iter_rows()
        .zip(data.chunks_exact_mut(head.num_classes))
    {
        for (xi, &v) in x.iter_mut().zip(row) {
            *xi = cast(v);
        }
        head.logits_into(&x, out);
    }
    Logits::from_vec(features.rows(), head.num_classes, data)
}

/// Mean of `-log softmax(z)_y` over rows.
pub fn cross_entropy<T: Scalar>(logits: &Logits<T>, labels: &Labels) -> Result<T> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let mut total = T::zero();
    for (row, (z, &y)) in logits.iter_rows().zip(labels.values()).enumerate() {
        if y >= z.len() {
            return Err(Error::LabelOutOfRange {
                row,
                label: y as i64,
                num_classes: z.len(),
            });
        }
        total += log_sum_exp(z, T::one())? - z[y];
    }
    Ok(total / cast(logits.rows()))
}

/// Cross-entropy plus `(λ/2)·‖W‖²`, the objective whose gradient
/// [`head_gradient`] returns.
pub fn head_objective<S: Scalar, T: Scalar>(
    head: &Head<T>,
    features: &Features<S>,
    labels: &Labels,
    weight_decay: T,
) -> Result<T> {
    check_labels(head.num_classes, features, labels)?;
    let ce = cross_entropy(&head_forward(head, features)?, labels)?;
    Ok(ce + weight_decay * head.weight_sq_norm() / cast(2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient<T> {
    /// K×D, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Accumulates `(1/n)(P - Y)ᵀX` and `(1/n)Σ(P - Y)` over the given rows;
/// returns the mean cross-entropy of the batch alongside.
fn accumulate_gradient<'a, T: Scalar>(
    head: &Head<T>,
    rows: impl ExactSizeIterator<Item = (&'a [T], usize)>,
    grad: &mut HeadGradient<T>,
    scratch: &mut [T],
) -> T {
    grad.weights.iter_mut().for_each(|g| *g = T::zero());
    grad.bias.iter_mut().for_each(|g| *g = T::zero());
    let n: T = cast(rows.len());
    let mut loss = T::zero();
    for (x, y) in rows {
        head.logits_into(x, scratch);
        let (_, max) = crate::scores::argmax(scratch);
        let shifted_target = scratch[y] - max;
        let mut sum = T::zero();
        for z in scratch.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        loss += sum.ln() - shifted_target;
        for (c, p) in scratch.iter_mut().enumerate() {
            let mut r = *p / sum;
            if c == y {
                r -= T::one();
            }
            grad.bias[c] += r;
            let g = &mut grad.weights[c * head.dim..(c + 1) * head.dim];
            for (gi, &xi) in g.iter_mut().zip(x) {
                *gi += r * xi;
            }
        }
    }
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias.iter_mut().for_each(|g| *g /= n);
    loss / n
}

/// Analytic gradient of [`head_objective`] with respect to `W` and `b`.
pub fn head_gradient<S: Scalar, T: Scalar>(
    head: &Head<T>,
    features: &Features<S>,
    labels: &Labels,
    weight_decay: T,
) -> Result<HeadGradient<T>> {
    check_dim(head, features)?;
    check_labels(head.num_classes, features, labels)?;
    let rows: Vec<Vec<T>> = features
        .iter_rows()
        .map(|r| r.iter().map(|&v| cast(v)).collect())
        .collect();
    let mut grad = HeadGradient {
        weights: vec![T::zero(); head.weights.len()],
        bias: vec![T::zero(); head.num_classes],
    };
    let mut scratch = vec![T::zero(); head.num_classes];
    let iter = rows
        .iter()
        .map(Vec::as_slice)
        .zip(labels.values().iter().copied());
    accumulate_gradient(head, iter, &mut grad, &mut scratch);
    for (g, &w) in grad.weights.iter_mut().zip(&head.weights) {
        *g += weight_decay * w;
    }
    Ok(grad)
}

/// Optimiser settings for retraining the head. Defaults: 20 epochs,
/// batch 32, lr 0.1, no weight decay, no momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.1,
            weight_decay: 0.0,
            momentum: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// ID datasets with published head-retraining settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetDataset {
    Imagenet1k,
    Food101,
    OxfordPets,
    Cifar100,
}

/// Fine-tuning paradigm of the model that produced the ft stream.
/// Linear probing has no retraining stage and so has no preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    Fft,
    Vat,
    Vpt,
}

/// Head-retraining learning rate and weight decay for one
/// (dataset, paradigm) pair, resolved per shot setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Preset {
    pub dataset: PresetDataset,
    pub paradigm: Paradigm,
}

type PerShot = [f64; 5];

const fn flat(v: f64) -> PerShot {
    [v; 5]
}

impl Stage2Preset {
    pub const DATASETS: [(&'static str, PresetDataset); 4] = [
        ("imagenet1k", PresetDataset::Imagenet1k),
        ("food101", PresetDataset::Food101),
        ("oxford-pets", PresetDataset::OxfordPets),
        ("cifar100", PresetDataset::Cifar100),
    ];
    pub const PARADIGMS: [(&'static str, Paradigm); 3] = [
        ("fft", Paradigm::Fft),
        ("vat", Paradigm::Vat),
        ("vpt", Paradigm::Vpt),
    ];

    /// Learning rates and weight decays for 2, 4, 8, 16 and all shots.
    fn table(self) -> (PerShot, PerShot) {
        use Paradigm::*;
        use PresetDataset::*;
        match (self.dataset, self.paradigm) {
            (Imagenet1k, Fft) => ([0.01, 0.01, 0.1, 0.1, 0.001], [1e-4, 1e-4, 1e-4, 0.0, 0.0]),
            (Imagenet1k, Vpt) => ([0.1, 0.1, 0.1, 0.1, 0.01], [1e-3, 1e-3, 1e-3, 1e-3, 0.0]),
            (Food101, Vpt) => (flat(0.1), [0.01, 0.01, 0.01, 0.01, 0.001]),
            (OxfordPets, Vpt) => (flat(0.1), [0.1, 0.1, 0.1, 0.1, 0.01]),
            (Cifar100, Vpt) => (flat(0.1), [0.1, 0.01, 0.01, 0.01, 0.01]),
            (_, Fft | Vat) => (flat(0.1), flat(0.0)),
        }
    }

    /// `base` with the learning rate, weight decay and batch size for
    /// `shots`. Only 2, 4, 8, 16 and all shots have settings.
    pub fn train_config(self, shots: Shots, base: &TrainConfig) -> Result<TrainConfig> {
        let column = match shots {
            Shots::Count(2) => 0,
            Shots::Count(4) => 1,
            Shots::Count(8) => 2,
            Shots::Count(16) => 3,
            Shots::All => 4,
            Shots::Count(m) => {
                return Err(Error::Config(format!(
                    "preset {self} has settings for 2, 4, 8, 16 and all shots, not {m}"
                )))
            }
        };
        let (lr, wd) = self.table();
        Ok(TrainConfig {
            learning_rate: lr[column],
            weight_decay: wd[column],
            batch_size: 32,
            ..base.clone()
        })
    }
}

impl fmt::Display for Stage2Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = Self::DATASETS.iter().find(|(_, d)| *d == self.dataset);
        let p = Self::PARADIGMS.iter().find(|(_, p)| *p == self.paradigm);
        write!(f, "{}:{}", d.map_or("?", |x| x.0), p.map_or("?", |x| x.0))
    }
}

impl FromStr for Stage2Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown preset {s:?}; expected DATASET:PARADIGM with DATASET one of imagenet1k, food101, oxford-pets, cifar100 and PARADIGM one of fft, vat, vpt"
            ))
        };
        let (d, p) = s.split_once(':').ok_or_else(bad)?;
        let dataset = Self::DATASETS
            .iter()
            .find(|(n, _)| *n == d)
            .ok_or_else(bad)?
            .1;
        let paradigm = Self::PARADIGMS
            .iter()
            .find(|(n, _)| *n == p)
            .ok_or_else(bad)?
            .1;
        Ok(Self { dataset, paradigm })
    }
}

/// Minibatch SGD from zero weights.
///
/// Each epoch shuffles row order with `SplitMix64(seed ^ epoch)`; the last
/// partial batch is used as-is. The update is `v ← μv + g`, `θ ← θ − lr·v`
/// with `g` including the coupled L2 term.
pub fn train_head<S: Scalar, T: Scalar>(
    features: &Features<S>,
    labels: &Labels,
    cfg: &TrainConfig,
) -> Result<Head<T>> {
    cfg.validate()?;
    let k = labels.num_classes();
    check_labels(k, features, labels)?;
    let d = features.dim();
    let rows: Vec<Vec<T>> = features
        .iter_rows()
        .map(|r| r.iter().map(|&v| cast(v)).collect())
        .collect();
    let (lr, wd, mu): (T, T, T) = (
        cast(cfg.learning_rate),
        cast(cfg.weight_decay),
        cast(cfg.momentum),
    );

    let mut head = Head::zeros(k, d);
    let mut grad = HeadGradient {
        weights: vec![T::zero(); k * d],
        bias: vec![T::zero(); k],
    };
    let mut vel = grad.clone();
    let mut scratch = vec![T::zero(); k];
    let mut order: Vec<usize> = (0..rows.len()).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        shuffle(&mut order, &mut SplitMix64::new(cfg.seed ^ epoch as u64));
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let iter = idx
                .iter()
                .map(|&i| (rows[i].as_slice(), labels.values()[i]));
            let loss = accumulate_gradient(&head, iter, &mut grad, &mut scratch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
            for ((w, v), &g) in head
                .weights
                .iter_mut()
                .zip(&mut vel.weights)
                .zip(&grad.weights)
            {
                *v = mu * *v + g + wd * *w;
                *w -= lr * *v;
            }
            for ((b, v), &g) in head.bias.iter_mut().zip(&mut vel.bias).zip(&grad.bias) {
                *v = mu * *v + g;
                *b -= lr * *v;
            }
            if head
                .weights
                .iter()
                .chain(&head.bias)
                .any(|p| !p.is_finite())
            {
                return Err(Error::Diverged { epoch, batch });
            }
        }
    }
    Ok(head)
}

/// Everything downstream evaluation needs from the fusion pipeline.
#[derive(Debug, Clone)]
pub struct DsgfOutput<T> {
    /// Training rows kept by the few-shot subsampler.
    pub train_indices: Vec<usize>,
    pub train_orig: Features<f32>,
    pub train_ft: Features<f32>,
    pub train_labels: Labels,
    pub train_fused: Features<f32>,
    pub head: Head<T>,
    pub id_fused: Features<f32>,
    pub id_logits: Logits<T>,
    /// `(name, fused features, fused logits)` per OOD set, in bundle order.
    pub ood: Vec<(String, Features<f32>, Logits<T>)>,
}

/// Subsample (paired across streams), fuse, train the head on the fused
/// training rows, and produce fused logits for the ID and OOD test sets.
pub fn dsgf_pipeline<T: Scalar>(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<DsgfOutput<T>> {
    cfg.validate()?;
    validate_bundle(bundle)?;
    let (train_orig, train_labels, train_indices) = few_shot_subsample(
        &bundle.train_orig,
        &bundle.train_labels,
        cfg.shots,
        cfg.seed,
    )?;
    let train_ft = bundle.train_ft.select_rows(&train_indices)?;
    let train_fused = fuse_features(&train_orig, &train_ft)?;
    let head: Head<T> = train_head(&train_fused, &train_labels, &cfg.train_for(cfg.shots)?)?;

    let id_fused = fuse_features(&bundle.id_test_orig, &bundle.id_test_ft)?;
    let id_logits = head_forward(&head, &id_fused)?;
    let ood = bundle
        .ood_sets
        .iter()
        .map(|s| {
            let fused = fuse_features(&s.orig, &s.ft)?;
            let logits = head_forward(&head, &fused)?;
            Ok((s.name.clone(), fused, logits))
        })
        .collect::<Result<_>>()?;
    Ok(DsgfOutput {
        train_indices,
        train_orig,
        train_ft,
        train_labels,
        train_fused,
        head,
        id_fused,
        id_logits,
        ood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn fuse_concatenates_rows() {
        let a = Features::from_rows(&[vec![1.0f32, 2.0]]).unwrap();
        let b = Features::from_rows(&[vec![3.0f32, 4.0]]).unwrap();
        let f = fuse_features(&a, &b).unwrap();
        assert_eq!(f.matrix().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.slice_cols(0, 2).unwrap(), a);
        let c = Features::from_rows(&[vec![1.0f32], vec![2.0]]).unwrap();
        assert!(fuse_features(&a, &c).is_err());
    }

    #[test]
    fn forward_examples() {
        let x = Features::from_rows(&[vec![3.0f64, 4.0]]).unwrap();
        let zero = Head::<f64>::zeros(3, 2);
        assert_eq!(
            head_forward(&zero, &x).unwrap().matrix().as_slice(),
            &[0.0; 3]
        );
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let id = Head::new(w, vec![0.0, 0.0]).unwrap();
        let x12 = Features::from_rows(&[vec![1.0f64, 2.0]]).unwrap();
        assert_eq!(
            head_forward(&id, &x12).unwrap().matrix().as_slice(),
            &[1.0, 2.0]
        );
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let h = Head::new(w, vec![0.5, 0.0]).unwrap();
        assert_eq!(
            head_forward(&h, &x).unwrap().matrix().as_slice(),
            &[3.5, 8.0]
        );
        assert!(head_forward(&h, &Features::from_rows(&[vec![1.0f64]]).unwrap()).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let l = Logits::from_rows(&[vec![0.0f64, 0.0]]).unwrap();
        let ce = cross_entropy(&l, &Labels::new(vec![0], 2).unwrap()).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
        let l = Logits::from_rows(&[vec![LN3, 0.0]]).unwrap();
        let ce = cross_entropy(&l, &Labels::new(vec![1], 2).unwrap()).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-15);
        let l = Logits::from_rows(&[vec![1000.0f64, 0.0]]).unwrap();
        assert_eq!(
            cross_entropy(&l, &Labels::new(vec![0], 2).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn gradient_hand_example() {
        let x = Features::from_rows(&[vec![1.0f64, 0.0]]).unwrap();
        let y = Labels::new(vec![0], 2).unwrap();
        let g = head_gradient(&Head::<f64>::zeros(2, 2), &x, &y, 0.0).unwrap();
        assert_eq!(g.weights, vec![-0.5, 0.0, 0.5, 0.0]);
        assert_eq!(g.bias, vec![-0.5, 0.5]);
    }

    #[test]
    fn gradient_at_fit_point_is_decay_only() {
        let w = Matrix::from_rows(&[vec![60.0f64, 0.0], vec![-60.0, 0.0]]).unwrap();
        let head = Head::new(w, vec![0.0, 0.0]).unwrap();
        let x = Features::from_rows(&[vec![1.0f64, 0.0], vec![-1.0, 0.0]]).unwrap();
        let y = Labels::new(vec![0, 1], 2).unwrap();
        let g = head_gradient(&head, &x, &y, 0.01).unwrap();
        for (gi, wi) in g.weights.iter().zip(head.weight_slice()) {
            assert!((gi - 0.01 * wi).abs() < 1e-12);
        }
        assert!(g.bias.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn zero_epochs_gives_zero_head() {
        let x = Features::from_rows(&[vec![1.0f32, 2.0], vec![2.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let y = Labels::new(vec![0, 1, 2], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let head: Head<f64> = train_head(&x, &y, &cfg).unwrap();
        assert_eq!(head, Head::zeros(3, 2));
        let loss = head_objective(&head, &x, &y, 0.0).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn diverging_training_is_reported() {
        let x = Features::from_rows(&[vec![1e30f32, 1.0], vec![-1e30, 1.0]]).unwrap();
        let y = Labels::new(vec![0, 1], 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e30,
            ..TrainConfig::default()
        };
        let err = train_head::<f32, f32>(&x, &y, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn invalid_config_rejected() {
        let x = Features::from_rows(&[vec![1.0f32, 2.0]]).unwrap();
        let y = Labels::new(vec![0], 2).unwrap();
        for cfg in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
        ] {
            assert!(train_head::<f32, f64>(&x, &y, &cfg).is_err());
        }
    }

    #[test]
    fn presets_resolve_per_shot() {
        let base = TrainConfig {
            batch_size: 8,
            epochs: 3,
            ..TrainConfig::default()
        };
        let p: Stage2Preset = "imagenet1k:fft".parse().unwrap();
        let lr: Vec<f64> = [2, 4, 8, 16]
            .map(Shots::Count)
            .into_iter()
            .chain([Shots::All])
            .map(|m| p.train_config(m, &base).unwrap().learning_rate)
            .collect();
        assert_eq!(lr, [0.01, 0.01, 0.1, 0.1, 0.001]);
        let all = p.train_config(Shots::All, &base).unwrap();
        assert_eq!((all.weight_decay, all.batch_size, all.epochs), (0.0, 32, 3));

        let vpt: Stage2Preset = "cifar100:vpt".parse().unwrap();
        let two = vpt.train_config(Shots::Count(2), &base).unwrap();
        assert_eq!((two.learning_rate, two.weight_decay), (0.1, 0.1));
        let vat: Stage2Preset = "oxford-pets:vat".parse().unwrap();
        let four = vat.train_config(Shots::Count(4), &base).unwrap();
        assert_eq!((four.learning_rate, four.weight_decay), (0.1, 0.0));
    }

    #[test]
    fn presets_reject_unlisted_inputs() {
        let p: Stage2Preset = "food101:vpt".parse().unwrap();
        assert_eq!(p.to_string(), "food101:vpt");
        assert!(p
            .train_config(Shots::Count(3), &TrainConfig::default())
            .is_err());
        for bad in ["food101", "food101:lpt", "mnist:fft", ":"] {
            assert!(bad.parse::<Stage2Preset>().is_err(), "{bad}");
        }
    }
}
