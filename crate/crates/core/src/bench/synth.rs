//! Seeded two-stream Gaussian fixture.
//!
//! The "orig" stream mimics a generic pre-trained backbone: all ID classes
//! sit in one tight region (weak class separation) and every OOD set lies
//! in a different direction. The "ft" stream mimics a fine-tuned backbone:
//! classes are far apart, but OOD samples are drawn around the ID class
//! centres and overlap them. Logits are a fixed linear read-out of the ft
//! stream (one unit-norm row per class centre).

use serde::{Deserialize, Serialize};

use crate::bundle::{validate_bundle, DatasetBundle, OodSet};
use crate::error::{Error, Result};
use crate::matrix::{Features, Labels, Logits};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub dim_orig: usize,
    pub dim_ft: usize,
    /// Distance of class centres from the shared ID anchor (orig stream).
    pub orig_class_sep: f64,
    /// Distance of class centres from the origin (ft stream).
    pub ft_class_sep: f64,
    pub orig_noise: f64,
    pub ft_noise: f64,
    /// How far OOD centres are pushed away from the ID anchor (orig stream).
    pub ood_shift: f64,
    /// ft-stream OOD noise as a multiple of `ft_noise`.
    pub ood_ft_noise_scale: f64,
    pub num_ood_sets: usize,
    pub n_ood: usize,
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            train_per_class: 16,
            test_per_class: 40,
            dim_orig: 16,
            dim_ft: 16,
            orig_class_sep: 0.3,
            ft_class_sep: 3.0,
            orig_noise: 0.15,
            ft_noise: 0.3,
            ood_shift: 0.9,
            ood_ft_noise_scale: 1.6,
            num_ood_sets: 2,
            n_ood: 200,
            logit_scale: 1.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes, 2),
            ("train_per_class", self.train_per_class, 1),
            ("test_per_class", self.test_per_class, 1),
            ("dim_orig", self.dim_orig, 2),
            ("dim_ft", self.dim_ft, 2),
            ("num_ood_sets", self.num_ood_sets, 1),
            ("n_ood", self.n_ood, 1),
        ];
        for (name, value, min) in counts {
            if value < min {
                return Err(Error::Config(format!(
                    "{name} must be at least {min}, got {value}"
                )));
            }
        }
        let reals = [
            ("orig_class_sep", self.orig_class_sep),
            ("ft_class_sep", self.ft_class_sep),
            ("orig_noise", self.orig_noise),
            ("ft_noise", self.ft_noise),
            ("ood_shift", self.ood_shift),
            ("ood_ft_noise_scale", self.ood_ft_noise_scale),
            ("logit_scale", self.logit_scale),
        ];
        for (name, value) in reals {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {value}"
                )));
            }
        }
        if self.ft_class_sep == 0.0 {
            return Err(Error::Config("ft_class_sep must be positive".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut SplitMix64, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.next_normal()).collect()
}

fn unit(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim, 1.0);
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

/// Unit vector orthogonal to the unit vector `to`.
fn orthogonal_unit(rng: &mut SplitMix64, to: &[f64]) -> Vec<f64> {
    loop {
        let v = unit(rng, to.len());
        let d: f64 = v.iter().zip(to).map(|(a, b)| a * b).sum();
        let w = axpy(-d, to, &v);
        let n = norm(&w);
        if n > 1e-6 {
            return w.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Sampler {
    rows: Vec<f32>,
    dim: usize,
}

impl Sampler {
    fn new(dim: usize) -> Self {
        Self {
            rows: Vec::new(),
            dim,
        }
    }

    fn push(&mut self, rng: &mut SplitMix64, center: &[f64], noise: f64) {
        let x = axpy(1.0, center, &gaussian(rng, self.dim, noise));
        self.rows.extend(x.iter().map(|&v| v as f32));
    }

    fn finish(self) -> Result<Features<f32>> {
        let n = self.rows.len() / self.dim;
        Features::from_vec(n, self.dim, self.rows)
    }
}

fn readout(ft: &Features<f32>, class_dirs: &[Vec<f64>], scale: f64) -> Result<Logits<f32>> {
    let mut data = Vec::with_capacity(ft.rows() * class_dirs.len());
    for row in ft.iter_rows() {
        for dir in class_dirs {
            let z: f64 = row.iter().zip(dir).map(|(&x, &w)| x as f64 * w).sum();
            data.push((scale * z) as f32);
        }
    }
    Logits::from_vec(ft.rows(), class_dirs.len(), data)
}

/// Generates a bundle; identical configs give bit-identical bundles.
pub fn synth_bundle(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let k = cfg.num_classes;
    let mut rng = SplitMix64::new(cfg.seed);

    let anchor = unit(&mut rng, cfg.dim_orig);
    let orig_centers: Vec<Vec<f64>> = (0..k)
        .map(|_| axpy(cfg.orig_class_sep, &unit(&mut rng, cfg.dim_orig), &anchor))
        .collect();
    let ft_dirs: Vec<Vec<f64>> = (0..k).map(|_| unit(&mut rng, cfg.dim_ft)).collect();
    let ft_centers: Vec<Vec<f64>> = ft_dirs
        .iter()
        .map(|d| d.iter().map(|x| x * cfg.ft_class_sep).collect())
        .collect();
    // OOD set s moves further from the anchor as s grows.
    let ood_centers: Vec<Vec<f64>> = (0..cfg.num_ood_sets)
        .map(|s| {
            let away = orthogonal_unit(&mut rng, &anchor);
            axpy(cfg.ood_shift * (1.0 + 0.5 * s as f64), &away, &anchor)
        })
        .collect();

    let split = |rng: &mut SplitMix64,
                 per_class: usize|
     -> Result<(Features<f32>, Features<f32>, Labels)> {
        let mut orig = Sampler::new(cfg.dim_orig);
        let mut ft = Sampler::new(cfg.dim_ft);
        let mut labels = Vec::with_capacity(per_class * k);
        for c in 0..k {
            for _ in 0..per_class {
                orig.push(rng, &orig_centers[c], cfg.orig_noise);
                ft.push(rng, &ft_centers[c], cfg.ft_noise);
                labels.push(c);
            }
        }
        Ok((orig.finish()?, ft.finish()?, Labels::new(labels, k)?))
    };
    let (train_orig, train_ft, train_labels) = split(&mut rng, cfg.train_per_class)?;
    let (id_test_orig, id_test_ft, id_test_labels) = split(&mut rng, cfg.test_per_class)?;

    let mut ood_sets = Vec::with_capacity(cfg.num_ood_sets);
    for (s, center) in ood_centers.iter().enumerate() {
        let mut orig = Sampler::new(cfg.dim_orig);
        let mut ft = Sampler::new(cfg.dim_ft);
        for _ in 0..cfg.n_ood {
            orig.push(&mut rng, center, cfg.orig_noise);
            let c = (rng.next_u64() % k as u64) as usize;
            ft.push(
                &mut rng,
                &ft_centers[c],
                cfg.ft_noise * cfg.ood_ft_noise_scale,
            );
        }
        let ft = ft.finish()?;
        ood_sets.push(OodSet {
            name: format!("ood{s}"),
            orig: orig.finish()?,
            logits: Some(readout(&ft, &ft_dirs, cfg.logit_scale)?),
            ft,
        });
    }

    let bundle = DatasetBundle {
        num_classes: k,
        train_logits: Some(readout(&train_ft, &ft_dirs, cfg.logit_scale)?),
        id_test_logits: Some(readout(&id_test_ft, &ft_dirs, cfg.logit_scale)?),
        train_orig,
        train_ft,
        train_labels,
        id_test_orig,
        id_test_ft,
        id_test_labels,
        ood_sets,
    };
    validate_bundle(&bundle)?;
    Ok(bundle)
}
