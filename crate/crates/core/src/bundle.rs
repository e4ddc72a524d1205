//! The benchmark unit: paired original/fine-tuned feature streams for the
//! training set, the ID test set and any number of OOD sets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, SaveMatrix};
use crate::matrix::{Features, Labels, Logits};

#[derive(Debug, Clone, PartialEq)]
pub struct OodSet {
    pub name: String,
    pub orig: Features<f32>,
    pub ft: Features<f32>,
    pub logits: Option<Logits<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub num_classes: usize,
    pub train_orig: Features<f32>,
    pub train_ft: Features<f32>,
    pub train_labels: Labels,
    pub train_logits: Option<Logits<f32>>,
    pub id_test_orig: Features<f32>,
    pub id_test_ft: Features<f32>,
    pub id_test_logits: Option<Logits<f32>>,
    pub id_test_labels: Labels,
    pub ood_sets: Vec<OodSet>,
}

/// Checks every cross-field invariant and reports all violations at once.
pub fn validate_bundle(b: &DatasetBundle) -> Result<()> {
    let mut problems = Vec::new();
    let k = b.num_classes;
    let d_o = b.train_orig.dim();
    let d_ft = b.train_ft.dim();

    if k < 2 {
        problems.push(format!("num_classes: need at least 2 classes, got {k}"));
    }
    let mut rows = |field: &str, n: usize, expected: usize| {
        if n != expected {
            problems.push(format!(
                "{field}: length mismatch ({n} rows, expected {expected})"
            ));
        }
    };
    rows("train_ft", b.train_ft.rows(), b.train_orig.rows());
    rows("train_labels", b.train_labels.len(), b.train_orig.rows());
    rows("id_test_ft", b.id_test_ft.rows(), b.id_test_orig.rows());
    rows(
        "id_test_labels",
        b.id_test_labels.len(),
        b.id_test_orig.rows(),
    );
    if let Some(l) = &b.train_logits {
        rows("train_logits", l.rows(), b.train_orig.rows());
    }
    if let Some(l) = &b.id_test_logits {
        rows("id_test_logits", l.rows(), b.id_test_orig.rows());
    }
    for s in &b.ood_sets {
        rows(
            &format!("ood_sets[{}].ft", s.name),
            s.ft.rows(),
            s.orig.rows(),
        );
        if let Some(l) = &s.logits {
            rows(
                &format!("ood_sets[{}].logits", s.name),
                l.rows(),
                s.orig.rows(),
            );
        }
    }

    let mut dims = |field: &str, d: usize, expected: usize| {
        if d != expected {
            problems.push(format!(
                "{field}: dimension mismatch ({d}, expected {expected})"
            ));
        }
    };
    dims("id_test_orig", b.id_test_orig.dim(), d_o);
    dims("id_test_ft", b.id_test_ft.dim(), d_ft);
    for s in &b.ood_sets {
        dims(&format!("ood_sets[{}].orig", s.name), s.orig.dim(), d_o);
        dims(&format!("ood_sets[{}].ft", s.name), s.ft.dim(), d_ft);
    }

    let mut classes = |field: &str, kk: usize| {
        if kk != k {
            problems.push(format!(
                "{field}: class count {kk} does not match num_classes {k}"
            ));
        }
    };
    classes("train_labels", b.train_labels.num_classes());
    classes("id_test_labels", b.id_test_labels.num_classes());
    for (field, l) in [
        ("train_logits", &b.train_logits),
        ("id_test_logits", &b.id_test_logits),
    ] {
        if let Some(l) = l {
            classes(field, l.num_classes());
        }
    }
    for s in &b.ood_sets {
        if let Some(l) = &s.logits {
            classes(&format!("ood_sets[{}].logits", s.name), l.num_classes());
        }
    }

    if b.ood_sets.is_empty() {
        problems.push("ood_sets: at least one OOD set is required".into());
    }
    let mut names: Vec<&str> = b.ood_sets.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        problems.push(format!("ood_sets: duplicate name {:?}", w[0]));
    }
    // Logit-based baselines need supplied logits everywhere or nowhere.
    let id_has = b.id_test_logits.is_some();
    for s in &b.ood_sets {
        if s.logits.is_some() != id_has {
            problems.push(format!(
                "ood_sets[{}].logits: present={} but id_test_logits present={id_has}",
                s.name,
                s.logits.is_some()
            ));
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Bundle(problems))
    }
}

/// JSON manifest mapping bundle fields to NPY files. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_classes: usize,
    pub train_orig: PathBuf,
    pub train_ft: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_logits: Option<PathBuf>,
    pub id_test_orig: PathBuf,
    pub id_test_ft: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_test_logits: Option<PathBuf>,
    pub id_test_labels: PathBuf,
    pub ood_sets: Vec<OodManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodManifest {
    pub name: String,
    pub orig: PathBuf,
    pub ft: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<PathBuf>,
}

impl DatasetBundle {
    /// Loads and validates the bundle described by a manifest file.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let p = |rel: &Path| base.join(rel);
        let k = manifest.num_classes;
        let opt_logits = |rel: &Option<PathBuf>| -> Result<Option<Logits<f32>>> {
            rel.as_deref().map(|r| io::load_logits(&p(r))).transpose()
        };

        let bundle = DatasetBundle {
            num_classes: k,
            train_orig: io::load_features(&p(&manifest.train_orig))?,
            train_ft: io::load_features(&p(&manifest.train_ft))?,
            train_labels: io::load_labels(&p(&manifest.train_labels), k)?,
            train_logits: opt_logits(&manifest.train_logits)?,
            id_test_orig: io::load_features(&p(&manifest.id_test_orig))?,
            id_test_ft: io::load_features(&p(&manifest.id_test_ft))?,
            id_test_logits: opt_logits(&manifest.id_test_logits)?,
            id_test_labels: io::load_labels(&p(&manifest.id_test_labels), k)?,
            ood_sets: manifest
                .ood_sets
                .iter()
                .map(|s| {
                    Ok(OodSet {
                        name: s.name.clone(),
                        orig: io::load_features(&p(&s.orig))?,
                        ft: io::load_features(&p(&s.ft))?,
                        logits: opt_logits(&s.logits)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        validate_bundle(&bundle)?;
        Ok(bundle)
    }

    /// Writes every matrix into `dir` plus a `manifest.json`, returning the
    /// manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, m: &dyn SaveMatrix| -> Result<PathBuf> {
            let rel = PathBuf::from(format!("{name}.npy"));
            m.save(&dir.join(&rel))?;
            Ok(rel)
        };
        let put_opt = |name: &str, m: &Option<Logits<f32>>| -> Result<Option<PathBuf>> {
            m.as_ref().map(|l| put(name, l)).transpose()
        };
        let manifest = Manifest {
            num_classes: self.num_classes,
            train_orig: put("train_orig", &self.train_orig)?,
            train_ft: put("train_ft", &self.train_ft)?,
            train_labels: put("train_labels", &self.train_labels)?,
            train_logits: put_opt("train_logits", &self.train_logits)?,
            id_test_orig: put("id_test_orig", &self.id_test_orig)?,
            id_test_ft: put("id_test_ft", &self.id_test_ft)?,
            id_test_logits: put_opt("id_test_logits", &self.id_test_logits)?,
            id_test_labels: put("id_test_labels", &self.id_test_labels)?,
            ood_sets: self
                .ood_sets
                .iter()
                .map(|s| {
                    Ok(OodManifest {
                        name: s.name.clone(),
                        orig: put(&format!("ood_{}_orig", s.name), &s.orig)?,
                        ft: put(&format!("ood_{}_ft", s.name), &s.ft)?,
                        logits: put_opt(&format!("ood_{}_logits", s.name), &s.logits)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize, d: usize) -> Features<f32> {
        Features::from_vec(n, d, (0..n * d).map(|i| 1.0 + i as f32).collect()).unwrap()
    }

    fn small_bundle() -> DatasetBundle {
        DatasetBundle {
            num_classes: 2,
            train_orig: feats(10, 3),
            train_ft: feats(10, 4),
            train_labels: Labels::new((0..10).map(|i| i % 2).collect(), 2).unwrap(),
            train_logits: None,
            id_test_orig: feats(4, 3),
            id_test_ft: feats(4, 4),
            id_test_logits: None,
            id_test_labels: Labels::new(vec![0, 1, 0, 1], 2).unwrap(),
            ood_sets: vec![OodSet {
                name: "far".into(),
                orig: feats(3, 3),
                ft: feats(3, 4),
                logits: None,
            }],
        }
    }

    #[test]
    fn consistent_bundle_passes() {
        validate_bundle(&small_bundle()).unwrap();
    }

    #[test]
    fn label_length_mismatch() {
        let mut b = small_bundle();
        b.train_labels = Labels::new((0..9).map(|i| i % 2).collect(), 2).unwrap();
        let msg = validate_bundle(&b).unwrap_err().to_string();
        assert!(msg.contains("train_labels: length mismatch"), "{msg}");
    }

    #[test]
    fn all_violations_aggregated() {
        let mut b = small_bundle();
        b.train_labels = Labels::new((0..9).map(|i| i % 2).collect(), 2).unwrap();
        b.ood_sets[0].ft = feats(3, 5);
        let Err(Error::Bundle(problems)) = validate_bundle(&b) else {
            panic!("expected bundle error");
        };
        assert_eq!(problems.len(), 2, "{problems:?}");
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = small_bundle();
        let manifest = b.save(dir.path()).unwrap();
        assert_eq!(DatasetBundle::load(&manifest).unwrap(), b);
    }

    #[test]
    fn label_value_k_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = small_bundle().save(dir.path()).unwrap();
        crate::npy::write(
            &dir.path().join("train_labels.npy"),
            &[10],
            &[0i64, 1, 0, 1, 0, 1, 0, 1, 0, 2],
        )
        .unwrap();
        let msg = DatasetBundle::load(&manifest).unwrap_err().to_string();
        assert!(msg.contains("label out of range"), "{msg}");
    }
}
