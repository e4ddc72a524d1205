//! Typed loading and saving of matrices on top of the NPY container.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{Features, Labels, Logits, Matrix, Scores};
use crate::npy::{self, Element};
use crate::scalar::Scalar;

/// What a file on disk is expected to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Feature,
    Logit,
    /// Label vector over `num_classes` classes.
    Label {
        num_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedMatrix {
    Features(Features<f32>),
    Logits(Logits<f32>),
    Labels(Labels),
}

pub fn load_matrix(path: &Path, kind: MatrixKind) -> Result<LoadedMatrix> {
    Ok(match kind {
        MatrixKind::Feature => LoadedMatrix::Features(load_features(path)?),
        MatrixKind::Logit => LoadedMatrix::Logits(load_logits(path)?),
        MatrixKind::Label { num_classes } => LoadedMatrix::Labels(load_labels(path, num_classes)?),
    })
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(path.display().to_string()))
}

fn load_2d<E: Element + Scalar>(path: &Path) -> Result<Matrix<E>> {
    let arr = npy::read::<E>(path)?;
    match arr.shape[..] {
        [rows, cols] => with_path(path, Matrix::from_vec(rows, cols, arr.data)),
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a 2-d array, got shape {:?}", arr.shape),
        }),
    }
}

pub fn load_features<E: Element + Scalar>(path: &Path) -> Result<Features<E>> {
    with_path(path, Features::new(load_2d(path)?))
}

pub fn load_logits<E: Element + Scalar>(path: &Path) -> Result<Logits<E>> {
    with_path(path, Logits::new(load_2d(path)?))
}

fn load_1d<E: Element>(path: &Path) -> Result<Vec<E>> {
    let arr = npy::read::<E>(path)?;
    if arr.shape.len() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected a 1-d array, got shape {:?}", arr.shape),
        });
    }
    Ok(arr.data)
}

pub fn load_labels(path: &Path, num_classes: usize) -> Result<Labels> {
    with_path(path, Labels::from_i64(&load_1d::<i64>(path)?, num_classes))
}

/// Raw label values, for callers that infer the class count.
pub fn load_label_values(path: &Path) -> Result<Vec<i64>> {
    load_1d(path)
}

pub fn load_scores<E: Element + Scalar>(path: &Path) -> Result<Scores<E>> {
    with_path(path, Scores::new(load_1d(path)?))
}

/// Anything that can be written to an NPY file and read back bit-exactly.
pub trait SaveMatrix {
    fn save(&self, path: &Path) -> Result<()>;
}

impl<E: Element + Scalar> SaveMatrix for Matrix<E> {
    fn save(&self, path: &Path) -> Result<()> {
        npy::write(path, &[self.rows(), self.cols()], self.as_slice())
    }
}

impl<E: Element + Scalar> SaveMatrix for Features<E> {
    fn save(&self, path: &Path) -> Result<()> {
        self.matrix().save(path)
    }
}

impl<E: Element + Scalar> SaveMatrix for Logits<E> {
    fn save(&self, path: &Path) -> Result<()> {
        self.matrix().save(path)
    }
}

impl SaveMatrix for Labels {
    fn save(&self, path: &Path) -> Result<()> {
        let values: Vec<i64> = self.values().iter().map(|&v| v as i64).collect();
        npy::write(path, &[values.len()], &values)
    }
}

impl<E: Element + Scalar> SaveMatrix for Scores<E> {
    fn save(&self, path: &Path) -> Result<()> {
        npy::write(path, &[self.len()], self.values())
    }
}

pub fn save_matrix<M: SaveMatrix + ?Sized>(m: &M, path: &Path) -> Result<()> {
    m.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_round_trip_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.npy");
        let m = Features::from_rows(&[vec![1.0f32, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        save_matrix(&m, &path).unwrap();
        let LoadedMatrix::Features(back) = load_matrix(&path, MatrixKind::Feature).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!((back.rows(), back.dim()), (2, 3));
        assert_eq!(back, m);
    }

    #[test]
    fn label_file_loads_with_class_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.npy");
        npy::write(&path, &[3], &[0i64, 1, 2]).unwrap();
        let labels = load_labels(&path, 3).unwrap();
        assert_eq!(labels.len(), 3);
        assert!(load_labels(&path, 2).is_err());
    }

    #[test]
    fn nan_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.npy");
        let mut data = vec![1.0f32; 10 * 3];
        data[7 * 3] = f32::NAN;
        npy::write(&path, &[10, 3], &data).unwrap();
        let err = load_features::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("row 7"), "{err}");
    }

    #[test]
    fn dtype_mismatch_between_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.npy");
        npy::write(&path, &[2], &[0i64, 1]).unwrap();
        assert!(matches!(
            load_features::<f32>(&path),
            Err(Error::Dtype { .. })
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let m = Matrix::from_vec(1, 1, vec![0.5f32]).unwrap();
        let err = m.save(Path::new("/nonexistent-dir/x/m.npy")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
