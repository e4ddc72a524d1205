//! Validated dense containers: features, logits, labels and score vectors.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Minimum L2 norm a feature row must exceed.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Plain row-major matrix with no invariants beyond its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {i} has {} columns, expected {cols}",
                rows[i].len()
            )));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    /// Rows at `indices`, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Shape(format!(
                    "row index {i} out of bounds ({})",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec(indices.len(), self.cols, data)
    }

    /// Columns `[start, end)` of every row.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.cols {
            return Err(Error::Shape(format!(
                "column range {start}..{end} invalid for {} columns",
                self.cols
            )));
        }
        let data = self
            .iter_rows()
            .flat_map(|r| r[start..end].iter().copied())
            .collect();
        Self::from_vec(self.rows, end - start, data)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn map<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| cast(x)).collect(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(Error::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// L2 norm of a row, accumulated in `f64`.
pub fn row_norm<T: Scalar>(row: &[T]) -> f64 {
    row.iter()
        .map(|&x| {
            let v: f64 = cast(x);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Sample embeddings: finite values, every row with norm above [`MIN_ROW_NORM`].
#[derive(Debug, Clone, PartialEq)]
pub struct Features<T>(Matrix<T>);

impl<T: Scalar> Features<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        matrix.check_finite()?;
        for (row, r) in matrix.iter_rows().enumerate() {
            let norm = row_norm(r);
            if norm <= MIN_ROW_NORM {
                return Err(Error::ZeroNormRow { row, norm });
            }
        }
        Ok(Self(matrix))
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(Matrix::from_vec(rows, cols, data)?)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn dim(&self) -> usize {
        self.0.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.0.iter_rows()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self(self.0.select_rows(indices)?))
    }

    /// Columns `[start, end)`; fails if a sliced row ends up zero-norm.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(self.0.slice_cols(start, end)?)
    }

    pub fn convert<U: Scalar>(&self) -> Result<Features<U>> {
        Features::new(self.0.map())
    }
}

/// Scales every row to unit L2 norm (computed in `f64`, stored as `T`).
pub fn l2_normalize_rows<T: Scalar>(m: &Features<T>) -> Result<Features<T>> {
    let mut data = Vec::with_capacity(m.rows() * m.dim());
    for (row, r) in m.iter_rows().enumerate() {
        let norm = row_norm(r);
        if norm <= MIN_ROW_NORM {
            return Err(Error::ZeroNormRow { row, norm });
        }
        data.extend(r.iter().map(|&x| cast::<T, f64>(cast::<f64, T>(x) / norm)));
    }
    Features::from_vec(m.rows(), m.dim(), data)
}

/// Classifier outputs: finite values, at least two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T>(Matrix<T>);

impl<T: Scalar> Logits<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        if matrix.cols < 2 {
            return Err(Error::Shape(format!(
                "logit matrix needs at least 2 classes, got {}",
                matrix.cols
            )));
        }
        matrix.check_finite()?;
        Ok(Self(matrix))
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(Matrix::from_vec(rows, cols, data)?)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.0.row(i)
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.0.iter_rows()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self(self.0.select_rows(indices)?))
    }
}

/// Class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    values: Vec<usize>,
    num_classes: usize,
}

impl Labels {
    pub fn new(values: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Config("label set needs at least one class".into()));
        }
        if values.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        if let Some(row) = values.iter().position(|&v| v >= num_classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label: values[row] as i64,
                num_classes,
            });
        }
        Ok(Self {
            values,
            num_classes,
        })
    }

    /// Accepts signed values as stored on disk.
    pub fn from_i64(values: &[i64], num_classes: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(values.len());
        for (row, &v) in values.iter().enumerate() {
            if v < 0 || v as u64 >= num_classes as u64 {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: v,
                    num_classes,
                });
            }
            out.push(v as usize);
        }
        Self::new(out, num_classes)
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let values = indices
            .iter()
            .map(|&i| {
                self.values.get(i).copied().ok_or_else(|| {
                    Error::Shape(format!("label index {i} out of bounds ({})", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values, self.num_classes)
    }
}

/// Per-sample uncertainty; larger means more likely out-of-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores<T>(Vec<T>);

impl<T: Scalar> Scores<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col: 0 });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
