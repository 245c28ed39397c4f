//! Dense row-major feature matrix with named columns.

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl Matrix {
    pub fn new(nrows: usize, names: Vec<String>, data: Vec<f64>) -> Self {
        let ncols = names.len();
        assert_eq!(data.len(), nrows * ncols, "matrix data length mismatch");
        Self {
            nrows,
            ncols,
            data,
            names,
        }
    }

    pub fn zeros(nrows: usize, names: Vec<String>) -> Self {
        let ncols = names.len();
        Self::new(nrows, names, vec![0.0; nrows * ncols])
    }

    /// Matrix with a single column.
    pub fn column(name: &str, values: Vec<f64>) -> Self {
        Self::new(values.len(), vec![name.to_string()], values)
    }

    /// Matrix with `nrows` rows and no columns.
    pub fn empty(nrows: usize) -> Self {
        Self::new(nrows, Vec::new(), Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.nrows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.ncols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.names.clone(), data)
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.nrows, other.nrows, "hstack row mismatch");
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut data = Vec::with_capacity(self.nrows * (self.ncols + other.ncols));
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Matrix::new(self.nrows, names, data)
    }

    /// Vertical concatenation; column names must agree.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.names, other.names, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix::new(self.nrows + other.nrows, self.names.clone(), data)
    }

    /// Copy with column `j` replaced by `values`.
    pub fn with_column(&self, j: usize, values: &[f64]) -> Matrix {
        assert_eq!(values.len(), self.nrows);
        let mut out = self.clone();
        for (i, &v) in values.iter().enumerate() {
            out.set(i, j, v);
        }
        out
    }
}
