use nalgebra::DMatrix;

use super::NnError;

/// A `tokens × channels` real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix(DMatrix<f64>);

impl TokenMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, NnError> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(NnError::Shape(format!(
                "token matrix needs positive dimensions, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("token matrix".into()));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced internally from finite inputs.
    pub(crate) fn from_matrix(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        Self(m)
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape(format!(
                "{} values for a {rows}x{cols} token matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[(r, c)]
    }

    pub fn row_vec(&self, r: usize) -> Vec<f64> {
        self.0.row(r).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `out[i] = self[perm[i]]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self(self.0.select_rows(perm))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self(self.0.select_rows(idx))
    }

    /// Stacks `a` above `b`.
    pub fn concat_rows(a: &Self, b: &Self) -> Result<Self, NnError> {
        if a.cols() != b.cols() {
            return Err(NnError::Shape(format!(
                "cannot stack {} and {} channels",
                a.cols(),
                b.cols()
            )));
        }
        let mut m = DMatrix::zeros(a.rows() + b.rows(), a.cols());
        m.rows_mut(0, a.rows()).copy_from(&a.0);
        m.rows_mut(a.rows(), b.rows()).copy_from(&b.0);
        Ok(Self(m))
    }

    /// Places `b`'s channels after `a`'s.
    pub fn concat_cols(a: &Self, b: &Self) -> Result<Self, NnError> {
        if a.rows() != b.rows() {
            return Err(NnError::Shape(format!(
                "cannot concatenate channels of {} and {} tokens",
                a.rows(),
                b.rows()
            )));
        }
        let mut m = DMatrix::zeros(a.rows(), a.cols() + b.cols());
        m.columns_mut(0, a.cols()).copy_from(&a.0);
        m.columns_mut(a.cols(), b.cols()).copy_from(&b.0);
        Ok(Self(m))
    }

    /// Splits into the first `at` tokens and the rest.
    pub fn split_rows(&self, at: usize) -> (Self, Self) {
        (
            Self(self.0.rows(0, at).into_owned()),
            Self(self.0.rows(at, self.rows() - at).into_owned()),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self, NnError> {
        if self.0.shape() != other.0.shape() {
            return Err(NnError::Shape(format!(
                "cannot add {:?} and {:?}",
                self.0.shape(),
                other.0.shape()
            )));
        }
        Ok(Self(&self.0 + &other.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape());
        (&self.0 - &other.0).amax()
    }
}

impl From<TokenMatrix> for DMatrix<f64> {
    fn from(t: TokenMatrix) -> Self {
        t.0
    }
}
