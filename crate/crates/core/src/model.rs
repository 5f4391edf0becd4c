//! Shared domain types: dense matrices, system models, accuracy targets and
//! bound reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix with finite entries.
///
/// Serializes as the `{"rows", "cols", "data"}` matrix file object, with
/// `data` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

/// Row-major wire form of [`Matrix`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "rows and cols must be positive (got {rows}x{cols})"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "data has {} entries, expected rows*cols = {}",
                data.len(),
                rows * cols
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("data[{i}] is not finite")));
        }
        Ok(Matrix(DMatrix::from_row_slice(rows, cols, &data)))
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Matrix(m))
    }

    pub fn identity(d: usize) -> Self {
        Matrix(DMatrix::identity(d, d))
    }

    pub fn diag(values: &[f64]) -> Self {
        Matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            values,
        )))
    }

    pub fn scalar(a: f64) -> Self {
        Matrix(DMatrix::from_element(1, 1, a))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_file(&self) -> MatrixFile {
        MatrixFile {
            rows: self.rows(),
            cols: self.cols(),
            data: self.row_major(),
        }
    }
}

impl TryFrom<MatrixFile> for Matrix {
    type Error = Error;

    fn try_from(f: MatrixFile) -> Result<Self> {
        Matrix::from_row_major(f.rows, f.cols, f.data)
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = MatrixFile::deserialize(d)?;
        Matrix::try_from(f).map_err(serde::de::Error::custom)
    }
}

/// `x_{t+1} = A x_t + w_t` with `w_t ~ N(0, I)` and `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncontrolledSystem {
    a: Matrix,
}

impl UncontrolledSystem {
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("A must be square".into()));
        }
        Ok(UncontrolledSystem { a })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }
}

/// `x_{t+1} = A x_t + B u_t + w_t` with `w_t ~ N(0, I)` and `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSystem {
    a: Matrix,
    b: Matrix,
}

impl ControlledSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("A must be square".into()));
        }
        if b.rows() != a.rows() {
            return Err(Error::Dimension(format!(
                "B must have {} rows to match A (got {})",
                a.rows(),
                b.rows()
            )));
        }
        Ok(ControlledSystem { a, b })
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        ControlledSystem {
            a: Matrix::scalar(a),
            b: Matrix::scalar(b),
        }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }
}

/// PAC identification target: Frobenius accuracy `eps` with failure
/// probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracySpec {
    eps: f64,
    delta: f64,
}

impl AccuracySpec {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eps must be positive (got {eps})"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "delta must lie in (0, 1) (got {delta})"
            )));
        }
        Ok(AccuracySpec { eps, delta })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// True when the information threshold is positive, i.e. `delta < 1/2.4`.
    pub fn is_nontrivial(&self) -> bool {
        crate::threshold::rate_threshold(self) > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Gramian,
    Spectral,
    Controlled,
}

impl BoundMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundMethod::Gramian => "gramian",
            BoundMethod::Spectral => "spectral",
            BoundMethod::Controlled => "controlled",
        }
    }
}

/// Accuracy norm the bound is stated for. Both give the same numeric bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    #[default]
    Frobenius,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub value: f64,
}

/// Result of inverting a monotone information curve against the rate
/// threshold.
///
/// `curve[i]` holds the information at `t = i + 1`; the last point is `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub tau: u64,
    pub method: BoundMethod,
    pub threshold: f64,
    pub trivial: bool,
    pub norm: NormTag,
    pub curve: Vec<CurvePoint>,
}

impl BoundReport {
    /// Information value reached at `tau`.
    pub fn final_value(&self) -> f64 {
        self.curve.last().map(|p| p.value).unwrap_or(0.0)
    }
}
