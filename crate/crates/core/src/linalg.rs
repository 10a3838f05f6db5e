//! Dense vector and matrix values.
//!
//! [`ParamValue`] is the single carrier for iterates, momentum buffers,
//! gradients and LMO outputs. Matrices are stored row-major. Every public
//! constructor and operation keeps all entries finite; a non-finite result is
//! reported as [`Error::NonFinite`] instead of being returned.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(m, n) => m * n,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, Shape::Matrix(..))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "vector({n})"),
            Shape::Matrix(m, n) => write!(f, "matrix({m}x{n})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    /// Euclidean norm; Frobenius for matrices.
    L2,
    LInf,
    Nuclear,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamValue {
    shape: Shape,
    data: Vec<f64>,
}

/// Thin singular value decomposition `M = U diag(S) Vᵀ` with `r = min(m, n)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m x r`, orthonormal columns.
    pub u: ParamValue,
    /// Nonnegative, descending.
    pub s: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: ParamValue,
}

fn check_finite(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl ParamValue {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::BadLength {
                shape,
                len: data.len(),
            });
        }
        check_finite(&data, "ParamValue data")?;
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Vector(data.len()), data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Matrix(rows, cols), data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(Shape::Matrix(n, n));
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    /// Square diagonal matrix.
    pub fn diag(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in entries.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self::matrix(n, n, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// `(rows, cols)` of a matrix value.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match self.shape {
            Shape::Matrix(m, n) => Some((m, n)),
            Shape::Vector(_) => None,
        }
    }

    fn require_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        self.dims().ok_or(Error::NotMatrix {
            op,
            shape: self.shape,
        })
    }

    fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            })
        }
    }

    /// Euclidean inner product (Frobenius for matrices).
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        match kind {
            NormKind::L1 => Ok(self.data.iter().map(|x| x.abs()).sum()),
            NormKind::L2 => Ok(self.l2()),
            NormKind::LInf => Ok(self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))),
            NormKind::Nuclear => {
                self.require_matrix("nuclear norm")?;
                Ok(self.svd()?.s.iter().sum())
            }
            NormKind::Spectral => {
                self.require_matrix("spectral norm")?;
                Ok(self.svd()?.s.first().copied().unwrap_or(0.0))
            }
        }
    }

    /// Euclidean / Frobenius norm without the `Result` wrapper.
    pub fn l2(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(libm::sqrt(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        ))
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|x| c * x).collect();
        check_finite(&data, "scaled value")?;
        Ok(Self {
            shape: self.shape,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        combine(&[1.0, -1.0], &[self, other])
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        combine(&[1.0, 1.0], &[self, other])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        check_finite(&data, "mapped value")?;
        Ok(Self {
            shape: self.shape,
            data,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.require_matrix("transpose")?;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: Shape::Matrix(n, m),
            data,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[p * n..(p + 1) * n];
                for (out, b) in data[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *out += a * b;
                }
            }
        }
        check_finite(&data, "matrix product")?;
        Ok(Self {
            shape: Shape::Matrix(m, n),
            data,
        })
    }

    /// Thin SVD via nalgebra's Golub-Kahan routine. Columns are reordered so
    /// that singular values are descending.
    pub fn svd(&self) -> Result<SvdResult> {
        let (m, n) = self.require_matrix("svd")?;
        let r = m.min(n);
        let mat = DMatrix::from_row_slice(m, n, &self.data);
        let svd = mat
            .try_svd(true, true, f64::EPSILON, 10_000)
            .ok_or(Error::SvdNoConvergence)?;
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::SvdNoConvergence),
        };
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

        let mut u_data = vec![0.0; m * r];
        let mut v_data = vec![0.0; n * r];
        let mut s = Vec::with_capacity(r);
        for (col, &k) in order.iter().enumerate() {
            s.push(svd.singular_values[k].max(0.0));
            for i in 0..m {
                u_data[i * r + col] = u[(i, k)];
            }
            for j in 0..n {
                v_data[j * r + col] = vt[(k, j)];
            }
        }
        check_finite(&u_data, "svd U")?;
        check_finite(&v_data, "svd V")?;
        check_finite(&s, "singular values")?;
        Ok(SvdResult {
            u: Self {
                shape: Shape::Matrix(m, r),
                data: u_data,
            },
            s,
            v: Self {
                shape: Shape::Matrix(n, r),
                data: v_data,
            },
        })
    }

    /// `self += c * other`, shapes must match.
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.require_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        check_finite(&self.data, "axpy result")
    }
}

impl SvdResult {
    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> Result<ParamValue> {
        let (m, r) = self.u.dims().expect("U is a matrix");
        let mut us = self.u.clone();
        for i in 0..m {
            for k in 0..r {
                us.data[i * r + k] *= self.s[k];
            }
        }
        us.matmul(&self.v.transpose()?)
    }
}

/// Linear combination `Σ coeffs[i] * values[i]`.
pub fn combine(coeffs: &[f64], values: &[&ParamValue]) -> Result<ParamValue> {
    if coeffs.len() != values.len() {
        return Err(crate::error::invalid!(
            "combine: {} coefficients for {} values",
            coeffs.len(),
            values.len()
        ));
    }
    let first = values
        .first()
        .ok_or_else(|| crate::error::invalid!("combine: no values"))?;
    let mut data = vec![0.0; first.len()];
    for (&c, v) in coeffs.iter().zip(values) {
        first.require_same_shape(v)?;
        if c == 0.0 {
            continue;
        }
        for (out, x) in data.iter_mut().zip(&v.data) {
            *out += c * x;
        }
    }
    check_finite(&data, "linear combination")?;
    Ok(ParamValue {
        shape: first.shape,
        data,
    })
}
