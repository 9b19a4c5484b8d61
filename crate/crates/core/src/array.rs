//! Shape-tagged row-major arrays of 64-bit reals.
//!
//! `DenseArray` is the universal numeric carrier. Two invariants are
//! enforced at every public constructor and operation: the value buffer
//! length equals the product of the shape, and every entry is finite.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Domain {
                op: "DenseArray::new",
                detail: format!("zero dimension in shape {shape:?}"),
            });
        }
        if shape_len(&shape) != values.len() {
            return Err(Error::Domain {
                op: "DenseArray::new",
                detail: format!(
                    "shape {shape:?} expects {} values, got {}",
                    shape_len(&shape),
                    values.len()
                ),
            });
        }
        let arr = DenseArray { shape, values };
        arr.ensure_finite("DenseArray::new")?;
        Ok(arr)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        DenseArray {
            shape: shape.to_vec(),
            values: vec![0.0; shape_len(shape)],
        }
    }

    pub fn full(shape: &[usize], x: f64) -> Self {
        DenseArray {
            shape: shape.to_vec(),
            values: vec![x; shape_len(shape)],
        }
    }

    pub fn scalar(x: f64) -> Self {
        DenseArray {
            shape: vec![1],
            values: vec![x],
        }
    }

    /// Builds an `[n, d]` matrix from `n` equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain {
                op: "DenseArray::from_rows",
                detail: "no rows".into(),
            });
        }
        let d = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Domain {
                    op: "DenseArray::from_rows",
                    detail: format!("row {i} has {} entries, expected {d}", r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        DenseArray::new(vec![rows.len(), d], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    /// Scalar payload; panics if the array is not single-element.
    pub fn item(&self) -> f64 {
        assert!(
            self.is_scalar(),
            "item() on non-scalar shape {:?}",
            self.shape
        );
        self.values[0]
    }

    /// Row count of a 2-D array (1 for 1-D).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on shape {:?}", self.shape),
        }
    }

    /// Column count of a 2-D array (length for 1-D).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on shape {:?}", self.shape),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    /// Interprets `[d]`, `[1, d]` or `[d, 1]` as a length-`d` vector.
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self.shape.len() {
            1 => Some(&self.values),
            2 if self.shape[0] == 1 || self.shape[1] == 1 => Some(&self.values),
            _ => None,
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if shape_len(&shape) != self.values.len() {
            return Err(Error::Domain {
                op: "reshape",
                detail: format!("cannot view {:?} as {:?}", self.shape, shape),
            });
        }
        Ok(DenseArray {
            shape,
            values: self.values.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseArray {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(DenseArray {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| x * c)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "dot",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.shape.len(), 2, "transpose() on shape {:?}", self.shape);
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.values[i * m + j];
            }
        }
        DenseArray {
            shape: vec![m, n],
            values: out,
        }
    }

    /// `self * other` for 2-D operands.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (n, k, m) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &self.values[i * k..(i + 1) * k];
            let orow = &mut out[i * m..(i + 1) * m];
            for (kk, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &other.values[kk * m..(kk + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(DenseArray {
            shape: vec![n, m],
            values: out,
        })
    }

    /// `self * other^T`: `[n,k] x [m,k] -> [n,m]`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[1] {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (n, k, m) = (self.shape[0], self.shape[1], other.shape[0]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &self.values[i * k..(i + 1) * k];
            let orow = &mut out[i * m..(i + 1) * m];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &other.values[j * k..(j + 1) * k];
                *o = arow.iter().zip(brow).map(|(&a, &b)| a * b).sum();
            }
        }
        Ok(DenseArray {
            shape: vec![n, m],
            values: out,
        })
    }

    /// `self^T * other`: `[n,k] x [n,m] -> [k,m]`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[0] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (n, k, m) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; k * m];
        for i in 0..n {
            let arow = &self.values[i * k..(i + 1) * k];
            let brow = &other.values[i * m..(i + 1) * m];
            for (kk, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[kk * m..(kk + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseArray {
            shape: vec![k, m],
            values: out,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Selects the given rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.cols();
        let mut values = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DenseArray {
            shape: vec![idx.len(), c],
            values,
        }
    }

    /// Stacks `self` vertically `times` times.
    pub fn repeat_rows(&self, times: usize) -> Self {
        let mut values = Vec::with_capacity(self.values.len() * times);
        for _ in 0..times {
            values.extend_from_slice(&self.values);
        }
        DenseArray {
            shape: vec![self.rows() * times, self.cols()],
            values,
        }
    }
}

/// Overflow-free softplus: `max(x, 0) + log1p(exp(-|x|))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable log-sum-exp of a slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(xs)))` in log space.
pub fn logmeanexp(xs: &[f64]) -> f64 {
    logsumexp(xs) - (xs.len() as f64).ln()
}
