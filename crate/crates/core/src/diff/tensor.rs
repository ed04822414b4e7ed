//! Dense, row-major `f64` tensors.
//!
//! Graph values are always treated as matrices: a rank-1 tensor of length `n`
//! behaves as a `1 x n` row, a rank-2 tensor as itself.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating the element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape("tensor", format!("dimensions must be positive, got {shape:?}")));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {count} values, got {}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Tensor::new(vec![1, 1], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; count],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; count],
        }
    }

    /// Internal constructor for kernel outputs whose shape is known to be
    /// consistent; finiteness is checked by the caller.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Matrix view dimensions `(rows, cols)`.
    pub fn dims(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape("tensor", format!("expected rank 1 or 2, got {other:?}"))),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims().map(|d| d.0).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.dims().map(|d| d.1).unwrap_or(0)
    }

    /// Returns the single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::shape("item", format!("tensor has shape {:?}", self.shape)))
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Builds a `rows x cols` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        Tensor::matrix(rows.len(), cols, rows.concat())
    }
}

/// `op(a) * op(b)` where `op` optionally transposes its argument.
pub(crate) fn matmul(
    a: &[f64],
    (ar, ac): (usize, usize),
    b: &[f64],
    (br, bc): (usize, usize),
    ta: bool,
    tb: bool,
) -> Result<(usize, usize, Vec<f64>)> {
    let (m, ka) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    if ka != kb {
        return Err(Error::shape(
            "matmul",
            format!("inner dimensions differ: {ka} vs {kb}"),
        ));
    }
    let k = ka;
    let mut out = vec![0.0; m * n];
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = a[i * ac + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b[p * bc..(p + 1) * bc];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &a[i * ac..(i + 1) * ac];
                for j in 0..n {
                    let brow = &b[j * bc..(j + 1) * bc];
                    out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
        }
        (true, false) => {
            for p in 0..k {
                let arow = &a[p * ac..(p + 1) * ac];
                let brow = &b[p * bc..(p + 1) * bc];
                for (i, &av) in arow.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a[p * ac + i] * b[j * bc + p];
                    }
                    out[i * n + j] = s;
                }
            }
        }
    }
    Ok((m, n, out))
}
