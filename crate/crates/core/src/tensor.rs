//! Dense row-major `f64` tensors and the pure kernels the tape is built on.
//!
//! Everything here is a plain function of immutable inputs. Differentiation
//! lives in [`crate::autograd`], which records calls to these kernels.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return dim_err(format!("shape {shape:?} must be non-empty with positive extents"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return dim_err(format!(
                "shape {shape:?} holds {expected} elements but {} were given",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; len]).expect("filled: invalid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return dim_err("from_rows: ragged rows");
        }
        Self::new(vec![m, n], rows.concat())
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Entries drawn i.i.d. from `normal(0, std)`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let len = shape.iter().product();
        let data = (0..len).map(|_| normal.sample(rng)).collect();
        Self::new(shape.to_vec(), data).expect("randn: invalid shape")
    }

    /// Entries drawn i.i.d. from `uniform[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(lo..hi)).collect();
        Self::new(shape.to_vec(), data).expect("uniform: invalid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => dim_err(format!("expected a 2-D tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let n = self.shape[1];
        self.data[r * n + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.shape[1];
        &self.data[r * n..(r + 1) * n]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|x| x.is_nan())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest element-wise absolute difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        same_shape(self, other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(vec![n, m], out)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub(crate) fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape != b.shape {
        return dim_err(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape, b.shape
        ));
    }
    Ok(())
}

/// `c = a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return dim_err(format!(
            "matmul: inner dimensions disagree for shapes {:?} and {:?}",
            a.shape, b.shape
        ));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for t in 0..k {
            let av = a.data[i * k + t];
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[t * n..(t + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "add", |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "sub", |x, y| x - y)
}

pub fn elementwise_mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, "elementwise_mul", |x, y| x * y)
}

fn zip_with(a: &Tensor, b: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    same_shape(a, b, op)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    })
}

/// Adds a length-`n` vector to every row of an `m×n` tensor.
pub fn add_row_vector(a: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if v.len() != n {
        return dim_err(format!(
            "add_row_vector: row width {n} vs vector shape {:?}",
            v.shape
        ));
    }
    let mut out = a.data.clone();
    for i in 0..m {
        for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(&v.data) {
            *o += b;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    if a.has_nan() {
        return Err(Error::Numeric("softmax_rows: NaN in input".into()));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a.data[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[i * n..(i + 1) * n];
        let mut total = 0.0;
        for (d, &x) in dst.iter_mut().zip(row) {
            *d = (x - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    Tensor::new(vec![m, n], out)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalized rows plus the per-row inverse standard deviations, which
/// the backward pass reuses.
pub(crate) struct LayerNormParts {
    pub out: Tensor,
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_parts(a: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<LayerNormParts> {
    let (m, n) = a.dims2()?;
    if n < 2 {
        return dim_err(format!("layer_norm: row width {n} < 2"));
    }
    if gain.len() != n || bias.len() != n {
        return dim_err(format!(
            "layer_norm: gain {:?} / bias {:?} must have {n} entries",
            gain.shape, bias.shape
        ));
    }
    let mut normalized = vec![0.0; m * n];
    let mut out = vec![0.0; m * n];
    let mut inv_std = Vec::with_capacity(m);
    for i in 0..m {
        let row = &a.data[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        for j in 0..n {
            let xh = (row[j] - mean) * inv;
            normalized[i * n + j] = xh;
            out[i * n + j] = xh * gain.data[j] + bias.data[j];
        }
    }
    Ok(LayerNormParts {
        out: Tensor::new(vec![m, n], out)?,
        normalized: Tensor::new(vec![m, n], normalized)?,
        inv_std,
    })
}

pub fn layer_norm(a: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    Ok(layer_norm_parts(a, gain, bias)?.out)
}

/// Pointwise non-linearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.7978845608;
const GELU_A: f64 = 0.044715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "identity" | "none" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation kind `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        };
        f.write_str(s)
    }
}

pub fn activation(a: &Tensor, kind: Activation) -> Tensor {
    a.map(|x| kind.apply(x))
}
