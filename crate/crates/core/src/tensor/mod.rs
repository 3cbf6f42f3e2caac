//! Dense tensors, a define-by-run autodiff graph, and the handful of
//! neural-network primitives the predictive-coding stack is built from.
//!
//! Values live in row-major order and are interpreted as
//! `batch x channels x height x width` when rank 4. There is no
//! broadcasting: every binary op requires identical shapes.

mod graph;
mod kernels;
mod optim;
mod resize;
mod scalar;

pub use graph::{BackwardFault, Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig, ParamStore};
pub use resize::bilinear_resize;
pub use scalar::Scalar;

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        validate_shape(shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} holds {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        validate_shape(shape).expect("valid shape");
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Uniform values in `[-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = T::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Extents as `(n, c, h, w)`; fails unless rank is 4.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::invalid(
                "dims4",
                format!("expected rank-4 tensor, got shape {:?}", self.shape),
            )),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.numel()).unwrap()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        (self.shape == other.shape).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max)
        })
    }

    /// Copies sample `n` (first axis) out as a tensor with leading extent 1.
    pub fn sample(&self, n: usize) -> Result<Self> {
        let per = self.numel() / self.shape[0];
        if n >= self.shape[0] {
            return Err(Error::invalid(
                "sample",
                format!("index {n} out of range for {:?}", self.shape),
            ));
        }
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Self {
            shape,
            data: self.data[n * per..(n + 1) * per].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along the first axis.
    pub fn stack(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("stack", "no inputs"))?;
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &p.shape));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] *= parts.len();
        Self::new(&shape, data)
    }

    /// Channel range `[start, start + len)` of a rank-4 tensor.
    pub fn channels(&self, start: usize, len: usize) -> Result<Self> {
        let (n, c, h, w) = self.dims4()?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(
                "channels",
                format!("range {start}..{} outside {c} channels", start + len),
            ));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * len * hw);
        for i in 0..n {
            let base = (i * c + start) * hw;
            data.extend_from_slice(&self.data[base..base + len * hw]);
        }
        Self::new(&[n, len, h, w], data)
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::invalid(
            "tensor",
            format!("rank must be 1..={MAX_RANK}, got {shape:?}"),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(
            "tensor",
            format!("zero extent in {shape:?}"),
        ));
    }
    Ok(())
}
