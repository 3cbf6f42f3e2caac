//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is recorded fresh for every forward pass. Nodes are only ever
//! appended, so node order is already a topological order and backward is a
//! single reverse sweep.

use std::hash::Hasher;

use fnv::FnvHasher;

use super::kernels::{self, Dims};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule bugs, used to confirm that gradient checks
/// catch them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// ReLU passes gradient through without masking.
    ReluIgnoresMask,
    /// `mul` scales the left operand's gradient by itself.
    MulUsesOwnOperand,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Satlu(Var, T),
    Softplus(Var),
    Abs(Var),
    Conv2d { x: Var, w: Var, b: Var, k: usize },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Upsample2(Var),
    Downsample2(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Mean(Var),
    Sum(Var),
    Diff { x: Var, horizontal: bool },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    fault: Option<BackwardFault>,
}

/// Gradients of leaf nodes after [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Testing hook: corrupt one backward rule.
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn dims(&self, op: &'static str, v: Var) -> Result<Dims> {
        let (n, c, h, w) = self
            .value(v)
            .dims4()
            .map_err(|_| Error::invalid(op, format!("expected rank 4, got {:?}", self.shape(v))))?;
        Ok(Dims { n, c, h, w })
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.same_shape(op, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |p, q| p + q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |p, q| p - q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |p, q| p * q)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.any_grad(&[a]);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.any_grad(&[a]);
        self.push(v, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let x = self.value(a);
        if !x.is_finite() {
            return Err(Error::NonFinite {
                what: format!("{name} input"),
            });
        }
        let v = x.map(f);
        let rg = self.any_grad(&[a]);
        Ok(self.push(v, op, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, T::tanh, Op::Tanh(a))
    }

    /// `min(x, cap)`.
    pub fn satlu(&mut self, a: Var, cap: T) -> Result<Var> {
        self.unary("satlu", a, move |x| x.min(cap), Op::Satlu(a, cap))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, T::abs, Op::Abs(a))
    }

    /// Same-padded 2-D cross-correlation. `w` is `[cout, cin, k, k]` with odd
    /// `k`, `b` is `[cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let d = self.dims("conv2d", x)?;
        let ws = self.shape(w).to_vec();
        let [cout, cin, k, k2] = ws[..] else {
            return Err(Error::invalid("conv2d", format!("weight must be rank 4, got {ws:?}")));
        };
        if k != k2 || k % 2 == 0 {
            return Err(Error::invalid("conv2d", format!("kernel must be square and odd, got {k}x{k2}")));
        }
        if cin != d.c {
            return Err(Error::invalid(
                "conv2d",
                format!("input has {} channels, weight expects {cin}", d.c),
            ));
        }
        if self.shape(b) != [cout] {
            return Err(Error::shape("conv2d bias", self.shape(b), &[cout]));
        }
        let mut out = vec![T::zero(); d.n * cout * d.hw()];
        kernels::conv2d_forward(
            self.value(x).data(),
            d,
            self.value(w).data(),
            cout,
            k,
            self.value(b).data(),
            &mut out,
        );
        let v = Tensor::new(&[d.n, cout, d.h, d.w], out)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(v, Op::Conv2d { x, w, b, k }, rg))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let d = self.dims("maxpool2", x)?;
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return Err(Error::invalid(
                "maxpool2",
                format!("spatial extents must be even, got {}x{}", d.h, d.w),
            ));
        }
        let mut out = vec![T::zero(); d.n * d.c * d.hw() / 4];
        let argmax = kernels::maxpool2_forward(self.value(x).data(), d, &mut out);
        let v = Tensor::new(&[d.n, d.c, d.h / 2, d.w / 2], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, Op::MaxPool2 { x, argmax }, rg))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let d = self.dims("upsample2", x)?;
        let mut out = vec![T::zero(); d.n * d.c * d.hw() * 4];
        kernels::upsample2_forward(self.value(x).data(), d, &mut out);
        let v = Tensor::new(&[d.n, d.c, d.h * 2, d.w * 2], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, Op::Upsample2(x), rg))
    }

    /// Nearest-neighbour 2x downsampling (top-left of each block).
    pub fn downsample2(&mut self, x: Var) -> Result<Var> {
        let d = self.dims("downsample2", x)?;
        if d.h % 2 != 0 || d.w % 2 != 0 {
            return Err(Error::invalid(
                "downsample2",
                format!("spatial extents must be even, got {}x{}", d.h, d.w),
            ));
        }
        let mut out = vec![T::zero(); d.n * d.c * d.hw() / 4];
        kernels::downsample2_forward(self.value(x).data(), d, &mut out);
        let v = Tensor::new(&[d.n, d.c, d.h / 2, d.w / 2], out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, Op::Downsample2(x), rg))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::invalid("concat_channels", "no inputs"))?;
        let d0 = self.dims("concat_channels", first)?;
        let mut total = 0;
        for &x in xs {
            let d = self.dims("concat_channels", x)?;
            if (d.n, d.h, d.w) != (d0.n, d0.h, d0.w) {
                return Err(Error::shape("concat_channels", self.shape(first), self.shape(x)));
            }
            total += d.c;
        }
        let hw = d0.hw();
        let mut out = Vec::with_capacity(d0.n * total * hw);
        for i in 0..d0.n {
            for &x in xs {
                let c = self.shape(x)[1];
                out.extend_from_slice(&self.value(x).data()[i * c * hw..(i + 1) * c * hw]);
            }
        }
        let v = Tensor::new(&[d0.n, total, d0.h, d0.w], out)?;
        let rg = self.any_grad(xs);
        Ok(self.push(v, Op::Concat(xs.to_vec()), rg))
    }

    /// Channels `[start, start + len)`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x).channels(start, len)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, Op::Slice { x, start }, rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).mean());
        let rg = self.any_grad(&[x]);
        self.push(v, Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(v, Op::Sum(x), rg)
    }

    /// Forward difference along width (`horizontal`) or height, zero at the
    /// last column/row.
    pub fn diff(&mut self, x: Var, horizontal: bool) -> Result<Var> {
        let d = self.dims("diff", x)?;
        let mut out = vec![T::zero(); self.value(x).numel()];
        kernels::diff_forward(self.value(x).data(), d, horizontal, &mut out);
        let v = Tensor::new(self.shape(x), out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, Op::Diff { x, horizontal }, rg))
    }

    /// Hash of every data-dependent branch taken in the forward pass (ReLU
    /// and clamp masks, `abs` signs, pooling winners). Two evaluations with
    /// equal signatures lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = FnvHasher::default();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) | Op::Abs(x) => {
                    for v in self.value(*x).data() {
                        h.write_u8((*v > T::zero()) as u8);
                    }
                }
                Op::Satlu(x, cap) => {
                    for v in self.value(*x).data() {
                        h.write_u8((*v < *cap) as u8);
                    }
                }
                Op::MaxPool2 { argmax, .. } => {
                    for a in argmax {
                        h.write_u32(*a);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every leaf
    /// that requires them; intermediate gradients are released as soon as
    /// they have been propagated.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| zip_add(d, gd, |x| x));
                self.acc(grads, *b, |d| zip_add(d, gd, |x| x));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| zip_add(d, gd, |x| x));
                self.acc(grads, *b, |d| zip_add(d, gd, |x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let left = if self.fault == Some(BackwardFault::MulUsesOwnOperand) { av } else { bv };
                self.acc(grads, *a, |d| {
                    for ((d, g), y) in d.iter_mut().zip(gd).zip(left) {
                        *d = *d + *g * *y;
                    }
                });
                self.acc(grads, *b, |d| {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(av) {
                        *d = *d + *g * *x;
                    }
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, |d| zip_add(d, gd, |x| x * *s)),
            Op::AddScalar(a) => self.acc(grads, *a, |d| zip_add(d, gd, |x| x)),
            Op::Relu(a) => {
                let xv = self.value(*a).data();
                let leak = self.fault == Some(BackwardFault::ReluIgnoresMask);
                self.acc(grads, *a, |d| {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(xv) {
                        if leak || *x > T::zero() {
                            *d = *d + *g;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let yv = node.value.data();
                self.acc(grads, *a, |d| {
                    for ((d, g), y) in d.iter_mut().zip(gd).zip(yv) {
                        *d = *d + *g * *y * (T::one() - *y);
                    }
                });
            }
            Op::Tanh(a) => {
                let yv = node.value.data();
                self.acc(grads, *a, |d| {
                    for ((d, g), y) in d.iter_mut().zip(gd).zip(yv) {
                        *d = *d + *g * (T::one() - *y * *y);
                    }
                });
            }
            Op::Satlu(a, cap) => {
                let xv = self.value(*a).data();
                self.acc(grads, *a, |d| {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(xv) {
                        if *x < *cap {
                            *d = *d + *g;
                        }
                    }
                });
            }
            Op::Softplus(a) => {
                let xv = self.value(*a).data();
                self.acc(grads, *a, |d| {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(xv) {
                        *d = *d + *g * sigmoid(*x);
                    }
                });
            }
            Op::Abs(a) => {
                let xv = self.value(*a).data();
                self.acc(grads, *a, |d| {
                    for ((d, g), x) in d.iter_mut().zip(gd).zip(xv) {
                        if *x > T::zero() {
                            *d = *d + *g;
                        } else if *x < T::zero() {
                            *d = *d - *g;
                        }
                    }
                });
            }
            Op::Conv2d { x, w, b, k } => {
                let d = self.dims("conv2d", *x).expect("validated in forward");
                let cout = self.shape(*w)[0];
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut gx = self.requires_grad(*x).then(|| take_or_zero(grads, *x, self.shape(*x)));
                let mut gw = self.requires_grad(*w).then(|| take_or_zero(grads, *w, self.shape(*w)));
                let mut gb = self.requires_grad(*b).then(|| take_or_zero(grads, *b, self.shape(*b)));
                kernels::conv2d_backward(
                    xv,
                    d,
                    wv,
                    cout,
                    *k,
                    gd,
                    gx.as_mut().map(|t| t.data_mut()),
                    gw.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                for (v, t) in [(*x, gx), (*w, gw), (*b, gb)] {
                    if let Some(t) = t {
                        grads[v.0] = Some(t);
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => self.acc(grads, *x, |d| {
                for (g, &i) in gd.iter().zip(argmax) {
                    d[i as usize] = d[i as usize] + *g;
                }
            }),
            Op::Upsample2(x) => {
                let dm = self.dims("upsample2", *x).expect("validated in forward");
                self.acc(grads, *x, |d| kernels::upsample2_backward(gd, dm, d));
            }
            Op::Downsample2(x) => {
                let dm = self.dims("downsample2", *x).expect("validated in forward");
                self.acc(grads, *x, |d| kernels::downsample2_backward(gd, dm, d));
            }
            Op::Concat(xs) => {
                let (n, total, h, w) = node.value.dims4().expect("rank 4");
                let hw = h * w;
                let mut offset = 0;
                for &x in xs {
                    let c = self.shape(x)[1];
                    self.acc(grads, x, |d| {
                        for i in 0..n {
                            let src = &gd[(i * total + offset) * hw..(i * total + offset + c) * hw];
                            zip_add(&mut d[i * c * hw..(i + 1) * c * hw], src, |v| v);
                        }
                    });
                    offset += c;
                }
            }
            Op::Slice { x, start } => {
                let (n, len, h, w) = node.value.dims4().expect("rank 4");
                let c = self.shape(*x)[1];
                let hw = h * w;
                self.acc(grads, *x, |d| {
                    for i in 0..n {
                        let dst = &mut d[(i * c + start) * hw..(i * c + start + len) * hw];
                        zip_add(dst, &gd[i * len * hw..(i + 1) * len * hw], |v| v);
                    }
                });
            }
            Op::Mean(x) => {
                let s = gd[0] / T::from_usize(self.value(*x).numel()).unwrap();
                self.acc(grads, *x, |d| d.iter_mut().for_each(|v| *v = *v + s));
            }
            Op::Sum(x) => {
                let s = gd[0];
                self.acc(grads, *x, |d| d.iter_mut().for_each(|v| *v = *v + s));
            }
            Op::Diff { x, horizontal } => {
                let dm = self.dims("diff", *x).expect("validated in forward");
                self.acc(grads, *x, |d| kernels::diff_backward(gd, dm, *horizontal, d));
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.shape(v)));
        f(slot.data_mut());
    }
}

fn take_or_zero<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, shape: &[usize]) -> Tensor<T> {
    grads[v.0].take().unwrap_or_else(|| Tensor::zeros(shape))
}

fn zip_add<T: Scalar>(dst: &mut [T], src: &[T], f: impl Fn(T) -> T) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + f(*s);
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    // ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|)
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[1., 2.]));
        let b = g.constant(t(&[2], &[3., 4.]));
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4., 6.]);
        let z = g.sub(a, a).unwrap();
        assert_eq!(g.value(z).data(), &[0., 0.]);
        let p = g.constant(t(&[2], &[0.5, 2.]));
        let q = g.constant(t(&[2], &[4., 4.]));
        let m = g.mul(p, q).unwrap();
        assert_eq!(g.value(m).data(), &[2., 8.]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn activation_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1., 0., 2.]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0., 0., 2.]);
        let z = g.constant(t(&[1], &[0.]));
        let s = g.sigmoid(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5]);
        let c = g.constant(t(&[1], &[1.7]));
        let sat = g.satlu(c, 1.0).unwrap();
        assert_eq!(g.value(sat).data(), &[1.0]);
        let big = g.constant(t(&[2], &[800., -800.]));
        let sp = g.softplus(big).unwrap();
        assert_eq!(g.value(sp).data(), &[800., 0.]);
    }

    #[test]
    fn non_finite_activation_input_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1], &[f64::NAN]));
        assert!(matches!(g.tanh(x), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1., -2., 3.]));
        let l = g.sum(x);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1., 1., 1.]);

        let mut g = Graph::new();
        let x = g.param(t(&[2], &[-1., 2.]));
        let r = g.relu(x).unwrap();
        let l = g.sum(r);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0., 1.]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1., 2.]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn conv_examples() {
        // identity 1x1 kernel
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
        let w = g.param(t(&[1, 1, 1, 1], &[1.]));
        let b = g.param(t(&[1], &[0.]));
        let y = g.conv2d(x, w, b).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.; 4]);

        // 3x3 ones kernel on constant input
        let c = 0.5;
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 1, 4, 5], c));
        let w = g.constant(Tensor::ones(&[1, 1, 3, 3]));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, w, b).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 4. * c);
        assert_eq!(v[5 + 1], 9. * c);
        assert_eq!(v[4], 4. * c);
        assert_eq!(v[5 + 4], 6. * c);

        // zero input gives broadcast bias
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 2, 2]));
        let w = g.constant(Tensor::ones(&[3, 2, 3, 3]));
        let b = g.constant(t(&[3], &[0.1, 0.2, 0.3]));
        let y = g.conv2d(x, w, b).unwrap();
        assert_eq!(&g.value(y).data()[4..8], &[0.2; 4]);

        // channel mismatch
        let w_bad = g.constant(Tensor::ones(&[3, 1, 3, 3]));
        assert!(g.conv2d(x, w_bad, b).is_err());
    }

    #[test]
    fn maxpool_examples() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
        let y = g.maxpool2(x).unwrap();
        assert_eq!(g.value(y).data(), &[4.]);

        let x = g.param(t(&[1, 1, 2, 2], &[4., 4., 1., 2.]));
        let y = g.maxpool2(x).unwrap();
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1., 0., 0., 0.]);

        let odd = g.constant(Tensor::zeros(&[1, 1, 3, 2]));
        assert!(g.maxpool2(odd).is_err());
    }

    #[test]
    fn upsample_examples() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 1, 1], &[1.]));
        let y = g.upsample2(x).unwrap();
        assert_eq!(g.value(y).data(), &[1.; 4]);
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.]);

        let z = g.constant(Tensor::zeros(&[1, 2, 8, 16]));
        let u = g.upsample2(z).unwrap();
        assert_eq!(g.shape(u), &[1, 2, 16, 32]);
    }

    #[test]
    fn concat_and_slice() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 2, 3, 3]));
        let b = g.constant(Tensor::ones(&[2, 3, 3, 3]));
        let c = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(g.shape(c), &[2, 5, 3, 3]);
        let first = g.slice_channels(c, 0, 2).unwrap();
        assert_eq!(g.value(first), g.value(a));
        let single = g.concat_channels(&[b]).unwrap();
        assert_eq!(g.value(single), g.value(b));
        let bad = g.constant(Tensor::zeros(&[2, 1, 3, 4]));
        assert!(g.concat_channels(&[a, bad]).is_err());
    }

    #[test]
    fn injected_relu_fault_changes_gradient() {
        let mut g = Graph::new();
        g.inject_fault(BackwardFault::ReluIgnoresMask);
        let x = g.param(t(&[2], &[-1., 2.]));
        let r = g.relu(x).unwrap();
        let l = g.sum(r);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1., 1.]);
    }
}
