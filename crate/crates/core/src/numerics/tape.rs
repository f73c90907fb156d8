//! Reverse-mode differentiation over a fixed set of tensor primitives.
//!
//! A [`Tape`] records every primitive application in evaluation order.
//! Values are computed eagerly on push; [`Tape::backward`] walks the
//! record in reverse and accumulates one gradient per node that depends on
//! a trainable leaf.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Slice { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Relu(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    MeanAxis(Var, usize),
    StdAxis(Var, usize),
    Conv1dSame(Var, Var),
    Softmax { x: Var, scale: f64 },
    RowAffine { x: Var, scale: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when `var` does
    /// not depend on any trainable leaf.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Only trainable leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// A non-trainable copy of `v`: same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// `x[m, n] + bias[n]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let cols = match xv.shape() {
            [_, c] if bv.shape() == [*c] => *c,
            _ => {
                return Err(Error::shape(
                    "add_bias",
                    format!("{:?} + {:?}", xv.shape(), bv.shape()),
                ))
            }
        };
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (r, b) in row.iter_mut().zip(bv.data()) {
                *r += b;
            }
        }
        let v = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(v, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let v = self.value(x).permute(perm)?;
        Ok(self.push(v, Op::Permute(x, perm.to_vec()), &[x]))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.value(x).ndim() != 2 {
            return Err(Error::shape(
                "transpose",
                format!("expected 2-D, got {:?}", self.shape(x)),
            ));
        }
        self.permute(x, &[1, 0])
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x).slice_axis(axis, start, end)?;
        Ok(self.push(v, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat(&values, axis)?;
        Ok(self.push(
            v,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).relu();
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).abs();
        self.push(v, Op::Abs(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        if self.value(x).is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let v = Tensor::scalar(self.value(x).mean());
        Ok(self.push(v, Op::Mean(x), &[x]))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = self.value(x).mean_axis(axis)?;
        Ok(self.push(v, Op::MeanAxis(x, axis), &[x]))
    }

    pub fn std_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = self.value(x).std_axis(axis)?;
        Ok(self.push(v, Op::StdAxis(x, axis), &[x]))
    }

    pub fn conv1d_same(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let v = self.value(x).conv1d_same(self.value(kernel))?;
        Ok(self.push(v, Op::Conv1dSame(x, kernel), &[x, kernel]))
    }

    /// Softmax over the last axis of `scale * x`.
    pub fn softmax(&mut self, x: Var, scale: f64) -> Result<Var> {
        let v = self.value(x).softmax_last(scale)?;
        Ok(self.push(v, Op::Softmax { x, scale }, &[x]))
    }

    /// `y[r, :] = x[r, :] * scale[r] + shift[r]` over rows of the last axis,
    /// with `scale` and `shift` held constant.
    pub fn row_affine(&mut self, x: Var, scale: Vec<f64>, shift: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.shape().last().copied().unwrap_or(1);
        let rows = xv.len().checked_div(cols).unwrap_or(0);
        if scale.len() != rows || shift.len() != rows {
            return Err(Error::shape(
                "row_affine",
                format!(
                    "{rows} rows in {:?}, got {} scales / {} shifts",
                    xv.shape(),
                    scale.len(),
                    shift.len()
                ),
            ));
        }
        let mut data = xv.data().to_vec();
        for (r, row) in data.chunks_mut(cols.max(1)).enumerate() {
            for v in row.iter_mut() {
                *v = *v * scale[r] + shift[r];
            }
        }
        let v = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(v, Op::RowAffine { x, scale }, &[x]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.mul(self.value(*b))?);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.mul(self.value(*a))?);
                }
            }
            Op::Scale(a, c) => accumulate(&mut grads[a.0], g.scale(*c)),
            Op::AddBias(x, bias) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if self.wants(*bias) {
                    let cols = self.value(*bias).len();
                    let mut sums = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (s, v) in sums.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], Tensor::vector(sums));
                }
            }
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.matmul(&self.value(*b).t()?)?);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], self.value(*a).t()?.matmul(g)?);
                }
            }
            Op::Reshape(x) => accumulate(&mut grads[x.0], g.reshape(self.shape(*x))?),
            Op::Permute(x, perm) => {
                let mut inverse = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inverse[p] = k;
                }
                accumulate(&mut grads[x.0], g.permute(&inverse)?);
            }
            Op::Slice { x, axis, start } => {
                let src_shape = self.shape(*x);
                let outer: usize = src_shape[..*axis].iter().product();
                let inner: usize = src_shape[*axis + 1..].iter().product();
                let (len, width) = (src_shape[*axis], g.shape()[*axis] * inner);
                let mut data = vec![0.0; self.value(*x).len()];
                for o in 0..outer {
                    let base = o * len * inner + start * inner;
                    data[base..base + width].copy_from_slice(&g.data()[o * width..(o + 1) * width]);
                }
                accumulate(&mut grads[x.0], Tensor::new(src_shape.to_vec(), data)?);
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for p in parts {
                    let extent = self.shape(*p)[*axis];
                    if self.wants(*p) {
                        accumulate(&mut grads[p.0], g.slice_axis(*axis, offset, offset + extent)?);
                    }
                    offset += extent;
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gi, &xi)| {
                        if xi > 0.0 {
                            gi
                        } else if xi < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Sum(x) => {
                let gs = g.item()?;
                accumulate(&mut grads[x.0], Tensor::full(self.shape(*x), gs));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gs = g.item()? / xv.len() as f64;
                accumulate(&mut grads[x.0], Tensor::full(xv.shape(), gs));
            }
            Op::MeanAxis(x, axis) => {
                let shape = self.shape(*x);
                let (outer, len, inner) = axis_split(shape, *axis);
                let mut data = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for i in 0..len {
                        for j in 0..inner {
                            data[(o * len + i) * inner + j] = g.data()[o * inner + j] / len as f64;
                        }
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(shape.to_vec(), data)?);
            }
            Op::StdAxis(x, axis) => {
                let xv = self.value(*x);
                let (outer, len, inner) = axis_split(xv.shape(), *axis);
                let mean = xv.mean_axis(*axis)?;
                let std = &node.value;
                let mut data = vec![0.0; xv.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let s = std.data()[o * inner + j];
                        if s == 0.0 {
                            continue;
                        }
                        let coef = g.data()[o * inner + j] / ((len - 1) as f64 * s);
                        let m = mean.data()[o * inner + j];
                        for i in 0..len {
                            let at = (o * len + i) * inner + j;
                            data[at] = coef * (xv.data()[at] - m);
                        }
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Conv1dSame(x, kernel) => {
                let (xv, kv) = (self.value(*x), self.value(*kernel));
                let len = *xv.shape().last().unwrap_or(&0);
                let half = kv.len() / 2;
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                if len > 0 {
                    for ((src, gsrc), dst) in xv
                        .data()
                        .chunks(len)
                        .zip(g.data().chunks(len))
                        .zip(gx.chunks_mut(len))
                    {
                        for (t, &gt) in gsrc.iter().enumerate() {
                            for (k, &w) in kv.data().iter().enumerate() {
                                let pos = t + k;
                                if pos >= half && pos - half < len {
                                    dst[pos - half] += gt * w;
                                    gk[k] += gt * src[pos - half];
                                }
                            }
                        }
                    }
                }
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), gx)?);
                }
                if self.wants(*kernel) {
                    accumulate(&mut grads[kernel.0], Tensor::new(kv.shape().to_vec(), gk)?);
                }
            }
            Op::Softmax { x, scale } => {
                let y = &node.value;
                let len = *y.shape().last().unwrap_or(&0);
                let mut data = vec![0.0; y.len()];
                if len > 0 {
                    for ((yr, gr), dr) in y
                        .data()
                        .chunks(len)
                        .zip(g.data().chunks(len))
                        .zip(data.chunks_mut(len))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yi), &gi) in dr.iter_mut().zip(yr).zip(gr) {
                            *d = scale * yi * (gi - dot);
                        }
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(y.shape().to_vec(), data)?);
            }
            Op::RowAffine { x, scale, .. } => {
                let cols = g.shape().last().copied().unwrap_or(1).max(1);
                let mut data = g.data().to_vec();
                for (r, row) in data.chunks_mut(cols).enumerate() {
                    row.iter_mut().for_each(|v| *v *= scale[r]);
                }
                accumulate(&mut grads[x.0], Tensor::new(g.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

/// Gradients of a scalar `loss` with respect to each of `leaves`. Leaves the
/// loss does not depend on (or that are not trainable) get a zero tensor.
pub fn grad(tape: &Tape, loss: Var, leaves: &[Var]) -> Result<Vec<Tensor>> {
    let grads = tape.backward(loss)?;
    Ok(leaves
        .iter()
        .map(|&v| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
        })
        .collect())
}
