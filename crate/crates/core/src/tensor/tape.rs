//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks
//! the nodes in exact reverse recording order and accumulates adjoints into
//! every node that requires a gradient. Handles ([`Var`]) are plain indices,
//! so a tape is single-threaded by construction.

use rand::Rng;

use super::kernels::{gemm, gemm_nt, gemm_tn, permute, split_axis};
use super::Tensor;
use crate::error::{contract, dim, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    MulAxis {
        a: Var,
        v: Var,
        axis: usize,
    },
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        rows: usize,
        inner: usize,
        cols: usize,
        trans_b: bool,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    Permute {
        a: Var,
        axes: Vec<usize>,
    },
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    IndexSelect {
        a: Var,
        axis: usize,
        index: Vec<usize>,
    },
    SumAll(Var),
    SumAxis {
        a: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        a: Var,
        mask: Vec<f64>,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    PairwiseAdd {
        p: Var,
        q: Var,
        outer: usize,
        nodes: usize,
        width: usize,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Variance floor used by [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Recording of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Shape produced by combining `a` and `b` under the restricted broadcast
/// rule: equal shapes, a scalar operand, or one shape a suffix of the other
/// (leading batch dimensions).
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let is_suffix = |long: &[usize], short: &[usize]| {
        short.len() <= long.len() && long[long.len() - short.len()..] == *short
    };
    if a == b || numel(b) == 1 || is_suffix(a, b) {
        Ok(a.to_vec())
    } else if numel(a) == 1 || is_suffix(b, a) {
        Ok(b.to_vec())
    } else {
        Err(dim(op, a, b))
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records `t` as a leaf; it participates in differentiation iff
    /// `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), t.requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(dim("constant", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, false, Op::Leaf))
    }

    pub fn param(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(dim("param", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, true, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Snapshot of a node as a detached tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
            requires_grad: false,
            grad: None,
        }
    }

    /// Gradient of the last backward pass with respect to `v`. Only leaves
    /// keep their adjoints after the pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Copies the adjoint of `v` into `t.grad`, accumulating when present.
    pub fn write_grad(&self, v: Var, t: &mut Tensor) -> Result<()> {
        if !t.requires_grad {
            return Ok(());
        }
        if self.shape(v) != t.shape.as_slice() {
            return Err(dim("write_grad", self.shape(v), &t.shape));
        }
        let Some(g) = self.grad(v) else {
            return Ok(());
        };
        match &mut t.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => t.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Clears all adjoints so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, usize, usize)> {
        let shape = broadcast_shape(op, self.shape(a), self.shape(b))?;
        Ok((shape, self.value(a).len(), self.value(b).len()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, na, nb) = self.binary("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&shape)).map(|i| va[i % na] + vb[i % nb]).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, na, nb) = self.binary("sub", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&shape)).map(|i| va[i % na] - vb[i % nb]).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, na, nb) = self.binary("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value = (0..numel(&shape)).map(|i| va[i % na] * vb[i % nb]).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Scale(a, c))
    }

    /// Multiplies `a` by the vector `v` laid along `axis`.
    pub fn mul_axis(&mut self, a: Var, v: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || self.shape(v) != [shape[axis]] {
            return Err(dim("mul_axis", &shape, self.shape(v)));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let (va, vv) = (self.value(a), self.value(v));
        let mut value = Vec::with_capacity(va.len());
        for o in 0..outer {
            for (l, &s) in vv.iter().enumerate().take(len) {
                let base = (o * len + l) * inner;
                value.extend(va[base..base + inner].iter().map(|x| x * s));
            }
        }
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(shape, value, rg, Op::MulAxis { a, v, axis }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self
            .value(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::LeakyRelu(a, slope))
    }

    /// Matrix product over the last two axes.
    ///
    /// `b` is either a 2-D weight `[k, n]` shared across every leading index
    /// of `a: [.., m, k]`, or carries the same leading batch axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes (`b: [.., n, k]`).
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let err = || dim("matmul", &sa, &sb);
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (bk, bn) = {
            let (r, c) = (sb[sb.len() - 2], sb[sb.len() - 1]);
            if trans_b {
                (c, r)
            } else {
                (r, c)
            }
        };
        let k = sa[sa.len() - 1];
        if k != bk {
            return Err(err());
        }
        let (batch, rows) = if sb.len() == 2 {
            (1, numel(&sa[..sa.len() - 1]))
        } else {
            if sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(err());
            }
            (numel(&sa[..sa.len() - 2]), sa[sa.len() - 2])
        };
        let mut out_shape = sa[..sa.len() - 1].to_vec();
        out_shape.push(bn);
        let mut value = vec![0.0; batch * rows * bn];
        {
            let (va, vb) = (self.value(a), self.value(b));
            let b_stride = if sb.len() == 2 { 0 } else { bk * bn };
            for bi in 0..batch {
                let a_blk = &va[bi * rows * k..(bi + 1) * rows * k];
                let b_blk = &vb[bi * b_stride..bi * b_stride + bk * bn];
                let c_blk = &mut value[bi * rows * bn..(bi + 1) * rows * bn];
                if trans_b {
                    gemm_nt(rows, k, bn, a_blk, b_blk, c_blk);
                } else {
                    gemm(rows, k, bn, a_blk, b_blk, c_blk);
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            out_shape,
            value,
            rg,
            Op::MatMul {
                a,
                b,
                batch,
                rows,
                inner: k,
                cols: bn,
                trans_b,
            },
        ))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(contract(format!("softmax axis {axis} invalid for {shape:?}")));
        }
        let va = self.value(a);
        if va.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("softmax"));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let mut value = vec![0.0; va.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let max = (0..len).map(|l| va[at(l)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for l in 0..len {
                    let e = (va[at(l)] - max).exp();
                    value[at(l)] = e;
                    sum += e;
                }
                for l in 0..len {
                    value[at(l)] /= sum;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Softmax { a, axis }))
    }

    /// Softmax over the last axis restricted to positions where `mask` is
    /// true. `mask` has shape `[q, n]` matching the trailing two axes of `a`
    /// and is repeated across leading axes. Masked positions get exactly 0.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(dim("masked_softmax", &shape, &[mask.len()]));
        }
        let n = shape[shape.len() - 1];
        let q = shape[shape.len() - 2];
        if mask.len() != q * n {
            return Err(dim("masked_softmax", &shape, &[mask.len()]));
        }
        let va = self.value(a);
        let mut value = vec![0.0; va.len()];
        for (r, (src, dst)) in va.chunks(n).zip(value.chunks_mut(n)).enumerate() {
            let m = &mask[(r % q) * n..(r % q + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for (x, &keep) in src.iter().zip(m) {
                if keep {
                    if !x.is_finite() {
                        return Err(Error::Numeric("masked_softmax"));
                    }
                    max = max.max(*x);
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut sum = 0.0;
            for ((x, &keep), y) in src.iter().zip(m).zip(dst.iter_mut()) {
                if keep {
                    *y = (x - max).exp();
                    sum += *y;
                }
            }
            dst.iter_mut().for_each(|y| *y /= sum);
        }
        let rg = self.rg(a);
        let axis = shape.len() - 1;
        Ok(self.push(shape, value, rg, Op::Softmax { a, axis }))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&x| x >= shape.len() || std::mem::replace(&mut seen[x], true)) {
            return Err(dim("permute", &shape, axes));
        }
        let value = permute(self.value(a), &shape, axes);
        let out_shape = axes.iter().map(|&x| shape[x]).collect();
        let rg = self.rg(a);
        Ok(self.push(out_shape, value, rg, Op::Permute { a, axes: axes.to_vec() }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(dim("reshape", self.shape(a), shape));
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape(a)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| contract("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(contract(format!("concat axis {axis} invalid for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(dim("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut value = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis];
                let blk = len * inner;
                value.extend_from_slice(&self.value(p)[o * blk..(o + 1) * blk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            shape,
            value,
            rg,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Picks entries `index` along `axis` (repeats allowed).
    pub fn index_select(&mut self, a: Var, axis: usize, index: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || index.iter().any(|&i| i >= shape[axis]) {
            return Err(dim("index_select", &shape, index));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let va = self.value(a);
        let mut value = Vec::with_capacity(outer * index.len() * inner);
        for o in 0..outer {
            for &i in index {
                let src = (o * len + i) * inner;
                value.extend_from_slice(&va[src..src + inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = index.len();
        let rg = self.rg(a);
        Ok(self.push(
            out_shape,
            value,
            rg,
            Op::IndexSelect {
                a,
                axis,
                index: index.to_vec(),
            },
        ))
    }

    /// Contiguous range `start..start+len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let index: Vec<usize> = (start..start + len).collect();
        self.index_select(a, axis, &index)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(vec![], vec![s], rg, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(contract(format!("sum axis {axis} invalid for {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let va = self.value(a);
        let mut value = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &va[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in value[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.rg(a);
        Ok(self.push(out_shape, value, rg, Op::SumAxis { a, axis }))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.sum_axis(a, axis)?;
        let len = self.shape(a)[axis] as f64;
        Ok(self.scale(s, 1.0 / len))
    }

    /// Layer normalisation over the last axis with affine `gain` and `bias`.
    /// A zero-variance row normalises to zeros (variance floored by
    /// [`LAYER_NORM_EPS`]).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| contract("layer_norm of a scalar"))?;
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return Err(dim("layer_norm", &shape, self.shape(gain)));
        }
        let vx = self.value(x);
        let (vg, vb) = (self.value(gain), self.value(bias));
        let rows = vx.len() / n;
        let mut xhat = Vec::with_capacity(vx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut value = Vec::with_capacity(vx.len());
        for row in vx.chunks(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mu) * is;
                xhat.push(h);
                value.push(h * vg[j] + vb[j]);
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            shape,
            value,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout. With `training == false` (or `rate == 0`) this
    /// returns `a` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Dropout { a, mask }))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(dim("mse", self.shape(pred), self.shape(target)));
        }
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.len() as f64;
        let v = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(vec![], vec![v], rg, Op::Mse { pred, target }))
    }

    /// `out[.., i, j, :] = p[.., i, :] + q[.., j, :]` for `p, q: [.., n, d]`.
    pub fn pairwise_add(&mut self, p: Var, q: Var) -> Result<Var> {
        let sp = self.shape(p).to_vec();
        if sp.len() < 2 || sp != self.shape(q) {
            return Err(dim("pairwise_add", &sp, self.shape(q)));
        }
        let width = sp[sp.len() - 1];
        let nodes = sp[sp.len() - 2];
        let outer = numel(&sp[..sp.len() - 2]);
        let (vp, vq) = (self.value(p), self.value(q));
        let mut value = Vec::with_capacity(outer * nodes * nodes * width);
        for o in 0..outer {
            let base = o * nodes * width;
            for i in 0..nodes {
                let pi = &vp[base + i * width..base + (i + 1) * width];
                for j in 0..nodes {
                    let qj = &vq[base + j * width..base + (j + 1) * width];
                    value.extend(pi.iter().zip(qj).map(|(x, y)| x + y));
                }
            }
        }
        let mut shape = sp[..sp.len() - 1].to_vec();
        shape.push(nodes);
        shape.push(width);
        let rg = self.rg(p) || self.rg(q);
        Ok(self.push(
            shape,
            value,
            rg,
            Op::PairwiseAdd {
                p,
                q,
                outer,
                nodes,
                width,
            },
        ))
    }

    /// Propagates d`loss`/d(node) to every node that requires a gradient.
    ///
    /// `loss` must be a scalar. Running a second pass without
    /// [`Tape::reset_grads`] is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(contract("backward on an empty tape"));
        }
        if self.backward_done {
            return Err(contract("backward called twice without reset_grads"));
        }
        if self.value(loss).len() != 1 {
            return Err(contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                grads[i] = None;
            } else if grads[i].is_none() {
                grads[i] = Some(vec![0.0; n.value.len()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[idx];
        let val = |v: Var| nodes[v.0].value.as_slice();
        // adjoint buffer for `v`, or None when `v` needs no gradient
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                if nodes[v.0].requires_grad {
                    Some(grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]))
                } else {
                    None
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(da) = acc!(*a) {
                    let n = da.len();
                    g.iter().enumerate().for_each(|(i, x)| da[i % n] += x);
                }
                if let Some(db) = acc!(*b) {
                    let n = db.len();
                    g.iter().enumerate().for_each(|(i, x)| db[i % n] += sign * x);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (na, nb) = (va.len(), vb.len());
                if let Some(da) = acc!(*a) {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, x)| da[i % na] += x * vb[i % nb]);
                }
                if let Some(db) = acc!(*b) {
                    g.iter()
                        .enumerate()
                        .for_each(|(i, x)| db[i % nb] += x * va[i % na]);
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = acc!(*a) {
                    da.iter_mut().zip(g).for_each(|(d, x)| *d += c * x);
                }
            }
            Op::MulAxis { a, v, axis } => {
                let (outer, len, inner) = split_axis(&nodes[a.0].shape, *axis);
                let (va, vv) = (val(*a), val(*v));
                if let Some(da) = acc!(*a) {
                    for o in 0..outer {
                        for (l, s) in vv.iter().enumerate() {
                            let base = (o * len + l) * inner;
                            for i in base..base + inner {
                                da[i] += g[i] * s;
                            }
                        }
                    }
                }
                if let Some(dv) = acc!(*v) {
                    for o in 0..outer {
                        for (l, d) in dv.iter_mut().enumerate() {
                            let base = (o * len + l) * inner;
                            *d += (base..base + inner).map(|i| g[i] * va[i]).sum::<f64>();
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = acc!(*a) {
                    for ((d, y), x) in da.iter_mut().zip(&node.value).zip(g) {
                        *d += x * y * (1.0 - y);
                    }
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                if let Some(da) = acc!(*a) {
                    for ((d, &z), x) in da.iter_mut().zip(va).zip(g) {
                        if z > 0.0 {
                            *d += x;
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let va = val(*a);
                if let Some(da) = acc!(*a) {
                    for ((d, &z), x) in da.iter_mut().zip(va).zip(g) {
                        *d += if z > 0.0 { *x } else { slope * x };
                    }
                }
            }
            Op::MatMul {
                a,
                b,
                batch,
                rows,
                inner,
                cols,
                trans_b,
            } => {
                let (batch, rows, k, n) = (*batch, *rows, *inner, *cols);
                let (va, vb) = (val(*a), val(*b));
                let b_shared = nodes[b.0].shape.len() == 2;
                let b_stride = if b_shared { 0 } else { k * n };
                if let Some(da) = acc!(*a) {
                    for bi in 0..batch {
                        let g_blk = &g[bi * rows * n..(bi + 1) * rows * n];
                        let b_blk = &vb[bi * b_stride..bi * b_stride + k * n];
                        let d_blk = &mut da[bi * rows * k..(bi + 1) * rows * k];
                        if *trans_b {
                            gemm(rows, n, k, g_blk, b_blk, d_blk);
                        } else {
                            gemm_nt(rows, n, k, g_blk, b_blk, d_blk);
                        }
                    }
                }
                if let Some(db) = acc!(*b) {
                    for bi in 0..batch {
                        let g_blk = &g[bi * rows * n..(bi + 1) * rows * n];
                        let a_blk = &va[bi * rows * k..(bi + 1) * rows * k];
                        let d_blk = &mut db[bi * b_stride..bi * b_stride + k * n];
                        if *trans_b {
                            gemm_tn(rows, n, k, g_blk, a_blk, d_blk);
                        } else {
                            gemm_tn(rows, k, n, a_blk, g_blk, d_blk);
                        }
                    }
                }
            }
            Op::Softmax { a, axis } => {
                if let Some(da) = acc!(*a) {
                    let (outer, len, inner) = split_axis(&node.shape, *axis);
                    let y = &node.value;
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |l: usize| (o * len + l) * inner + i;
                            let s: f64 = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                            for l in 0..len {
                                da[at(l)] += y[at(l)] * (g[at(l)] - s);
                            }
                        }
                    }
                }
            }
            Op::Permute { a, axes } => {
                if let Some(da) = acc!(*a) {
                    let mut inv = vec![0; axes.len()];
                    for (i, &x) in axes.iter().enumerate() {
                        inv[x] = i;
                    }
                    let back = permute(g, &node.shape, &inv);
                    da.iter_mut().zip(back).for_each(|(d, x)| *d += x);
                }
            }
            Op::Reshape(a) => {
                if let Some(da) = acc!(*a) {
                    da.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].shape[*axis];
                    if let Some(dp) = acc!(p) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for t in 0..len * inner {
                                dp[dst + t] += g[src + t];
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::IndexSelect { a, axis, index } => {
                if let Some(da) = acc!(*a) {
                    let (outer, len, inner) = split_axis(&nodes[a.0].shape, *axis);
                    let m = index.len();
                    for o in 0..outer {
                        for (j, &src) in index.iter().enumerate() {
                            let from = (o * m + j) * inner;
                            let to = (o * len + src) * inner;
                            for t in 0..inner {
                                da[to + t] += g[from + t];
                            }
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(da) = acc!(*a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::SumAxis { a, axis } => {
                if let Some(da) = acc!(*a) {
                    let (outer, len, inner) = split_axis(&nodes[a.0].shape, *axis);
                    for o in 0..outer {
                        for l in 0..len {
                            let dst = (o * len + l) * inner;
                            for t in 0..inner {
                                da[dst + t] += g[o * inner + t];
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = *node.shape.last().unwrap_or(&1);
                let vg = val(*gain);
                if let Some(dg) = acc!(*gain) {
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                }
                if let Some(db) = acc!(*bias) {
                    for gr in g.chunks(n) {
                        for j in 0..n {
                            db[j] += gr[j];
                        }
                    }
                }
                if let Some(dx) = acc!(*x) {
                    let nf = n as f64;
                    for (r, (gr, hr)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * vg[j];
                            s1 += dh;
                            s2 += dh * hr[j];
                        }
                        let is = inv_std[r];
                        for j in 0..n {
                            let dh = gr[j] * vg[j];
                            dx[r * n + j] += is / nf * (nf * dh - s1 - hr[j] * s2);
                        }
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(da) = acc!(*a) {
                    for ((d, m), x) in da.iter_mut().zip(mask).zip(g) {
                        *d += m * x;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (val(*pred), val(*target));
                let scale = 2.0 * g[0] / p.len() as f64;
                if let Some(dp) = acc!(*pred) {
                    for ((d, a), b) in dp.iter_mut().zip(p).zip(t) {
                        *d += scale * (a - b);
                    }
                }
                if let Some(dt) = acc!(*target) {
                    for ((d, a), b) in dt.iter_mut().zip(p).zip(t) {
                        *d -= scale * (a - b);
                    }
                }
            }
            Op::PairwiseAdd {
                p,
                q,
                outer,
                nodes: k,
                width,
            } => {
                let (outer, k, w) = (*outer, *k, *width);
                let at = |o: usize, i: usize, j: usize| ((o * k + i) * k + j) * w;
                if let Some(dp) = acc!(*p) {
                    for o in 0..outer {
                        for i in 0..k {
                            let dst = (o * k + i) * w;
                            for j in 0..k {
                                let src = at(o, i, j);
                                for t in 0..w {
                                    dp[dst + t] += g[src + t];
                                }
                            }
                        }
                    }
                }
                if let Some(dq) = acc!(*q) {
                    for o in 0..outer {
                        for i in 0..k {
                            for j in 0..k {
                                let src = at(o, i, j);
                                let dst = (o * k + j) * w;
                                for t in 0..w {
                                    dq[dst + t] += g[src + t];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
