use std::sync::Arc;

use rand::Rng as _;

use super::kernels::{self, sigmoid};
use super::{shape_err, AutodiffError, Real, Tensor};
use crate::par::Execution;
use crate::rng::{rng_from_seed, Rng};

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable function defined outside this module. `forward` runs
/// eagerly when the node is added; `backward` maps the output gradient to
/// one gradient per input (`None` for inputs that need none).
pub trait CustomOp<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>>;
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Transpose(Var),
    Reshape(Var),
    Slice { x: Var, axis: usize, start: usize },
    Concat { xs: Vec<Var>, axis: usize },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, axis: usize, xhat: Vec<T>, rstd: Vec<T> },
    Swish(Var),
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    Glu { x: Var, axis: usize },
    DepthwiseConv1d { x: Var, kernel: Var, bias: Option<Var>, padding: usize },
    Dropout { x: Var, mask: Vec<T> },
    Mean { x: Var, axis: usize },
    Sum(Var),
    L2Normalize { x: Var, axis: usize, norms: Vec<T> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<T> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<T>> },
}

struct Node<T: Real> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation tape.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    rng: Rng,
    check_finite: bool,
    exec: Execution,
}

/// Gradients indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const LN_AXIS_ERR: &str = "layer_norm";

impl<T: Real> Graph<T> {
    /// `seed` drives dropout masks. Finite-value checking defaults to on in
    /// debug builds.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            rng: rng_from_seed(seed),
            check_finite: cfg!(debug_assertions),
            exec: Execution::Parallel,
        }
    }

    pub fn with_check_finite(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest finite magnitude over every value on the tape, and whether
    /// any value is non-finite.
    pub fn max_abs_value(&self) -> (f64, bool) {
        let mut max = 0.0f64;
        let mut non_finite = false;
        for n in &self.nodes {
            for v in n.value.data() {
                let x = v.f64();
                if x.is_finite() {
                    max = max.max(x.abs());
                } else {
                    non_finite = true;
                }
            }
        }
        (max, non_finite)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, name: &'static str, op: Op<T>, parents: &[Var], value: Tensor<T>) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that needs no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(Arc::new(t), false)
    }

    /// Input whose gradient is tracked.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.leaf(Arc::new(t), true)
    }

    /// Shared (parameter) tensor whose gradient is tracked; not copied.
    pub fn shared(&mut self, t: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        self.leaf(t, requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let out = kernels::matmul(self.exec, self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Op::MatMul(a, b), &[a, b], Tensor::new(vec![m, n], out)?)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add", Op::Add(a, b), &[a, b], out)
    }

    /// Adds a row vector (`[n]` or `[1, n]`) to every row of `a` (`[m, n]`).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2("add_row")?;
        if self.value(row).numel() != n {
            return Err(shape_err(
                "add_row",
                format!("{:?} + row {:?}", self.value(a).shape(), self.value(row).shape()),
            ));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, &y) in chunk.iter_mut().zip(r) {
                *x += y;
            }
        }
        self.push("add_row", Op::AddRow(a, row), &[a, row], Tensor::new(vec![m, n], data)?)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", format!("{:?} * {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("mul", Op::Mul(a, b), &[a, b], out)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push("scale", Op::Scale(a, s), &[a], out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2("transpose")?;
        let out = kernels::transpose(self.value(a).data(), r, c);
        self.push("transpose", Op::Transpose(a), &[a], Tensor::new(vec![c, r], out)?)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", t.shape())));
        }
        let out = (*t).clone().with_shape(shape.to_vec());
        self.push("reshape", Op::Reshape(a), &[a], out)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split("slice", axis)?;
        if start >= end || end > n {
            return Err(shape_err("slice", format!("range {start}..{end} on axis of length {n}")));
        }
        let len = end - start;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner;
            data.extend_from_slice(&t.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        self.push("slice", Op::Slice { x, axis, start }, &[x], Tensor::new(shape, data)?)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let ref_shape = self.value(*first).shape().to_vec();
        let (outer, _, inner) = self.value(*first).axis_split("concat", axis)?;
        let mut total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            let compatible = s.len() == ref_shape.len()
                && s.iter().zip(&ref_shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", format!("{ref_shape:?} vs {s:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = ref_shape;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        self.push("concat", Op::Concat { xs: xs.to_vec(), axis }, xs, out)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split("softmax", axis)?;
        let mut out = t.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| o * n * inner + a * inner + i;
                let max = (0..n).map(|a| out[idx(a)]).fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for a in 0..n {
                    let e = (out[idx(a)] - max).exp();
                    out[idx(a)] = e;
                    sum += e;
                }
                for a in 0..n {
                    out[idx(a)] /= sum;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push("softmax", Op::Softmax { x, axis }, &[x], out)
    }

    /// Normalizes along `axis` to zero mean and unit variance, then applies
    /// per-position `gamma` and `beta` (each of length `shape[axis]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, axis: usize, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split(LN_AXIS_ERR, axis)?;
        if self.value(gamma).numel() != n || self.value(beta).numel() != n {
            return Err(shape_err(
                "layer_norm",
                format!(
                    "axis length {n} but gamma {:?}, beta {:?}",
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let eps = T::c(eps);
        let nt = T::c(n as f64);
        let x_data = t.data();
        let mut xhat = vec![T::zero(); x_data.len()];
        let mut out = vec![T::zero(); x_data.len()];
        let mut rstd = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| o * n * inner + a * inner + i;
                let mean = (0..n).map(|a| x_data[idx(a)]).sum::<T>() / nt;
                let var = (0..n).map(|a| (x_data[idx(a)] - mean).powi(2)).sum::<T>() / nt;
                let r = T::one() / (var + eps).sqrt();
                rstd.push(r);
                for a in 0..n {
                    let h = (x_data[idx(a)] - mean) * r;
                    xhat[idx(a)] = h;
                    out[idx(a)] = h * g[a] + b[a];
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            axis,
            xhat,
            rstd,
        };
        self.push("layer_norm", op, &[x, gamma, beta], out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push("sigmoid", Op::Sigmoid(x), &[x], out)
    }

    /// `x · sigmoid(x)`
    pub fn swish(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * sigmoid(v));
        self.push("swish", Op::Swish(x), &[x], out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push("relu", Op::Relu(x), &[x], out)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(T::tanh);
        self.push("tanh", Op::Tanh(x), &[x], out)
    }

    /// Gated linear unit: splits `axis` into halves (a, b), returns `a ⊙ σ(b)`.
    pub fn glu(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split("glu", axis)?;
        if n % 2 != 0 {
            return Err(shape_err("glu", format!("axis length {n} is odd")));
        }
        let h = n / 2;
        let mut out = Vec::with_capacity(outer * h * inner);
        for o in 0..outer {
            let base = o * n * inner;
            for k in 0..h * inner {
                let a = t.data()[base + k];
                let b = t.data()[base + h * inner + k];
                out.push(a * sigmoid(b));
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = h;
        self.push("glu", Op::Glu { x, axis }, &[x], Tensor::new(shape, out)?)
    }

    /// Per-channel 1-D convolution over time. `x` is `[T, C]`, `kernel`
    /// `[K, C]`, optional `bias` `[C]`; `padding` zeros on both ends, so the
    /// output has `T + 2·padding − K + 1` frames.
    pub fn depthwise_conv1d(&mut self, x: Var, kernel: Var, bias: Option<Var>, padding: usize) -> Result<Var> {
        let (t_len, c) = self.value(x).dims2("depthwise_conv1d")?;
        let (k_len, kc) = self.value(kernel).dims2("depthwise_conv1d")?;
        if kc != c {
            return Err(shape_err("depthwise_conv1d", format!("kernel [{k_len}, {kc}] for {c} channels")));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != c {
                return Err(shape_err("depthwise_conv1d", format!("bias {:?} for {c} channels", self.value(b).shape())));
            }
        }
        if t_len + 2 * padding < k_len {
            return Err(shape_err("depthwise_conv1d", format!("{t_len} frames shorter than kernel {k_len}")));
        }
        let out_len = t_len + 2 * padding - k_len + 1;
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let mut out = match bias {
            Some(b) => {
                let bd = self.value(b).data();
                (0..out_len * c).map(|i| bd[i % c]).collect()
            }
            None => vec![T::zero(); out_len * c],
        };
        for t in 0..out_len {
            for j in 0..k_len {
                let src = t + j;
                if src < padding || src - padding >= t_len {
                    continue;
                }
                let xrow = &xd[(src - padding) * c..(src - padding + 1) * c];
                let krow = &kd[j * c..(j + 1) * c];
                let orow = &mut out[t * c..(t + 1) * c];
                for ch in 0..c {
                    orow[ch] += krow[ch] * xrow[ch];
                }
            }
        }
        let mut parents = vec![x, kernel];
        parents.extend(bias);
        let op = Op::DepthwiseConv1d {
            x,
            kernel,
            bias,
            padding,
        };
        self.push("depthwise_conv1d", op, &parents, Tensor::new(vec![out_len, c], out)?)
    }

    /// Inverted dropout. In eval mode (or with rate 0) returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::c(1.0 / (1.0 - rate));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push("dropout", Op::Dropout { x, mask }, &[x], out)
    }

    /// Mean along `axis`; the axis is kept with length 1.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split("mean", axis)?;
        let nt = T::c(n as f64);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..n {
                for i in 0..inner {
                    out[o * inner + i] += t.data()[o * n * inner + a * inner + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= nt);
        let mut shape = t.shape().to_vec();
        shape[axis] = 1;
        self.push("mean", Op::Mean { x, axis }, &[x], Tensor::new(shape, out)?)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push("sum", Op::Sum(x), &[x], Tensor::scalar(s))
    }

    /// Scales each fibre along `axis` to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, n, inner) = t.axis_split("l2_normalize", axis)?;
        let floor = T::c(1e-12);
        let mut out = t.data().to_vec();
        let mut norms = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| o * n * inner + a * inner + i;
                let norm = (0..n).map(|a| out[idx(a)].powi(2)).sum::<T>().sqrt().max(floor);
                norms.push(norm);
                for a in 0..n {
                    out[idx(a)] /= norm;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push("l2_normalize", Op::L2Normalize { x, axis, norms }, &[x], out)
    }

    /// Multi-head scaled dot-product attention. `q` is `[Tq, D]`, `k` and
    /// `v` are `[Tk, D]`; heads split `D` into equal column blocks.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (tq, d) = self.value(q).dims2("attention")?;
        let (tk, dk) = self.value(k).dims2("attention")?;
        let (tv, dv) = self.value(v).dims2("attention")?;
        if dk != d || dv != d || tv != tk {
            return Err(shape_err("attention", format!("q [{tq}, {d}], k [{tk}, {dk}], v [{tv}, {dv}]")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(shape_err("attention", format!("{heads} heads do not divide width {d}")));
        }
        let dh = d / heads;
        let probs = attention_probs(self.exec, self.value(q), self.value(k), heads)?;
        let vd = self.value(v).data();
        let mut out = vec![T::zero(); tq * d];
        for h in 0..heads {
            let vh = cols(vd, tk, d, h * dh, dh);
            let p = &probs[h * tq * tk..(h + 1) * tq * tk];
            let oh = kernels::matmul(self.exec, p, &vh, tq, tk, dh);
            set_cols(&mut out, d, h * dh, dh, &oh);
        }
        let op = Op::Attention {
            q,
            k,
            v,
            heads,
            probs,
        };
        self.push("attention", op, &[q, k, v], Tensor::new(vec![tq, d], out)?)
    }

    pub fn custom(&mut self, inputs: &[Var], op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let values: Vec<&Tensor<T>> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = op.forward(&values)?;
        let name = op.name();
        self.push(
            name,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
            out,
        )
    }

    /// Reverse pass from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(AutodiffError::NotScalar(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(root_value.shape(), T::one()));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, t: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul")?;
                let n = out.shape()[1];
                if self.needs(*a) {
                    let da = kernels::matmul_nt(self.exec, gd, self.value(*b).data(), m, n, k);
                    acc(*a, Tensor::new(vec![m, k], da)?);
                }
                if self.needs(*b) {
                    let db = kernels::matmul_tn(self.value(*a).data(), gd, m, k, n);
                    acc(*b, Tensor::new(vec![k, n], db)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.needs(*row) {
                    let n = out.shape()[1];
                    let mut dr = vec![T::zero(); n];
                    for chunk in gd.chunks(n) {
                        for (d, &x) in dr.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    acc(*row, Tensor::new(self.value(*row).shape().to_vec(), dr)?);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d = gd.iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
                    acc(*a, Tensor::new(ta.shape().to_vec(), d)?);
                }
                if self.needs(*b) {
                    let d = gd.iter().zip(ta.data()).map(|(&x, &y)| x * y).collect();
                    acc(*b, Tensor::new(tb.shape().to_vec(), d)?);
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * *s)),
            Op::Transpose(a) => {
                let (r, c) = out.dims2("transpose")?;
                acc(*a, Tensor::new(vec![c, r], kernels::transpose(gd, r, c))?);
            }
            Op::Reshape(a) => acc(*a, g.clone().with_shape(self.value(*a).shape().to_vec())),
            Op::Slice { x, axis, start } => {
                let tx = self.value(*x);
                let (outer, n, inner) = tx.axis_split("slice", *axis)?;
                let len = out.shape()[*axis];
                let mut d = vec![T::zero(); tx.numel()];
                for o in 0..outer {
                    let dst = o * n * inner + start * inner;
                    d[dst..dst + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*x, Tensor::new(tx.shape().to_vec(), d)?);
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = out.axis_split("concat", *axis)?;
                let mut offset = 0;
                for &v in xs {
                    let tv = self.value(v);
                    let n = tv.shape()[*axis];
                    if self.needs(v) {
                        let mut d = Vec::with_capacity(tv.numel());
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            d.extend_from_slice(&gd[src..src + n * inner]);
                        }
                        acc(v, Tensor::new(tv.shape().to_vec(), d)?);
                    }
                    offset += n;
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = out.axis_split("softmax", *axis)?;
                let y = out.data();
                let mut d = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| o * n * inner + a * inner + i;
                        let dot: T = (0..n).map(|a| gd[idx(a)] * y[idx(a)]).sum();
                        for a in 0..n {
                            d[idx(a)] = y[idx(a)] * (gd[idx(a)] - dot);
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                axis,
                xhat,
                rstd,
            } => {
                let (outer, n, inner) = out.axis_split("layer_norm", *axis)?;
                let gam = self.value(*gamma).data();
                let nt = T::c(n as f64);
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                let mut dx = vec![T::zero(); xhat.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| o * n * inner + a * inner + i;
                        let r = rstd[o * inner + i];
                        let mut sum_dh = T::zero();
                        let mut sum_dh_h = T::zero();
                        for a in 0..n {
                            let gi = gd[idx(a)];
                            dgamma[a] += gi * xhat[idx(a)];
                            dbeta[a] += gi;
                            let dh = gi * gam[a];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[idx(a)];
                        }
                        for a in 0..n {
                            let dh = gd[idx(a)] * gam[a];
                            dx[idx(a)] = r / nt * (nt * dh - sum_dh - xhat[idx(a)] * sum_dh_h);
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape().to_vec(), dx)?);
                acc(*gamma, Tensor::new(self.value(*gamma).shape().to_vec(), dgamma)?);
                acc(*beta, Tensor::new(self.value(*beta).shape().to_vec(), dbeta)?);
            }
            Op::Sigmoid(x) => {
                let d = gd.iter().zip(out.data()).map(|(&g, &y)| g * y * (T::one() - y)).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Swish(x) => {
                let d = gd
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&g, &v)| {
                        let s = sigmoid(v);
                        g * (s + v * s * (T::one() - s))
                    })
                    .collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Relu(x) => {
                let d = gd
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Tanh(x) => {
                let d = gd.iter().zip(out.data()).map(|(&g, &y)| g * (T::one() - y * y)).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Glu { x, axis } => {
                let tx = self.value(*x);
                let (outer, n, inner) = tx.axis_split("glu", *axis)?;
                let h = n / 2;
                let mut d = vec![T::zero(); tx.numel()];
                for o in 0..outer {
                    let base = o * n * inner;
                    for k in 0..h * inner {
                        let a = tx.data()[base + k];
                        let s = sigmoid(tx.data()[base + h * inner + k]);
                        let gi = gd[o * h * inner + k];
                        d[base + k] = gi * s;
                        d[base + h * inner + k] = gi * a * s * (T::one() - s);
                    }
                }
                acc(*x, Tensor::new(tx.shape().to_vec(), d)?);
            }
            Op::DepthwiseConv1d {
                x,
                kernel,
                bias,
                padding,
            } => {
                let (t_len, c) = self.value(*x).dims2("depthwise_conv1d")?;
                let k_len = self.value(*kernel).shape()[0];
                let out_len = out.shape()[0];
                let xd = self.value(*x).data();
                let kd = self.value(*kernel).data();
                let mut dx = vec![T::zero(); t_len * c];
                let mut dk = vec![T::zero(); k_len * c];
                for t in 0..out_len {
                    let grow = &gd[t * c..(t + 1) * c];
                    for j in 0..k_len {
                        let src = t + j;
                        if src < *padding || src - padding >= t_len {
                            continue;
                        }
                        let s = src - padding;
                        for ch in 0..c {
                            dx[s * c + ch] += grow[ch] * kd[j * c + ch];
                            dk[j * c + ch] += grow[ch] * xd[s * c + ch];
                        }
                    }
                }
                acc(*x, Tensor::new(vec![t_len, c], dx)?);
                acc(*kernel, Tensor::new(vec![k_len, c], dk)?);
                if let Some(b) = bias {
                    let mut db = vec![T::zero(); c];
                    for row in gd.chunks(c) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, Tensor::new(self.value(*b).shape().to_vec(), db)?);
                }
            }
            Op::Dropout { x, mask } => {
                let d = gd.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Mean { x, axis } => {
                let tx = self.value(*x);
                let (outer, n, inner) = tx.axis_split("mean", *axis)?;
                let nt = T::c(n as f64);
                let mut d = vec![T::zero(); tx.numel()];
                for o in 0..outer {
                    for a in 0..n {
                        for i in 0..inner {
                            d[o * n * inner + a * inner + i] = gd[o * inner + i] / nt;
                        }
                    }
                }
                acc(*x, Tensor::new(tx.shape().to_vec(), d)?);
            }
            Op::Sum(x) => {
                let tx = self.value(*x);
                acc(*x, Tensor::full(tx.shape(), gd[0]));
            }
            Op::L2Normalize { x, axis, norms } => {
                let (outer, n, inner) = out.axis_split("l2_normalize", *axis)?;
                let y = out.data();
                let mut d = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |a: usize| o * n * inner + a * inner + i;
                        let norm = norms[o * inner + i];
                        let dot: T = (0..n).map(|a| gd[idx(a)] * y[idx(a)]).sum();
                        for a in 0..n {
                            d[idx(a)] = (gd[idx(a)] - y[idx(a)] * dot) / norm;
                        }
                    }
                }
                acc(*x, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (tq, d) = self.value(*q).dims2("attention")?;
                let tk = self.value(*k).shape()[0];
                let dh = d / heads;
                let scale = T::c(1.0 / (dh as f64).sqrt());
                let (qd, kd, vd) = (self.value(*q).data(), self.value(*k).data(), self.value(*v).data());
                let mut dq = vec![T::zero(); tq * d];
                let mut dk = vec![T::zero(); tk * d];
                let mut dv = vec![T::zero(); tk * d];
                for h in 0..*heads {
                    let p = &probs[h * tq * tk..(h + 1) * tq * tk];
                    let goh = cols(gd, tq, d, h * dh, dh);
                    let qh = cols(qd, tq, d, h * dh, dh);
                    let kh = cols(kd, tk, d, h * dh, dh);
                    let vh = cols(vd, tk, d, h * dh, dh);
                    let dvh = kernels::matmul_tn(p, &goh, tq, tk, dh);
                    set_cols(&mut dv, d, h * dh, dh, &dvh);
                    let mut ds = kernels::matmul_nt(self.exec, &goh, &vh, tq, dh, tk);
                    for r in 0..tq {
                        let prow = &p[r * tk..(r + 1) * tk];
                        let drow = &mut ds[r * tk..(r + 1) * tk];
                        let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                        for (dv_, &pv) in drow.iter_mut().zip(prow) {
                            *dv_ = pv * (*dv_ - dot) * scale;
                        }
                    }
                    let dqh = kernels::matmul(self.exec, &ds, &kh, tq, tk, dh);
                    set_cols(&mut dq, d, h * dh, dh, &dqh);
                    let dkh = kernels::matmul_tn(&ds, &qh, tq, tk, dh);
                    set_cols(&mut dk, d, h * dh, dh, &dkh);
                }
                acc(*q, Tensor::new(vec![tq, d], dq)?);
                acc(*k, Tensor::new(vec![tk, d], dk)?);
                acc(*v, Tensor::new(vec![tk, d], dv)?);
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = op.backward(&values, out, g);
                for (v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        if gi.shape() != self.value(*v).shape() {
                            return Err(shape_err(op.name(), "custom backward returned a mis-shaped gradient"));
                        }
                        acc(*v, gi);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Column block `[c0, c0 + w)` of a row-major `[rows × width]` matrix.
fn cols<T: Real>(x: &[T], rows: usize, width: usize, c0: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * w);
    for r in 0..rows {
        out.extend_from_slice(&x[r * width + c0..r * width + c0 + w]);
    }
    out
}

fn set_cols<T: Real>(x: &mut [T], width: usize, c0: usize, w: usize, block: &[T]) {
    for (r, src) in block.chunks(w).enumerate() {
        x[r * width + c0..r * width + c0 + w].copy_from_slice(src);
    }
}

fn attention_probs<T: Real>(exec: Execution, q: &Tensor<T>, k: &Tensor<T>, heads: usize) -> Result<Vec<T>> {
    let (tq, d) = q.dims2("attention")?;
    let (tk, _) = k.dims2("attention")?;
    let dh = d / heads;
    let scale = T::c(1.0 / (dh as f64).sqrt());
    let mut probs = Vec::with_capacity(heads * tq * tk);
    for h in 0..heads {
        let qh = cols(q.data(), tq, d, h * dh, dh);
        let kh = cols(k.data(), tk, d, h * dh, dh);
        let mut s = kernels::matmul_nt(exec, &qh, &kh, tq, dh, tk);
        for row in s.chunks_mut(tk) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v * scale));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v * scale - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        probs.extend(s);
    }
    Ok(probs)
}

/// Attention weight matrices `[heads][Tq × Tk]` for inspection and tests.
pub fn attention_weights<T: Real>(q: &Tensor<T>, k: &Tensor<T>, heads: usize) -> Result<Vec<Tensor<T>>> {
    let (tq, d) = q.dims2("attention")?;
    let (tk, dk) = k.dims2("attention")?;
    if d != dk || heads == 0 || d % heads != 0 {
        return Err(shape_err("attention", format!("q [{tq}, {d}], k [{tk}, {dk}], {heads} heads")));
    }
    let probs = attention_probs(Execution::Sequential, q, k, heads)?;
    probs
        .chunks(tq * tk)
        .map(|c| Tensor::new(vec![tq, tk], c.to_vec()))
        .collect()
}
