use crate::error::{shape_err, Error, Result};

use super::kernels;
use super::{Scalar, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softplus,
    Relu,
    Sqrt,
    Square,
    /// `log(1 - e^x)`, defined for `x < 0`.
    Log1mexp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    LogSumExp,
    Max,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, T),
    AddScalar(Var),
    ClampMin(Var, T),
    Reduce(ReduceOp, Var, Option<usize>),
    Reshape(Var),
    Slice { x: Var, axis: usize, start: usize },
    Concat { xs: Vec<Var>, axis: usize },
    RepeatRows { x: Var, factor: usize },
    GatherRows { x: Var, rows: Vec<usize> },
    Smooth { x: Var, kernel: Var },
    Unfold { x: Var, width: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of primitive operations.
///
/// Nodes are stored in creation order, which is a topological order, so the
/// backward sweep is a single reverse pass over the node list.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss or does not require a gradient.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Shape view `(outer, axis_len, inner)` for an axis of `shape`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` aligned to `out` (rank-padded on the left), with zero
/// stride on broadcast dimensions.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let pad = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + pad] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Calls `f(out_index, a_index, b_index)` for every element of a broadcast
/// binary operation.
fn for_each_broadcast(
    out: &[usize],
    a: &[usize],
    b: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        (0..n).for_each(|i| f(i, i, i));
        return;
    }
    if nb == 1 {
        (0..n).for_each(|i| f(i, i, 0));
        return;
    }
    if na == 1 {
        (0..n).for_each(|i| f(i, 0, i));
        return;
    }
    // b is a trailing block repeated over leading dimensions of a (bias rows).
    if na == n && out.ends_with(core(b)) {
        (0..n).for_each(|i| f(i, i, i % nb));
        return;
    }
    if nb == n && out.ends_with(core(a)) {
        (0..n).for_each(|i| f(i, i % na, i));
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for i in 0..n {
        f(i, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// `s` without its leading unit dimensions.
fn core(s: &[usize]) -> &[usize] {
    &s[s.iter().position(|&d| d != 1).unwrap_or(s.len())..]
}

fn unary_forward<T: Scalar>(op: UnaryOp, x: T) -> T {
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sigmoid => kernels::sigmoid(x),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Softplus => kernels::softplus(x),
        UnaryOp::Relu => x.max(T::zero()),
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Square => x * x,
        UnaryOp::Log1mexp => kernels::log1mexp(x),
    }
}

/// Derivative of a unary op given its input `x` and output `y`.
fn unary_derivative<T: Scalar>(op: UnaryOp, x: T, y: T) -> T {
    let one = T::one();
    match op {
        UnaryOp::Neg => -one,
        UnaryOp::Sigmoid => y * (one - y),
        UnaryOp::Tanh => one - y * y,
        UnaryOp::Exp => y,
        UnaryOp::Log => one / x,
        UnaryOp::Softplus => kernels::sigmoid(x),
        UnaryOp::Relu => {
            if x > T::zero() {
                one
            } else {
                T::zero()
            }
        }
        UnaryOp::Sqrt => T::lit(0.5) / y,
        UnaryOp::Square => x + x,
        UnaryOp::Log1mexp => -one / (-x).exp_m1(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: false,
        }
    }

    /// Graph that fails with [`Error::NonFinite`] as soon as any op produces
    /// NaN or infinity.
    pub fn with_finite_checks(check_finite: bool) -> Self {
        Self {
            nodes: Vec::new(),
            check_finite,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite(format!("{op:?}")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input; gradients are reported for it.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(shape_err!("matmul inner dims {k} vs {k2}"));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[m, n], out)?, Op::Matmul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[c, r], out)?, Op::Transpose(a), rg)
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(ta.shape(), tb.shape()).ok_or_else(|| {
            shape_err!("cannot broadcast {:?} with {:?}", ta.shape(), tb.shape())
        })?;
        let n: usize = shape.iter().product();
        let mut out = vec![T::zero(); n];
        let (da, db) = (ta.data(), tb.data());
        let f = match op {
            BinaryOp::Add => |x: T, y: T| x + y,
            BinaryOp::Sub => |x: T, y: T| x - y,
            BinaryOp::Mul => |x: T, y: T| x * y,
            BinaryOp::Div => |x: T, y: T| x / y,
        };
        for_each_broadcast(&shape, ta.shape(), tb.shape(), |o, i, j| {
            out[o] = f(da[i], db[j]);
        });
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&shape, out)?, Op::Binary(op, a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let x = self.value(a);
        let bad = match op {
            UnaryOp::Log => x.data().iter().any(|&v| v <= T::zero()),
            UnaryOp::Sqrt => x.data().iter().any(|&v| v < T::zero()),
            UnaryOp::Log1mexp => x.data().iter().any(|&v| v >= T::zero()),
            _ => false,
        };
        if bad {
            return Err(Error::Domain(format!("{op:?} outside its domain")));
        }
        let out = x.map(|v| unary_forward(op, v));
        let rg = self.rg(a);
        self.push(out, Op::Unary(op, a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Softplus, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Relu, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Square, a)
    }

    pub fn log1mexp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log1mexp, a)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|v| v + s);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// `max(x, lo)`; the gradient passes only where `x > lo`.
    pub fn clamp_min(&mut self, a: Var, lo: T) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(lo));
        let rg = self.rg(a);
        self.push(out, Op::ClampMin(a, lo), rg)
    }

    /// Reduction along `axis` (kept with size 1), or over every element when
    /// `axis` is `None` (rank-0 result).
    pub fn reduce(&mut self, op: ReduceOp, a: Var, axis: Option<usize>) -> Result<Var> {
        let x = self.value(a);
        let (outer, len, inner, shape) = match axis {
            None => (1, x.numel(), 1, Vec::new()),
            Some(ax) => {
                if ax >= x.rank() {
                    return Err(shape_err!("axis {ax} invalid for shape {:?}", x.shape()));
                }
                let (o, l, i) = axis_split(x.shape(), ax);
                let mut s = x.shape().to_vec();
                s[ax] = 1;
                (o, l, i, s)
            }
        };
        if len == 0 {
            return Err(shape_err!("reduction over an empty axis"));
        }
        let d = x.data();
        let mut out = vec![T::zero(); outer * inner];
        let mut lane = Vec::with_capacity(len);
        for o in 0..outer {
            for i in 0..inner {
                lane.clear();
                lane.extend((0..len).map(|l| d[(o * len + l) * inner + i]));
                out[o * inner + i] = match op {
                    ReduceOp::Sum => lane.iter().copied().sum(),
                    ReduceOp::Mean => lane.iter().copied().sum::<T>() / T::lit(len as f64),
                    ReduceOp::LogSumExp => kernels::logsumexp(&lane),
                    ReduceOp::Max => lane.iter().copied().fold(T::neg_infinity(), T::max),
                };
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out)?, Op::Reduce(op, a, axis), rg)
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(ReduceOp::Sum, a, axis)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(ReduceOp::Mean, a, axis)
    }

    pub fn logsumexp(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(ReduceOp::LogSumExp, a, axis)
    }

    pub fn max(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(ReduceOp::Max, a, axis)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        self.push(out, Op::Reshape(a), rg)
    }

    /// `len` consecutive entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.rank() || start + len > x.shape()[axis] {
            return Err(shape_err!(
                "slice [{start}, {}) on axis {axis} of {:?}",
                start + len,
                x.shape()
            ));
        }
        let (outer, alen, inner) = axis_split(x.shape(), axis);
        let d = x.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * alen + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out)?, Op::Slice { x: a, axis, start }, rg)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| shape_err!("concat of nothing"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(shape_err!("concat axis {axis} invalid for {:?}", base));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(shape_err!("concat {:?} with {:?} on axis {axis}", base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let len = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = xs.iter().any(|&v| self.rg(v));
        self.push(
            Tensor::new(&shape, out)?,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Nearest-neighbour upsampling of the rows of a matrix: each row is
    /// repeated `factor` times.
    pub fn repeat_rows(&mut self, a: Var, factor: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(r * factor * c);
        for i in 0..r {
            for _ in 0..factor {
                out.extend_from_slice(&d[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(a);
        self.push(
            Tensor::new(&[r * factor, c], out)?,
            Op::RepeatRows { x: a, factor },
            rg,
        )
    }

    /// Picks rows of a matrix by index; indices may repeat or be omitted.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(shape_err!("row {bad} out of range for {r} rows"));
        }
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(&d[i * c..(i + 1) * c]);
        }
        let rg = self.rg(a);
        self.push(
            Tensor::new(&[rows.len(), c], out)?,
            Op::GatherRows { x: a, rows: rows.to_vec() },
            rg,
        )
    }

    /// Filters every column of `x[T×C]` along time with the odd-length
    /// `kernel`, replicating the edge rows as padding.
    pub fn smooth(&mut self, a: Var, kernel: Var) -> Result<Var> {
        let (t, c) = self.value(a).dims2()?;
        let k = self.value(kernel);
        if k.rank() != 1 || k.numel() % 2 == 0 {
            return Err(shape_err!("smoothing kernel must be odd-length 1-d, got {:?}", k.shape()));
        }
        let kw = k.data();
        let half = (kw.len() / 2) as isize;
        let x = self.value(a).data();
        let mut out = vec![T::zero(); t * c];
        for ti in 0..t {
            let o = &mut out[ti * c..(ti + 1) * c];
            for (j, &w) in kw.iter().enumerate() {
                let src = (ti as isize + j as isize - half).clamp(0, t as isize - 1) as usize;
                kernels::axpy(w, &x[src * c..(src + 1) * c], o);
            }
        }
        let rg = self.rg(a) || self.rg(kernel);
        self.push(Tensor::new(&[t, c], out)?, Op::Smooth { x: a, kernel }, rg)
    }

    /// Stacks `width` time-shifted copies of `x[T×C]` side by side (centred,
    /// edge-replicated), giving `[T × width·C]`. A following matmul turns this
    /// into a 1-d convolution along time.
    pub fn unfold(&mut self, a: Var, width: usize) -> Result<Var> {
        let (t, c) = self.value(a).dims2()?;
        if width % 2 == 0 {
            return Err(shape_err!("unfold width must be odd, got {width}"));
        }
        let half = (width / 2) as isize;
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(t * width * c);
        for ti in 0..t {
            for j in 0..width {
                let src = (ti as isize + j as isize - half).clamp(0, t as isize - 1) as usize;
                out.extend_from_slice(&x[src * c..(src + 1) * c]);
            }
        }
        let rg = self.rg(a);
        self.push(
            Tensor::new(&[t, width * c], out)?,
            Op::Unfold { x: a, width },
            rg,
        )
    }

    /// Reverse-mode sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", lv.shape()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(idx);
            let g = match upper[0].as_ref() {
                Some(g) => g.as_slice(),
                None => continue,
            };
            self.propagate(node, g, lower)?;
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| g.map(|g| Tensor::new(n.value.shape(), g)).transpose())
                .collect::<Result<_>>()?,
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        fn buf<'a, T: Scalar>(
            graph: &Graph<T>,
            grads: &'a mut [Option<Vec<T>>],
            v: Var,
        ) -> Option<&'a mut Vec<T>> {
            if !graph.nodes[v.0].requires_grad {
                return None;
            }
            let n = graph.nodes[v.0].value.numel();
            Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
        }

        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let n = self.value(*b).shape()[1];
                if let Some(ga) = buf(self, grads, *a) {
                    let d = kernels::matmul_nt(g, self.value(*b).data(), m, n, k);
                    ga.iter_mut().zip(d).for_each(|(x, y)| *x = *x + y);
                }
                if let Some(gb) = buf(self, grads, *b) {
                    let d = kernels::matmul_tn(self.value(*a).data(), g, m, k, n);
                    gb.iter_mut().zip(d).for_each(|(x, y)| *x = *x + y);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2()?;
                if let Some(ga) = buf(self, grads, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = ga[i * c + j] + g[j * r + i];
                        }
                    }
                }
            }
            Op::Binary(op, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (da, db) = (ta.data(), tb.data());
                let out_shape = node.value.shape();
                let want_a = self.nodes[a.0].requires_grad;
                let want_b = self.nodes[b.0].requires_grad;
                // a and b may be the same node; accumulate into locals first.
                let mut ga = if want_a { vec![T::zero(); da.len()] } else { Vec::new() };
                let mut gb = if want_b { vec![T::zero(); db.len()] } else { Vec::new() };
                for_each_broadcast(out_shape, ta.shape(), tb.shape(), |o, i, j| {
                    let go = g[o];
                    let (x, y) = (da[i], db[j]);
                    let (dx, dy) = match op {
                        BinaryOp::Add => (go, go),
                        BinaryOp::Sub => (go, -go),
                        BinaryOp::Mul => (go * y, go * x),
                        BinaryOp::Div => (go / y, -go * x / (y * y)),
                    };
                    if want_a {
                        ga[i] = ga[i] + dx;
                    }
                    if want_b {
                        gb[j] = gb[j] + dy;
                    }
                });
                if let Some(t) = buf(self, grads, *a) {
                    t.iter_mut().zip(ga).for_each(|(x, y)| *x = *x + y);
                }
                if let Some(t) = buf(self, grads, *b) {
                    t.iter_mut().zip(gb).for_each(|(x, y)| *x = *x + y);
                }
            }
            Op::Unary(op, a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                if let Some(ga) = buf(self, grads, *a) {
                    for i in 0..ga.len() {
                        ga[i] = ga[i] + g[i] * unary_derivative(*op, x[i], y[i]);
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = buf(self, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y * *s);
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(ga) = buf(self, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y);
                }
            }
            Op::ClampMin(a, lo) => {
                let x = self.value(*a).data();
                if let Some(ga) = buf(self, grads, *a) {
                    for i in 0..ga.len() {
                        if x[i] > *lo {
                            ga[i] = ga[i] + g[i];
                        }
                    }
                }
            }
            Op::Reduce(op, a, axis) => {
                let xt = self.value(*a);
                let (outer, len, inner) = match axis {
                    None => (1, xt.numel(), 1),
                    Some(ax) => axis_split(xt.shape(), *ax),
                };
                let x = xt.data();
                let y = node.value.data();
                if let Some(ga) = buf(self, grads, *a) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let oi = o * inner + i;
                            let at = |l: usize| (o * len + l) * inner + i;
                            match op {
                                ReduceOp::Sum => {
                                    (0..len).for_each(|l| ga[at(l)] = ga[at(l)] + g[oi])
                                }
                                ReduceOp::Mean => {
                                    let s = g[oi] / T::lit(len as f64);
                                    (0..len).for_each(|l| ga[at(l)] = ga[at(l)] + s)
                                }
                                ReduceOp::LogSumExp => (0..len).for_each(|l| {
                                    ga[at(l)] = ga[at(l)] + g[oi] * (x[at(l)] - y[oi]).exp()
                                }),
                                ReduceOp::Max => {
                                    let arg = (0..len).find(|&l| x[at(l)] == y[oi]).unwrap_or(0);
                                    ga[at(arg)] = ga[at(arg)] + g[oi];
                                }
                            }
                        }
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, alen, inner) = axis_split(self.value(*x).shape(), *axis);
                let len = node.value.shape()[*axis];
                if let Some(gx) = buf(self, grads, *x) {
                    for o in 0..outer {
                        let dst = (o * alen + start) * inner;
                        let src = o * len * inner;
                        for e in 0..len * inner {
                            gx[dst + e] = gx[dst + e] + g[src + e];
                        }
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in xs {
                    let len = self.value(v).shape()[*axis];
                    if let Some(gv) = buf(self, grads, v) {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for e in 0..len * inner {
                                gv[dst + e] = gv[dst + e] + g[src + e];
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::RepeatRows { x, factor } => {
                let (r, c) = self.value(*x).dims2()?;
                if let Some(gx) = buf(self, grads, *x) {
                    for i in 0..r {
                        for f in 0..*factor {
                            let src = (i * factor + f) * c;
                            for j in 0..c {
                                gx[i * c + j] = gx[i * c + j] + g[src + j];
                            }
                        }
                    }
                }
            }
            Op::GatherRows { x, rows } => {
                let c = self.value(*x).shape()[1];
                if let Some(gx) = buf(self, grads, *x) {
                    for (o, &i) in rows.iter().enumerate() {
                        kernels::axpy(T::one(), &g[o * c..(o + 1) * c], &mut gx[i * c..(i + 1) * c]);
                    }
                }
            }
            Op::Smooth { x, kernel } => {
                let (t, c) = self.value(*x).dims2()?;
                let kw = self.value(*kernel).data().to_vec();
                let xd = self.value(*x).data();
                let half = (kw.len() / 2) as isize;
                let src = |ti: usize, j: usize| {
                    (ti as isize + j as isize - half).clamp(0, t as isize - 1) as usize
                };
                if let Some(gk) = buf(self, grads, *kernel) {
                    for ti in 0..t {
                        let go = &g[ti * c..(ti + 1) * c];
                        for j in 0..kw.len() {
                            let s = src(ti, j);
                            gk[j] = gk[j] + kernels::dot(go, &xd[s * c..(s + 1) * c]);
                        }
                    }
                }
                if let Some(gx) = buf(self, grads, *x) {
                    for ti in 0..t {
                        let go = &g[ti * c..(ti + 1) * c];
                        for (j, &w) in kw.iter().enumerate() {
                            let s = src(ti, j);
                            kernels::axpy(w, go, &mut gx[s * c..(s + 1) * c]);
                        }
                    }
                }
            }
            Op::Unfold { x, width } => {
                let (t, c) = self.value(*x).dims2()?;
                let half = (*width / 2) as isize;
                if let Some(gx) = buf(self, grads, *x) {
                    for ti in 0..t {
                        for j in 0..*width {
                            let s = (ti as isize + j as isize - half).clamp(0, t as isize - 1)
                                as usize;
                            let go = &g[(ti * width + j) * c..(ti * width + j + 1) * c];
                            kernels::axpy(T::one(), go, &mut gx[s * c..(s + 1) * c]);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(2));
        let m = g.constant(t(&[2, 2], &[1.5, -2.0, 0.25, 4.0]));
        let y = g.matmul(i, m).unwrap();
        assert_eq!(g.value(y), g.value(m));
    }

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t(&[2, 1], &[1.0, 1.0]));
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 7.0]);
        assert_eq!(g.shape(y), &[2, 1]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn sigmoid_and_softplus_definitions() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(z).unwrap();
        assert_eq!(g.value(s).item().unwrap(), 0.5);
        let xs: Vec<f64> = (0..=100).map(|i| -5.0 + i as f64 * 0.1).collect();
        let x = g.constant(Tensor::from_vec(xs.clone()));
        let sp = g.softplus(x).unwrap();
        for (v, x) in g.value(sp).data().iter().zip(&xs) {
            assert!((v - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_cases() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let l = g.logsumexp(a, None).unwrap();
        assert!((g.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);
        let b = g.constant(Tensor::from_vec(vec![1000.0, 1000.0]));
        let l = g.logsumexp(b, Some(0)).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 1000.0 + 2f64.ln());
    }

    #[test]
    fn logsumexp_is_max_plus_shifted_sum() {
        let xs = vec![0.3, -1.7, 2.5, 2.49, -40.0];
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(xs.clone()));
        let l = g.logsumexp(x, None).unwrap();
        let m = 2.5f64;
        let expected = m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        assert_eq!(g.value(l).item().unwrap(), expected);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = g.sum(x, None).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn square_gradient_at_three() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item().unwrap(), 6.0);
    }

    #[test]
    fn sum_of_product_gradient_pattern() {
        // d/dA sum(A·B) = 1·Bᵀ: every row of the gradient is the row sums of B.
        let mut g = Graph::new();
        let a = g.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.leaf(t(&[3, 2], &[1.0, -1.0, 2.0, 0.5, -3.0, 4.0]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c, None).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 2.5, 1.0, 0.0, 2.5, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_leaves_values_alone() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Shape(_))));
        let s = g.sum(y, None).unwrap();
        let before = g.value(x).clone();
        g.backward(s).unwrap();
        assert!(g.value(x).bit_eq(&before));
    }

    #[test]
    fn domain_and_axis_errors() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(g.log(x), Err(Error::Domain(_))));
        let y = g.constant(t(&[2], &[-1.0, 0.0]));
        assert!(matches!(g.log1mexp(y), Err(Error::Domain(_))));
        assert!(matches!(g.sum(x, Some(3)), Err(Error::Shape(_))));
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.add(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn finite_checks_flag_overflow() {
        let mut g = Graph::with_finite_checks(true);
        let x = g.constant(Tensor::scalar(1000.0f32));
        assert!(matches!(g.exp(x), Err(Error::NonFinite(_))));
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(1000.0f32));
        assert!(g.exp(x).is_ok());
    }

    #[test]
    fn broadcast_trailing_alignment() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.leaf(t(&[3], &[10.0, 20.0, 30.0]));
        let c = g.leaf(t(&[2, 1], &[100.0, 200.0]));
        let ab = g.add(a, b).unwrap();
        let abc = g.mul(ab, c).unwrap();
        assert_eq!(
            g.value(abc).data(),
            &[1100.0, 2200.0, 3300.0, 2800.0, 5000.0, 7200.0]
        );
        let s = g.sum(abc, None).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[300.0; 3]);
        assert_eq!(grads.get(c).unwrap().data(), &[66.0, 75.0]);
    }

    #[test]
    fn same_node_on_both_sides() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[3.0, -1.0]));
        let y = g.div(x, x).unwrap();
        let s = g.sum(y, None).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn structural_ops() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let s = g.slice(x, 1, 1, 1).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 4.0, 6.0]);
        let c = g.concat(&[x, s], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0, 6.0, 6.0]);
        let r = g.repeat_rows(s, 2).unwrap();
        assert_eq!(g.value(r).data(), &[2.0, 2.0, 4.0, 4.0, 6.0, 6.0]);
        let u = g.unfold(s, 3).unwrap();
        assert_eq!(g.value(u).data(), &[2.0, 2.0, 4.0, 2.0, 4.0, 6.0, 4.0, 6.0, 6.0]);
        let tr = g.transpose(x).unwrap();
        assert_eq!(g.value(tr).data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn averaging_smoother_keeps_constants() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[7, 3], 0.75f64));
        let k = g.constant(Tensor::full(&[5], 0.2));
        let y = g.smooth(x, k).unwrap();
        assert!(g.value(y).data().iter().all(|v| (v - 0.75).abs() < 1e-15));
    }
}
