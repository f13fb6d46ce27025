use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::kernels as k;
use super::kernels::Pad;
use super::tensor::{NodeRef, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// One recorded operation. Inputs are stored as tensors (cheap Arc clones),
/// which keeps every value needed by the backward rules alive.
#[derive(Debug)]
enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    Min(Tensor, Tensor),
    Max(Tensor, Tensor),
    Relu(Tensor),
    Softplus(Tensor),
    Abs(Tensor),
    Square(Tensor),
    Sqrt(Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    MatmulLast { x: Tensor, mat: Tensor, batch: usize, m: usize, n: usize },
    Conv1d { x: Tensor, kernel: Tensor, bias: Tensor, pad: Pad, c_in: usize, c_out: usize, k: usize, len: usize },
    Sum(Tensor),
    Mean(Tensor),
    Slice { x: Tensor, outer: usize, axis_len: usize, inner: usize, start: usize, take: usize },
    Concat { parts: Vec<Tensor>, outer: usize, inner: usize },
    Reshape(Tensor),
}

#[derive(Debug)]
struct Node {
    op: Op,
    out: Tensor,
}

#[derive(Debug, Default)]
struct Inner {
    nodes: Vec<Node>,
    params: Vec<usize>,
    consumed: bool,
}

/// Append-only record of tensor operations for reverse-mode differentiation.
///
/// Node inputs always precede the node, so the backward pass is a single
/// reverse sweep. Constants (tensors without a node) are never recorded;
/// a subgraph built purely from constants stays off the tape even while
/// recording is enabled.
pub struct Tape {
    id: u64,
    inner: RefCell<Inner>,
    recording: std::cell::Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            inner: RefCell::new(Inner::default()),
            recording: std::cell::Cell::new(true),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording.get()
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn num_params(&self) -> usize {
        self.inner.borrow().params.len()
    }

    /// Bytes held by node output buffers. Dropping the tape releases them,
    /// so successive batches on fresh tapes occupy the same peak storage.
    pub fn node_bytes(&self) -> usize {
        self.inner
            .borrow()
            .nodes
            .iter()
            .map(|n| n.out.len() * std::mem::size_of::<f64>())
            .sum()
    }

    /// Run `f` with recording disabled. Forward values are bit-identical to
    /// the recorded path: the same kernels run either way.
    pub fn paused<R>(&self, f: impl FnOnce() -> R) -> R {
        struct Guard<'a>(&'a std::cell::Cell<bool>, bool);
        impl Drop for Guard<'_> {
            fn drop(&mut self) {
                self.0.set(self.1);
            }
        }
        let guard = Guard(&self.recording, self.recording.get());
        self.recording.set(false);
        let out = f();
        drop(guard);
        out
    }

    /// Register `t`'s data as a trainable leaf on this tape.
    pub fn param(&self, t: &Tensor) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        let out = Tensor::with_node(
            t.shape().to_vec(),
            t.data().to_vec(),
            Some(NodeRef { tape_id: self.id, node: idx }),
        );
        inner.nodes.push(Node { op: Op::Leaf, out: out.clone() });
        inner.params.push(idx);
        out
    }

    /// Validate input provenance; returns whether any input is recorded here.
    fn check_inputs(&self, inputs: &[&Tensor]) -> Result<bool> {
        let mut any = false;
        for t in inputs {
            if let Some(nr) = t.node {
                if nr.tape_id != self.id {
                    return Err(Error::TapeMismatch);
                }
                any = true;
            }
        }
        Ok(any)
    }

    fn emit(&self, recorded: bool, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        if !(recorded && self.recording.get()) {
            return Tensor::from_vec(shape, data);
        }
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        let out =
            Tensor::with_node(shape, data, Some(NodeRef { tape_id: self.id, node: idx }));
        inner.nodes.push(Node { op, out: out.clone() });
        out
    }

    fn binary(
        &self,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(Tensor, Tensor) -> Op,
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "elementwise op on shapes {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let rec = self.check_inputs(&[a, b])?;
        let data = k::ew2(a.data(), b.data(), f);
        Ok(self.emit(rec, op(a.clone(), b.clone()), a.shape().to_vec(), data))
    }

    fn unary(
        &self,
        a: &Tensor,
        f: impl Fn(f64) -> f64,
        op: impl Fn(Tensor) -> Op,
    ) -> Result<Tensor> {
        let rec = self.check_inputs(&[a])?;
        let data = k::ew1(a.data(), f);
        Ok(self.emit(rec, op(a.clone()), a.shape().to_vec(), data))
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| x / y, Op::Div)
    }

    /// Elementwise minimum; gradient goes to the attained argument,
    /// to the first argument on exact ties.
    pub fn min(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| if x <= y { x } else { y }, Op::Min)
    }

    /// Elementwise maximum; ties favor the first argument.
    pub fn max(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary(a, b, |x, y| if x >= y { x } else { y }, Op::Max)
    }

    pub fn relu(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn softplus(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, k::softplus, Op::Softplus)
    }

    pub fn abs(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, f64::abs, Op::Abs)
    }

    pub fn square(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn sqrt(&self, a: &Tensor) -> Result<Tensor> {
        self.unary(a, f64::sqrt, Op::Sqrt)
    }

    pub fn scale(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let rec = self.check_inputs(&[a])?;
        let data = k::ew1(a.data(), |x| c * x);
        Ok(self.emit(rec, Op::Scale(a.clone(), c), a.shape().to_vec(), data))
    }

    pub fn add_scalar(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let rec = self.check_inputs(&[a])?;
        let data = k::ew1(a.data(), |x| x + c);
        Ok(self.emit(rec, Op::AddScalar(a.clone()), a.shape().to_vec(), data))
    }

    pub fn neg(&self, a: &Tensor) -> Result<Tensor> {
        self.scale(a, -1.0)
    }

    /// Contract the last axis of `x` with matrix `mat`:
    /// x[..., m] · mat[m, n] -> out[..., n].
    pub fn matmul_last(&self, x: &Tensor, mat: &Tensor) -> Result<Tensor> {
        if mat.shape().len() != 2 {
            return Err(Error::Shape(format!("matmul matrix must be rank 2, got {:?}", mat.shape())));
        }
        let (m, n) = (mat.shape()[0], mat.shape()[1]);
        let xs = x.shape();
        if xs.is_empty() || xs[xs.len() - 1] != m {
            return Err(Error::Shape(format!(
                "matmul_last: x shape {:?} incompatible with mat {:?}",
                xs,
                mat.shape()
            )));
        }
        let batch: usize = xs[..xs.len() - 1].iter().product();
        let rec = self.check_inputs(&[x, mat])?;
        let data = k::matmul_last(x.data(), batch, m, mat.data(), n);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = n;
        Ok(self.emit(rec, Op::MatmulLast { x: x.clone(), mat: mat.clone(), batch, m, n }, shape, data))
    }

    /// Same-length 1D convolution: x[c_in, len] * kernel[c_out, c_in, k] + bias.
    pub fn conv1d(&self, x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: Pad) -> Result<Tensor> {
        let xs = x.shape();
        let ks = kernel.shape();
        if xs.len() != 2 || ks.len() != 3 || bias.shape().len() != 1 {
            return Err(Error::Shape(format!(
                "conv1d expects x[c_in,len], kernel[c_out,c_in,k], bias[c_out]; got {:?} {:?} {:?}",
                xs,
                ks,
                bias.shape()
            )));
        }
        let (c_in, len) = (xs[0], xs[1]);
        let (c_out, kc_in, ksz) = (ks[0], ks[1], ks[2]);
        if kc_in != c_in || bias.shape()[0] != c_out || ksz % 2 == 0 {
            return Err(Error::Shape(format!(
                "conv1d shape mismatch: x {:?}, kernel {:?}, bias {:?}",
                xs,
                ks,
                bias.shape()
            )));
        }
        let rec = self.check_inputs(&[x, kernel, bias])?;
        let data = k::conv1d(x.data(), c_in, len, kernel.data(), c_out, ksz, bias.data(), pad);
        Ok(self.emit(
            rec,
            Op::Conv1d {
                x: x.clone(),
                kernel: kernel.clone(),
                bias: bias.clone(),
                pad,
                c_in,
                c_out,
                k: ksz,
                len,
            },
            vec![c_out, len],
            data,
        ))
    }

    /// Sum all entries to a scalar.
    pub fn sum(&self, a: &Tensor) -> Result<Tensor> {
        let rec = self.check_inputs(&[a])?;
        let total = a.data().iter().sum();
        Ok(self.emit(rec, Op::Sum(a.clone()), vec![], vec![total]))
    }

    /// Mean of all entries as a scalar.
    pub fn mean(&self, a: &Tensor) -> Result<Tensor> {
        if a.is_empty() {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let rec = self.check_inputs(&[a])?;
        let total: f64 = a.data().iter().sum();
        let v = total / a.len() as f64;
        Ok(self.emit(rec, Op::Mean(a.clone()), vec![], vec![v]))
    }

    fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    /// Take `take` entries starting at `start` along `axis`.
    pub fn slice(&self, a: &Tensor, axis: usize, start: usize, take: usize) -> Result<Tensor> {
        let shape = a.shape();
        if axis >= shape.len() || start + take > shape[axis] {
            return Err(Error::Shape(format!(
                "slice axis {} range {}..{} out of shape {:?}",
                axis,
                start,
                start + take,
                shape
            )));
        }
        let (outer, axis_len, inner) = Self::axis_split(shape, axis);
        let rec = self.check_inputs(&[a])?;
        let src = a.data();
        let mut data = Vec::with_capacity(outer * take * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            data.extend_from_slice(&src[base..base + take * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = take;
        Ok(self.emit(
            rec,
            Op::Slice { x: a.clone(), outer, axis_len, inner, start, take },
            out_shape,
            data,
        ))
    }

    /// Concatenate tensors along `axis`; all other extents must agree.
    pub fn concat(&self, axis: usize, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero tensors".into()));
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::Shape(format!("concat axis {} out of rank {}", axis, first.len())));
        }
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::Shape(format!(
                    "concat shapes {:?} vs {:?} along axis {}",
                    first, s, axis
                )));
            }
            axis_total += s[axis];
        }
        let refs: Vec<&Tensor> = parts.to_vec();
        let rec = self.check_inputs(&refs)?;
        let (outer, _, inner) = Self::axis_split(first, axis);
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for p in parts {
                let alen = p.shape()[axis];
                let src = p.data();
                let base = o * alen * inner;
                data.extend_from_slice(&src[base..base + alen * inner]);
            }
        }
        let mut out_shape = first.to_vec();
        out_shape[axis] = axis_total;
        let owned: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(self.emit(rec, Op::Concat { parts: owned, outer, inner }, out_shape, data))
    }

    /// Reinterpret the data with a new shape of identical length.
    pub fn reshape(&self, a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != a.len() {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {:?} changes element count",
                a.shape(),
                shape
            )));
        }
        let rec = self.check_inputs(&[a])?;
        Ok(self.emit(rec, Op::Reshape(a.clone()), shape, a.data().to_vec()))
    }

    /// Reverse sweep from a scalar loss; returns gradients for every leaf
    /// registered with [`Tape::param`]. Consumes the tape — a second call
    /// is an error.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        let loss_node = match loss.node {
            Some(nr) if nr.tape_id == self.id => nr.node,
            Some(_) => return Err(Error::TapeMismatch),
            None => {
                return Err(Error::Shape(
                    "loss is a constant with no recorded dependency on tape parameters".into(),
                ))
            }
        };
        if loss.len() != 1 {
            return Err(Error::NonScalarLoss(loss.shape().to_vec()));
        }
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::TapeConsumed);
        }
        inner.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss_node + 1];
        grads[loss_node] = Some(vec![1.0]);

        for idx in (0..=loss_node).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &inner.nodes[idx];
            backprop_node(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g); // keep leaf gradients for the result map
            }
        }

        let mut by_node = HashMap::new();
        for &pidx in &inner.params {
            let leaf = &inner.nodes[pidx].out;
            let shape = leaf.shape().to_vec();
            let data = if pidx <= loss_node {
                grads[pidx].take().unwrap_or_else(|| vec![0.0; leaf.len()])
            } else {
                vec![0.0; leaf.len()]
            };
            by_node.insert(pidx, Tensor::from_vec(shape, data));
        }
        Ok(Gradients { tape_id: self.id, by_node })
    }
}

/// Gradients of a scalar loss with respect to the tape's parameter leaves.
pub struct Gradients {
    tape_id: u64,
    by_node: HashMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient for a tensor returned by [`Tape::param`].
    pub fn get(&self, param: &Tensor) -> Option<&Tensor> {
        let nr = param.node?;
        if nr.tape_id != self.tape_id {
            return None;
        }
        self.by_node.get(&nr.node)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: &Tensor, contrib: impl Fn(usize) -> f64) {
    let Some(nr) = target.node else { return };
    let slot = grads[nr.node].get_or_insert_with(|| vec![0.0; target.len()]);
    for (i, s) in slot.iter_mut().enumerate() {
        *s += contrib(i);
    }
}

fn accumulate_at(grads: &mut [Option<Vec<f64>>], target: &Tensor, values: &[f64]) {
    let Some(nr) = target.node else { return };
    let slot = grads[nr.node].get_or_insert_with(|| vec![0.0; target.len()]);
    for (s, v) in slot.iter_mut().zip(values) {
        *s += v;
    }
}

fn backprop_node(node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, a, |i| g[i]);
            accumulate(grads, b, |i| g[i]);
        }
        Op::Sub(a, b) => {
            accumulate(grads, a, |i| g[i]);
            accumulate(grads, b, |i| -g[i]);
        }
        Op::Mul(a, b) => {
            let (ad, bd) = (a.data(), b.data());
            accumulate(grads, a, |i| g[i] * bd[i]);
            accumulate(grads, b, |i| g[i] * ad[i]);
        }
        Op::Div(a, b) => {
            let bd = b.data();
            let out = node.out.data();
            accumulate(grads, a, |i| g[i] / bd[i]);
            accumulate(grads, b, |i| -g[i] * out[i] / bd[i]);
        }
        Op::Min(a, b) => {
            let (ad, bd) = (a.data(), b.data());
            accumulate(grads, a, |i| if ad[i] <= bd[i] { g[i] } else { 0.0 });
            accumulate(grads, b, |i| if ad[i] <= bd[i] { 0.0 } else { g[i] });
        }
        Op::Max(a, b) => {
            let (ad, bd) = (a.data(), b.data());
            accumulate(grads, a, |i| if ad[i] >= bd[i] { g[i] } else { 0.0 });
            accumulate(grads, b, |i| if ad[i] >= bd[i] { 0.0 } else { g[i] });
        }
        Op::Relu(a) => {
            let ad = a.data();
            accumulate(grads, a, |i| if ad[i] > 0.0 { g[i] } else { 0.0 });
        }
        Op::Softplus(a) => {
            let ad = a.data();
            accumulate(grads, a, |i| g[i] * k::sigmoid(ad[i]));
        }
        Op::Abs(a) => {
            let ad = a.data();
            accumulate(grads, a, |i| {
                if ad[i] > 0.0 {
                    g[i]
                } else if ad[i] < 0.0 {
                    -g[i]
                } else {
                    0.0
                }
            });
        }
        Op::Square(a) => {
            let ad = a.data();
            accumulate(grads, a, |i| 2.0 * ad[i] * g[i]);
        }
        Op::Sqrt(a) => {
            let out = node.out.data();
            accumulate(grads, a, |i| g[i] / (2.0 * out[i]));
        }
        Op::Scale(a, c) => {
            accumulate(grads, a, |i| c * g[i]);
        }
        Op::AddScalar(a) => {
            accumulate(grads, a, |i| g[i]);
        }
        Op::MatmulLast { x, mat, batch, m, n } => {
            if x.node.is_some() {
                let gx = k::matmul_last_grad_x(g, *batch, *n, mat.data(), *m);
                accumulate_at(grads, x, &gx);
            }
            if mat.node.is_some() {
                let gm = k::matmul_last_grad_mat(x.data(), g, *batch, *m, *n);
                accumulate_at(grads, mat, &gm);
            }
        }
        Op::Conv1d { x, kernel, bias, pad, c_in, c_out, k: ksz, len } => {
            let (gx, gk, gb) =
                k::conv1d_backward(x.data(), *c_in, *len, kernel.data(), *c_out, *ksz, g, *pad);
            accumulate_at(grads, x, &gx);
            accumulate_at(grads, kernel, &gk);
            accumulate_at(grads, bias, &gb);
        }
        Op::Sum(a) => {
            accumulate(grads, a, |_| g[0]);
        }
        Op::Mean(a) => {
            let inv = 1.0 / a.len() as f64;
            accumulate(grads, a, |_| g[0] * inv);
        }
        Op::Slice { x, outer, axis_len, inner, start, take } => {
            let Some(nr) = x.node else { return };
            let slot = grads[nr.node].get_or_insert_with(|| vec![0.0; x.len()]);
            for o in 0..*outer {
                let src = o * take * inner;
                let dst = (o * axis_len + start) * inner;
                for i in 0..take * inner {
                    slot[dst + i] += g[src + i];
                }
            }
        }
        Op::Concat { parts, outer, inner } => {
            // Per outer index, parts occupy consecutive blocks of the output row.
            let row_len: usize = parts.iter().map(|p| p.len() / outer).sum();
            for o in 0..*outer {
                let mut offset = 0;
                let row_base = o * row_len;
                for p in parts {
                    let alen = p.len() / (outer * inner);
                    if p.node.is_some() {
                        let seg = &g[row_base + offset..row_base + offset + alen * inner];
                        let nr = p.node.unwrap();
                        let slot = grads[nr.node].get_or_insert_with(|| vec![0.0; p.len()]);
                        let dst = o * alen * inner;
                        for (i, v) in seg.iter().enumerate() {
                            slot[dst + i] += v;
                        }
                    }
                    offset += alen * inner;
                }
            }
        }
        Op::Reshape(a) => {
            accumulate(grads, a, |i| g[i]);
        }
    }
}

/// Run `n_steps` applications of `step` with recording disabled.
///
/// Forward values are bit-identical to a recorded rollout because the same
/// numeric kernels execute in both modes.
pub fn checkpoint_free_forward<S, E, F>(
    tape: &Tape,
    state: S,
    n_steps: usize,
    mut step: F,
) -> std::result::Result<S, E>
where
    F: FnMut(&Tape, S) -> std::result::Result<S, E>,
{
    tape.paused(|| {
        let mut s = state;
        for _ in 0..n_steps {
            s = step(tape, s)?;
        }
        Ok(s)
    })
}
