use std::cell::Cell;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use super::tensor::{c, Scalar, Tensor};
use super::NdError;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

thread_local! {
    static BACKWARD_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of `Tape::backward` calls made on the current thread.
pub fn backward_invocations() -> u64 {
    BACKWARD_CALLS.with(Cell::get)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        axis: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    MaskedFill {
        x: Var,
        mask: Vec<bool>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    GatherRows {
        x: Var,
        idx: Vec<Option<u32>>,
    },
    IndexAdd {
        x: Var,
        src: Vec<u32>,
        dst: Vec<u32>,
        weight: Vec<T>,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    SumAll(Var),
    Reshape(Var),
    Transpose(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        coef: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records executed primitives so gradients can be propagated in reverse.
///
/// Every op appends one entry whose inputs are earlier entries, so reverse
/// iteration over the entry list is a valid topological order.
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> NdError {
    NdError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<(), NdError> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(NdError::NotOnTape);
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.index()].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.index()].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var { tape: self.id, idx }
    }

    fn grad_of(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.index()].needs_grad)
    }

    /// Insert a leaf; `requires_grad` marks it as a differentiation target.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn two_d(&self, op: &'static str, v: Var) -> Result<(usize, usize), NdError> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(mismatch(op, s, &[]));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.check(a)?;
        self.check(b)?;
        let (m, k) = self.two_d("matmul", a)?;
        let (k2, n) = self.two_d("matmul", b)?;
        if k != k2 {
            return Err(mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
        );
        let ng = self.grad_of(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), ng))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, NdError> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        let ng = self.grad_of(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let ng = self.grad_of(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    fn row_broadcast(
        &mut self,
        op: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, NdError> {
        self.check(a)?;
        self.check(row)?;
        let (m, n) = self.two_d(op, a)?;
        if self.shape(row) != [1, n] {
            return Err(mismatch(op, self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data();
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(src[i * n..(i + 1) * n].iter().zip(r).map(|(&x, &y)| f(x, y)));
        }
        Tensor::new(&[m, n], out)
    }

    /// Row-wise bias addition: `a[m×n] + b[1×n]`. The only broadcasting op.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NdError> {
        let t = self.row_broadcast("add_row", a, bias, |x, y| x + y)?;
        let ng = self.grad_of(&[a, bias]);
        Ok(self.push(t, Op::AddRow(a, bias), ng))
    }

    /// Per-column gain: `a[m×n] * g[1×n]`.
    pub fn mul_row(&mut self, a: Var, gain: Var) -> Result<Var, NdError> {
        let t = self.row_broadcast("mul_row", a, gain, |x, y| x * y)?;
        let ng = self.grad_of(&[a, gain]);
        Ok(self.push(t, Op::MulRow(a, gain), ng))
    }

    /// Per-row weight: `a[m×n] * s[m×1]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, NdError> {
        self.check(a)?;
        self.check(s)?;
        let (m, n) = self.two_d("scale_rows", a)?;
        if self.shape(s) != [m, 1] {
            return Err(mismatch("scale_rows", self.shape(a), self.shape(s)));
        }
        let w = self.value(s).data();
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(src[i * n..(i + 1) * n].iter().map(|&x| x * w[i]));
        }
        let ng = self.grad_of(&[a, s]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::ScaleRows(a, s), ng))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&x| x * k).collect())?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Scale(a, k), ng))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let t = Tensor::new(
            v.shape(),
            v.data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect(),
        )?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Relu(a), ng))
    }

    /// Softmax along `axis`. Lanes made entirely of `-inf` produce zeros.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let (outer, len, inner) = v.axis_split(axis)?;
        let src = v.data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..len {
                    mx = mx.max(src[at(j)]);
                }
                if mx == T::neg_infinity() {
                    continue;
                }
                let mut s = T::zero();
                for j in 0..len {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    s = s + e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / s;
                }
            }
        }
        let t = Tensor::new(v.shape(), out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Softmax { x: a, axis }, ng))
    }

    /// Normalise each lane along `axis` to zero mean and unit variance (no affine).
    pub fn layernorm(&mut self, a: Var, axis: usize) -> Result<Var, NdError> {
        self.check(a)?;
        let eps: T = c(1e-5);
        let v = self.value(a);
        let (outer, len, inner) = v.axis_split(axis)?;
        let src = v.data();
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); outer * inner];
        let n: T = c(len as f64);
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mean = (0..len).map(|j| src[at(j)]).sum::<T>() / n;
                let var = (0..len).map(|j| (src[at(j)] - mean).powi(2)).sum::<T>() / n;
                let is = T::one() / (var + eps).sqrt();
                inv_std[o * inner + i] = is;
                for j in 0..len {
                    xhat[at(j)] = (src[at(j)] - mean) * is;
                }
            }
        }
        let t = Tensor::new(v.shape(), xhat.clone())?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x: a,
                axis,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Inverted dropout. With `train == false` the input var is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, NdError> {
        self.check(a)?;
        if !train || p <= 0.0 {
            return Ok(a);
        }
        if p >= 1.0 {
            return Err(NdError::Invalid(format!("dropout probability {p} must be < 1")));
        }
        let keep: T = c(1.0 / (1.0 - p));
        let v = self.value(a);
        let mask: Vec<T> = (0..v.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let t = Tensor::new(v.shape(), data)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Dropout { x: a, mask }, ng))
    }

    /// Replace positions where `mask` is true with `fill`; those positions get no gradient.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], fill: T) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        if mask.len() != v.len() {
            return Err(mismatch("masked_fill", v.shape(), &[mask.len()]));
        }
        let data = v
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { fill } else { x })
            .collect();
        let t = Tensor::new(v.shape(), data)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(
            t,
            Op::MaskedFill {
                x: a,
                mask: mask.to_vec(),
            },
            ng,
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var, NdError> {
        let first = *xs.first().ok_or(NdError::Invalid("concat of nothing".into()))?;
        for &x in xs {
            self.check(x)?;
        }
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let same_rest = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same_rest || axis >= s.len() {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis];
                let d = self.value(x).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let t = Tensor::new(&shape, out)?;
        let ng = self.grad_of(xs);
        Ok(self.push(
            t,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let (outer, full, inner) = v.axis_split(axis)?;
        if start + len > full {
            return Err(NdError::Index(format!(
                "narrow [{start}, {}) exceeds axis {axis} of {:?}",
                start + len,
                v.shape()
            )));
        }
        let src = v.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = len;
        let t = Tensor::new(&shape, out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Narrow { x: a, axis, start }, ng))
    }

    /// Select rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, idx: &[Option<u32>]) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        let mut out = Vec::with_capacity(idx.len() * cols);
        for i in idx {
            match i {
                Some(r) if (*r as usize) < rows => out.extend_from_slice(v.row(*r as usize)),
                Some(r) => {
                    return Err(NdError::Index(format!("row {r} of {rows}")));
                }
                None => out.extend(std::iter::repeat_n(T::zero(), cols)),
            }
        }
        let mut shape = v.shape().to_vec();
        shape[0] = idx.len();
        let t = Tensor::new(&shape, out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(
            t,
            Op::GatherRows {
                x: a,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    /// `out[dst[e]] += weight[e] * a[src[e]]` over a 2-D input, producing `n_out` rows.
    pub fn index_add(
        &mut self,
        a: Var,
        src: &[u32],
        dst: &[u32],
        weight: &[T],
        n_out: usize,
    ) -> Result<Var, NdError> {
        self.check(a)?;
        if src.len() != dst.len() || src.len() != weight.len() {
            return Err(NdError::Invalid("index_add arrays differ in length".into()));
        }
        let (rows, cols) = self.two_d("index_add", a)?;
        let d = self.value(a).data();
        let mut out = vec![T::zero(); n_out * cols];
        for ((&s, &t), &w) in src.iter().zip(dst).zip(weight) {
            let (s, t) = (s as usize, t as usize);
            if s >= rows || t >= n_out {
                return Err(NdError::Index(format!("edge {s}->{t} outside {rows}x{n_out}")));
            }
            let row = &d[s * cols..(s + 1) * cols];
            for (o, &x) in out[t * cols..(t + 1) * cols].iter_mut().zip(row) {
                *o = *o + w * x;
            }
        }
        let t = Tensor::new(&[n_out, cols], out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(
            t,
            Op::IndexAdd {
                x: a,
                src: src.to_vec(),
                dst: dst.to_vec(),
                weight: weight.to_vec(),
            },
            ng,
        ))
    }

    /// Mean of source rows per destination; destinations without edges are zero.
    pub fn scatter_mean(
        &mut self,
        a: Var,
        src: &[u32],
        dst: &[u32],
        n_out: usize,
    ) -> Result<Var, NdError> {
        let mut deg = vec![0usize; n_out];
        for &t in dst {
            if let Some(d) = deg.get_mut(t as usize) {
                *d += 1;
            }
        }
        let w: Vec<T> = dst
            .iter()
            .map(|&t| T::one() / c(deg.get(t as usize).copied().unwrap_or(1).max(1) as f64))
            .collect();
        self.index_add(a, src, dst, &w, n_out)
    }

    /// Sum along `axis`, keeping the axis with length 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        let (outer, len, inner) = v.axis_split(axis)?;
        let src = v.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + src[o * len * inner + j * inner + i];
                }
            }
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = 1;
        let t = Tensor::new(&shape, out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::SumAxis { x: a, axis }, ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let s = self.value(a).data().iter().copied().sum::<T>();
        let ng = self.grad_of(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::SumAll(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NdError> {
        self.check(a)?;
        let v = self.value(a);
        if shape.iter().product::<usize>() != v.len() {
            return Err(mismatch("reshape", v.shape(), shape));
        }
        let t = Tensor::new(shape, v.data().to_vec())?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let (m, n) = self.two_d("transpose", a)?;
        let src = self.value(a).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let t = Tensor::new(&[n, m], out)?;
        let ng = self.grad_of(&[a]);
        Ok(self.push(t, Op::Transpose(a), ng))
    }

    /// Weighted mean negative log-likelihood of `labels` under `softmax(logits)`.
    ///
    /// Sample `i` is weighted by `class_weights[labels[i]]`; the sum is divided by
    /// the total weight, so unit weights give the plain mean.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: &[T],
    ) -> Result<Var, NdError> {
        self.check(logits)?;
        let (n, k) = self.two_d("weighted_cross_entropy", logits)?;
        if labels.len() != n || class_weights.len() != k {
            return Err(mismatch(
                "weighted_cross_entropy",
                &[n, k],
                &[labels.len(), class_weights.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(NdError::Label { label: bad, classes: k });
        }
        let total: T = labels.iter().map(|&l| class_weights[l]).sum();
        if total <= T::zero() {
            return Err(NdError::Invalid("class weights of the batch sum to zero".into()));
        }
        let z = self.value(logits).data();
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        let mut coef = Vec::with_capacity(n);
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln() + mx;
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
            let w = class_weights[labels[i]] / total;
            coef.push(w);
            loss = loss + w * (lse - row[labels[i]]);
        }
        let ng = self.grad_of(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                coef,
                probs,
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NdError> {
        self.check(loss)?;
        let node = &self.nodes[loss.index()];
        if node.value.len() != 1 {
            return Err(NdError::NotScalar(node.value.shape().to_vec()));
        }
        if !node.needs_grad {
            return Err(NdError::Untraced);
        }
        BACKWARD_CALLS.with(|c| c.set(c.get() + 1));

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index()] = Some(vec![T::one()]);

        for i in (0..=loss.index()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                if !n.needs_grad {
                    return None;
                }
                let data = g.unwrap_or_else(|| vec![T::zero(); n.value.len()]);
                Tensor::new(n.value.shape(), data).ok()
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let wants = |v: Var| self.nodes[v.index()].needs_grad;
        let val = |v: Var| self.nodes[v.index()].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !wants(v) {
                return;
            }
            let slot = grads[v.index()]
                .get_or_insert_with(|| vec![T::zero(); self.nodes[v.index()].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    // dA = dC · Bᵀ
                    T::gemm(m, n, k, g, n as isize, 1, bv, 1, n as isize, T::one(), ga)
                });
                acc(*b, &mut |gb| {
                    // dB = Aᵀ · dC
                    T::gemm(k, m, n, av, 1, k as isize, g, n as isize, 1, T::one(), gb)
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |ga| {
                        for (x, &y) in ga.iter_mut().zip(g) {
                            *x = *x + y;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for ((x, &y), &w) in ga.iter_mut().zip(g).zip(bv) {
                        *x = *x + y * w;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((x, &y), &w) in gb.iter_mut().zip(g).zip(av) {
                        *x = *x + y * w;
                    }
                });
            }
            Op::AddRow(a, r) => {
                let n = self.shape(*r)[1];
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x = *x + y;
                    }
                });
                acc(*r, &mut |gr| {
                    for (i, &y) in g.iter().enumerate() {
                        gr[i % n] = gr[i % n] + y;
                    }
                });
            }
            Op::MulRow(a, r) => {
                let n = self.shape(*r)[1];
                let (av, rv) = (val(*a), val(*r));
                acc(*a, &mut |ga| {
                    for (i, (x, &y)) in ga.iter_mut().zip(g).enumerate() {
                        *x = *x + y * rv[i % n];
                    }
                });
                acc(*r, &mut |gr| {
                    for (i, &y) in g.iter().enumerate() {
                        gr[i % n] = gr[i % n] + y * av[i];
                    }
                });
            }
            Op::ScaleRows(a, s) => {
                let n = self.shape(*a)[1];
                let (av, sv) = (val(*a), val(*s));
                acc(*a, &mut |ga| {
                    for (i, (x, &y)) in ga.iter_mut().zip(g).enumerate() {
                        *x = *x + y * sv[i / n];
                    }
                });
                acc(*s, &mut |gs| {
                    for (i, &y) in g.iter().enumerate() {
                        gs[i / n] = gs[i / n] + y * av[i];
                    }
                });
            }
            Op::Scale(a, k) => acc(*a, &mut |ga| {
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x = *x + y * *k;
                }
            }),
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for ((x, &y), &z) in ga.iter_mut().zip(g).zip(av) {
                        if z > T::zero() {
                            *x = *x + y;
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = node.value.axis_split(*axis).expect("axis checked");
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot = (0..len).map(|j| g[at(j)] * y[at(j)]).sum::<T>();
                            for j in 0..len {
                                gx[at(j)] = gx[at(j)] + y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                axis,
                xhat,
                inv_std,
            } => {
                let (outer, len, inner) = node.value.axis_split(*axis).expect("axis checked");
                let n: T = c(len as f64);
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let mg = (0..len).map(|j| g[at(j)]).sum::<T>() / n;
                            let mgx = (0..len).map(|j| g[at(j)] * xhat[at(j)]).sum::<T>() / n;
                            let is = inv_std[o * inner + i];
                            for j in 0..len {
                                gx[at(j)] = gx[at(j)] + is * (g[at(j)] - mg - xhat[at(j)] * mgx);
                            }
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |gx| {
                for ((v, &y), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *v = *v + y * m;
                }
            }),
            Op::MaskedFill { x, mask } => acc(*x, &mut |gx| {
                for ((v, &y), &m) in gx.iter_mut().zip(g).zip(mask) {
                    if !m {
                        *v = *v + y;
                    }
                }
            }),
            Op::Concat { xs, axis } => {
                let shape = node.value.shape();
                let total = shape[*axis];
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut offset = 0;
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    acc(v, &mut |gv| {
                        for o in 0..outer {
                            let src = &g[o * total * inner + offset * inner..][..len * inner];
                            for (x, &y) in gv[o * len * inner..(o + 1) * len * inner]
                                .iter_mut()
                                .zip(src)
                            {
                                *x = *x + y;
                            }
                        }
                    });
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let full = self.shape(*x)[*axis];
                let len = node.value.shape()[*axis];
                let outer: usize = self.shape(*x)[..*axis].iter().product();
                let inner: usize = self.shape(*x)[axis + 1..].iter().product();
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        let base = o * full * inner + start * inner;
                        for (v, &y) in gx[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                        {
                            *v = *v + y;
                        }
                    }
                });
            }
            Op::GatherRows { x, idx } => {
                let cols = node.value.cols();
                acc(*x, &mut |gx| {
                    for (k, i) in idx.iter().enumerate() {
                        if let Some(r) = i {
                            let r = *r as usize;
                            for (v, &y) in gx[r * cols..(r + 1) * cols]
                                .iter_mut()
                                .zip(&g[k * cols..(k + 1) * cols])
                            {
                                *v = *v + y;
                            }
                        }
                    }
                });
            }
            Op::IndexAdd { x, src, dst, weight } => {
                let cols = node.value.cols();
                acc(*x, &mut |gx| {
                    for ((&s, &t), &w) in src.iter().zip(dst).zip(weight) {
                        let (s, t) = (s as usize, t as usize);
                        for (v, &y) in gx[s * cols..(s + 1) * cols]
                            .iter_mut()
                            .zip(&g[t * cols..(t + 1) * cols])
                        {
                            *v = *v + w * y;
                        }
                    }
                });
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = self.nodes[x.index()]
                    .value
                    .axis_split(*axis)
                    .expect("axis checked");
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for j in 0..len {
                            for i in 0..inner {
                                let k = o * len * inner + j * inner + i;
                                gx[k] = gx[k] + g[o * inner + i];
                            }
                        }
                    }
                });
            }
            Op::SumAll(a) => acc(*a, &mut |ga| {
                for v in ga.iter_mut() {
                    *v = *v + g[0];
                }
            }),
            Op::Reshape(a) => acc(*a, &mut |ga| {
                for (v, &y) in ga.iter_mut().zip(g) {
                    *v = *v + y;
                }
            }),
            Op::Transpose(a) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                acc(*a, &mut |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = ga[i * n + j] + g[j * m + i];
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                coef,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                acc(*logits, &mut |gl| {
                    for (i, &l) in labels.iter().enumerate() {
                        for j in 0..k {
                            let target = if j == l { T::one() } else { T::zero() };
                            gl[i * k + j] = gl[i * k + j] + g[0] * coef[i] * (probs[i * k + j] - target);
                        }
                    }
                });
            }
        }
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`. Fails when `v` is from another tape or
    /// was not traced for differentiation.
    pub fn get(&self, v: Var) -> Result<&Tensor<T>, NdError> {
        if v.tape != self.tape || v.index() >= self.grads.len() {
            return Err(NdError::NotOnTape);
        }
        self.grads[v.index()].as_ref().ok_or(NdError::NotOnTape)
    }
}
