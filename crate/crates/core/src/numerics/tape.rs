//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every op applied during one forward pass. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! returns gradients for every node, including parameter leaves.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::interp::{interp_matrix, InterpMode};
use crate::numerics::{ParamId, ParamStore, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    BroadcastRows(Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    Relu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, inv_std: Vec<T> },
    L2Normalize { x: Var, norms: Vec<T> },
    Gather { x: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    Transpose(Var),
    Reshape(Var),
    SumAll(Var),
    MeanRows(Var),
    Dropout { x: Var, mask: Vec<T> },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recording of one forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    train: bool,
    rng: ChaCha8Rng,
    detached: Detached<T>,
}

/// What [`Tape::detach`] does with the values it cuts off.
enum Detached<T> {
    Pass,
    Record(Vec<Tensor<T>>),
    Replay(std::vec::IntoIter<Tensor<T>>),
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    /// Inference-mode tape: dropout is the identity.
    pub fn new() -> Self {
        Self::with_mode(false, 0)
    }

    /// Training-mode tape; `seed` drives every dropout mask drawn on it.
    pub fn training(seed: u64) -> Self {
        Self::with_mode(true, seed)
    }

    pub fn with_mode(train: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            detached: Detached::Pass,
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    /// Uniform draw from the tape's stream; used for stochastic input
    /// substitutions (token / conditional dropout) so they share the seed.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    /// Copy of `x` that blocks gradient flow.
    ///
    /// While replaying, the value is instead the next one recorded by an
    /// earlier tape, so stop-gradient terms stay fixed under perturbation.
    pub fn detach(&mut self, x: Var) -> Var {
        let current = &self.nodes[x.0].value;
        let t = match &mut self.detached {
            Detached::Pass => current.clone(),
            Detached::Record(log) => {
                log.push(current.clone());
                current.clone()
            }
            Detached::Replay(values) => match values.next() {
                Some(t) if t.shape() == current.shape() => t,
                _ => panic!("replayed detach values do not match this computation"),
            },
        };
        self.constant(t)
    }

    /// Start logging every detached value.
    pub fn record_detached(&mut self) {
        self.detached = Detached::Record(Vec::new());
    }

    /// Values logged since [`Self::record_detached`].
    pub fn take_detached(&mut self) -> Vec<Tensor<T>> {
        match std::mem::replace(&mut self.detached, Detached::Pass) {
            Detached::Record(log) => log,
            _ => Vec::new(),
        }
    }

    /// Substitute `values`, in order, for the results of subsequent detaches.
    pub fn replay_detached(&mut self, values: Vec<Tensor<T>>) {
        self.detached = Detached::Replay(values.into_iter());
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.shape(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("lhs {m}x{k} (node {}) x rhs {k2}x{n} (node {})", a.0, b.0),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!(
                    "node {} {:?} vs node {} {:?}",
                    a.0,
                    self.value(a).shape(),
                    b.0,
                    self.value(b).shape()
                ),
            ));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip(a, b, |p, q| p + q);
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip(a, b, |p, q| p - q);
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip(a, b, |p, q| p * q);
        Ok(self.push(t, Op::Mul(a, b)))
    }

    fn row_op(&mut self, name: &'static str, x: Var, r: Var) -> Result<(usize, usize)> {
        let (m, n) = self.dims(x);
        let (rr, rc) = self.dims(r);
        if rr != 1 || rc != n {
            return Err(Error::shape(
                name,
                format!("matrix {m}x{n} (node {}) with row {rr}x{rc} (node {})", x.0, r.0),
            ));
        }
        Ok((m, n))
    }

    /// `x + r` with the `1×n` row `r` broadcast over rows.
    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var> {
        let (m, n) = self.row_op("add_row", x, r)?;
        let (xv, rv) = (self.value(x), self.value(r));
        let t = Tensor::from_fn(m, n, |i, j| xv.at(i, j) + rv.data()[j]);
        Ok(self.push(t, Op::AddRow(x, r)))
    }

    /// `x * r` with the `1×n` row `r` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        let (m, n) = self.row_op("mul_row", x, r)?;
        let (xv, rv) = (self.value(x), self.value(r));
        let t = Tensor::from_fn(m, n, |i, j| xv.at(i, j) * rv.data()[j]);
        Ok(self.push(t, Op::MulRow(x, r)))
    }

    /// Repeat a `1×n` row `m` times.
    pub fn broadcast_rows(&mut self, r: Var, m: usize) -> Result<Var> {
        let (rr, n) = self.dims(r);
        if rr != 1 {
            return Err(Error::shape("broadcast_rows", format!("expected a row, got {rr}x{n}")));
        }
        let rv = self.value(r);
        let t = Tensor::from_fn(m, n, |_, j| rv.data()[j]);
        Ok(self.push(t, Op::BroadcastRows(r)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let t = self.value(x).map(|v| v * c);
        self.push(t, Op::Scale(x, c))
    }

    /// Multiply by a learned `1×1` scalar node.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale_by", format!("scale node {} is not scalar", s.0)));
        }
        let c = self.value(s).data()[0];
        let t = self.value(x).map(|v| v * c);
        Ok(self.push(t, Op::ScaleBy(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(t, Op::Relu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        for i in 0..m {
            softmax_in_place(&mut out.data_mut()[i * n..(i + 1) * n], None);
        }
        self.push(out, Op::Softmax(x))
    }

    /// Row softmax restricted to entries where `allowed` is true; the rest
    /// get probability exactly zero and never influence the allowed ones.
    pub fn masked_softmax_rows(&mut self, x: Var, allowed: &[bool]) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if allowed.len() != m * n {
            return Err(Error::shape(
                "masked_softmax_rows",
                format!("scores {m}x{n} vs mask of {} entries", allowed.len()),
            ));
        }
        let mut out = xv.clone();
        for i in 0..m {
            softmax_in_place(
                &mut out.data_mut()[i * n..(i + 1) * n],
                Some(&allowed[i * n..(i + 1) * n]),
            );
        }
        // masked softmax shares the plain softmax backward rule: masked outputs are 0
        Ok(self.push(out, Op::Softmax(x)))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(out, Op::LogSoftmax(x))
    }

    /// Per-row normalisation to zero mean and unit (biased) variance.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let nf = T::of(n as f64);
        let mut out = xv.clone();
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + T::of(eps)).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        self.push(out, Op::LayerNorm { x, inv_std })
    }

    /// Scale each row to unit Euclidean norm, `x / sqrt(|x|² + eps)`.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = xv.clone();
        let mut norms = Vec::with_capacity(m);
        for i in 0..m {
            let row = &mut out.data_mut()[i * n..(i + 1) * n];
            let nrm = (row.iter().map(|&v| v * v).sum::<T>() + T::of(eps)).sqrt();
            row.iter_mut().for_each(|v| *v /= nrm);
            norms.push(nrm);
        }
        self.push(out, Op::L2Normalize { x, norms })
    }

    /// Row gather; doubles as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::shape(
                "gather_rows",
                format!("index {bad} out of range for {m} rows (node {})", x.0),
            ));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(xv.row(i));
        }
        let t = Tensor::new(vec![idx.len(), n], data)?;
        Ok(self.push(
            t,
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map(|&p| self.dims(p).1).unwrap_or(0);
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != n {
                return Err(Error::shape(
                    "concat_rows",
                    format!("node {} has {pc} cols, expected {n}", p.0),
                ));
            }
            data.extend_from_slice(self.value(p).data());
            m += pr;
        }
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts.first().map(|&p| self.dims(p).0).unwrap_or(0);
        let mut n = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != m {
                return Err(Error::shape(
                    "concat_cols",
                    format!("node {} has {pr} rows, expected {m}", p.0),
                ));
            }
            n += pc;
        }
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > m {
            return Err(Error::shape(
                "slice_rows",
                format!("range {start}..{end} of {m} rows (node {})", x.0),
            ));
        }
        let t = Tensor::new(
            vec![end - start, n],
            self.value(x).data()[start * n..end * n].to_vec(),
        )?;
        Ok(self.push(t, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > n {
            return Err(Error::shape(
                "slice_cols",
                format!("range {start}..{end} of {n} cols (node {})", x.0),
            ));
        }
        let xv = self.value(x);
        let t = Tensor::from_fn(m, end - start, |i, j| xv.at(i, start + j));
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x).transpose();
        self.push(t, Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(x).clone().reshape(&[rows, cols])?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum_all(x);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Column means as a `1×n` row.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let inv = T::one() / T::of(m.max(1) as f64);
        let t = Tensor::from_fn(1, n, |_, j| (0..m).map(|i| xv.at(i, j)).sum::<T>() * inv);
        self.push(t, Op::MeanRows(x))
    }

    /// Sum of squared entries.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let sq = self.mul(x, x)?;
        Ok(self.sum_all(sq))
    }

    /// Inverted dropout; identity on inference tapes or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let scale = T::of(1.0 / keep);
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&a, &b)| a * b).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("shape preserved");
        self.push(t, Op::Dropout { x, mask })
    }

    /// Resample along rows (`axis == 0`) or columns (`axis == 1`).
    pub fn interpolate(&mut self, x: Var, n_out: usize, mode: InterpMode, axis: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        match axis {
            0 => {
                let w = interp_matrix::<T>(m, n_out, mode)?;
                let w = self.constant(w);
                self.matmul(w, x)
            }
            1 => {
                let w = interp_matrix::<T>(n, n_out, mode)?.transpose();
                let w = self.constant(w);
                self.matmul(x, w)
            }
            _ => Err(Error::InvalidArgument(format!("interpolation axis {axis}"))),
        }
    }

    /// `Σ_i w_i · CE(softmax(logits_i), targets_i)` as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[T]) -> Result<Var> {
        let (m, n) = self.dims(logits);
        if targets.len() != m || weights.len() != m {
            return Err(Error::shape(
                "cross_entropy",
                format!(
                    "{m} logit rows vs {} targets / {} weights",
                    targets.len(),
                    weights.len()
                ),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::shape(
                "cross_entropy",
                format!("target {bad} out of range for {n} classes"),
            ));
        }
        let lv = self.value(logits);
        let mut probs = lv.data().to_vec();
        let mut total = T::zero();
        for i in 0..m {
            let row = &mut probs[i * n..(i + 1) * n];
            let lse = log_sum_exp(row);
            total += weights[i] * (lse - row[targets[i]]);
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss node {} is not scalar: {:?}", loss.0, self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.backprop_node(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let mut params = Vec::new();
        for (&pid, &v) in &self.params {
            if let Some(g) = grads[v.0].take() {
                params.push((pid, g));
            }
        }
        params.sort_by_key(|(p, _)| *p);
        Ok(Gradients { nodes: grads, params })
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![T::zero(); m * k];
                T::gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, false);
                accumulate(grads, *a, av.shape(), da);
                let mut db = vec![T::zero(); k * n];
                T::gemm(k, m, n, av.data(), true, g.data(), false, &mut db, false);
                accumulate(grads, *b, bv.shape(), db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = g.data().iter().zip(bv.data()).map(|(&p, &q)| p * q).collect();
                let db = g.data().iter().zip(av.data()).map(|(&p, &q)| p * q).collect();
                accumulate(grads, *a, av.shape(), da);
                accumulate(grads, *b, bv.shape(), db);
            }
            Op::AddRow(x, r) => {
                let n = g.cols();
                accumulate(grads, *x, g.shape(), g.data().to_vec());
                let mut dr = vec![T::zero(); n];
                for i in 0..g.rows() {
                    for (d, &v) in dr.iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                accumulate(grads, *r, self.value(*r).shape(), dr);
            }
            Op::MulRow(x, r) => {
                let (xv, rv) = (self.value(*x), self.value(*r));
                let n = g.cols();
                let mut dx = Vec::with_capacity(g.len());
                let mut dr = vec![T::zero(); n];
                for i in 0..g.rows() {
                    for j in 0..n {
                        let gv = g.at(i, j);
                        dx.push(gv * rv.data()[j]);
                        dr[j] += gv * xv.at(i, j);
                    }
                }
                accumulate(grads, *x, xv.shape(), dx);
                accumulate(grads, *r, rv.shape(), dr);
            }
            Op::BroadcastRows(r) => {
                let n = g.cols();
                let mut dr = vec![T::zero(); n];
                for i in 0..g.rows() {
                    for (d, &v) in dr.iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                accumulate(grads, *r, self.value(*r).shape(), dr);
            }
            Op::Scale(x, c) => {
                accumulate(grads, *x, g.shape(), g.data().iter().map(|&v| v * *c).collect());
            }
            Op::ScaleBy(x, s) => {
                let c = self.value(*s).data()[0];
                let xv = self.value(*x);
                accumulate(grads, *x, g.shape(), g.data().iter().map(|&v| v * c).collect());
                let ds = g.data().iter().zip(xv.data()).map(|(&p, &q)| p * q).sum::<T>();
                accumulate(grads, *s, self.value(*s).shape(), vec![ds]);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::Softmax(x) => {
                let n = y.cols();
                let mut dx = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                    dx.extend((0..n).map(|j| yr[j] * (gr[j] - dot)));
                }
                accumulate(grads, *x, y.shape(), dx);
            }
            Op::LogSoftmax(x) => {
                let n = y.cols();
                let mut dx = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let gs = gr.iter().copied().sum::<T>();
                    dx.extend((0..n).map(|j| gr[j] - yr[j].exp() * gs));
                }
                accumulate(grads, *x, y.shape(), dx);
            }
            Op::LayerNorm { x, inv_std } => {
                let n = y.cols();
                let nf = T::of(n as f64);
                let mut dx = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let gs = gr.iter().copied().sum::<T>();
                    let gy = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                    let is = inv_std[i];
                    dx.extend((0..n).map(|j| is / nf * (nf * gr[j] - gs - yr[j] * gy)));
                }
                accumulate(grads, *x, y.shape(), dx);
            }
            Op::L2Normalize { x, norms } => {
                let n = y.cols();
                let mut dx = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                    let nrm = norms[i];
                    dx.extend((0..n).map(|j| (gr[j] - yr[j] * dot) / nrm));
                }
                accumulate(grads, *x, y.shape(), dx);
            }
            Op::Gather { x, idx } => {
                let xv = self.value(*x);
                let n = xv.cols();
                let mut dx = vec![T::zero(); xv.len()];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..n {
                        dx[src * n + j] += g.at(r, j);
                    }
                }
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let len = pv.rows() * n;
                    accumulate(grads, p, pv.shape(), g.data()[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let pc = pv.cols();
                    let mut dp = Vec::with_capacity(pv.len());
                    for i in 0..g.rows() {
                        dp.extend_from_slice(&g.row(i)[off..off + pc]);
                    }
                    accumulate(grads, p, pv.shape(), dp);
                    off += pc;
                }
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let n = xv.cols();
                let mut dx = vec![T::zero(); xv.len()];
                dx[start * n..start * n + g.len()].copy_from_slice(g.data());
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let n = xv.cols();
                let mut dx = vec![T::zero(); xv.len()];
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        dx[i * n + start + j] = g.at(i, j);
                    }
                }
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::Transpose(x) => {
                let gt = g.transpose();
                accumulate(grads, *x, self.value(*x).shape(), gt.into_data());
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, self.value(*x).shape(), g.data().to_vec());
            }
            Op::SumAll(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, xv.shape(), vec![g.data()[0]; xv.len()]);
            }
            Op::MeanRows(x) => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let inv = T::one() / T::of(m.max(1) as f64);
                let dx = (0..m * n).map(|k| g.data()[k % n] * inv).collect();
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::Dropout { x, mask } => {
                let dx = g.data().iter().zip(mask).map(|(&a, &b)| a * b).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let lv = self.value(*logits);
                let n = lv.cols();
                let up = g.data()[0];
                let mut dx = probs.clone();
                for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    let row = &mut dx[i * n..(i + 1) * n];
                    row[t] -= T::one();
                    row.iter_mut().for_each(|v| *v *= w * up);
                }
                accumulate(grads, *logits, lv.shape(), dx);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, shape: &[usize], d: Vec<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(d) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), d).expect("gradient shape"));
        }
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T], allowed: Option<&[bool]>) {
    let ok = |j: usize| allowed.is_none_or(|a| a[j]);
    let mut mx = T::neg_infinity();
    for (j, &v) in row.iter().enumerate() {
        if ok(j) && v > mx {
            mx = v;
        }
    }
    if mx == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut total = T::zero();
    for (j, v) in row.iter_mut().enumerate() {
        if ok(j) {
            *v = (*v - mx).exp();
            total += *v;
        } else {
            *v = T::zero();
        }
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].as_ref()
    }

    /// Parameter gradients in id order; parameters that did not reach the
    /// loss are absent.
    pub fn params(&self) -> &[(ParamId, Tensor<T>)] {
        &self.params
    }

    pub fn into_params(self) -> Vec<(ParamId, Tensor<T>)> {
        self.params
    }
}
