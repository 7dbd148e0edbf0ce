//! Reverse-mode autodiff: a tape of nodes rebuilt for every forward pass.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::conv::{avg_pool_backward, avg_pool_forward, conv2d_backward, conv2d_forward, ConvGeometry, PoolGeometry};
use super::params::{ParamGrads, ParamStore, StatUpdate};
use super::tensor::{gemm, Float, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, geom: ConvGeometry },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Relu { x: Var },
    Dropout { x: Var, mask: Vec<T> },
    AvgPool { x: Var, geom: PoolGeometry },
    GlobalAvgPool { x: Var },
    Concat { parts: Vec<(Var, usize)> },
    Linear { x: Var, w: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: T },
    Mean { xs: Vec<Var> },
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    LossWithGrad { x: Var, grad: Vec<T> },
    WeightedSum { x: Var, weights: Vec<T> },
    MeanAll { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Float>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows<T: Float>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    rng: SplitMix64,
    params: HashMap<String, Var>,
    stat_updates: Vec<StatUpdate<T>>,
}

/// Gradients of a scalar with respect to every node on the tape.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Collect the gradients of every parameter the tape pulled from `store`.
    pub fn for_params(&self, tape: &Tape<T>, store: &ParamStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::zeros_like(store);
        for (name, &var) in &tape.params {
            if let (Some(i), Some(g)) = (store.position(name), self.get(var)) {
                out.grads[i] = Some(g.to_vec());
            }
        }
        out
    }
}

impl<T: Float> Tape<T> {
    /// A fresh tape; `seed` drives dropout masks.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            rng: SplitMix64::new(seed),
            params: HashMap::new(),
            stat_updates: Vec::new(),
        }
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        value.requires_grad = inputs.iter().any(|&v| self.needs(v));
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose `requires_grad` flag is kept as given.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// A constant input that never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value.detached())
    }

    /// Pull a named parameter from `store` onto the tape (once per tape).
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let entry = store.entry(name)?;
        let mut value = entry.value.detached();
        value.requires_grad = entry.role.trainable();
        let v = self.leaf(value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate<T>> {
        std::mem::take(&mut self.stat_updates)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::resolve(&self.value(x).shape, &self.value(w).shape, stride, padding)?;
        let out = conv2d_forward(&geom, &self.value(x).data, &self.value(w).data);
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(value, Op::Conv2d { x, w, geom }, &[x, w]))
    }

    /// Batch norm over NCHW. In train mode normalizes with batch statistics
    /// and returns refreshed running statistics; in eval mode uses
    /// `running`.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&[T], &[T]),
    ) -> Result<(Var, Option<(Vec<T>, Vec<T>)>)> {
        let (n, c, h, w) = self.value(x).dims4()?;
        for (what, len) in [
            ("scale", self.value(gamma).numel()),
            ("shift", self.value(beta).numel()),
            ("running mean", running.0.len()),
            ("running variance", running.1.len()),
        ] {
            if len != c {
                return Err(Error::shape(format!("batch norm {what} has {len} entries for {c} channels")));
            }
        }
        let plane = h * w;
        let count = n * plane;
        let eps = T::of(BN_EPSILON);
        let train = self.mode == Mode::Train;
        if train && count < 2 {
            return Err(Error::shape("batch norm in train mode needs more than one value per channel"));
        }
        let xd = &self.value(x).data;
        let channel = |ch: usize| (0..n).flat_map(move |s| (s * c + ch) * plane..(s * c + ch + 1) * plane);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        if train {
            for ch in 0..c {
                let mu = channel(ch).map(|i| xd[i]).sum::<T>() / T::of(count as f64);
                let v = channel(ch).map(|i| (xd[i] - mu) * (xd[i] - mu)).sum::<T>() / T::of(count as f64);
                mean[ch] = mu;
                var[ch] = v;
            }
        } else {
            mean.copy_from_slice(running.0);
            var.copy_from_slice(running.1);
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for ch in 0..c {
            for i in channel(ch) {
                xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                out[i] = g[ch] * xhat[i] + b[ch];
            }
        }
        let stats = train.then(|| {
            let m = T::of(BN_MOMENTUM);
            let unbias = T::of(count as f64 / (count - 1) as f64);
            let new_mean = running.0.iter().zip(&mean).map(|(&r, &b)| (T::one() - m) * r + m * b).collect();
            let new_var = running.1.iter().zip(&var).map(|(&r, &b)| (T::one() - m) * r + m * b * unbias).collect();
            (new_mean, new_var)
        });
        let value = Tensor::new(self.value(x).shape.clone(), out)?;
        let v = self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, &[x, gamma, beta]);
        Ok((v, stats))
    }

    /// Batch norm with parameters `{prefix}.scale`, `.shift`, `.running_mean`
    /// and `.running_var` from `store`; running-stat refreshes are queued on
    /// the tape.
    pub fn batch_norm_named(&mut self, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
        let gamma = self.param(store, &format!("{prefix}.scale"))?;
        let beta = self.param(store, &format!("{prefix}.shift"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let rm = &store.value(&mean_name)?.data;
        let rv = &store.value(&var_name)?.data;
        let (out, stats) = self.batch_norm2d(x, gamma, beta, (rm, rv))?;
        if let Some((mean, var)) = stats {
            self.stat_updates.push(StatUpdate {
                mean_name,
                var_name,
                mean,
                var,
            });
        }
        Ok(out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = Tensor {
            shape: self.value(x).shape.clone(),
            data: self.value(x).data.iter().map(|&v| v.max(T::zero())).collect(),
            grad: None,
            requires_grad: false,
        };
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Inverted dropout. Eval mode and rate 0 return `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let n = self.value(x).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.unit() >= rate { keep } else { T::zero() })
            .collect();
        let data = self.value(x).data.iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::new(self.value(x).shape.clone(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// Average pool; zero padding counts toward the divisor.
    pub fn avg_pool2d(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let geom = PoolGeometry::resolve(&self.value(x).shape, kernel, stride, padding)?;
        let value = Tensor::new(geom.output_shape(), avg_pool_forward(&geom, &self.value(x).data))?;
        Ok(self.push(value, Op::AvgPool { x, geom }, &[x]))
    }

    /// N×C×H×W → N×C.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let count = T::of(plane as f64);
        let data = self.value(x).data.chunks(plane).map(|p| p.iter().copied().sum::<T>() / count).collect();
        let value = Tensor::new(vec![n, c], data)?;
        Ok(self.push(value, Op::GlobalAvgPool { x }, &[x]))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        if xs.len() == 1 {
            return Ok(first);
        }
        let (n, _, h, w) = self.value(first).dims4()?;
        let mut parts = Vec::with_capacity(xs.len());
        for &v in xs {
            let (vn, vc, vh, vw) = self.value(v).dims4()?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::shape(format!(
                    "concat mismatch: {:?} vs {:?}",
                    self.value(first).shape,
                    self.value(v).shape
                )));
            }
            parts.push((v, vc));
        }
        let total: usize = parts.iter().map(|p| p.1).sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for s in 0..n {
            for &(v, c) in &parts {
                data.extend_from_slice(&self.value(v).data[s * c * plane..(s + 1) * c * plane]);
            }
        }
        let value = Tensor::new(vec![n, total, h, w], data)?;
        Ok(self.push(value, Op::Concat { parts }, xs))
    }

    /// `x · wᵀ + b` for x N×D, w K×D, b K.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        let (k, wd) = self.value(w).dims2()?;
        if wd != d || self.value(b).numel() != k {
            return Err(Error::shape(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                self.value(x).shape,
                self.value(w).shape,
                self.value(b).shape
            )));
        }
        let mut out = vec![T::zero(); n * k];
        gemm(false, true, n, k, d, T::one(), &self.value(x).data, &self.value(w).data, T::zero(), &mut out);
        let bias = &self.value(b).data;
        for row in out.chunks_mut(k) {
            row.iter_mut().zip(bias).for_each(|(o, &bv)| *o += bv);
        }
        let value = Tensor::new(vec![n, k], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape,
                self.value(b).shape
            )));
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(self.value(a).shape.clone(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let mut value = self.value(x).detached();
        value.data.iter_mut().for_each(|v| *v *= factor);
        self.push(value, Op::Scale { x, factor }, &[x])
    }

    /// Element-wise mean of equally shaped tensors.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::shape("mean of zero tensors"))?;
        let shape = self.value(first).shape.clone();
        let mut data = vec![T::zero(); self.value(first).numel()];
        for &v in xs {
            if self.value(v).shape != shape {
                return Err(Error::shape(format!("mean: {:?} vs {shape:?}", self.value(v).shape)));
            }
            data.iter_mut().zip(&self.value(v).data).for_each(|(a, &b)| *a += b);
        }
        let inv = T::one() / T::of(xs.len() as f64);
        data.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Mean { xs: xs.to_vec() }, xs))
    }

    /// Mean over the batch of `-log softmax(z)[y]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = self.value(logits).dims2()?;
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let z = &self.value(logits).data;
        let logp = log_softmax_rows(z, k);
        let loss = -labels.iter().enumerate().map(|(i, &y)| logp[i * k + y]).sum::<T>() / T::of(n as f64);
        let probs = softmax_rows(z, k);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// A scalar loss computed outside the tape, with its gradient w.r.t. `x`.
    pub fn loss_with_grad(&mut self, x: Var, loss: T, grad: Vec<T>) -> Result<Var> {
        if grad.len() != self.value(x).numel() {
            return Err(Error::shape(format!("gradient has {} values for {:?}", grad.len(), self.value(x).shape)));
        }
        Ok(self.push(Tensor::scalar(loss), Op::LossWithGrad { x, grad }, &[x]))
    }

    /// `Σ wᵢ xᵢ` as a scalar.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(Error::shape("weighted_sum: weight count differs from tensor size"));
        }
        let s = self.value(x).data.iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, &[x]))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.value(x).data.iter().copied().sum::<T>() / T::of(n as f64);
        self.push(Tensor::scalar(s), Op::MeanAll { x }, &[x])
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!("backward needs a scalar, got {:?}", self.value(loss).shape)));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if !self.needs(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&self.nodes[i].op, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&contribution).for_each(|(a, &b)| *a += b),
            slot => *slot = Some(contribution),
        }
    }

    fn propagate(&self, op: &Op<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, geom } => {
                let (dx, dw) = conv2d_backward(
                    geom,
                    &self.value(*x).data,
                    &self.value(*w).data,
                    g,
                    self.needs(*x),
                    self.needs(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("checked in forward");
                let plane = h * w;
                let count = T::of((n * plane) as f64);
                let gam = &self.value(*gamma).data;
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); g.len()];
                for ch in 0..c {
                    let idx = || (0..n).flat_map(move |s| (s * c + ch) * plane..(s * c + ch + 1) * plane);
                    let mut sum_dy = T::zero();
                    let mut sum_dy_xhat = T::zero();
                    for i in idx() {
                        sum_dy += g[i];
                        sum_dy_xhat += g[i] * xhat[i];
                    }
                    dgamma[ch] = sum_dy_xhat;
                    dbeta[ch] = sum_dy;
                    let k = gam[ch] * inv_std[ch];
                    if *train {
                        for i in idx() {
                            dx[i] = k * (g[i] - sum_dy / count - xhat[i] * sum_dy_xhat / count);
                        }
                    } else {
                        for i in idx() {
                            dx[i] = k * g[i];
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Relu { x } => {
                let xd = &self.value(*x).data;
                let dx = g
                    .iter()
                    .zip(xd)
                    .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Dropout { x, mask } => {
                let dx = g.iter().zip(mask).map(|(&a, &m)| a * m).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::AvgPool { x, geom } => self.accumulate(grads, *x, avg_pool_backward(geom, g)),
            Op::GlobalAvgPool { x } => {
                let (_, _, h, w) = self.value(*x).dims4().expect("checked in forward");
                let plane = h * w;
                let count = T::of(plane as f64);
                let dx = g.iter().flat_map(|&gi| std::iter::repeat_n(gi / count, plane)).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let (n, _, h, w) = self.value(parts[0].0).dims4().expect("checked in forward");
                let plane = h * w;
                let mut offset = 0;
                for &(v, c) in parts {
                    let mut dx = Vec::with_capacity(n * c * plane);
                    for s in 0..n {
                        let start = (s * total + offset) * plane;
                        dx.extend_from_slice(&g[start..start + c * plane]);
                    }
                    self.accumulate(grads, v, dx);
                    offset += c;
                }
            }
            Op::Linear { x, w, b } => {
                let (n, d) = self.value(*x).dims2().expect("checked in forward");
                let k = self.value(*b).numel();
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * d];
                    gemm(false, false, n, d, k, T::one(), g, &self.value(*w).data, T::zero(), &mut dx);
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); k * d];
                    gemm(true, false, k, d, n, T::one(), g, &self.value(*x).data, T::zero(), &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                let mut db = vec![T::zero(); k];
                for row in g.chunks(k) {
                    db.iter_mut().zip(row).for_each(|(a, &r)| *a += r);
                }
                self.accumulate(grads, *b, db);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Scale { x, factor } => {
                self.accumulate(grads, *x, g.iter().map(|&v| v * *factor).collect());
            }
            Op::Mean { xs } => {
                let inv = T::one() / T::of(xs.len() as f64);
                for &v in xs {
                    self.accumulate(grads, v, g.iter().map(|&gi| gi * inv).collect());
                }
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = g[0] / T::of(n as f64);
                let mut dz: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &y) in labels.iter().enumerate() {
                    dz[i * k + y] -= scale;
                }
                self.accumulate(grads, *logits, dz);
            }
            Op::LossWithGrad { x, grad } => {
                self.accumulate(grads, *x, grad.iter().map(|&v| v * g[0]).collect());
            }
            Op::WeightedSum { x, weights } => {
                self.accumulate(grads, *x, weights.iter().map(|&v| v * g[0]).collect());
            }
            Op::MeanAll { x } => {
                let n = self.value(*x).numel().max(1);
                let v = g[0] / T::of(n as f64);
                self.accumulate(grads, *x, vec![v; self.value(*x).numel()]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamRole;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.input(t(&[2], vec![-3.0, 3.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data, vec![0.0, 3.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut tape = Tape::<f64>::new(Mode::Train, 1);
        let x = tape.input(t(&[3], vec![1.0, 2.0, 3.0]));
        assert_eq!(tape.dropout(x, 0.0).unwrap(), x);
        assert!(tape.dropout(x, 1.0).is_err());
        let mut eval = Tape::<f64>::new(Mode::Eval, 1);
        let x = eval.input(t(&[3], vec![1.0, 2.0, 3.0]));
        assert_eq!(eval.dropout(x, 0.5).unwrap(), x);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut tape = Tape::<f32>::new(Mode::Train, 5);
        let x = tape.input(Tensor::full(&[1_000_000], 1.0));
        let y = tape.dropout(x, 0.5).unwrap();
        let mean: f64 = tape.value(y).data.iter().map(|&v| f64::from(v)).sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn global_pool_single_spike() {
        let mut data = vec![0.0; 49];
        data[17] = 49.0;
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.input(t(&[1, 1, 7, 7], data));
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).shape, vec![1, 1]);
        assert_eq!(tape.value(y).data, vec![1.0]);
    }

    #[test]
    fn concat_order_and_split_gradient() {
        let mut tape = Tape::new(Mode::Train, 0);
        let a = tape.leaf(t(&[1, 2, 1, 1], vec![1.0, 2.0]).with_grad());
        let b = tape.leaf(t(&[1, 3, 1, 1], vec![3.0, 4.0, 5.0]).with_grad());
        let c = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(tape.concat_channels(&[a]).unwrap(), a);
        let s = tape.weighted_sum(c, vec![1.0; 5]).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.get(b).unwrap(), &[1.0, 1.0, 1.0]);
        let bad = tape.input(t(&[1, 1, 2, 1], vec![0.0, 0.0]));
        assert!(tape.concat_channels(&[a, bad]).is_err());
    }

    #[test]
    fn linear_identity_and_bias() {
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.input(t(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let eye = tape.input(t(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let zero = tape.input(t(&[2], vec![0.0, 0.0]));
        let y = tape.linear(x, eye, zero).unwrap();
        assert_eq!(tape.value(y).data, vec![1.0, 2.0, 3.0, 4.0]);
        let w0 = tape.input(t(&[3, 2], vec![0.0; 6]));
        let b = tape.input(t(&[3], vec![1.0, -1.0, 2.0]));
        let y = tape.linear(x, w0, b).unwrap();
        assert_eq!(tape.value(y).data, vec![1.0, -1.0, 2.0, 1.0, -1.0, 2.0]);
        assert!(tape.linear(x, b, w0).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax_rows(&[0.0f64, 0.0], 2);
        assert_eq!(p, vec![0.5, 0.5]);
        let mut tape = Tape::new(Mode::Eval, 0);
        let z = tape.input(t(&[1, 7], vec![0.0; 7]));
        let l = tape.softmax_cross_entropy(z, &[3]).unwrap();
        assert!((tape.value(l).item() - 7f64.ln()).abs() < 1e-12);
        assert!(tape.softmax_cross_entropy(z, &[7]).is_err());
        let z1 = tape.input(t(&[1, 3], vec![0.5, -1.0, 2.0]));
        let z2 = tape.input(t(&[1, 3], vec![100.5, 99.0, 102.0]));
        let l1 = tape.softmax_cross_entropy(z1, &[0]).unwrap();
        let l2 = tape.softmax_cross_entropy(z2, &[0]).unwrap();
        assert!((tape.value(l1).item() - tape.value(l2).item()).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_standardizes() {
        let mut store = ParamStore::<f64>::new();
        store.register("bn.scale", ParamRole::BnScale, Tensor::full(&[2], 1.0)).unwrap();
        store.register("bn.shift", ParamRole::BnShift, Tensor::zeros(&[2])).unwrap();
        store.register("bn.running_mean", ParamRole::RunningMean, Tensor::zeros(&[2])).unwrap();
        store.register("bn.running_var", ParamRole::RunningVar, Tensor::full(&[2], 1.0)).unwrap();
        let data: Vec<f64> = (0..24).map(|i| f64::from(i * i % 7) + 0.3 * f64::from(i)).collect();
        let mut tape = Tape::new(Mode::Train, 0);
        let x = tape.input(t(&[3, 2, 2, 2], data));
        let y = tape.batch_norm_named(&store, "bn", x).unwrap();
        let out = &tape.value(y).data;
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|s| out[(s * 2 + ch) * 4..(s * 2 + ch + 1) * 4].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4, "{var}");
        }
        let updates = tape.take_stat_updates();
        assert_eq!(updates.len(), 1);
        store.apply_stat_updates(&updates).unwrap();
        assert!(store.value("bn.running_mean").unwrap().data.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn batch_norm_passes_standardized_batch() {
        let data = vec![-1.0, 1.0, -1.0, 1.0];
        let mut tape = Tape::new(Mode::Train, 0);
        let x = tape.input(t(&[2, 1, 1, 2], data.clone()));
        let g = tape.input(t(&[1], vec![1.0]));
        let b = tape.input(t(&[1], vec![0.0]));
        let (y, _) = tape.batch_norm2d(x, g, b, (&[0.0], &[1.0])).unwrap();
        for (o, i) in tape.value(y).data.iter().zip(&data) {
            assert!((o - i).abs() < 1e-5);
        }
        assert!(tape.batch_norm2d(x, g, b, (&[0.0, 0.0], &[1.0])).is_err());
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.leaf(t(&[2], vec![1.0, 2.0]).with_grad());
        assert!(tape.backward(x).is_err());
    }
}
