//! Dense tensors with reverse-mode differentiation on an operation tape.
//!
//! Tensors are rank <= 5 with layout [batch, channels, z, y, x] and the x
//! axis fastest. The tape records every executed operation together with the
//! saved context its gradient rule needs; nodes are appended in execution
//! order, which is automatically a topological order, so `backward` is a
//! single reverse sweep. All arithmetic is f64; 32-bit conversion happens
//! only at checkpoint files.

pub mod conv;
pub mod gradcheck;

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense real tensor, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 5 {
            return Err(Error::ShapeMismatch(format!(
                "tensor rank must be 1..=5, got {}",
                shape.len()
            )));
        }
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape, data: vec![v; len] }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a scalar (length-1) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Shape as [n, c, z, y, x]; errors unless rank is exactly 5.
    pub fn dims5(&self) -> Result<[usize; 5]> {
        if self.shape.len() != 5 {
            return Err(Error::ShapeMismatch(format!(
                "spatial op needs rank-5 [n,c,z,y,x], got {:?}",
                self.shape
            )));
        }
        Ok([
            self.shape[0],
            self.shape[1],
            self.shape[2],
            self.shape[3],
            self.shape[4],
        ])
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Train/inference switch for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Running batch-norm statistics, owned outside the tape.
#[derive(Debug, Clone)]
pub struct BnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BnState {
    pub fn new(channels: usize) -> BnState {
        BnState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// Batch-norm hyperparameters.
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

enum OpKind {
    Leaf,
    Conv3d {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        pad: usize,
    },
    MaxPool3d {
        x: TensorId,
        argmax: Vec<usize>,
    },
    UpsampleTrilinear {
        x: TensorId,
        factor: [usize; 3],
    },
    TransposedConv3d {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    ConcatChannels {
        xs: Vec<TensorId>,
    },
    Relu {
        x: TensorId,
    },
    Sigmoid {
        x: TensorId,
    },
    BatchNorm {
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train_stats: bool,
    },
    Dropout {
        x: TensorId,
        mask: Vec<f64>,
    },
    Sum {
        x: TensorId,
    },
    Mean {
        x: TensorId,
    },
    SoftDice {
        p: TensorId,
        g: TensorId,
        eps: f64,
    },
}

struct Node {
    value: Tensor,
    kind: OpKind,
    requires_grad: bool,
}

/// Operation tape; append-only, so node order is topological.
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a node if any path from the loss reached it.
    pub fn get(&self, id: TensorId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a node; zeros when the loss never reached it.
    pub fn get_or_zeros(&self, tape: &Tape, id: TensorId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(id).shape().to_vec()),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, kind: OpKind, requires_grad: bool) -> TensorId {
        debug_assert!(
            value.data.iter().all(|v| v.is_finite()),
            "non-finite forward value"
        );
        self.nodes.push(Node { value, kind, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Registers an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> TensorId {
        self.push(value, OpKind::Leaf, requires_grad)
    }

    /// 3D cross-correlation with zero padding keeping the spatial shape.
    ///
    /// Weights are [c_out, c_in, k, k, k] with k in {1, 3}; bias is [c_out].
    pub fn conv3d(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xs = self.value(x).dims5()?;
        let ws = self.value(w).dims5()?;
        let k = ws[2];
        if ws[3] != k || ws[4] != k || !(k == 1 || k == 3) {
            return Err(Error::ShapeMismatch(format!(
                "conv3d kernel must be 1^3 or 3^3, got {}x{}x{}",
                ws[2], ws[3], ws[4]
            )));
        }
        if ws[1] != xs[1] {
            return Err(Error::ShapeMismatch(format!(
                "conv3d kernel expects {} input channels, tensor has {}",
                ws[1], xs[1]
            )));
        }
        if self.value(b).shape() != [ws[0]] {
            return Err(Error::ShapeMismatch(format!(
                "conv3d bias must be [{}], got {:?}",
                ws[0],
                self.value(b).shape()
            )));
        }
        let pad = (k - 1) / 2;
        let out = conv::conv3d_forward(self.value(x), self.value(w), self.value(b), pad);
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(out, OpKind::Conv3d { x, w, b, pad }, req))
    }

    /// Non-overlapping window max; dims must divide by the pool factors.
    pub fn maxpool3d(&mut self, x: TensorId, pool: [usize; 3]) -> Result<TensorId> {
        let xs = self.value(x).dims5()?;
        for a in 0..3 {
            if pool[a] == 0 || xs[2 + a] % pool[a] != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "maxpool3d: spatial dims {:?} not divisible by pool {:?}",
                    &xs[2..],
                    pool
                )));
            }
        }
        let (out, argmax) = conv::maxpool3d_forward(self.value(x), pool);
        let req = self.requires(x);
        Ok(self.push(out, OpKind::MaxPool3d { x, argmax }, req))
    }

    /// Trilinear upsampling by integer factors, align-corners-false.
    pub fn upsample_trilinear(&mut self, x: TensorId, factor: [usize; 3]) -> Result<TensorId> {
        self.value(x).dims5()?;
        if factor.iter().any(|&f| f == 0) {
            return Err(Error::ShapeMismatch(format!(
                "upsample factors must be >= 1, got {factor:?}"
            )));
        }
        let out = conv::upsample_trilinear_forward(self.value(x), factor);
        let req = self.requires(x);
        Ok(self.push(out, OpKind::UpsampleTrilinear { x, factor }, req))
    }

    /// Transposed convolution with kernel equal to stride (non-overlapping).
    ///
    /// Weights are [c_in, c_out, s0, s1, s2]; bias is [c_out].
    pub fn transposed_conv3d(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
        stride: [usize; 3],
    ) -> Result<TensorId> {
        let xs = self.value(x).dims5()?;
        let ws = self.value(w).dims5()?;
        if [ws[2], ws[3], ws[4]] != stride {
            return Err(Error::ShapeMismatch(format!(
                "transposed_conv3d kernel {:?} must equal stride {:?}",
                &ws[2..],
                stride
            )));
        }
        if ws[0] != xs[1] {
            return Err(Error::ShapeMismatch(format!(
                "transposed_conv3d kernel expects {} input channels, tensor has {}",
                ws[0], xs[1]
            )));
        }
        if self.value(b).shape() != [ws[1]] {
            return Err(Error::ShapeMismatch(format!(
                "transposed_conv3d bias must be [{}], got {:?}",
                ws[1],
                self.value(b).shape()
            )));
        }
        let out = conv::transposed_conv3d_forward(self.value(x), self.value(w), self.value(b));
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(out, OpKind::TransposedConv3d { x, w, b }, req))
    }

    /// Concatenates along the channel axis; batch and spatial dims must match.
    pub fn concat_channels(&mut self, xs: &[TensorId]) -> Result<TensorId> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("concat_channels of no tensors".into()));
        }
        let first = self.value(xs[0]).dims5()?;
        let mut c_total = 0;
        for &id in xs {
            let s = self.value(id).dims5()?;
            if s[0] != first[0] || s[2..] != first[2..] {
                return Err(Error::ShapeMismatch(format!(
                    "concat_channels: {:?} incompatible with {:?}",
                    s, first
                )));
            }
            c_total += s[1];
        }
        let [n, _, d0, d1, d2] = first;
        let spatial = d0 * d1 * d2;
        let mut data = Vec::with_capacity(n * c_total * spatial);
        for ni in 0..n {
            for &id in xs {
                let t = self.value(id);
                let c = t.shape()[1];
                let start = ni * c * spatial;
                data.extend_from_slice(&t.data()[start..start + c * spatial]);
            }
        }
        let out = Tensor { shape: vec![n, c_total, d0, d1, d2], data };
        let req = xs.iter().any(|&id| self.requires(id));
        Ok(self.push(out, OpKind::ConcatChannels { xs: xs.to_vec() }, req))
    }

    /// Elementwise max(x, 0); gradient at exactly 0 is 0.
    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        };
        let req = self.requires(x);
        self.push(out, OpKind::Relu { x }, req)
    }

    /// Elementwise logistic function; output strictly in (0, 1).
    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        };
        let req = self.requires(x);
        self.push(out, OpKind::Sigmoid { x }, req)
    }

    /// Batch normalization over batch and spatial extent per channel.
    ///
    /// Train mode normalizes with current statistics and updates `state`
    /// (biased variance for normalization, unbiased for the running value);
    /// infer mode normalizes with the running statistics.
    pub fn batchnorm(
        &mut self,
        x: TensorId,
        scale: TensorId,
        shift: TensorId,
        state: &mut BnState,
        mode: Mode,
    ) -> Result<TensorId> {
        let [n, c, d0, d1, d2] = self.value(x).dims5()?;
        if self.value(scale).shape() != [c] || self.value(shift).shape() != [c] {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm scale/shift must be [{c}]"
            )));
        }
        if state.running_mean.len() != c || state.running_var.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm running stats must have {c} channels"
            )));
        }
        let spatial = d0 * d1 * d2;
        let count = n * spatial;
        let xt = self.value(x).data().to_vec();
        let sc = self.value(scale).data().to_vec();
        let sh = self.value(shift).data().to_vec();
        let mut xhat = vec![0.0; xt.len()];
        let mut inv_std = vec![0.0; c];
        let mut out = vec![0.0; xt.len()];
        let train_stats = mode == Mode::Train;
        for ci in 0..c {
            let (mean, var) = if train_stats {
                let mut sum = 0.0;
                for ni in 0..n {
                    let base = (ni * c + ci) * spatial;
                    for i in 0..spatial {
                        sum += xt[base + i];
                    }
                }
                let mean = sum / count as f64;
                let mut ss = 0.0;
                for ni in 0..n {
                    let base = (ni * c + ci) * spatial;
                    for i in 0..spatial {
                        let d = xt[base + i] - mean;
                        ss += d * d;
                    }
                }
                let var = ss / count as f64;
                let var_unbiased = if count > 1 {
                    ss / (count - 1) as f64
                } else {
                    var
                };
                state.running_mean[ci] =
                    (1.0 - BN_MOMENTUM) * state.running_mean[ci] + BN_MOMENTUM * mean;
                state.running_var[ci] =
                    (1.0 - BN_MOMENTUM) * state.running_var[ci] + BN_MOMENTUM * var_unbiased;
                (mean, var)
            } else {
                (state.running_mean[ci], state.running_var[ci])
            };
            let istd = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ci] = istd;
            for ni in 0..n {
                let base = (ni * c + ci) * spatial;
                for i in 0..spatial {
                    let xh = (xt[base + i] - mean) * istd;
                    xhat[base + i] = xh;
                    out[base + i] = sc[ci] * xh + sh[ci];
                }
            }
        }
        let out = Tensor { shape: vec![n, c, d0, d1, d2], data: out };
        let req = self.requires(x) || self.requires(scale) || self.requires(shift);
        Ok(self.push(
            out,
            OpKind::BatchNorm { x, scale, shift, xhat, inv_std, train_stats },
            req,
        ))
    }

    /// Inverted dropout: zeroes with probability `rate` in train mode and
    /// scales survivors by 1/(1-rate); identity in infer mode.
    pub fn dropout(
        &mut self,
        x: TensorId,
        rate: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        let t = self.value(x);
        let mask: Vec<f64> = if mode == Mode::Infer || rate == 0.0 {
            vec![1.0; t.len()]
        } else {
            let keep_scale = 1.0 / (1.0 - rate);
            (0..t.len())
                .map(|_| {
                    if rng.gen::<f64>() < rate {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect()
        };
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        let req = self.requires(x);
        Ok(self.push(out, OpKind::Dropout { x, mask }, req))
    }

    /// Sum of all elements (scalar output).
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s: f64 = self.value(x).data().iter().sum();
        let req = self.requires(x);
        self.push(Tensor::scalar(s), OpKind::Sum { x }, req)
    }

    /// Mean of all elements (scalar output).
    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let req = self.requires(x);
        self.push(Tensor::scalar(m), OpKind::Mean { x }, req)
    }

    /// Negative soft Dice: -(2*sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps).
    ///
    /// Gradients flow to `p` only; `g` is treated as a constant label field.
    pub fn soft_dice_loss(&mut self, p: TensorId, g: TensorId, eps: f64) -> Result<TensorId> {
        if self.value(p).shape() != self.value(g).shape() {
            return Err(Error::ShapeMismatch(format!(
                "soft dice shapes differ: {:?} vs {:?}",
                self.value(p).shape(),
                self.value(g).shape()
            )));
        }
        let pv = self.value(p).data();
        let gv = self.value(g).data();
        let mut inter = 0.0;
        let mut p2 = 0.0;
        let mut g2 = 0.0;
        for (a, b) in pv.iter().zip(gv) {
            inter += a * b;
            p2 += a * a;
            g2 += b * b;
        }
        let loss = -(2.0 * inter + eps) / (p2 + g2 + eps);
        let req = self.requires(p);
        Ok(self.push(Tensor::scalar(loss), OpKind::SoftDice { p, g, eps }, req))
    }

    /// Reverse sweep from a scalar loss; gradients for every reached node.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let gy = grads[id].clone().expect("checked above");
            self.backprop_node(id, &gy, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let send = |tid: TensorId, contrib: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.requires(tid) {
                return;
            }
            match &mut grads[tid.0] {
                Some(acc) => {
                    for (a, c) in acc.data.iter_mut().zip(&contrib.data) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.kind {
            OpKind::Leaf => {}
            OpKind::Conv3d { x, w, b, pad } => {
                let (dx, dw, db) =
                    conv::conv3d_backward(self.value(*x), self.value(*w), gy, *pad);
                send(*x, dx, grads);
                send(*w, dw, grads);
                send(*b, db, grads);
            }
            OpKind::MaxPool3d { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                for (out_i, &src) in argmax.iter().enumerate() {
                    dx.data[src] += gy.data[out_i];
                }
                send(*x, dx, grads);
            }
            OpKind::UpsampleTrilinear { x, factor } => {
                let dx = conv::upsample_trilinear_backward(self.value(*x), gy, *factor);
                send(*x, dx, grads);
            }
            OpKind::TransposedConv3d { x, w, b } => {
                let (dx, dw, db) =
                    conv::transposed_conv3d_backward(self.value(*x), self.value(*w), gy);
                send(*x, dx, grads);
                send(*w, dw, grads);
                send(*b, db, grads);
            }
            OpKind::ConcatChannels { xs } => {
                let [n, _, d0, d1, d2] = node.value.dims5().expect("concat output is rank 5");
                let spatial = d0 * d1 * d2;
                let c_total = node.value.shape()[1];
                let mut offset = 0;
                for &xid in xs {
                    let c = self.value(xid).shape()[1];
                    let mut dx = Tensor::zeros(self.value(xid).shape().to_vec());
                    for ni in 0..n {
                        let src = (ni * c_total + offset) * spatial;
                        let dst = ni * c * spatial;
                        dx.data[dst..dst + c * spatial]
                            .copy_from_slice(&gy.data[src..src + c * spatial]);
                    }
                    send(xid, dx, grads);
                    offset += c;
                }
            }
            OpKind::Relu { x } => {
                let xv = self.value(*x);
                let dx = Tensor {
                    shape: xv.shape.clone(),
                    data: xv
                        .data
                        .iter()
                        .zip(&gy.data)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect(),
                };
                send(*x, dx, grads);
            }
            OpKind::Sigmoid { x } => {
                let s = &node.value;
                let dx = Tensor {
                    shape: s.shape.clone(),
                    data: s
                        .data
                        .iter()
                        .zip(&gy.data)
                        .map(|(&y, &g)| g * y * (1.0 - y))
                        .collect(),
                };
                send(*x, dx, grads);
            }
            OpKind::BatchNorm { x, scale, shift, xhat, inv_std, train_stats } => {
                let [n, c, d0, d1, d2] = self.value(*x).dims5().expect("bn input is rank 5");
                let spatial = d0 * d1 * d2;
                let count = (n * spatial) as f64;
                let sc = self.value(*scale).data();
                let mut dscale = vec![0.0; c];
                let mut dshift = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * spatial;
                        for i in 0..spatial {
                            dscale[ci] += gy.data[base + i] * xhat[base + i];
                            dshift[ci] += gy.data[base + i];
                        }
                    }
                }
                let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * spatial;
                        let k = sc[ci] * inv_std[ci];
                        for i in 0..spatial {
                            let g = gy.data[base + i];
                            dx.data[base + i] = if *train_stats {
                                // train-mode statistics couple every element
                                k * (g - dshift[ci] / count
                                    - xhat[base + i] * dscale[ci] / count)
                            } else {
                                k * g
                            };
                        }
                    }
                }
                send(*x, dx, grads);
                send(
                    *scale,
                    Tensor { shape: vec![c], data: dscale },
                    grads,
                );
                send(
                    *shift,
                    Tensor { shape: vec![c], data: dshift },
                    grads,
                );
            }
            OpKind::Dropout { x, mask } => {
                let dx = Tensor {
                    shape: self.value(*x).shape().to_vec(),
                    data: gy.data.iter().zip(mask).map(|(g, m)| g * m).collect(),
                };
                send(*x, dx, grads);
            }
            OpKind::Sum { x } => {
                let g = gy.data[0];
                send(
                    *x,
                    Tensor::filled(self.value(*x).shape().to_vec(), g),
                    grads,
                );
            }
            OpKind::Mean { x } => {
                let n = self.value(*x).len() as f64;
                let g = gy.data[0] / n;
                send(
                    *x,
                    Tensor::filled(self.value(*x).shape().to_vec(), g),
                    grads,
                );
            }
            OpKind::SoftDice { p, g, eps } => {
                let pv = self.value(*p).data();
                let gv = self.value(*g).data();
                let mut inter = 0.0;
                let mut p2 = 0.0;
                let mut g2 = 0.0;
                for (a, b) in pv.iter().zip(gv) {
                    inter += a * b;
                    p2 += a * a;
                    g2 += b * b;
                }
                let num = 2.0 * inter + eps;
                let den = p2 + g2 + eps;
                let gscale = gy.data[0];
                let dp: Vec<f64> = pv
                    .iter()
                    .zip(gv)
                    .map(|(&pi, &gi)| {
                        gscale * (-(2.0 * gi * den - num * 2.0 * pi) / (den * den))
                    })
                    .collect();
                send(
                    *p,
                    Tensor { shape: self.value(*p).shape().to_vec(), data: dp },
                    grads,
                );
            }
        }
    }
}
