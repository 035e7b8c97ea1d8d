//! Layer zoo with explicit forward and backward passes: linear projection,
//! 1-D convolution (cross-correlation, no kernel flip), batch normalization,
//! Swish/ReLU activations and adaptive average pooling.
//!
//! Backward passes accumulate into the layer's gradient buffers; repeated
//! calls add up until `zero_grad`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{randn, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Relu,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative with respect to the pre-activation input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn forward(self, x: &Tensor) -> Tensor {
        x.map(|v| self.apply(v))
    }

    /// `pre` is the input the forward pass saw.
    pub fn backward(self, pre: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        pre.zip_map(grad_out, |x, g| self.derivative(x) * g)
    }
}

pub fn swish(x: &Tensor) -> Tensor {
    Activation::Swish.forward(x)
}

/// Affine map y = x W^T + b applied row-wise.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor, // [out, in]
    pub bias: Tensor,   // [out]
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weight = randn(rng, &[out_dim, in_dim])?.scale(scale);
        Ok(Linear {
            weight,
            bias: Tensor::zeros(&[out_dim]),
            grad_weight: Tensor::zeros(&[out_dim, in_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        if x.rank() != 2 || x.shape()[1] != in_dim {
            return Err(Error::shape(format!(
                "linear forward: input {:?} vs layer [out={out_dim}, in={in_dim}]",
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let mut out = Tensor::zeros(&[batch, out_dim]);
        for b in 0..batch {
            for o in 0..out_dim {
                let mut acc = self.bias.data()[o];
                for i in 0..in_dim {
                    acc += x.data()[b * in_dim + i] * self.weight.data()[o * in_dim + i];
                }
                out.data_mut()[b * out_dim + o] = acc;
            }
        }
        out.assert_finite("linear forward")?;
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        let batch = x.shape()[0];
        if grad_out.shape() != [batch, out_dim] {
            return Err(Error::shape(format!(
                "linear backward: upstream {:?} vs expected [{batch}, {out_dim}]",
                grad_out.shape()
            )));
        }
        let mut grad_in = Tensor::zeros(&[batch, in_dim]);
        for b in 0..batch {
            for o in 0..out_dim {
                let g = grad_out.data()[b * out_dim + o];
                self.grad_bias.data_mut()[o] += g;
                for i in 0..in_dim {
                    self.grad_weight.data_mut()[o * in_dim + i] += g * x.data()[b * in_dim + i];
                    grad_in.data_mut()[b * in_dim + i] += g * self.weight.data()[o * in_dim + i];
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// 1-D cross-correlation with symmetric zero padding, stride 1.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor, // [out_ch, in_ch, kernel]
    pub bias: Tensor,   // [out_ch]
    pub padding: usize,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
}

impl Conv1d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel;
        let weight = randn(rng, &[out_ch, in_ch, kernel])?.scale(1.0 / (fan_in as f64).sqrt());
        Ok(Conv1d {
            weight,
            bias: Tensor::zeros(&[out_ch]),
            padding,
            grad_weight: Tensor::zeros(&[out_ch, in_ch, kernel]),
            grad_bias: Tensor::zeros(&[out_ch]),
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn in_ch(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_ch(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_len(&self, in_len: usize) -> Result<usize> {
        let padded = in_len + 2 * self.padding;
        let k = self.kernel();
        if k > padded {
            return Err(Error::shape(format!(
                "conv1d: kernel {k} exceeds padded length {padded}"
            )));
        }
        Ok(padded - k + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (out_ch, in_ch, k) = (self.out_ch(), self.in_ch(), self.kernel());
        if x.rank() != 3 || x.shape()[1] != in_ch {
            return Err(Error::shape(format!(
                "conv1d forward: input {:?} vs in_ch {in_ch}",
                x.shape()
            )));
        }
        let (batch, len) = (x.shape()[0], x.shape()[2]);
        let out_len = self.out_len(len)?;
        let p = self.padding as isize;
        let mut out = Tensor::zeros(&[batch, out_ch, out_len]);
        for b in 0..batch {
            for oc in 0..out_ch {
                for t in 0..out_len {
                    let mut acc = self.bias.data()[oc];
                    for ic in 0..in_ch {
                        for tap in 0..k {
                            let src = t as isize + tap as isize - p;
                            if src >= 0 && (src as usize) < len {
                                acc += self.weight.at(&[oc, ic, tap])
                                    * x.at(&[b, ic, src as usize]);
                            }
                        }
                    }
                    *out.at_mut(&[b, oc, t]) = acc;
                }
            }
        }
        out.assert_finite("conv1d forward")?;
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (out_ch, in_ch, k) = (self.out_ch(), self.in_ch(), self.kernel());
        let (batch, len) = (x.shape()[0], x.shape()[2]);
        let out_len = self.out_len(len)?;
        if grad_out.shape() != [batch, out_ch, out_len] {
            return Err(Error::shape(format!(
                "conv1d backward: upstream {:?} vs expected [{batch}, {out_ch}, {out_len}]",
                grad_out.shape()
            )));
        }
        let p = self.padding as isize;
        let mut grad_in = Tensor::zeros(&[batch, in_ch, len]);
        for b in 0..batch {
            for oc in 0..out_ch {
                for t in 0..out_len {
                    let g = grad_out.at(&[b, oc, t]);
                    self.grad_bias.data_mut()[oc] += g;
                    for ic in 0..in_ch {
                        for tap in 0..k {
                            let src = t as isize + tap as isize - p;
                            if src >= 0 && (src as usize) < len {
                                *self.grad_weight.at_mut(&[oc, ic, tap]) +=
                                    g * x.at(&[b, ic, src as usize]);
                                *grad_in.at_mut(&[b, ic, src as usize]) +=
                                    g * self.weight.at(&[oc, ic, tap]);
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Per-channel statistics cached by a train-mode forward, needed by backward.
#[derive(Debug, Clone)]
pub struct BnTrace {
    pub mean: Vec<f64>,
    pub var: Vec<f64>, // biased
    pub xhat: Tensor,
}

/// Batch normalization over [B, ch, L]: statistics per channel over B*L.
/// Biased variance normalizes; the running estimate uses the unbiased form.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Tensor, // [ch]
    pub beta: Tensor,  // [ch]
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
    pub grad_gamma: Tensor,
    pub grad_beta: Tensor,
}

impl BatchNorm1d {
    pub fn new(ch: usize) -> Self {
        BatchNorm1d {
            gamma: Tensor::full(&[ch], 1.0),
            beta: Tensor::zeros(&[ch]),
            running_mean: Tensor::zeros(&[ch]),
            running_var: Tensor::full(&[ch], 1.0),
            epsilon: 1e-5,
            momentum: 0.1,
            grad_gamma: Tensor::zeros(&[ch]),
            grad_beta: Tensor::zeros(&[ch]),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<BnTrace>)> {
        let ch = self.channels();
        if x.rank() != 3 || x.shape()[1] != ch {
            return Err(Error::shape(format!(
                "batchnorm forward: input {:?} vs {ch} channels",
                x.shape()
            )));
        }
        let (batch, len) = (x.shape()[0], x.shape()[2]);
        let n = batch * len;
        match mode {
            Mode::Eval => {
                let mut out = Tensor::zeros(x.shape());
                for b in 0..batch {
                    for c in 0..ch {
                        let inv = 1.0 / (self.running_var.data()[c] + self.epsilon).sqrt();
                        for t in 0..len {
                            let xhat = (x.at(&[b, c, t]) - self.running_mean.data()[c]) * inv;
                            *out.at_mut(&[b, c, t]) =
                                self.gamma.data()[c] * xhat + self.beta.data()[c];
                        }
                    }
                }
                out.assert_finite("batchnorm eval forward")?;
                Ok((out, None))
            }
            Mode::Train => {
                if n < 2 {
                    return Err(Error::shape(
                        "batchnorm train mode needs at least 2 values per channel".to_string(),
                    ));
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let mut acc = 0.0;
                    for b in 0..batch {
                        for t in 0..len {
                            acc += x.at(&[b, c, t]);
                        }
                    }
                    mean[c] = acc / n as f64;
                    let mut vacc = 0.0;
                    for b in 0..batch {
                        for t in 0..len {
                            let d = x.at(&[b, c, t]) - mean[c];
                            vacc += d * d;
                        }
                    }
                    var[c] = vacc / n as f64;
                }
                let mut xhat = Tensor::zeros(x.shape());
                let mut out = Tensor::zeros(x.shape());
                for b in 0..batch {
                    for c in 0..ch {
                        let inv = 1.0 / (var[c] + self.epsilon).sqrt();
                        for t in 0..len {
                            let h = (x.at(&[b, c, t]) - mean[c]) * inv;
                            *xhat.at_mut(&[b, c, t]) = h;
                            *out.at_mut(&[b, c, t]) =
                                self.gamma.data()[c] * h + self.beta.data()[c];
                        }
                    }
                }
                let unbias = n as f64 / (n as f64 - 1.0);
                for c in 0..ch {
                    let m = self.momentum;
                    self.running_mean.data_mut()[c] =
                        (1.0 - m) * self.running_mean.data()[c] + m * mean[c];
                    self.running_var.data_mut()[c] =
                        (1.0 - m) * self.running_var.data()[c] + m * var[c] * unbias;
                }
                out.assert_finite("batchnorm train forward")?;
                Ok((out, Some(BnTrace { mean, var, xhat })))
            }
        }
    }

    pub fn backward(&mut self, trace: &BnTrace, grad_out: &Tensor) -> Result<Tensor> {
        let ch = self.channels();
        if grad_out.shape() != trace.xhat.shape() {
            return Err(Error::shape(format!(
                "batchnorm backward: upstream {:?} vs trace {:?}",
                grad_out.shape(),
                trace.xhat.shape()
            )));
        }
        let (batch, len) = (grad_out.shape()[0], grad_out.shape()[2]);
        let n = (batch * len) as f64;
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for c in 0..ch {
            let inv = 1.0 / (trace.var[c] + self.epsilon).sqrt();
            let mut sum_g = 0.0;
            let mut sum_g_xhat = 0.0;
            for b in 0..batch {
                for t in 0..len {
                    let g = grad_out.at(&[b, c, t]);
                    sum_g += g;
                    sum_g_xhat += g * trace.xhat.at(&[b, c, t]);
                }
            }
            self.grad_beta.data_mut()[c] += sum_g;
            self.grad_gamma.data_mut()[c] += sum_g_xhat;
            let gamma = self.gamma.data()[c];
            for b in 0..batch {
                for t in 0..len {
                    let g = grad_out.at(&[b, c, t]);
                    let xhat = trace.xhat.at(&[b, c, t]);
                    *grad_in.at_mut(&[b, c, t]) =
                        gamma * inv * (g - sum_g / n - xhat * sum_g_xhat / n);
                }
            }
        }
        Ok(grad_in)
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }
}

/// Mean over the length axis: [B, ch, L] -> [B, ch].
pub fn adaptive_avg_pool(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::shape(format!(
            "adaptive_avg_pool expects rank 3, got {:?}",
            x.shape()
        )));
    }
    crate::tensor::reduce_mean(x, 2)
}

pub fn adaptive_avg_pool_backward(grad_out: &Tensor, len: usize) -> Result<Tensor> {
    if grad_out.rank() != 2 {
        return Err(Error::shape(format!(
            "pool backward expects rank 2 upstream, got {:?}",
            grad_out.shape()
        )));
    }
    let (batch, ch) = (grad_out.shape()[0], grad_out.shape()[1]);
    let mut grad_in = Tensor::zeros(&[batch, ch, len]);
    for b in 0..batch {
        for c in 0..ch {
            let g = grad_out.at(&[b, c]) / len as f64;
            for t in 0..len {
                *grad_in.at_mut(&[b, c, t]) = g;
            }
        }
    }
    Ok(grad_in)
}
