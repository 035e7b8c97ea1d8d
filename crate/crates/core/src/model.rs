//! Conv-Attention fusion head and its ablation baselines.
//!
//! Per-stream features are projected to a common depth d, then combined by
//! two branches: an attention branch that weights the M projected stream
//! vectors globally, and a convolutional branch that runs N conv blocks
//! (Conv1d + BatchNorm + activation) over the stacked streams and pools.
//! A residual sum of the two feeds a linear classifier.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    adaptive_avg_pool, adaptive_avg_pool_backward, Activation, BatchNorm1d, BnTrace, Conv1d,
    Linear, Mode,
};
use crate::tensor::{matmul_batched, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Visual,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Audio => write!(f, "audio"),
            Modality::Visual => write!(f, "visual"),
            Modality::Text => write!(f, "text"),
        }
    }
}

/// One encoder stream: a named feature vector of fixed width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub name: String,
    pub modality: Modality,
    pub input_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    ConvAttention,
    MlpBaseline,
    AttentionOnly,
    ConvOnly,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Head::ConvAttention => write!(f, "conv_attention"),
            Head::MlpBaseline => write!(f, "mlp_baseline"),
            Head::AttentionOnly => write!(f, "attention_only"),
            Head::ConvOnly => write!(f, "conv_only"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub streams: Vec<StreamSpec>,
    pub d_common: usize,
    pub n_conv_blocks: usize,
    pub conv_kernel: usize,
    pub use_batchnorm: bool,
    pub activation: Activation,
    pub head: Head,
    pub num_classes: usize,
    /// Softmax on the attention weights; off by default (raw affine outputs).
    #[serde(default)]
    pub attn_softmax: bool,
}

impl FusionConfig {
    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::config("at least one stream is required"));
        }
        let mut names = HashSet::new();
        for s in &self.streams {
            if s.input_dim == 0 {
                return Err(Error::config(format!("stream '{}' has input_dim 0", s.name)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::config(format!("duplicate stream name '{}'", s.name)));
            }
        }
        if self.d_common == 0 {
            return Err(Error::config("d_common must be positive"));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(Error::config(format!(
                "conv_kernel must be odd and positive, got {}",
                self.conv_kernel
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        Ok(())
    }

    fn has_attention(&self) -> bool {
        matches!(self.head, Head::ConvAttention | Head::AttentionOnly)
    }

    fn has_conv(&self) -> bool {
        matches!(self.head, Head::ConvAttention | Head::ConvOnly)
    }
}

#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv1d,
    pub bn: Option<BatchNorm1d>,
}

#[derive(Debug, Clone)]
pub struct ConvBlockTrace {
    pub input: Tensor,          // [B, d, M]
    pub conv_out: Tensor,       // [B, d, M]
    pub bn_trace: Option<BnTrace>,
    pub act_pre: Tensor,        // activation input (BN output, or conv output)
}

/// Every intermediate a backward pass needs, from one forward call.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub inputs: Vec<Tensor>,
    pub proj_pre: Vec<Tensor>,
    pub proj: Vec<Tensor>,
    pub f_d: Tensor, // [B, M*d]
    pub f_s: Tensor, // [B, d, M]
    pub attn_logits: Option<Tensor>,  // [B, M] affine output
    pub attn_weights: Option<Tensor>, // [B, M] after optional softmax
    pub f_attn: Option<Tensor>,       // [B, d]
    pub conv_blocks: Vec<ConvBlockTrace>,
    pub conv_final: Option<Tensor>, // F^N, [B, d, M]
    pub f_conv: Option<Tensor>,     // [B, d]
    pub mlp_pre: Option<Tensor>,    // [B, d] (mlp_baseline hidden pre-activation)
    pub f_fusion: Tensor,           // [B, d]
    pub logits: Tensor,             // [B, num_classes]
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub projections: Vec<Linear>,
    pub attn_mlp: Option<Linear>,
    pub conv_blocks: Vec<ConvBlock>,
    pub mlp_hidden: Option<Linear>,
    pub classifier: Linear,
}

/// Named view of one parameter tensor and its gradient buffer.
pub struct ParamBlock<'a> {
    pub name: String,
    pub param: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

pub fn build_model(config: &FusionConfig, rng: &mut Rng) -> Result<FusionModel> {
    config.validate()?;
    let d = config.d_common;
    let m = config.num_streams();
    let mut projections = Vec::with_capacity(m);
    for s in &config.streams {
        projections.push(Linear::new(s.input_dim, d, rng)?);
    }
    let attn_mlp = if config.has_attention() {
        Some(Linear::new(m * d, m, rng)?)
    } else {
        None
    };
    let mut conv_blocks = Vec::new();
    if config.has_conv() {
        let padding = (config.conv_kernel - 1) / 2;
        for _ in 0..config.n_conv_blocks {
            let conv = Conv1d::new(d, d, config.conv_kernel, padding, rng)?;
            let bn = if config.use_batchnorm {
                Some(BatchNorm1d::new(d))
            } else {
                None
            };
            conv_blocks.push(ConvBlock { conv, bn });
        }
    }
    let mlp_hidden = if config.head == Head::MlpBaseline {
        Some(Linear::new(m * d, d, rng)?)
    } else {
        None
    };
    let classifier = Linear::new(d, config.num_classes, rng)?;
    Ok(FusionModel {
        config: config.clone(),
        projections,
        attn_mlp,
        conv_blocks,
        mlp_hidden,
        classifier,
    })
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(x.shape());
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..cols {
            let e = (row[c] - max).exp();
            out.data_mut()[r * cols + c] = e;
            sum += e;
        }
        for c in 0..cols {
            out.data_mut()[r * cols + c] /= sum;
        }
    }
    out
}

impl FusionModel {
    pub fn forward(&mut self, batch: &[Tensor], mode: Mode) -> Result<ForwardTrace> {
        let m = self.config.num_streams();
        let d = self.config.d_common;
        if batch.len() != m {
            return Err(Error::shape(format!(
                "expected {m} stream tensors, got {}",
                batch.len()
            )));
        }
        let b = batch[0].shape()[0];
        for (i, (x, s)) in batch.iter().zip(&self.config.streams).enumerate() {
            if x.rank() != 2 || x.shape()[1] != s.input_dim {
                return Err(Error::shape(format!(
                    "stream '{}' input {:?} vs declared dim {}",
                    s.name,
                    x.shape(),
                    s.input_dim
                )));
            }
            if x.shape()[0] != b {
                return Err(Error::shape(format!(
                    "inconsistent batch extent at stream {i}: {} vs {b}",
                    x.shape()[0]
                )));
            }
        }

        let act = self.config.activation;
        let mut proj_pre = Vec::with_capacity(m);
        let mut proj = Vec::with_capacity(m);
        for (layer, x) in self.projections.iter().zip(batch) {
            let pre = layer.forward(x)?;
            proj.push(act.forward(&pre));
            proj_pre.push(pre);
        }

        // F_d: depth concatenation [B, M*d]; F_s: stream stacking [B, d, M]
        let mut f_d = Tensor::zeros(&[b, m * d]);
        let mut f_s = Tensor::zeros(&[b, d, m]);
        for (mi, p) in proj.iter().enumerate() {
            for bi in 0..b {
                for j in 0..d {
                    let v = p.at(&[bi, j]);
                    *f_d.at_mut(&[bi, mi * d + j]) = v;
                    *f_s.at_mut(&[bi, j, mi]) = v;
                }
            }
        }

        let (attn_logits, attn_weights, f_attn) = if let Some(attn) = &self.attn_mlp {
            let logits = attn.forward(&f_d)?;
            let weights = if self.config.attn_softmax {
                softmax_rows(&logits)
            } else {
                logits.clone()
            };
            // F_s [B,d,M] x weights [B,M,1] -> [B,d,1]
            let w3 = weights.reshape(&[b, m, 1])?;
            let fa = matmul_batched(&f_s, &w3)?.reshape(&[b, d])?;
            (Some(logits), Some(weights), Some(fa))
        } else {
            (None, None, None)
        };

        let mut conv_traces = Vec::new();
        let (conv_final, f_conv) = if self.config.has_conv() {
            let mut cur = f_s.clone();
            for block in &mut self.conv_blocks {
                let conv_out = block.conv.forward(&cur)?;
                let (act_pre, bn_trace) = match &mut block.bn {
                    Some(bn) => {
                        let (out, trace) = bn.forward(&conv_out, mode)?;
                        (out, trace)
                    }
                    None => (conv_out.clone(), None),
                };
                let out = act.forward(&act_pre);
                conv_traces.push(ConvBlockTrace {
                    input: cur,
                    conv_out,
                    bn_trace,
                    act_pre,
                });
                cur = out;
            }
            let pooled = adaptive_avg_pool(&cur)?;
            (Some(cur), Some(pooled))
        } else {
            (None, None)
        };

        let (mlp_pre, f_fusion) = match self.config.head {
            Head::ConvAttention => (
                None,
                f_conv.as_ref().unwrap().add(f_attn.as_ref().unwrap())?,
            ),
            Head::AttentionOnly => (None, f_attn.clone().unwrap()),
            Head::ConvOnly => (None, f_conv.clone().unwrap()),
            Head::MlpBaseline => {
                let pre = self.mlp_hidden.as_ref().unwrap().forward(&f_d)?;
                let hidden = act.forward(&pre);
                (Some(pre), hidden)
            }
        };

        let logits = self.classifier.forward(&f_fusion)?;
        Ok(ForwardTrace {
            mode,
            inputs: batch.to_vec(),
            proj_pre,
            proj,
            f_d,
            f_s,
            attn_logits,
            attn_weights,
            f_attn,
            conv_blocks: conv_traces,
            conv_final,
            f_conv,
            mlp_pre,
            f_fusion,
            logits,
        })
    }

    /// Backpropagate from the logit gradient; fills every parameter gradient
    /// buffer and returns the gradient with respect to each input stream.
    pub fn backward(&mut self, trace: &ForwardTrace, logit_grad: &Tensor) -> Result<Vec<Tensor>> {
        if trace.mode == Mode::Eval {
            return Err(Error::config(
                "backward requires a train-mode trace (batch statistics are part of the graph)",
            ));
        }
        let m = self.config.num_streams();
        let d = self.config.d_common;
        let b = trace.f_fusion.shape()[0];
        let act = self.config.activation;

        let d_fusion = self.classifier.backward(&trace.f_fusion, logit_grad)?;

        let mut d_f_d = Tensor::zeros(&[b, m * d]);
        let mut d_f_s = Tensor::zeros(&[b, d, m]);

        // gradient of a residual sum flows unchanged into both branches
        let (d_f_attn, d_f_conv) = match self.config.head {
            Head::ConvAttention => (Some(d_fusion.clone()), Some(d_fusion.clone())),
            Head::AttentionOnly => (Some(d_fusion.clone()), None),
            Head::ConvOnly => (None, Some(d_fusion.clone())),
            Head::MlpBaseline => {
                let pre = trace.mlp_pre.as_ref().unwrap();
                let d_pre = act.backward(pre, &d_fusion)?;
                let g = self
                    .mlp_hidden
                    .as_mut()
                    .unwrap()
                    .backward(&trace.f_d, &d_pre)?;
                d_f_d.add_assign(&g)?;
                (None, None)
            }
        };

        if let Some(d_fa) = d_f_attn {
            let weights = trace.attn_weights.as_ref().unwrap();
            let f_s = &trace.f_s;
            let mut d_weights = Tensor::zeros(&[b, m]);
            for bi in 0..b {
                for mi in 0..m {
                    let w = weights.at(&[bi, mi]);
                    let mut acc = 0.0;
                    for j in 0..d {
                        let g = d_fa.at(&[bi, j]);
                        acc += g * f_s.at(&[bi, j, mi]);
                        *d_f_s.at_mut(&[bi, j, mi]) += g * w;
                    }
                    *d_weights.at_mut(&[bi, mi]) = acc;
                }
            }
            let d_logits = if self.config.attn_softmax {
                let mut out = Tensor::zeros(&[b, m]);
                for bi in 0..b {
                    let mut dot = 0.0;
                    for mi in 0..m {
                        dot += d_weights.at(&[bi, mi]) * weights.at(&[bi, mi]);
                    }
                    for mi in 0..m {
                        let w = weights.at(&[bi, mi]);
                        *out.at_mut(&[bi, mi]) = w * (d_weights.at(&[bi, mi]) - dot);
                    }
                }
                out
            } else {
                d_weights
            };
            let g = self
                .attn_mlp
                .as_mut()
                .unwrap()
                .backward(&trace.f_d, &d_logits)?;
            d_f_d.add_assign(&g)?;
        }

        if let Some(d_fc) = d_f_conv {
            let mut d_cur = adaptive_avg_pool_backward(&d_fc, m)?;
            for (block, bt) in self
                .conv_blocks
                .iter_mut()
                .zip(&trace.conv_blocks)
                .rev()
            {
                let d_act_pre = act.backward(&bt.act_pre, &d_cur)?;
                let d_conv_out = match (&mut block.bn, &bt.bn_trace) {
                    (Some(bn), Some(bn_trace)) => bn.backward(bn_trace, &d_act_pre)?,
                    (None, None) => d_act_pre,
                    _ => {
                        return Err(Error::config(
                            "trace does not match model batchnorm configuration",
                        ))
                    }
                };
                d_cur = block.conv.backward(&bt.input, &d_conv_out)?;
            }
            d_f_s.add_assign(&d_cur)?;
        }

        // gather both carriers back onto the per-stream projections
        let mut stream_grads = Vec::with_capacity(m);
        for mi in 0..m {
            let mut d_proj = Tensor::zeros(&[b, d]);
            for bi in 0..b {
                for j in 0..d {
                    *d_proj.at_mut(&[bi, j]) =
                        d_f_d.at(&[bi, mi * d + j]) + d_f_s.at(&[bi, j, mi]);
                }
            }
            let d_pre = act.backward(&trace.proj_pre[mi], &d_proj)?;
            let d_x = self.projections[mi].backward(&trace.inputs[mi], &d_pre)?;
            stream_grads.push(d_x);
        }
        Ok(stream_grads)
    }

    /// Argmax per sample over eval-mode logits; ties break to the lowest index.
    pub fn predict(&mut self, batch: &[Tensor]) -> Result<Vec<usize>> {
        let trace = self.forward(batch, Mode::Eval)?;
        Ok(argmax_rows(&trace.logits))
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.projections {
            p.zero_grad();
        }
        if let Some(a) = &mut self.attn_mlp {
            a.zero_grad();
        }
        for blk in &mut self.conv_blocks {
            blk.conv.zero_grad();
            if let Some(bn) = &mut blk.bn {
                bn.zero_grad();
            }
        }
        if let Some(h) = &mut self.mlp_hidden {
            h.zero_grad();
        }
        self.classifier.zero_grad();
    }

    /// All trainable parameters, in declaration order. This order also fixes
    /// the checkpoint layout.
    pub fn param_blocks_mut(&mut self) -> Vec<ParamBlock<'_>> {
        let mut blocks = Vec::new();
        for (i, p) in self.projections.iter_mut().enumerate() {
            blocks.push(ParamBlock {
                name: format!("proj{i}.weight"),
                param: &mut p.weight,
                grad: &mut p.grad_weight,
            });
            blocks.push(ParamBlock {
                name: format!("proj{i}.bias"),
                param: &mut p.bias,
                grad: &mut p.grad_bias,
            });
        }
        if let Some(a) = &mut self.attn_mlp {
            blocks.push(ParamBlock {
                name: "attn_mlp.weight".to_string(),
                param: &mut a.weight,
                grad: &mut a.grad_weight,
            });
            blocks.push(ParamBlock {
                name: "attn_mlp.bias".to_string(),
                param: &mut a.bias,
                grad: &mut a.grad_bias,
            });
        }
        for (k, blk) in self.conv_blocks.iter_mut().enumerate() {
            blocks.push(ParamBlock {
                name: format!("conv{k}.weight"),
                param: &mut blk.conv.weight,
                grad: &mut blk.conv.grad_weight,
            });
            blocks.push(ParamBlock {
                name: format!("conv{k}.bias"),
                param: &mut blk.conv.bias,
                grad: &mut blk.conv.grad_bias,
            });
            if let Some(bn) = &mut blk.bn {
                blocks.push(ParamBlock {
                    name: format!("bn{k}.gamma"),
                    param: &mut bn.gamma,
                    grad: &mut bn.grad_gamma,
                });
                blocks.push(ParamBlock {
                    name: format!("bn{k}.beta"),
                    param: &mut bn.beta,
                    grad: &mut bn.grad_beta,
                });
            }
        }
        if let Some(h) = &mut self.mlp_hidden {
            blocks.push(ParamBlock {
                name: "mlp_hidden.weight".to_string(),
                param: &mut h.weight,
                grad: &mut h.grad_weight,
            });
            blocks.push(ParamBlock {
                name: "mlp_hidden.bias".to_string(),
                param: &mut h.bias,
                grad: &mut h.grad_bias,
            });
        }
        blocks.push(ParamBlock {
            name: "classifier.weight".to_string(),
            param: &mut self.classifier.weight,
            grad: &mut self.classifier.grad_weight,
        });
        blocks.push(ParamBlock {
            name: "classifier.bias".to_string(),
            param: &mut self.classifier.bias,
            grad: &mut self.classifier.grad_bias,
        });
        blocks
    }

    /// Trainable params plus BatchNorm running statistics; the full
    /// serializable state of a model.
    fn state_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for p in &mut self.projections {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
        }
        if let Some(a) = &mut self.attn_mlp {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        for blk in &mut self.conv_blocks {
            out.push(&mut blk.conv.weight);
            out.push(&mut blk.conv.bias);
            if let Some(bn) = &mut blk.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        if let Some(h) = &mut self.mlp_hidden {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.param_blocks_mut().iter().map(|b| b.param.len()).sum()
    }
}

pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let (rows, cols) = (logits.shape()[0], logits.shape()[1]);
    (0..rows)
        .map(|r| {
            let row = &logits.data()[r * cols..(r + 1) * cols];
            let mut best = 0;
            for c in 1..cols {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

// ---- checkpoint format ----
// magic "CAFM", u32 version=1, u32 config length, config JSON (canonical
// struct field order), state tensors as little-endian f64 in declaration
// order, trailing u64 FNV-1a checksum of config+parameter bytes.

const MAGIC: &[u8; 4] = b"CAFM";
const VERSION: u32 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn save_checkpoint(model: &mut FusionModel, path: &Path) -> Result<()> {
    let config_json = serde_json::to_string(&model.config)
        .map_err(|e| Error::format(format!("config serialization: {e}")))?;
    let mut payload = Vec::new();
    payload.extend_from_slice(config_json.as_bytes());
    for t in model.state_tensors_mut() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(config_json.len() as u32).to_le_bytes())?;
    file.write_all(&payload)?;
    file.write_all(&fnv1a64(&payload).to_le_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(Error::format("checkpoint: bad magic or truncated header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!(
            "checkpoint: unsupported version {version} (expected {VERSION})"
        )));
    }
    let config_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + config_len + 8 {
        return Err(Error::format("checkpoint: truncated file"));
    }
    let payload = &bytes[12..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if fnv1a64(payload) != stored {
        return Err(Error::format("checkpoint: checksum mismatch"));
    }
    let config: FusionConfig = serde_json::from_slice(&payload[..config_len])
        .map_err(|e| Error::format(format!("checkpoint: bad config block: {e}")))?;
    let mut model = build_model(&config, &mut Rng::new(0))?;
    let mut cursor = &payload[config_len..];
    for t in model.state_tensors_mut() {
        let need = t.len() * 8;
        if cursor.len() < need {
            return Err(Error::format("checkpoint: truncated parameter block"));
        }
        for v in t.data_mut().iter_mut() {
            *v = f64::from_le_bytes(cursor[..8].try_into().unwrap());
            cursor = &cursor[8..];
        }
    }
    if !cursor.is_empty() {
        return Err(Error::format("checkpoint: trailing parameter bytes"));
    }
    Ok(model)
}

/// Load, then reject checkpoints whose config differs from `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &FusionConfig) -> Result<FusionModel> {
    let model = load_checkpoint(path)?;
    if &model.config != expected {
        return Err(Error::config(
            "checkpoint config does not match the requested configuration",
        ));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::randn;

    fn small_config(m: usize, d: usize, n: usize) -> FusionConfig {
        FusionConfig {
            streams: (0..m)
                .map(|i| StreamSpec {
                    name: format!("s{i}"),
                    modality: match i % 3 {
                        0 => Modality::Audio,
                        1 => Modality::Visual,
                        _ => Modality::Text,
                    },
                    input_dim: 3 + i,
                })
                .collect(),
            d_common: d,
            n_conv_blocks: n,
            conv_kernel: 3,
            use_batchnorm: true,
            activation: Activation::Swish,
            head: Head::ConvAttention,
            num_classes: 6,
            attn_softmax: false,
        }
    }

    fn random_batch(config: &FusionConfig, b: usize, rng: &mut Rng) -> Vec<Tensor> {
        config
            .streams
            .iter()
            .map(|s| randn(rng, &[b, s.input_dim]).unwrap())
            .collect()
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        let config = small_config(3, 4, 2);
        let mut model = build_model(&config, &mut Rng::new(1)).unwrap();
        // closed form: projections sum_i (d*in_i + d), attention (M*d*M + M),
        // conv blocks N*(d*d*k + d + 2d with BN), classifier (C*d + C)
        let (m, d, n, k, c) = (3usize, 4usize, 2usize, 3usize, 6usize);
        let proj: usize = config.streams.iter().map(|s| d * s.input_dim + d).sum();
        let attn = m * d * m + m;
        let conv = n * (d * d * k + d + 2 * d);
        let cls = c * d + c;
        assert_eq!(model.param_count(), proj + attn + conv + cls);
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let config = small_config(2, 4, 1);
        let mut a = build_model(&config, &mut Rng::new(9)).unwrap();
        let mut b = build_model(&config, &mut Rng::new(9)).unwrap();
        let pa = a.param_blocks_mut();
        let pb = b.param_blocks_mut();
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert_eq!(x.param, y.param);
        }
    }

    #[test]
    fn even_kernel_is_rejected() {
        let mut config = small_config(2, 4, 1);
        config.conv_kernel = 2;
        assert!(build_model(&config, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn zero_streams_rejected() {
        let mut config = small_config(2, 4, 1);
        config.streams.clear();
        assert!(build_model(&config, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn forward_shapes() {
        let config = small_config(3, 4, 2);
        let mut model = build_model(&config, &mut Rng::new(2)).unwrap();
        let batch = random_batch(&config, 2, &mut Rng::new(3));
        let trace = model.forward(&batch, Mode::Train).unwrap();
        assert_eq!(trace.f_d.shape(), &[2, 12]);
        assert_eq!(trace.f_s.shape(), &[2, 4, 3]);
        assert_eq!(trace.logits.shape(), &[2, 6]);
        assert_eq!(trace.f_attn.as_ref().unwrap().shape(), &[2, 4]);
    }

    #[test]
    fn one_hot_attention_selects_single_stream() {
        let config = small_config(3, 4, 0);
        let mut model = build_model(&config, &mut Rng::new(4)).unwrap();
        // wire Attn_MLP to emit the constant one-hot e_1
        let attn = model.attn_mlp.as_mut().unwrap();
        attn.weight.fill(0.0);
        attn.bias.fill(0.0);
        attn.bias.data_mut()[1] = 1.0;
        let batch = random_batch(&config, 2, &mut Rng::new(5));
        let trace = model.forward(&batch, Mode::Eval).unwrap();
        let f_attn = trace.f_attn.unwrap();
        for bi in 0..2 {
            for j in 0..4 {
                assert!((f_attn.at(&[bi, j]) - trace.proj[1].at(&[bi, j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_conv_blocks_pool_is_stream_mean() {
        let config = small_config(3, 4, 0);
        let mut model = build_model(&config, &mut Rng::new(6)).unwrap();
        let batch = random_batch(&config, 2, &mut Rng::new(7));
        let trace = model.forward(&batch, Mode::Eval).unwrap();
        let f_conv = trace.f_conv.unwrap();
        for bi in 0..2 {
            for j in 0..4 {
                let mean: f64 =
                    (0..3).map(|mi| trace.proj[mi].at(&[bi, j])).sum::<f64>() / 3.0;
                assert!((f_conv.at(&[bi, j]) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_conv_output_reduces_to_attention_only_head() {
        let config = small_config(3, 4, 1);
        let mut model = build_model(&config, &mut Rng::new(8)).unwrap();
        // freeze conv branch to produce identically zero output: zero final
        // conv weights/bias, BN beta stays 0, and swish(0)=0 pools to 0
        model.conv_blocks[0].conv.weight.fill(0.0);
        model.conv_blocks[0].conv.bias.fill(0.0);
        let mut attn_only = FusionModel {
            config: FusionConfig {
                head: Head::AttentionOnly,
                ..config.clone()
            },
            projections: model.projections.clone(),
            attn_mlp: model.attn_mlp.clone(),
            conv_blocks: vec![],
            mlp_hidden: None,
            classifier: model.classifier.clone(),
        };
        let batch = random_batch(&config, 3, &mut Rng::new(9));
        let full = model.forward(&batch, Mode::Eval).unwrap();
        let attn = attn_only.forward(&batch, Mode::Eval).unwrap();
        for (a, b) in full.logits.data().iter().zip(attn.logits.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stream_permutation_permutes_stacked_axis() {
        let config = small_config(3, 4, 0);
        let mut model = build_model(&config, &mut Rng::new(10)).unwrap();
        let batch = random_batch(&config, 2, &mut Rng::new(11));
        let trace = model.forward(&batch, Mode::Eval).unwrap();

        let perm = [2usize, 0, 1];
        let mut permuted_cfg = config.clone();
        permuted_cfg.streams = perm.iter().map(|&i| config.streams[i].clone()).collect();
        let mut permuted_model = build_model(&permuted_cfg, &mut Rng::new(99)).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            permuted_model.projections[slot] = model.projections[src].clone();
        }
        let permuted_batch: Vec<Tensor> = perm.iter().map(|&i| batch[i].clone()).collect();
        let ptrace = permuted_model.forward(&permuted_batch, Mode::Eval).unwrap();
        for bi in 0..2 {
            for j in 0..4 {
                for (slot, &src) in perm.iter().enumerate() {
                    assert!(
                        (ptrace.f_s.at(&[bi, j, slot]) - trace.f_s.at(&[bi, j, src])).abs()
                            < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn predict_tie_breaks_to_lowest_index() {
        let logits = Tensor::new(&[2, 5], vec![
            0.1, 0.9, 0.3, 0.2, 0.0, //
            0.0, 0.1, 0.7, 0.2, 0.7,
        ])
        .unwrap();
        assert_eq!(argmax_rows(&logits), vec![1, 2]);
    }

    #[test]
    fn backward_rejects_eval_trace() {
        let config = small_config(2, 4, 1);
        let mut model = build_model(&config, &mut Rng::new(12)).unwrap();
        let batch = random_batch(&config, 4, &mut Rng::new(13));
        let trace = model.forward(&batch, Mode::Eval).unwrap();
        let g = Tensor::zeros(&[4, 6]);
        assert!(model.backward(&trace, &g).is_err());
    }

    #[test]
    fn zero_logit_grad_gives_zero_everywhere() {
        let config = small_config(2, 4, 1);
        let mut model = build_model(&config, &mut Rng::new(14)).unwrap();
        let batch = random_batch(&config, 4, &mut Rng::new(15));
        let trace = model.forward(&batch, Mode::Train).unwrap();
        let grads = model.backward(&trace, &Tensor::zeros(&[4, 6])).unwrap();
        for g in &grads {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
        for blk in model.param_blocks_mut() {
            assert!(blk.grad.data().iter().all(|&v| v == 0.0), "{}", blk.name);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let config = small_config(3, 4, 2);
        let mut model = build_model(&config, &mut Rng::new(16)).unwrap();
        let batch = random_batch(&config, 4, &mut Rng::new(17));
        // make BN running stats non-trivial before saving
        model.forward(&batch, Mode::Train).unwrap();
        let dir = std::env::temp_dir().join("convattn_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.caf");
        save_checkpoint(&mut model, &path).unwrap();
        let mut loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, config);
        let a = model.forward(&batch, Mode::Eval).unwrap();
        let b = loaded.forward(&batch, Mode::Eval).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let config = small_config(2, 4, 1);
        let mut model = build_model(&config, &mut Rng::new(18)).unwrap();
        let dir = std::env::temp_dir().join("convattn_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.caf");
        save_checkpoint(&mut model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 13]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn config_mismatch_is_explicit() {
        let config = small_config(2, 4, 1);
        let mut model = build_model(&config, &mut Rng::new(19)).unwrap();
        let dir = std::env::temp_dir().join("convattn_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mismatch.caf");
        save_checkpoint(&mut model, &path).unwrap();
        let other = small_config(3, 4, 1);
        let err = load_checkpoint_expecting(&path, &other).unwrap_err();
        assert!(err.to_string().contains("does not match"));
    }
}
