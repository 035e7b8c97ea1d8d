//! Cross-entropy training loop with SGD/Adam, deterministic batching,
//! early stopping on validation WAF, a full-model gradient-check harness,
//! and the ablation grid runner.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{inject_noise, subsample_ratio, Dataset, Provenance, SubsampleTarget};
use crate::error::{Error, Result};
use crate::layers::{Activation, Mode};
use crate::metrics::{accuracy, waf, ConfusionMatrix};
use crate::model::{build_model, FusionConfig, FusionModel, Head};
use crate::tensor::{randn, Rng, Tensor};

/// Learning rates swept by the reference experiments; anything else is
/// accepted but flagged in the log.
pub const LR_SWEEP: [f64; 6] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub shuffle: bool,
    /// Epochs without validation-WAF improvement before stopping; None
    /// disables early stopping.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle: true,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config(
                "batch_size must be >= 2 (train-mode batch statistics)",
            ));
        }
        if !LR_SWEEP.iter().any(|&lr| lr == self.learning_rate) {
            log::warn!(
                "learning rate {} is outside the reference sweep {:?}",
                self.learning_rate,
                LR_SWEEP
            );
        }
        Ok(())
    }
}

/// Mean cross-entropy over softmax logits, with the matching logit gradient
/// (softmax - onehot) / B. Stabilized by max subtraction.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if targets.len() != b {
        return Err(Error::shape(format!(
            "{} targets for batch of {b}",
            targets.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[b, c]);
    for (bi, &t) in targets.iter().enumerate() {
        if t >= c {
            return Err(Error::config(format!("target {t} out of range for {c} classes")));
        }
        let row = &logits.data()[bi * c..(bi + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        loss += -(row[t] - max - sum_exp.ln());
        for ci in 0..c {
            let p = (row[ci] - max).exp() / sum_exp;
            let onehot = if ci == t { 1.0 } else { 0.0 };
            *grad.at_mut(&[bi, ci]) = (p - onehot) / b as f64;
        }
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite cross-entropy loss"));
    }
    Ok((loss, grad))
}

/// First-order optimizer over the model's parameter blocks. Adam keeps
/// bias-corrected first and second moments per parameter.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.adam_epsilon,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut FusionModel) {
        let mut blocks = model.param_blocks_mut();
        if self.m.is_empty() {
            self.m = blocks.iter().map(|b| vec![0.0; b.param.len()]).collect();
            self.v = blocks.iter().map(|b| vec![0.0; b.param.len()]).collect();
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for block in &mut blocks {
                    for (p, &g) in block.param.data_mut().iter_mut().zip(block.grad.data()) {
                        *p -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (bi, block) in blocks.iter_mut().enumerate() {
                    for (i, (p, &g)) in block
                        .param
                        .data_mut()
                        .iter_mut()
                        .zip(block.grad.data())
                        .enumerate()
                    {
                        let m = &mut self.m[bi][i];
                        let v = &mut self.v[bi][i];
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        *p -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_waf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub curve: Vec<EpochStat>,
    pub epochs_run: usize,
    pub train_waf: f64,
    pub train_acc: f64,
    pub val_waf: f64,
    pub val_acc: f64,
    pub best_val_waf: f64,
    pub wall_ms: u128,
}

fn check_streams(config: &FusionConfig, ds: &Dataset) -> Result<()> {
    if config.num_streams() != ds.streams.len() {
        return Err(Error::config(format!(
            "model expects {} streams, dataset has {}",
            config.num_streams(),
            ds.streams.len()
        )));
    }
    for (cs, dss) in config.streams.iter().zip(&ds.streams) {
        if cs.name != dss.name || cs.input_dim != dss.dim {
            return Err(Error::config(format!(
                "stream mismatch: model ({}, {}) vs dataset ({}, {})",
                cs.name, cs.input_dim, dss.name, dss.dim
            )));
        }
    }
    Ok(())
}

/// Confusion matrix of the model over the labeled samples at `indices`.
pub fn evaluate_indices(
    model: &mut FusionModel,
    ds: &Dataset,
    indices: &[usize],
) -> Result<ConfusionMatrix> {
    check_streams(&model.config, ds)?;
    let mut cm = ConfusionMatrix::new(model.config.num_classes);
    for chunk in indices.chunks(64) {
        let batch = ds.batch_tensors(chunk)?;
        let preds = model.predict(&batch)?;
        for (&i, &p) in chunk.iter().zip(&preds) {
            cm.record(ds.labels[&ds.records[i].id], p)?;
        }
    }
    Ok(cm)
}

pub fn evaluate(model: &mut FusionModel, ds: &Dataset) -> Result<ConfusionMatrix> {
    let labeled: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels.contains_key(&ds.records[i].id))
        .collect();
    if labeled.is_empty() {
        return Err(Error::config("no labeled samples to evaluate"));
    }
    evaluate_indices(model, ds, &labeled)
}

/// Deterministic 80/20 split of the labeled indices, driven by the seed.
pub fn split_indices(ds: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut labeled: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels.contains_key(&ds.records[i].id))
        .collect();
    Rng::new(seed).fork(0x5117).shuffle(&mut labeled);
    let val_count = (labeled.len() / 5).max(1).min(labeled.len().saturating_sub(1));
    let val = labeled.split_off(labeled.len() - val_count);
    (labeled, val)
}

/// Train in place; the model ends at the parameters of the best
/// validation-WAF epoch seen.
pub fn train(
    model: &mut FusionModel,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    check_streams(&model.config, train_ds)?;
    let start = Instant::now();

    let (train_idx, internal_val_idx) = match val_ds {
        Some(v) => {
            check_streams(&model.config, v)?;
            let all: Vec<usize> = (0..train_ds.len())
                .filter(|&i| train_ds.labels.contains_key(&train_ds.records[i].id))
                .collect();
            (all, Vec::new())
        }
        None => split_indices(train_ds, cfg.seed),
    };
    if train_idx.is_empty() {
        return Err(Error::config("training set has no labeled samples"));
    }

    let val_eval = |model: &mut FusionModel| -> Result<ConfusionMatrix> {
        match val_ds {
            Some(v) => evaluate(model, v),
            None => evaluate_indices(model, train_ds, &internal_val_idx),
        }
    };

    let mut rng = Rng::new(cfg.seed).fork(1);
    let mut optimizer = Optimizer::new(cfg);
    let mut curve = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_model: Option<FusionModel> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // a trailing chunk of one sample cannot feed train-mode BN
            if chunk.len() < 2 && model.conv_blocks.iter().any(|b| b.bn.is_some()) {
                continue;
            }
            let batch = train_ds.batch_tensors(chunk)?;
            let targets: Vec<usize> = chunk
                .iter()
                .map(|&i| train_ds.labels[&train_ds.records[i].id])
                .collect();
            let trace = model.forward(&batch, Mode::Train)?;
            let (loss, grad) = cross_entropy(&trace.logits, &targets).map_err(|e| {
                Error::numeric(format!("epoch {epoch}, batch {batches}: {e}"))
            })?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batches}"
                )));
            }
            model.zero_grad();
            model.backward(&trace, &grad)?;
            optimizer.step(model);
            epoch_loss += loss;
            batches += 1;
        }
        let mean_loss = if batches > 0 {
            epoch_loss / batches as f64
        } else {
            0.0
        };
        let val_cm = val_eval(model)?;
        let val_waf = waf(&val_cm)?;
        curve.push(EpochStat {
            epoch,
            train_loss: mean_loss,
            val_waf,
        });
        if val_waf > best_val {
            best_val = val_waf;
            if cfg.patience.is_some() {
                best_model = Some(model.clone());
            }
            since_best = 0;
        } else {
            since_best += 1;
            if let Some(p) = cfg.patience {
                if since_best >= p {
                    break;
                }
            }
        }
    }

    // with early stopping enabled, retain the best validation checkpoint
    if let Some(best) = best_model {
        *model = best;
    }

    let train_cm = evaluate_indices(model, train_ds, &train_idx)?;
    let val_cm = val_eval(model)?;
    let epochs_run = curve.len();
    Ok(RunResult {
        curve,
        epochs_run,
        train_waf: waf(&train_cm)?,
        train_acc: accuracy(&train_cm)?,
        val_waf: waf(&val_cm)?,
        val_acc: accuracy(&val_cm)?,
        best_val_waf: if best_val.is_finite() { best_val } else { 0.0 },
        wall_ms: start.elapsed().as_millis(),
    })
}

// ---- gradient check ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub layer: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub max_rel_err: f64,
}

/// Central-difference check (h = 1e-6) of the cross-entropy gradient for
/// every parameter of a freshly built model on one random batch.
pub fn gradcheck(config: &FusionConfig, seed: u64) -> Result<GradcheckReport> {
    gradcheck_with_batch(config, seed, 4)
}

pub fn gradcheck_with_batch(config: &FusionConfig, seed: u64, batch: usize) -> Result<GradcheckReport> {
    let mut rng = Rng::new(seed);
    let mut model = build_model(config, &mut rng)?;
    let inputs: Vec<Tensor> = config
        .streams
        .iter()
        .map(|s| randn(&mut rng, &[batch, s.input_dim]))
        .collect::<Result<_>>()?;
    let targets: Vec<usize> = (0..batch)
        .map(|_| rng.next_index(config.num_classes))
        .collect();

    let trace = model.forward(&inputs, Mode::Train)?;
    let (_, grad) = cross_entropy(&trace.logits, &targets)?;
    model.zero_grad();
    model.backward(&trace, &grad)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .param_blocks_mut()
        .iter()
        .map(|b| (b.name.clone(), b.grad.data().to_vec()))
        .collect();

    let h = 1e-6;
    let mut per_layer: HashMap<String, f64> = HashMap::new();
    let block_count = analytic.len();
    for bi in 0..block_count {
        let n = analytic[bi].1.len();
        for i in 0..n {
            let probe = |model: &mut FusionModel, delta: f64| -> Result<f64> {
                {
                    let mut blocks = model.param_blocks_mut();
                    blocks[bi].param.data_mut()[i] += delta;
                }
                let trace = model.forward(&inputs, Mode::Train)?;
                let (loss, _) = cross_entropy(&trace.logits, &targets)?;
                {
                    let mut blocks = model.param_blocks_mut();
                    blocks[bi].param.data_mut()[i] -= delta;
                }
                Ok(loss)
            };
            let up = probe(&mut model, h)?;
            let down = probe(&mut model, -h)?;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[bi].1[i];
            // differences below fd resolution (loss eps / h ~ 1e-10) are
            // noise, not disagreement; this covers exact-zero gradients
            // such as conv bias under batch normalization
            let diff = (a - fd).abs();
            let rel = if diff <= 1e-9 {
                0.0
            } else {
                diff / a.abs().max(fd.abs()).max(1e-6)
            };
            let layer = analytic[bi].0.split('.').next().unwrap_or("?").to_string();
            let entry = per_layer.entry(layer).or_insert(0.0);
            if rel > *entry {
                *entry = rel;
            }
        }
    }
    let mut entries: Vec<GradcheckEntry> = per_layer
        .into_iter()
        .map(|(layer, max_rel_err)| GradcheckEntry { layer, max_rel_err })
        .collect();
    entries.sort_by(|a, b| a.layer.cmp(&b.layer));
    let max_rel_err = entries
        .iter()
        .map(|e| e.max_rel_err)
        .fold(0.0f64, f64::max);
    Ok(GradcheckReport {
        entries,
        max_rel_err,
    })
}

// ---- ablation grid ----

/// One grid cell. `head` is None for table rows whose model family is not
/// part of this artifact; they appear in the output marked skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCell {
    pub cell_id: String,
    pub head_label: String,
    pub head: Option<Head>,
    pub conv_blocks: usize,
    pub batchnorm: bool,
    pub activation: Activation,
    pub data_ratio: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub seed: u64,
    pub status: CellStatus,
    pub train_waf: f64,
    pub train_acc: f64,
    pub noise_waf: f64,
    pub epochs_run: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
    Skipped,
}

pub const ABLATION_CSV_HEADER: &str =
    "cell_id,head,conv_blocks,batchnorm,activation,data_ratio,lr,seed,train_waf,train_acc,noise_waf,epochs_run,wall_ms";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fmt = |v: f64| {
            if v.is_finite() {
                format!("{v:.6}")
            } else {
                "nan".to_string()
            }
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.cell.cell_id,
            r.cell.head_label,
            r.cell.conv_blocks,
            r.cell.batchnorm,
            match r.cell.activation {
                Activation::Swish => "swish",
                Activation::Relu => "relu",
            },
            r.cell.data_ratio,
            r.cell.lr,
            r.seed,
            fmt(r.train_waf),
            fmt(r.train_acc),
            fmt(r.noise_waf),
            r.epochs_run,
            r.wall_ms
        ));
    }
    out
}

fn run_cell(
    cell: &AblationCell,
    base_fusion: &FusionConfig,
    base_train: &TrainConfig,
    train_ds: &Dataset,
    eval_ds: &Dataset,
    noise_sigmas: &HashMap<String, f64>,
    seed: u64,
) -> Result<(RunResult, f64)> {
    let head = cell
        .head
        .ok_or_else(|| Error::config("cell has no runnable head"))?;
    let fusion = FusionConfig {
        head,
        n_conv_blocks: cell.conv_blocks,
        use_batchnorm: cell.batchnorm,
        activation: cell.activation,
        ..base_fusion.clone()
    };
    let tcfg = TrainConfig {
        learning_rate: cell.lr,
        seed,
        ..base_train.clone()
    };
    let cell_train: Dataset;
    let train_view: &Dataset = if cell.data_ratio < 1.0 {
        let has_pseudo = train_ds
            .provenance
            .values()
            .any(|&p| p == Provenance::Pseudo);
        let target = if has_pseudo {
            SubsampleTarget::Pseudo
        } else {
            SubsampleTarget::All
        };
        cell_train = subsample_ratio(train_ds, cell.data_ratio, target, seed)?;
        &cell_train
    } else {
        train_ds
    };
    let mut model = build_model(&fusion, &mut Rng::new(seed))?;
    let result = train(&mut model, train_view, Some(eval_ds), &tcfg)?;
    let noisy = inject_noise(eval_ds, noise_sigmas, seed ^ 0x4e01)?;
    let noise_cm = evaluate(&mut model, &noisy)?;
    let noise_waf = waf(&noise_cm)?;
    Ok((result, noise_waf))
}

/// Run every cell; failures are recorded per cell without aborting the grid.
pub fn run_ablation(
    cells: &[AblationCell],
    base_fusion: &FusionConfig,
    base_train: &TrainConfig,
    train_ds: &Dataset,
    eval_ds: &Dataset,
    noise_sigmas: &HashMap<String, f64>,
    seed: u64,
    jobs: usize,
) -> Vec<AblationRow> {
    let slots: Vec<Mutex<Option<AblationRow>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let worker = |_: usize| loop {
        let idx = {
            let mut n = next.lock().unwrap();
            if *n >= cells.len() {
                return;
            }
            let i = *n;
            *n += 1;
            i
        };
        let cell = &cells[idx];
        let cell_seed = Rng::new(seed).fork(idx as u64).state().0;
        let row = if cell.head.is_none() {
            AblationRow {
                cell: cell.clone(),
                seed: cell_seed,
                status: CellStatus::Skipped,
                train_waf: f64::NAN,
                train_acc: f64::NAN,
                noise_waf: f64::NAN,
                epochs_run: 0,
                wall_ms: 0,
            }
        } else {
            match run_cell(
                cell,
                base_fusion,
                base_train,
                train_ds,
                eval_ds,
                noise_sigmas,
                cell_seed,
            ) {
                Ok((result, noise_waf)) => AblationRow {
                    cell: cell.clone(),
                    seed: cell_seed,
                    status: CellStatus::Ok,
                    train_waf: result.train_waf,
                    train_acc: result.train_acc,
                    noise_waf,
                    epochs_run: result.epochs_run,
                    wall_ms: result.wall_ms,
                },
                Err(e) => {
                    log::warn!("ablation cell '{}' failed: {e}", cell.cell_id);
                    AblationRow {
                        cell: cell.clone(),
                        seed: cell_seed,
                        status: CellStatus::Failed,
                        train_waf: f64::NAN,
                        train_acc: f64::NAN,
                        noise_waf: f64::NAN,
                        epochs_run: 0,
                        wall_ms: 0,
                    }
                }
            }
        };
        *slots[idx].lock().unwrap() = Some(row);
    };
    let jobs = jobs.max(1).min(cells.len().max(1));
    if jobs <= 1 {
        worker(0);
    } else {
        std::thread::scope(|scope| {
            for w in 0..jobs {
                scope.spawn(move || worker(w));
            }
        });
    }
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("cell not executed"))
        .collect()
}

/// Named grids matching the reference experiment tables. `table4` compares
/// fusion heads (the FBP and Transformer baselines are outside this
/// artifact and appear as skipped rows), `table6` ablates components,
/// `table7` sweeps the data ratio, `table8` sweeps the learning rate.
pub fn preset_cells(name: &str) -> Result<Vec<AblationCell>> {
    let base = AblationCell {
        cell_id: String::new(),
        head_label: "conv_attention".into(),
        head: Some(Head::ConvAttention),
        conv_blocks: 2,
        batchnorm: true,
        activation: Activation::Swish,
        data_ratio: 1.0,
        lr: 1e-3,
    };
    let cell = |id: &str, f: &dyn Fn(&mut AblationCell)| {
        let mut c = base.clone();
        c.cell_id = id.to_string();
        f(&mut c);
        c
    };
    match name {
        "table4" => Ok(vec![
            cell("t4_mlp", &|c| {
                c.head_label = "mlp_baseline".into();
                c.head = Some(Head::MlpBaseline);
            }),
            cell("t4_attention", &|c| {
                c.head_label = "attention_only".into();
                c.head = Some(Head::AttentionOnly);
            }),
            cell("t4_fbp", &|c| {
                c.head_label = "fbp".into();
                c.head = None;
            }),
            cell("t4_convolution", &|c| {
                c.head_label = "conv_only".into();
                c.head = Some(Head::ConvOnly);
            }),
            cell("t4_transformer", &|c| {
                c.head_label = "transformer".into();
                c.head = None;
            }),
            cell("t4_conv_attention", &|_| {}),
        ]),
        "table6" => Ok(vec![
            cell("t6_relu", &|c| c.activation = Activation::Relu),
            cell("t6_conv_x0", &|c| c.conv_blocks = 0),
            cell("t6_conv_x1", &|c| c.conv_blocks = 1),
            cell("t6_conv_x2", &|c| c.conv_blocks = 2),
            cell("t6_conv_x3", &|c| c.conv_blocks = 3),
            cell("t6_no_batchnorm", &|c| c.batchnorm = false),
        ]),
        "table7" => Ok([0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&r| {
                cell(&format!("t7_ratio_{:02}", (r * 100.0) as u32), &|c| {
                    c.data_ratio = r
                })
            })
            .collect()),
        "table8" => Ok(LR_SWEEP
            .iter()
            .map(|&lr| cell(&format!("t8_lr_{lr:e}"), &|c| c.lr = lr))
            .collect()),
        other => Err(Error::config(format!("unknown preset '{other}'"))),
    }
}
