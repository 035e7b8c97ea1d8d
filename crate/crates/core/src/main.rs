//! Command-line front end: synthetic data generation, pseudo-label merging,
//! training, evaluation, gradient checking, and ablation grids.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use convattn::annotate::{
    build_augmented, extract_keywords, read_annotations, write_drop_report, Lexicon,
};
use convattn::data::{
    generate_synthetic, inject_noise, load_dataset, subsample_ratio, write_dataset, Dataset,
    Provenance, SubsampleTarget, SynthSpec,
};
use convattn::error::{Error, Result};
use convattn::metrics::{accuracy, percent, waf, MetricReport};
use convattn::model::{build_model, fnv1a64, load_checkpoint, save_checkpoint, FusionConfig};
use convattn::tensor::Rng;
use convattn::train::{
    ablation_csv, evaluate, gradcheck, preset_cells, run_ablation, train, RunResult, TrainConfig,
};

#[derive(Parser)]
#[command(name = "convattn", version, about = "Multimodal fusion trainer")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file with `fusion`, `train` and/or `synth` sections
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dotted-path override applied to the config, e.g. train.epochs=10
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed override for all randomness
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic multimodal dataset from the `synth` config section
    GenSynth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Merge a labeled dataset with pseudo-labeled annotations of an unlabeled one
    MergeLabels {
        #[arg(long, value_name = "DIR")]
        labeled: PathBuf,
        #[arg(long, value_name = "DIR")]
        unlabeled: PathBuf,
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,
        /// Keyword lexicon; fills empty annotation label sets from descriptions
        #[arg(long, value_name = "PATH")]
        lexicon: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train a fusion model on a dataset directory
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Held-out validation dataset; omitted = deterministic 80/20 split
        #[arg(long, value_name = "DIR")]
        val: Option<PathBuf>,
        /// Subsample ratio applied to the pseudo partition (or everything if
        /// the dataset has no pseudo records) before training
        #[arg(long, value_name = "R")]
        ratio: Option<f64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset, optionally with injected noise
    Eval {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Additive Gaussian noise, e.g. --noise visual=1.0 (repeatable)
        #[arg(long, value_name = "STREAM=SIGMA")]
        noise: Vec<String>,
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the full model gradient; exits 0 iff the
    /// max relative error is at most 1e-5
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a preset ablation grid and write its CSV
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "NAME")]
        preset: String,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        val: Option<PathBuf>,
        #[arg(long, value_name = "STREAM=SIGMA")]
        noise: Vec<String>,
        #[arg(long, value_name = "N", default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn init_logging() {
    let level = std::env::var("CAF_LOG").unwrap_or_else(|_| "warn".to_string());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init()
        .ok();
}

/// Merged config JSON: file contents (or an empty object) with every
/// --set override applied at its dotted path.
fn resolve_config(args: &ConfigArgs) -> Result<serde_json::Value> {
    let mut value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => serde_json::json!({}),
    };
    if !value.is_object() {
        return Err(Error::config("config root must be a JSON object"));
    }
    for set in &args.set {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set '{set}' is not KEY=VALUE")))?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::config(format!("--set '{set}': empty path segment")));
        }
        let (last, init) = parts.split_last().unwrap();
        let mut cursor = &mut value;
        for part in init {
            let obj = cursor
                .as_object_mut()
                .ok_or_else(|| Error::config(format!("--set '{set}': '{part}' is not an object")))?;
            cursor = obj
                .entry((*part).to_string())
                .or_insert_with(|| serde_json::json!({}));
        }
        cursor
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("--set '{set}': '{last}' is not an object")))?
            .insert((*last).to_string(), parsed);
    }
    Ok(value)
}

fn section<T: serde::de::DeserializeOwned>(
    value: &serde_json::Value,
    name: &str,
) -> Result<Option<T>> {
    match value.get(name) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::config(format!("config section '{name}': {e}"))),
    }
}

fn require_section<T: serde::de::DeserializeOwned>(
    value: &serde_json::Value,
    name: &str,
) -> Result<T> {
    section(value, name)?
        .ok_or_else(|| Error::config(format!("config is missing the '{name}' section")))
}

fn config_hash(value: &serde_json::Value) -> String {
    format!("{:016x}", fnv1a64(value.to_string().as_bytes()))
}

fn dataset_hash(ds: &Dataset) -> String {
    let mut labels: Vec<(&String, &usize)> = ds.labels.iter().collect();
    labels.sort();
    let mut prov: Vec<(&String, String)> =
        ds.provenance.iter().map(|(k, v)| (k, v.to_string())).collect();
    prov.sort();
    let digest = serde_json::json!({
        "name": ds.name,
        "class_names": ds.class_names,
        "streams": ds.streams,
        "ids": ds.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
        "labels": labels,
        "provenance": prov,
    });
    format!("{:016x}", fnv1a64(digest.to_string().as_bytes()))
}

/// Stamp the fully-resolved config (with its hash) into the output dir so
/// every run is reproducible from its artifacts alone.
fn write_resolved_config(value: &serde_json::Value, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let stamped = serde_json::json!({
        "hash": config_hash(value),
        "config": value,
    });
    std::fs::write(
        out.join("resolved_config.json"),
        serde_json::to_string_pretty(&stamped).map_err(Error::from)? + "\n",
    )?;
    Ok(())
}

fn parse_noise(pairs: &[String]) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for p in pairs {
        let (stream, sigma) = p
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--noise '{p}' is not STREAM=SIGMA")))?;
        let sigma: f64 = sigma
            .parse()
            .map_err(|_| Error::config(format!("--noise '{p}': bad sigma")))?;
        out.insert(stream.to_string(), sigma);
    }
    Ok(out)
}

fn apply_ratio(ds: &Dataset, ratio: Option<f64>, seed: u64) -> Result<Dataset> {
    match ratio {
        None => Ok(ds.clone()),
        Some(r) if r >= 1.0 => Ok(ds.clone()),
        Some(r) => {
            let has_pseudo = ds.provenance.values().any(|&p| p == Provenance::Pseudo);
            let target = if has_pseudo {
                SubsampleTarget::Pseudo
            } else {
                SubsampleTarget::All
            };
            subsample_ratio(ds, r, target, seed)
        }
    }
}

fn write_loss_curve(result: &RunResult, out: &Path) -> Result<()> {
    let mut csv = String::from("epoch,train_loss,val_waf\n");
    for e in &result.curve {
        csv.push_str(&format!("{},{:.12},{:.12}\n", e.epoch, e.train_loss, e.val_waf));
    }
    std::fs::write(out.join("loss_curve.csv"), csv)?;
    Ok(())
}

fn cmd_gen_synth(cfg: &ConfigArgs, out: &Path) -> Result<()> {
    let resolved = resolve_config(cfg)?;
    let mut spec: SynthSpec = require_section(&resolved, "synth")?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let ds = generate_synthetic(&spec)?;
    write_resolved_config(&resolved, out)?;
    write_dataset(&ds, out)?;
    println!(
        "wrote {} ({} samples, {} streams, {} classes) to {}",
        ds.name,
        ds.len(),
        ds.streams.len(),
        ds.num_classes,
        out.display()
    );
    Ok(())
}

fn cmd_merge_labels(
    labeled: &Path,
    unlabeled: &Path,
    annotations: &Path,
    lexicon: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let labeled_ds = load_dataset(labeled)?;
    let unlabeled_ds = load_dataset(unlabeled)?;
    let mut anns = read_annotations(annotations)?;
    if let Some(lex_path) = lexicon {
        let lex = Lexicon::load(lex_path)?;
        for a in &mut anns {
            if a.labels.is_empty() {
                a.labels = extract_keywords(&a.description, &lex).into_iter().collect();
            }
        }
    }
    let (merged, report) = build_augmented(&labeled_ds, &unlabeled_ds, &anns)?;
    std::fs::create_dir_all(out)?;
    write_dataset(&merged, out)?;
    write_drop_report(&report.dropped, &out.join("dropped.csv"))?;
    println!(
        "human={}, pseudo={}, dropped={}",
        report.human,
        report.pseudo,
        report.dropped.len()
    );
    Ok(())
}

fn cmd_train(
    cfg: &ConfigArgs,
    data: &Path,
    val: Option<&Path>,
    ratio: Option<f64>,
    out: &Path,
) -> Result<()> {
    let resolved = resolve_config(cfg)?;
    let fusion: FusionConfig = require_section(&resolved, "fusion")?;
    let mut tcfg: TrainConfig = section(&resolved, "train")?.unwrap_or_default();
    if let Some(seed) = cfg.seed {
        tcfg.seed = seed;
    }
    let train_ds = apply_ratio(&load_dataset(data)?, ratio, tcfg.seed)?;
    let val_ds = val.map(load_dataset).transpose()?;

    write_resolved_config(&resolved, out)?;
    let mut model = build_model(&fusion, &mut Rng::new(tcfg.seed))?;
    let result = train(&mut model, &train_ds, val_ds.as_ref(), &tcfg)?;
    save_checkpoint(&mut model, &out.join("checkpoint.bin"))?;
    write_loss_curve(&result, out)?;

    let cm = evaluate(&mut model, &train_ds)?;
    let report = MetricReport {
        config_hash: config_hash(&resolved),
        dataset_hash: dataset_hash(&train_ds),
        waf: waf(&cm)?,
        acc: accuracy(&cm)?,
        per_class_f1: cm.per_class_f1(),
        set_metrics: None,
    };
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
    )?;
    println!(
        "epochs={} train_waf={} train_acc={} val_waf={}",
        result.epochs_run,
        percent(result.train_waf),
        percent(result.train_acc),
        percent(result.val_waf)
    );
    Ok(())
}

fn cmd_eval(
    model_path: &Path,
    data: &Path,
    noise: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut model = load_checkpoint(model_path)?;
    let mut ds = load_dataset(data)?;
    let sigmas = parse_noise(noise)?;
    if !sigmas.is_empty() {
        ds = inject_noise(&ds, &sigmas, seed.unwrap_or(0))?;
    }
    let cm = evaluate(&mut model, &ds)?;
    let report = MetricReport {
        config_hash: format!(
            "{:016x}",
            fnv1a64(serde_json::to_string(&model.config).map_err(Error::from)?.as_bytes())
        ),
        dataset_hash: dataset_hash(&ds),
        waf: waf(&cm)?,
        acc: accuracy(&cm)?,
        per_class_f1: cm.per_class_f1(),
        set_metrics: None,
    };
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(
            out.join("metrics.json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
        )?;
    }
    println!("waf={} acc={}", percent(report.waf), percent(report.acc));
    Ok(())
}

fn cmd_gradcheck(cfg: &ConfigArgs) -> Result<()> {
    let resolved = resolve_config(cfg)?;
    let fusion: FusionConfig = require_section(&resolved, "fusion")?;
    let report = gradcheck(&fusion, cfg.seed.unwrap_or(0))?;
    for e in &report.entries {
        println!("{}: max_rel_err={:.3e}", e.layer, e.max_rel_err);
    }
    println!("max_rel_err={:.3e}", report.max_rel_err);
    if report.max_rel_err > 1e-5 {
        return Err(Error::numeric(format!(
            "gradient check failed: max relative error {:.3e} > 1e-5",
            report.max_rel_err
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    cfg: &ConfigArgs,
    preset: &str,
    data: &Path,
    val: Option<&Path>,
    noise: &[String],
    jobs: usize,
    out: &Path,
) -> Result<()> {
    let resolved = resolve_config(cfg)?;
    let fusion: FusionConfig = require_section(&resolved, "fusion")?;
    let tcfg: TrainConfig = section(&resolved, "train")?.unwrap_or_default();
    let seed = cfg.seed.unwrap_or(tcfg.seed);
    let train_ds = load_dataset(data)?;
    let eval_ds = match val {
        Some(p) => load_dataset(p)?,
        None => train_ds.clone(),
    };
    let sigmas = parse_noise(noise)?;
    let cells = preset_cells(preset)?;
    write_resolved_config(&resolved, out)?;
    let rows = run_ablation(
        &cells, &fusion, &tcfg, &train_ds, &eval_ds, &sigmas, seed, jobs,
    );
    let csv = ablation_csv(&rows);
    std::fs::write(out.join(format!("{preset}.csv")), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::GenSynth { cfg, out } => cmd_gen_synth(cfg, out),
        Cmd::MergeLabels {
            labeled,
            unlabeled,
            annotations,
            lexicon,
            out,
        } => cmd_merge_labels(labeled, unlabeled, annotations, lexicon.as_deref(), out),
        Cmd::Train {
            cfg,
            data,
            val,
            ratio,
            out,
        } => cmd_train(cfg, data, val.as_deref(), *ratio, out),
        Cmd::Eval {
            model,
            data,
            noise,
            seed,
            out,
        } => cmd_eval(model, data, noise, *seed, out.as_deref()),
        Cmd::Gradcheck { cfg } => cmd_gradcheck(cfg),
        Cmd::Ablate {
            cfg,
            preset,
            data,
            val,
            noise,
            jobs,
            out,
        } => cmd_ablate(cfg, preset, data, val.as_deref(), noise, *jobs, out),
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
