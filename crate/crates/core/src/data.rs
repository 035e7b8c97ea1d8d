//! Feature-file ingestion and synthetic dataset generation.
//!
//! On-disk layout of a dataset directory:
//!   manifest.json   name, num_classes, class names, ordered streams, counts
//!   <stream>.bin    magic "MMFE", u32 version=1, u32 n_samples, u32 dim,
//!                   row-major little-endian f32
//!   ids.txt         one sample id per line
//!   labels.csv      `sample_id,label` (class name); absent row = unlabeled
//!   provenance.csv  `sample_id,source` with source in {human, pseudo}
//!
//! Features are stored as f32 on disk and widened to f64 in memory.

use std::collections::{HashMap, HashSet};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::tensor::{randn, Rng, Tensor};

pub const CANONICAL_CLASSES: [&str; 6] = ["happy", "sad", "neutral", "angry", "worried", "surprise"];

const STREAM_MAGIC: &[u8; 4] = b"MMFE";
const STREAM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Human,
    Pseudo,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Human => write!(f, "human"),
            Provenance::Pseudo => write!(f, "pseudo"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub name: String,
    pub modality: Modality,
    pub dim: usize,
    #[serde(default)]
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub num_samples: usize,
    pub streams: Vec<StreamMeta>,
    pub ids_file: String,
    pub labels_file: String,
    pub provenance_file: String,
}

/// One sample: an id plus one feature vector per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub features: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub streams: Vec<StreamMeta>,
    pub records: Vec<FeatureRecord>,
    pub labels: HashMap<String, usize>,
    pub provenance: HashMap<String, Provenance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() != self.num_classes {
            return Err(Error::format(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::format(format!("duplicate sample id '{}'", r.id)));
            }
            for s in &self.streams {
                match r.features.get(&s.name) {
                    Some(v) if v.len() == s.dim => {}
                    Some(v) => {
                        return Err(Error::format(format!(
                            "sample '{}' stream '{}': dim {} vs declared {}",
                            r.id,
                            s.name,
                            v.len(),
                            s.dim
                        )))
                    }
                    None => {
                        return Err(Error::format(format!(
                            "sample '{}' missing stream '{}'",
                            r.id, s.name
                        )))
                    }
                }
            }
        }
        for (id, &label) in &self.labels {
            if !seen.contains(id.as_str()) {
                return Err(Error::format(format!("label for unknown id '{id}'")));
            }
            if label >= self.num_classes {
                return Err(Error::format(format!(
                    "label {label} out of range for id '{id}'"
                )));
            }
        }
        Ok(())
    }

    /// Ids of labeled samples, in record order.
    pub fn labeled_ids(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| self.labels.contains_key(&r.id))
            .map(|r| r.id.as_str())
            .collect()
    }

    /// Stack the named records into one tensor per stream, in `streams` order.
    pub fn batch_tensors(&self, indices: &[usize]) -> Result<Vec<Tensor>> {
        let b = indices.len();
        let mut out = Vec::with_capacity(self.streams.len());
        for s in &self.streams {
            let mut data = Vec::with_capacity(b * s.dim);
            for &i in indices {
                data.extend_from_slice(&self.records[i].features[&s.name]);
            }
            out.push(Tensor::new(&[b, s.dim], data)?);
        }
        Ok(out)
    }
}

pub fn default_class_names(num_classes: usize) -> Vec<String> {
    if num_classes == CANONICAL_CLASSES.len() {
        CANONICAL_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|i| format!("class_{i}")).collect()
    }
}

// ---- write ----

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut streams = ds.streams.clone();
    for s in &mut streams {
        if s.file.is_empty() {
            s.file = format!("{}.bin", s.name);
        }
    }
    let manifest = Manifest {
        name: ds.name.clone(),
        num_classes: ds.num_classes,
        class_names: ds.class_names.clone(),
        num_samples: ds.records.len(),
        streams: streams.clone(),
        ids_file: "ids.txt".to_string(),
        labels_file: "labels.csv".to_string(),
        provenance_file: "provenance.csv".to_string(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), manifest_json)?;

    let mut ids = BufWriter::new(std::fs::File::create(dir.join("ids.txt"))?);
    for r in &ds.records {
        writeln!(ids, "{}", r.id)?;
    }
    ids.flush()?;

    for s in &streams {
        let mut f = BufWriter::new(std::fs::File::create(dir.join(&s.file))?);
        f.write_all(STREAM_MAGIC)?;
        f.write_all(&STREAM_VERSION.to_le_bytes())?;
        f.write_all(&(ds.records.len() as u32).to_le_bytes())?;
        f.write_all(&(s.dim as u32).to_le_bytes())?;
        for r in &ds.records {
            for &v in &r.features[&s.name] {
                f.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        f.flush()?;
    }

    let mut labels = BufWriter::new(std::fs::File::create(dir.join("labels.csv"))?);
    writeln!(labels, "sample_id,label")?;
    for r in &ds.records {
        if let Some(&c) = ds.labels.get(&r.id) {
            writeln!(labels, "{},{}", r.id, ds.class_names[c])?;
        }
    }
    labels.flush()?;

    let mut prov = BufWriter::new(std::fs::File::create(dir.join("provenance.csv"))?);
    writeln!(prov, "sample_id,source")?;
    for r in &ds.records {
        let p = ds.provenance.get(&r.id).copied().unwrap_or(Provenance::Human);
        writeln!(prov, "{},{}", r.id, p)?;
    }
    prov.flush()?;
    Ok(())
}

// ---- load ----

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_file = manifest_path(path);
    let dir = manifest_file
        .parent()
        .ok_or_else(|| Error::format("manifest has no parent directory"))?
        .to_path_buf();
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_file)?)
        .map_err(|e| Error::format(format!("manifest parse: {e}")))?;

    let ids_raw = std::fs::read_to_string(dir.join(&manifest.ids_file))?;
    let ids: Vec<String> = ids_raw.lines().map(|l| l.to_string()).collect();
    if ids.len() != manifest.num_samples {
        return Err(Error::format(format!(
            "ids.txt has {} entries, manifest declares {}",
            ids.len(),
            manifest.num_samples
        )));
    }

    let mut per_stream: Vec<Vec<Vec<f64>>> = Vec::with_capacity(manifest.streams.len());
    for s in &manifest.streams {
        let mut f = BufReader::new(std::fs::File::open(dir.join(&s.file))?);
        let mut header = [0u8; 16];
        f.read_exact(&mut header)
            .map_err(|_| Error::format(format!("stream '{}': truncated header", s.name)))?;
        if &header[0..4] != STREAM_MAGIC {
            return Err(Error::format(format!("stream '{}': bad magic", s.name)));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != STREAM_VERSION {
            return Err(Error::format(format!(
                "stream '{}': version {version} unsupported",
                s.name
            )));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        if n != ids.len() {
            return Err(Error::format(format!(
                "stream '{}': {n} rows vs {} ids",
                s.name,
                ids.len()
            )));
        }
        if dim != s.dim {
            return Err(Error::format(format!(
                "stream '{}': file dim {dim} vs manifest dim {}",
                s.name, s.dim
            )));
        }
        let mut body = Vec::new();
        f.read_to_end(&mut body)?;
        if body.len() != n * dim * 4 {
            return Err(Error::format(format!(
                "stream '{}': payload size mismatch",
                s.name
            )));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(dim);
            for j in 0..dim {
                let off = (i * dim + j) * 4;
                row.push(f32::from_le_bytes(body[off..off + 4].try_into().unwrap()) as f64);
            }
            rows.push(row);
        }
        per_stream.push(rows);
    }

    let mut records = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let mut features = HashMap::new();
        for (si, s) in manifest.streams.iter().enumerate() {
            features.insert(s.name.clone(), per_stream[si][i].clone());
        }
        records.push(FeatureRecord {
            id: id.clone(),
            features,
        });
    }

    let labels = read_label_csv(
        &dir.join(&manifest.labels_file),
        &manifest.class_names,
    )?;
    let provenance = read_provenance_csv(&dir.join(&manifest.provenance_file))?;

    let ds = Dataset {
        name: manifest.name,
        num_classes: manifest.num_classes,
        class_names: manifest.class_names,
        streams: manifest.streams,
        records,
        labels,
        provenance,
    };
    ds.validate()?;
    Ok(ds)
}

fn read_label_csv(path: &Path, class_names: &[String]) -> Result<HashMap<String, usize>> {
    let raw = std::fs::read_to_string(path)?;
    let mut lines = raw.lines();
    match lines.next() {
        Some("sample_id,label") => {}
        other => {
            return Err(Error::format(format!(
                "labels.csv: bad header {other:?}"
            )))
        }
    }
    let mut out = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| {
            Error::format(format!("labels.csv line {}: missing comma", lineno + 2))
        })?;
        let idx = class_names.iter().position(|c| c == label).ok_or_else(|| {
            Error::format(format!(
                "labels.csv line {}: unknown class '{label}'",
                lineno + 2
            ))
        })?;
        out.insert(id.to_string(), idx);
    }
    Ok(out)
}

fn read_provenance_csv(path: &Path) -> Result<HashMap<String, Provenance>> {
    let raw = std::fs::read_to_string(path)?;
    let mut lines = raw.lines();
    match lines.next() {
        Some("sample_id,source") => {}
        other => {
            return Err(Error::format(format!(
                "provenance.csv: bad header {other:?}"
            )))
        }
    }
    let mut out = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, source) = line.split_once(',').ok_or_else(|| {
            Error::format(format!("provenance.csv line {}: missing comma", lineno + 2))
        })?;
        let p = match source {
            "human" => Provenance::Human,
            "pseudo" => Provenance::Pseudo,
            other => {
                return Err(Error::format(format!(
                    "provenance.csv line {}: unknown source '{other}'",
                    lineno + 2
                )))
            }
        };
        out.insert(id.to_string(), p);
    }
    Ok(out)
}

// ---- synthetic generation ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthStream {
    pub name: String,
    pub modality: Modality,
    pub dim: usize,
    /// Scale of the per-class mean draw; 0 erases any class signal.
    pub separation: f64,
    /// Standard deviation of per-sample noise around the class mean.
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub streams: Vec<SynthStream>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be positive"));
        }
        if self.streams.is_empty() {
            return Err(Error::config("at least one stream is required"));
        }
        for s in &self.streams {
            if s.dim == 0 {
                return Err(Error::config(format!("stream '{}': dim must be positive", s.name)));
            }
            if s.separation < 0.0 {
                return Err(Error::config(format!(
                    "stream '{}': separation must be >= 0",
                    s.name
                )));
            }
            if s.sigma < 0.0 {
                return Err(Error::config(format!("stream '{}': sigma must be >= 0", s.name)));
            }
        }
        Ok(())
    }
}

/// Class-conditional Gaussian features: per-class mean drawn once per stream
/// scaled by `separation`, samples = mean + sigma * randn. Fully determined
/// by the spec's seed.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    // class means first, in (class, stream) order
    let mut means: Vec<Vec<Tensor>> = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut per_stream = Vec::with_capacity(spec.streams.len());
        for s in &spec.streams {
            per_stream.push(randn(&mut rng, &[s.dim])?.scale(s.separation));
        }
        means.push(per_stream);
    }
    let mut records = Vec::new();
    let mut labels = HashMap::new();
    let mut provenance = HashMap::new();
    for class in 0..spec.num_classes {
        for i in 0..spec.samples_per_class {
            let id = format!("syn_{class:02}_{i:05}");
            let mut features = HashMap::new();
            for (si, s) in spec.streams.iter().enumerate() {
                let noise = randn(&mut rng, &[s.dim])?;
                let v: Vec<f64> = means[class][si]
                    .data()
                    .iter()
                    .zip(noise.data())
                    // round-trip through f32 so in-memory values match a
                    // write/load cycle bit-exactly
                    .map(|(&m, &n)| (m + s.sigma * n) as f32 as f64)
                    .collect();
                features.insert(s.name.clone(), v);
            }
            labels.insert(id.clone(), class);
            provenance.insert(id.clone(), Provenance::Human);
            records.push(FeatureRecord { id, features });
        }
    }
    Ok(Dataset {
        name: spec.name.clone(),
        num_classes: spec.num_classes,
        class_names: default_class_names(spec.num_classes),
        streams: spec
            .streams
            .iter()
            .map(|s| StreamMeta {
                name: s.name.clone(),
                modality: s.modality,
                dim: s.dim,
                file: format!("{}.bin", s.name),
            })
            .collect(),
        records,
        labels,
        provenance,
    })
}

/// Additive Gaussian perturbation on the named streams; everything else,
/// including labels, provenance and ordering, is untouched.
pub fn inject_noise(
    ds: &Dataset,
    stream_sigmas: &HashMap<String, f64>,
    seed: u64,
) -> Result<Dataset> {
    for (name, &sigma) in stream_sigmas {
        if !ds.streams.iter().any(|s| &s.name == name) {
            return Err(Error::config(format!("unknown stream '{name}'")));
        }
        if sigma < 0.0 {
            return Err(Error::config(format!("stream '{name}': sigma must be >= 0")));
        }
    }
    let mut rng = Rng::new(seed);
    let mut out = ds.clone();
    for s in &ds.streams {
        let sigma = stream_sigmas.get(&s.name).copied().unwrap_or(0.0);
        if sigma == 0.0 {
            continue;
        }
        for r in &mut out.records {
            let v = r.features.get_mut(&s.name).unwrap();
            for x in v.iter_mut() {
                *x += sigma * rng.next_normal();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleTarget {
    Pseudo,
    All,
}

/// Keep floor(ratio * n) records of the targeted provenance class, sampled
/// uniformly without replacement; the untouched partition is kept whole.
pub fn subsample_ratio(
    ds: &Dataset,
    ratio: f64,
    which: SubsampleTarget,
    seed: u64,
) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config(format!("ratio must be in (0, 1], got {ratio}")));
    }
    let targeted: Vec<usize> = ds
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| match which {
            SubsampleTarget::All => true,
            SubsampleTarget::Pseudo => {
                ds.provenance.get(&r.id) == Some(&Provenance::Pseudo)
            }
        })
        .map(|(i, _)| i)
        .collect();
    if targeted.is_empty() {
        return Err(Error::config("subsample target partition is empty"));
    }
    let keep_count = ((ratio * targeted.len() as f64).floor() as usize).min(targeted.len());
    let mut shuffled = targeted.clone();
    Rng::new(seed).shuffle(&mut shuffled);
    let kept: HashSet<usize> = shuffled[..keep_count].iter().copied().collect();
    let targeted_set: HashSet<usize> = targeted.into_iter().collect();

    let mut out = ds.clone();
    out.records = ds
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| !targeted_set.contains(i) || kept.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    let remaining: HashSet<&str> = out.records.iter().map(|r| r.id.as_str()).collect();
    out.labels.retain(|id, _| remaining.contains(id.as_str()));
    out.provenance.retain(|id, _| remaining.contains(id.as_str()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            name: "unit".to_string(),
            num_classes: 3,
            samples_per_class: 4,
            streams: vec![
                SynthStream {
                    name: "audio".into(),
                    modality: Modality::Audio,
                    dim: 5,
                    separation: 2.0,
                    sigma: 0.5,
                },
                SynthStream {
                    name: "visual".into(),
                    modality: Modality::Visual,
                    dim: 3,
                    separation: 2.0,
                    sigma: 0.5,
                },
            ],
            seed: 7,
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_sigma_collapses_each_class() {
        let mut spec = small_spec();
        for s in &mut spec.streams {
            s.sigma = 0.0;
        }
        let ds = generate_synthetic(&spec).unwrap();
        for class in 0..3 {
            let members: Vec<&FeatureRecord> = ds
                .records
                .iter()
                .filter(|r| ds.labels[&r.id] == class)
                .collect();
            for r in &members[1..] {
                assert_eq!(r.features, members[0].features);
            }
        }
    }

    #[test]
    fn write_load_round_trip_is_exact() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let dir = std::env::temp_dir().join("convattn_data_test_rt");
        write_dataset(&ds, &dir).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(ds.records, loaded.records);
        assert_eq!(ds.labels, loaded.labels);
        assert_eq!(ds.provenance, loaded.provenance);
    }

    #[test]
    fn dim_mismatch_names_the_stream() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let dir = std::env::temp_dir().join("convattn_data_test_dim");
        write_dataset(&ds, &dir).unwrap();
        let manifest_raw = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
        let mut manifest: Manifest = serde_json::from_str(&manifest_raw).unwrap();
        manifest.streams[1].dim = 16;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        let err = load_dataset(&dir).unwrap_err();
        assert!(err.to_string().contains("visual"), "{err}");
    }

    #[test]
    fn unlabeled_sample_stays_unlabeled() {
        let mut ds = generate_synthetic(&small_spec()).unwrap();
        let dropped = ds.records[0].id.clone();
        ds.labels.remove(&dropped);
        let dir = std::env::temp_dir().join("convattn_data_test_unlab");
        write_dataset(&ds, &dir).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert!(!loaded.labels.contains_key(&dropped));
        assert!(loaded.records.iter().any(|r| r.id == dropped));
    }

    #[test]
    fn zero_sigma_noise_is_bit_exact_identity() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let sigmas: HashMap<String, f64> =
            [("audio".to_string(), 0.0), ("visual".to_string(), 0.0)].into();
        let noisy = inject_noise(&ds, &sigmas, 3).unwrap();
        assert_eq!(ds, noisy);
    }

    #[test]
    fn noise_touches_only_the_named_stream() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let sigmas: HashMap<String, f64> = [("visual".to_string(), 1.0)].into();
        let noisy = inject_noise(&ds, &sigmas, 3).unwrap();
        for (a, b) in ds.records.iter().zip(&noisy.records) {
            assert_eq!(a.features["audio"], b.features["audio"]);
            assert_ne!(a.features["visual"], b.features["visual"]);
        }
        assert_eq!(ds.labels, noisy.labels);
        assert_eq!(ds.provenance, noisy.provenance);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let mut spec = small_spec();
        spec.samples_per_class = 1200;
        spec.streams.truncate(1);
        spec.streams[0].dim = 4;
        let ds = generate_synthetic(&spec).unwrap();
        let sigma = 0.7;
        let sigmas: HashMap<String, f64> = [("audio".to_string(), sigma)].into();
        let noisy = inject_noise(&ds, &sigmas, 11).unwrap();
        let mut diffs = Vec::new();
        for (a, b) in ds.records.iter().zip(&noisy.records) {
            for (x, y) in a.features["audio"].iter().zip(&b.features["audio"]) {
                diffs.push(y - x);
            }
        }
        assert!(diffs.len() >= 10_000);
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n).sqrt();
        assert!((std - sigma).abs() / sigma < 0.03, "std {std}");
    }

    #[test]
    fn unknown_noise_stream_is_error() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let sigmas: HashMap<String, f64> = [("nope".to_string(), 1.0)].into();
        assert!(inject_noise(&ds, &sigmas, 3).is_err());
    }

    #[test]
    fn subsample_full_ratio_keeps_everything() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let out = subsample_ratio(&ds, 1.0, SubsampleTarget::All, 5).unwrap();
        assert_eq!(out.len(), ds.len());
    }

    #[test]
    fn subsample_pseudo_partition_arithmetic() {
        let mut ds = generate_synthetic(&small_spec()).unwrap();
        // mark two of the three classes pseudo: 8 pseudo, 4 human
        for r in &ds.records {
            if ds.labels[&r.id] > 0 {
                ds.provenance.insert(r.id.clone(), Provenance::Pseudo);
            }
        }
        let out = subsample_ratio(&ds, 0.5, SubsampleTarget::Pseudo, 5).unwrap();
        let pseudo = out
            .records
            .iter()
            .filter(|r| out.provenance[&r.id] == Provenance::Pseudo)
            .count();
        let human = out.len() - pseudo;
        assert_eq!(pseudo, 4);
        assert_eq!(human, 4);
        // subset property
        let input_ids: HashSet<&str> = ds.records.iter().map(|r| r.id.as_str()).collect();
        assert!(out.records.iter().all(|r| input_ids.contains(r.id.as_str())));
    }

    #[test]
    fn subsample_is_seed_deterministic() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        let a = subsample_ratio(&ds, 0.5, SubsampleTarget::All, 42).unwrap();
        let b = subsample_ratio(&ds, 0.5, SubsampleTarget::All, 42).unwrap();
        let ids = |d: &Dataset| d.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn subsample_empty_partition_is_error() {
        let ds = generate_synthetic(&small_spec()).unwrap();
        // no pseudo-labeled records exist
        assert!(subsample_ratio(&ds, 0.5, SubsampleTarget::Pseudo, 1).is_err());
    }

    #[test]
    fn separable_dataset_beats_nearest_mean_oracle() {
        // high separation, low sigma: a nearest-class-mean classifier must
        // reach >= 99% before any training claims mean anything
        let mut spec = small_spec();
        spec.samples_per_class = 50;
        for s in &mut spec.streams {
            s.separation = 5.0;
            s.sigma = 0.1;
        }
        let ds = generate_synthetic(&spec).unwrap();
        // class means from the data itself
        let dim: usize = ds.streams.iter().map(|s| s.dim).sum();
        let concat = |r: &FeatureRecord| -> Vec<f64> {
            let mut v = Vec::with_capacity(dim);
            for s in &ds.streams {
                v.extend_from_slice(&r.features[&s.name]);
            }
            v
        };
        let mut means = vec![vec![0.0; dim]; spec.num_classes];
        let mut counts = vec![0usize; spec.num_classes];
        for r in &ds.records {
            let c = ds.labels[&r.id];
            for (m, x) in means[c].iter_mut().zip(concat(r)) {
                *m += x;
            }
            counts[c] += 1;
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            for v in m.iter_mut() {
                *v /= c as f64;
            }
        }
        let mut correct = 0;
        for r in &ds.records {
            let x = concat(r);
            let pred = (0..spec.num_classes)
                .min_by(|&a, &b| {
                    let da: f64 = means[a].iter().zip(&x).map(|(m, v)| (m - v).powi(2)).sum();
                    let db: f64 = means[b].iter().zip(&x).map(|(m, v)| (m - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if pred == ds.labels[&r.id] {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.99, "nearest-mean accuracy {acc}");
    }
}
