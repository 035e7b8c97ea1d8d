//! File-level bridge around external annotators: import emotion
//! descriptions/labels produced elsewhere, extract keywords with a
//! deterministic lexicon matcher, and merge pseudo-labeled samples into an
//! augmented training set.
//!
//! Exchange formats: annotations are line-delimited JSON records
//! (id, description, labels, prompt_id); the lexicon is tab-separated
//! `phrase<TAB>label` with `#` comments; the drop report is CSV.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLanguage {
    English,
    Chinese,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    CategoryOnly,
    FullDescription,
    KeywordExtraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub language: PromptLanguage,
    pub template: String,
    pub output_kind: OutputKind,
}

/// Prompt templates shipped as data. The category/description templates are
/// the exact strings the external annotator is driven with; the Chinese
/// templates are carried for completeness and drive no computation here.
pub fn builtin_prompts() -> Vec<PromptSpec> {
    vec![
        PromptSpec {
            id: "emotion_llama_category".into(),
            language: PromptLanguage::English,
            template: "Please determine which emotion label in the video represents: happy, sad, neutral, angry, worried, surprise.".into(),
            output_kind: OutputKind::CategoryOnly,
        },
        PromptSpec {
            id: "emotion_llama_description".into(),
            language: PromptLanguage::English,
            template: "Please analyze all the clues in the video and reason out the emotional label of the person in the video.".into(),
            output_kind: OutputKind::FullDescription,
        },
        PromptSpec {
            id: "llama3_keywords".into(),
            language: PromptLanguage::English,
            template: "You are an emotion analysis expert. Please analyze the input multimodal emotion description and output keywords related to the emotion description.\nInput: [Multimodal Emotion Description]\nOutput:".into(),
            output_kind: OutputKind::KeywordExtraction,
        },
        PromptSpec {
            id: "qwen_classify".into(),
            language: PromptLanguage::Chinese,
            template: "Please analyze the provided text content and classify emotions into six categories: [neutral, angry, happy, sad, worried, surprise], and explain the specific reasons: <Text>".into(),
            output_kind: OutputKind::CategoryOnly,
        },
        PromptSpec {
            id: "baichuan_prompt_1".into(),
            language: PromptLanguage::Chinese,
            template: "Please analyze the provided text content and classify emotions into six categories: [neutral, angry, happy, sad, worried, surprise], and explain the specific reasons: <Text>".into(),
            output_kind: OutputKind::CategoryOnly,
        },
        PromptSpec {
            id: "baichuan_prompt_2".into(),
            language: PromptLanguage::Chinese,
            template: "Please analyze the provided text content and classify emotions into six categories: [neutral, angry, happy, sad, worried, surprise]: <Text>".into(),
            output_kind: OutputKind::CategoryOnly,
        },
        PromptSpec {
            id: "baichuan_prompt_3".into(),
            language: PromptLanguage::Chinese,
            template: "Please analyze the provided text content: <Text>".into(),
            output_kind: OutputKind::CategoryOnly,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub description: String,
    pub labels: Vec<String>,
    pub prompt_id: String,
}

/// Ordered keyword-phrase → canonical-label map with longest-phrase-first
/// matching. A deterministic, offline stand-in for a neural keyword
/// extractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    // sorted by descending phrase length, then lexicographically
    entries: Vec<(String, String)>,
}

impl Lexicon {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for (phrase, label) in entries {
            let phrase = phrase.trim().to_lowercase();
            if phrase.is_empty() {
                return Err(Error::format("lexicon: empty phrase"));
            }
            if !seen.insert(phrase.clone()) {
                return Err(Error::format(format!("lexicon: duplicate phrase '{phrase}'")));
            }
            normalized.push((phrase, label.trim().to_lowercase()));
        }
        normalized.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(&b.0)));
        Ok(Lexicon { entries: normalized })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, label) = line.split_once('\t').ok_or_else(|| {
                Error::format(format!("lexicon line {}: expected phrase<TAB>label", lineno + 1))
            })?;
            entries.push((phrase.to_string(), label.to_string()));
        }
        Lexicon::new(entries)
    }
}

/// Case-insensitive longest-match scan over the description. A match
/// consumes its span, so a longer phrase shadows any shorter phrase inside
/// it. Each canonical label appears at most once in the result.
pub fn extract_keywords(description: &str, lexicon: &Lexicon) -> BTreeSet<String> {
    let text: Vec<char> = description.to_lowercase().chars().collect();
    let phrases: Vec<(Vec<char>, &str)> = lexicon
        .entries
        .iter()
        .map(|(p, l)| (p.chars().collect(), l.as_str()))
        .collect();
    let mut out = BTreeSet::new();
    let mut pos = 0;
    while pos < text.len() {
        let mut matched = 0;
        for (phrase, label) in &phrases {
            if phrase.len() <= text.len() - pos && text[pos..pos + phrase.len()] == phrase[..] {
                out.insert(label.to_string());
                matched = phrase.len();
                break; // entries are longest-first
            }
        }
        pos += matched.max(1);
    }
    out
}

/// Map a label set onto the closed class list: exactly one canonical name
/// present yields its index; anything else (ambiguous, open-vocabulary only,
/// empty) is excluded from hard-label training.
pub fn to_class_labels(labels: &BTreeSet<String>, classes: &[String]) -> Option<usize> {
    let mut hit = None;
    for (i, c) in classes.iter().enumerate() {
        if labels.contains(c) {
            if hit.is_some() {
                return None;
            }
            hit = Some(i);
        }
    }
    hit
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct MergeReport {
    pub human: usize,
    pub pseudo: usize,
    pub dropped: Vec<DropEntry>,
}

/// Union of the labeled set with the annotated unlabeled set. Unlabeled
/// samples whose annotation resolves to no single class are dropped and
/// reported. Inputs are never mutated.
pub fn build_augmented(
    labeled: &Dataset,
    unlabeled: &Dataset,
    annotations: &[AnnotationRecord],
) -> Result<(Dataset, MergeReport)> {
    let labeled_ids: HashSet<&str> = labeled.records.iter().map(|r| r.id.as_str()).collect();
    let unlabeled_ids: HashSet<&str> = unlabeled.records.iter().map(|r| r.id.as_str()).collect();
    if let Some(overlap) = labeled_ids.intersection(&unlabeled_ids).next() {
        return Err(Error::config(format!(
            "labeled and unlabeled id sets overlap (e.g. '{overlap}')"
        )));
    }
    if labeled.streams != unlabeled.streams {
        return Err(Error::config("labeled and unlabeled stream sets differ"));
    }
    let mut by_id: HashMap<&str, &AnnotationRecord> = HashMap::new();
    for a in annotations {
        if !unlabeled_ids.contains(a.id.as_str()) {
            return Err(Error::config(format!(
                "annotation for unknown sample '{}'",
                a.id
            )));
        }
        by_id.insert(a.id.as_str(), a);
    }

    let mut out = labeled.clone();
    let mut report = MergeReport {
        human: labeled.len(),
        ..Default::default()
    };
    for r in &unlabeled.records {
        let Some(ann) = by_id.get(r.id.as_str()) else {
            report.dropped.push(DropEntry {
                sample_id: r.id.clone(),
                reason: "no annotation".into(),
            });
            continue;
        };
        let labels: BTreeSet<String> =
            ann.labels.iter().map(|l| l.trim().to_lowercase()).collect();
        match to_class_labels(&labels, &labeled.class_names) {
            Some(class) => {
                out.records.push(r.clone());
                out.labels.insert(r.id.clone(), class);
                out.provenance.insert(r.id.clone(), Provenance::Pseudo);
                report.pseudo += 1;
            }
            None => {
                let reason = if labels.is_empty() {
                    "empty label set"
                } else if labels.iter().filter(|l| labeled.class_names.contains(l)).count() > 1 {
                    "ambiguous: multiple canonical labels"
                } else {
                    "no canonical label"
                };
                report.dropped.push(DropEntry {
                    sample_id: r.id.clone(),
                    reason: reason.into(),
                });
            }
        }
    }
    Ok((out, report))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let raw = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(line).map_err(|e| {
            Error::format(format!("annotations line {}: {e}", lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations(records: &[AnnotationRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::format(format!("annotation serialization: {e}")))?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_drop_report(dropped: &[DropEntry], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample_id,reason")?;
    for d in dropped {
        writeln!(f, "{},{}", d.sample_id, d.reason)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec, SynthStream};
    use crate::model::Modality;

    fn lexicon() -> Lexicon {
        Lexicon::new(vec![
            ("happy".into(), "happy".into()),
            ("excited".into(), "excited".into()),
            ("unhappy".into(), "sad".into()),
        ])
        .unwrap()
    }

    #[test]
    fn direct_hits() {
        let got = extract_keywords("the person looks happy and excited", &lexicon());
        let want: BTreeSet<String> = ["happy", "excited"].iter().map(|s| s.to_string()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_description_empty_set() {
        assert!(extract_keywords("", &lexicon()).is_empty());
    }

    #[test]
    fn longest_match_consumes_the_span() {
        let got = extract_keywords("unhappy", &lexicon());
        let want: BTreeSet<String> = ["sad".to_string()].into();
        assert_eq!(got, want);
    }

    #[test]
    fn extraction_is_case_insensitive() {
        let a = extract_keywords("HAPPY and Excited", &lexicon());
        let b = extract_keywords("happy and excited", &lexicon());
        assert_eq!(a, b);
    }

    #[test]
    fn class_mapping_cases() {
        let classes: Vec<String> = crate::data::CANONICAL_CLASSES
            .iter()
            .map(|s| s.to_string())
            .collect();
        let one: BTreeSet<String> = ["happy".to_string()].into();
        assert_eq!(to_class_labels(&one, &classes), Some(0));
        let two: BTreeSet<String> = ["happy".to_string(), "sad".to_string()].into();
        assert_eq!(to_class_labels(&two, &classes), None);
        let off: BTreeSet<String> = ["curious".to_string()].into();
        assert_eq!(to_class_labels(&off, &classes), None);
    }

    fn six_class_pair(labeled_n: usize, unlabeled_n: usize) -> (Dataset, Dataset) {
        let spec = |name: &str, per_class: usize, seed: u64| SynthSpec {
            name: name.to_string(),
            num_classes: 6,
            samples_per_class: per_class,
            streams: vec![SynthStream {
                name: "audio".into(),
                modality: Modality::Audio,
                dim: 4,
                separation: 1.0,
                sigma: 0.5,
            }],
            seed,
        };
        let labeled = generate_synthetic(&spec("labeled", labeled_n, 1)).unwrap();
        let mut unlabeled = generate_synthetic(&spec("unlabeled", unlabeled_n, 2)).unwrap();
        unlabeled.labels.clear();
        for r in &mut unlabeled.records {
            r.id = format!("u_{}", r.id);
        }
        unlabeled.provenance = unlabeled
            .records
            .iter()
            .map(|r| (r.id.clone(), Provenance::Human))
            .collect();
        (labeled, unlabeled)
    }

    #[test]
    fn merge_counts_and_drops() {
        let (labeled, unlabeled) = six_class_pair(3, 5);
        let mut annotations: Vec<AnnotationRecord> = unlabeled
            .records
            .iter()
            .map(|r| AnnotationRecord {
                id: r.id.clone(),
                description: String::new(),
                labels: vec!["happy".into()],
                prompt_id: "emotion_llama_category".into(),
            })
            .collect();
        // two unresolvable: one ambiguous, one open-vocabulary only
        annotations[0].labels = vec!["happy".into(), "sad".into()];
        annotations[1].labels = vec!["curious".into()];
        let (aug, report) = build_augmented(&labeled, &unlabeled, &annotations).unwrap();
        assert_eq!(report.human, 18);
        assert_eq!(report.pseudo, 28);
        assert_eq!(report.dropped.len(), 2);
        assert_eq!(aug.len(), 18 + 28);
        let human = aug
            .records
            .iter()
            .filter(|r| aug.provenance[&r.id] == Provenance::Human)
            .count();
        assert_eq!(human, 18);
        // inputs untouched
        assert_eq!(labeled.len(), 18);
        assert!(unlabeled.labels.is_empty());
    }

    #[test]
    fn zero_annotations_keep_labeled_only() {
        let (labeled, unlabeled) = six_class_pair(2, 3);
        let (aug, report) = build_augmented(&labeled, &unlabeled, &[]).unwrap();
        assert_eq!(aug.len(), labeled.len());
        assert_eq!(report.pseudo, 0);
        assert_eq!(report.dropped.len(), unlabeled.len());
    }

    #[test]
    fn overlapping_ids_rejected() {
        let (labeled, mut unlabeled) = six_class_pair(2, 2);
        unlabeled.records[0].id = labeled.records[0].id.clone();
        unlabeled.provenance.insert(unlabeled.records[0].id.clone(), Provenance::Human);
        assert!(build_augmented(&labeled, &unlabeled, &[]).is_err());
    }

    #[test]
    fn annotation_for_unknown_id_rejected() {
        let (labeled, unlabeled) = six_class_pair(2, 2);
        let ann = vec![AnnotationRecord {
            id: "ghost".into(),
            description: String::new(),
            labels: vec!["happy".into()],
            prompt_id: "p".into(),
        }];
        assert!(build_augmented(&labeled, &unlabeled, &ann).is_err());
    }

    #[test]
    fn annotation_round_trip() {
        let records = vec![
            AnnotationRecord {
                id: "a1".into(),
                description: "looks cheerful, almost happy".into(),
                labels: vec!["happy".into(), "cheerful".into()],
                prompt_id: "emotion_llama_description".into(),
            },
            AnnotationRecord {
                id: "a2".into(),
                description: String::new(),
                labels: vec![],
                prompt_id: "emotion_llama_category".into(),
            },
        ];
        let dir = std::env::temp_dir().join("convattn_ann_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("annotations.jsonl");
        write_annotations(&records, &path).unwrap();
        assert_eq!(read_annotations(&path).unwrap(), records);
    }

    #[test]
    fn lexicon_file_round_trip() {
        let dir = std::env::temp_dir().join("convattn_ann_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("lexicon.tsv");
        std::fs::write(&path, "# comment\nhappy\thappy\nover the moon\thappy\nunhappy\tsad\n")
            .unwrap();
        let lex = Lexicon::load(&path).unwrap();
        assert_eq!(lex.len(), 3);
        let got = extract_keywords("she was over the moon", &lex);
        let want: BTreeSet<String> = ["happy".to_string()].into();
        assert_eq!(got, want);
    }

    #[test]
    fn builtin_prompt_templates_present() {
        let prompts = builtin_prompts();
        let cat = prompts.iter().find(|p| p.output_kind == OutputKind::CategoryOnly).unwrap();
        assert!(cat.template.contains("happy, sad, neutral, angry, worried, surprise"));
        assert!(prompts.iter().any(|p| p.output_kind == OutputKind::FullDescription));
        assert!(prompts.iter().any(|p| p.output_kind == OutputKind::KeywordExtraction));
    }
}
