use std::path::Path;

use serde::{Deserialize, Serialize};

use super::annotate::{annotate_assist, Rule};
use super::embed::EmbeddingProvider;
use super::features::{extract_features, FeatureVector, Lexicon, StandardizationStats};
use super::record::{Label, Reject, TweetRecord};
use super::split::stratified_split;
use super::text::{keyword_filter, noise_filter, PhraseMatcher};
use crate::branches::EmbeddedSequence;
use crate::ensemble::{Example, ModelInput};
use crate::error::{Result, WetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rule")]
pub enum LabelSource {
    Given,
    Suggested(Rule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedRecord {
    pub record: TweetRecord,
    pub label: Label,
    pub label_source: LabelSource,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub keywords: Vec<String>,
    pub exclusions: Vec<String>,
    pub lexicon: Lexicon,
    pub split_ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub stages: Vec<StageCount>,
    pub rejects: Vec<Reject>,
    pub stats: StandardizationStats,
    pub train: Vec<PreparedRecord>,
    pub test: Vec<PreparedRecord>,
}

fn attrition(stages: &[StageCount]) -> String {
    stages
        .iter()
        .map(|s| format!("{}={}", s.stage, s.count))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Filters, labels, splits, and extracts features. Standardisation is
/// fitted on the training part only.
pub fn prepare(
    records: &[TweetRecord],
    rejects: Vec<Reject>,
    opts: &PrepareOptions,
) -> Result<PreparedDataset> {
    let mut stages = vec![StageCount {
        stage: "ingested".into(),
        count: records.len(),
    }];
    let keywords = PhraseMatcher::new(&opts.keywords)?;
    let exclusions = PhraseMatcher::new(&opts.exclusions)?;
    let kept = keyword_filter(records, &keywords)?;
    stages.push(StageCount {
        stage: "keyword_filter".into(),
        count: kept.len(),
    });
    let kept = noise_filter(&kept, &exclusions);
    stages.push(StageCount {
        stage: "noise_filter".into(),
        count: kept.len(),
    });
    if kept.is_empty() {
        return Err(WetError::invalid(format!(
            "no records survive filtering ({})",
            attrition(&stages)
        )));
    }
    let labelled: Vec<(TweetRecord, Label, LabelSource)> = kept
        .into_iter()
        .map(|r| match r.label {
            Some(l) => (r, l, LabelSource::Given),
            None => {
                let s = annotate_assist(&r);
                (r, s.label, LabelSource::Suggested(s.rule))
            }
        })
        .collect();
    let suggested = labelled
        .iter()
        .filter(|(_, _, s)| *s != LabelSource::Given)
        .count();
    stages.push(StageCount {
        stage: "rule_labelled".into(),
        count: suggested,
    });
    let flags: Vec<bool> = labelled.iter().map(|(_, l, _)| l.is_positive()).collect();
    let (tr, te) = stratified_split(&flags, opts.split_ratio, opts.seed)
        .map_err(|e| WetError::invalid(format!("{e} ({})", attrition(&stages))))?;
    let train_records: Vec<TweetRecord> = tr.iter().map(|&i| labelled[i].0.clone()).collect();
    let stats = StandardizationStats::fit(&train_records)?;
    let build = |idx: &[usize]| -> Vec<PreparedRecord> {
        idx.iter()
            .map(|&i| {
                let (r, label, source) = &labelled[i];
                PreparedRecord {
                    record: r.clone(),
                    label: *label,
                    label_source: *source,
                    features: extract_features(r, &opts.lexicon, &stats),
                }
            })
            .collect()
    };
    let (train, test) = (build(&tr), build(&te));
    stages.push(StageCount {
        stage: "train".into(),
        count: train.len(),
    });
    stages.push(StageCount {
        stage: "test".into(),
        count: test.len(),
    });
    Ok(PreparedDataset {
        stages,
        rejects,
        stats,
        train,
        test,
    })
}

impl PreparedDataset {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| WetError::Internal(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| WetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| WetError::Parse(format!("prepared dataset: {e}")))
    }

    /// One CSV row per record: split, id, label, then the seven features.
    pub fn features_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["split", "id", "label"];
        header.extend(crate::config::FEATURE_NAMES);
        w.write_record(&header)
            .map_err(|e| WetError::Internal(e.to_string()))?;
        for (split, part) in [("train", &self.train), ("test", &self.test)] {
            for r in part {
                let mut row = vec![
                    split.to_string(),
                    r.record.id.clone(),
                    r.label.name().to_string(),
                ];
                row.extend(r.features.to_array().iter().map(|v| format!("{v}")));
                w.write_record(&row)
                    .map_err(|e| WetError::Internal(e.to_string()))?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| WetError::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| WetError::Internal(e.to_string()))
    }
}

/// Converts prepared records into model examples.
pub fn to_examples(
    records: &[PreparedRecord],
    provider: &EmbeddingProvider,
    stopwords: &[String],
    max_len: usize,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let sequence: EmbeddedSequence =
                provider.embed(&r.record.id, &r.record.text, stopwords, max_len)?;
            Ok(Example {
                input: ModelInput {
                    sequence,
                    features: r.features.to_array(),
                },
                label: r.label.as_f64(),
            })
        })
        .collect()
}
