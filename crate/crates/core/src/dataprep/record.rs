use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, WetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
            Flag(bool),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => match s.to_ascii_lowercase().as_str() {
                "positive" | "pos" | "1" => Ok(Label::Positive),
                "negative" | "neg" | "0" => Ok(Label::Negative),
                other => Err(serde::de::Error::custom(format!("unknown label '{other}'"))),
            },
            Raw::Int(1) => Ok(Label::Positive),
            Raw::Int(0) => Ok(Label::Negative),
            Raw::Int(n) => Err(serde::de::Error::custom(format!(
                "label must be 0 or 1, got {n}"
            ))),
            Raw::Flag(b) => Ok(Label::from_bool(b)),
        }
    }
}

/// One post with its engagement counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    pub followers: u64,
    pub likes: u64,
    pub replies: u64,
    pub retweets: u64,
    #[serde(default)]
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl TweetRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(WetError::invalid("record id is empty"));
        }
        if self.text.trim().is_empty() {
            return Err(WetError::invalid(format!(
                "record {} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<TweetRecord>,
    pub rejects: Vec<Reject>,
}

/// Parses JSON lines. Blank lines are skipped; malformed lines and
/// repeated ids are reported as rejects. Fails when more than half of the
/// non-blank lines are rejected.
pub fn ingest_str(text: &str) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut seen = std::collections::HashSet::new();
    let mut lines = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        let parsed = serde_json::from_str::<TweetRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) if !seen.insert(r.id.clone()) => report.rejects.push(Reject {
                line: i + 1,
                reason: format!("duplicate id {}", r.id),
            }),
            Ok(r) => report.records.push(r),
            Err(reason) => report.rejects.push(Reject {
                line: i + 1,
                reason,
            }),
        }
    }
    if lines > 0 && report.rejects.len() * 2 > lines {
        return Err(WetError::Parse(format!(
            "{} of {lines} lines are malformed (first: line {}: {})",
            report.rejects.len(),
            report.rejects[0].line,
            report.rejects[0].reason
        )));
    }
    Ok(report)
}

pub fn ingest(path: &Path) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| WetError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| WetError::io(path, e))?);
        text.push('\n');
    }
    ingest_str(&text)
}

/// Writes records as JSON lines.
pub fn write_jsonl(path: &Path, records: &[TweetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| WetError::Internal(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| WetError::io(path, e))
}
