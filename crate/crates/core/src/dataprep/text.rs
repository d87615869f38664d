use std::sync::OnceLock;

use regex::Regex;

use super::record::TweetRecord;
use crate::error::{Result, WetError};

pub const DEFAULT_KEYWORDS: &str = include_str!("../../data/keywords.txt");
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
pub const DEFAULT_EXCLUSIONS: &str = include_str!("../../data/exclusions.txt");

/// Non-empty, non-comment lines, lowercased and trimmed.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[\p{L}\p{N}]+(?:['\u{2019}][\p{L}\p{N}]+)*").expect("token regex")
    })
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:\b[a-z][a-z0-9+.\-]*://\S+|\bwww\.\S+)").expect("url regex")
    })
}

/// Lowercased word tokens. Hashtag and mention markers are dropped and the
/// word kept; URLs are removed.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = url_re()
        .replace_all(&text.to_lowercase(), " ")
        .replace('\u{2019}', "'");
    token_re()
        .find_iter(&lowered)
        .map(|m| m.as_str().to_string())
        .collect()
}

pub fn contains_url(text: &str) -> bool {
    url_re().is_match(text)
}

/// Compiled phrase matcher: each phrase must appear bounded by word edges.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    re: Option<Regex>,
    phrases: Vec<String>,
}

impl PhraseMatcher {
    pub fn new(phrases: &[String]) -> Result<Self> {
        let phrases: Vec<String> = phrases
            .iter()
            .map(|p| p.trim().to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        if phrases.is_empty() {
            return Ok(PhraseMatcher { re: None, phrases });
        }
        let alts: Vec<String> = phrases
            .iter()
            .map(|p| {
                let words: Vec<String> = p.split_whitespace().map(regex::escape).collect();
                words.join(r"\s+")
            })
            .collect();
        let pattern = format!(
            r"(?:^|[^\p{{L}}\p{{N}}])(?:{})(?:$|[^\p{{L}}\p{{N}}])",
            alts.join("|")
        );
        let re = Regex::new(&pattern).map_err(|e| WetError::Parse(format!("phrase list: {e}")))?;
        Ok(PhraseMatcher {
            re: Some(re),
            phrases,
        })
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn matches(&self, text: &str) -> bool {
        match &self.re {
            Some(re) => re.is_match(&text.to_lowercase().replace('\u{2019}', "'")),
            None => false,
        }
    }
}

/// Keeps records mentioning at least one keyword phrase.
pub fn keyword_filter(
    records: &[TweetRecord],
    keywords: &PhraseMatcher,
) -> Result<Vec<TweetRecord>> {
    if keywords.phrases().is_empty() {
        return Err(WetError::invalid("keyword list is empty"));
    }
    Ok(records
        .iter()
        .filter(|r| keywords.matches(&r.text))
        .cloned()
        .collect())
}

/// Drops records with a URL or any exclusion phrase.
pub fn noise_filter(records: &[TweetRecord], exclusions: &PhraseMatcher) -> Vec<TweetRecord> {
    records
        .iter()
        .filter(|r| !contains_url(&r.text) && !exclusions.matches(&r.text))
        .cloned()
        .collect()
}
