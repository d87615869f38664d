use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::TweetRecord;
use super::text::tokenize;
use crate::config::FEATURE_COUNT;
use crate::error::{Result, WetError};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.csv");

/// `|p|` at or below this counts as neutral sentiment.
pub const NEUTRAL_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub polarity: f64,
    pub subjectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: BTreeMap<String, LexiconEntry>,
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    term: String,
    polarity: f64,
    subjectivity: f64,
}

impl Lexicon {
    /// Parses `term,polarity,subjectivity` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut entries = BTreeMap::new();
        for (i, row) in reader.deserialize::<LexiconRow>().enumerate() {
            let row = row.map_err(|e| WetError::Parse(format!("lexicon row {}: {e}", i + 2)))?;
            let term = row.term.to_lowercase();
            if !(-1.0..=1.0).contains(&row.polarity) || !(0.0..=1.0).contains(&row.subjectivity) {
                return Err(WetError::Parse(format!(
                    "lexicon term '{term}' has out-of-range scores"
                )));
            }
            if entries
                .insert(
                    term.clone(),
                    LexiconEntry {
                        polarity: row.polarity,
                        subjectivity: row.subjectivity,
                    },
                )
                .is_some()
            {
                return Err(WetError::Parse(format!(
                    "lexicon term '{term}' appears twice"
                )));
            }
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| WetError::io(path, e))?)
    }

    pub fn bundled() -> Self {
        Self::from_csv(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean polarity and subjectivity over matched tokens, zero without matches.
    pub fn score(&self, tokens: &[String]) -> (f64, f64) {
        let hits: Vec<&LexiconEntry> = tokens.iter().filter_map(|t| self.entries.get(t)).collect();
        if hits.is_empty() {
            return (0.0, 0.0);
        }
        let n = hits.len() as f64;
        (
            hits.iter().map(|e| e.polarity).sum::<f64>() / n,
            hits.iter().map(|e| e.subjectivity).sum::<f64>() / n,
        )
    }
}

pub fn sentiment_class(polarity: f64) -> f64 {
    if polarity > NEUTRAL_BAND {
        1.0
    } else if polarity < -NEUTRAL_BAND {
        -1.0
    } else {
        0.0
    }
}

/// z-score parameters of `log1p` engagement counts, in the order
/// followers, likes, replies, retweets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

fn log_counts(r: &TweetRecord) -> [f64; 4] {
    [r.followers, r.likes, r.replies, r.retweets].map(|c| (c as f64).ln_1p())
}

impl StandardizationStats {
    /// Population statistics over `records`; a zero spread is replaced by 1.
    pub fn fit(records: &[TweetRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(WetError::invalid(
                "cannot fit standardisation on no records",
            ));
        }
        let n = records.len() as f64;
        let mut mean = [0.0; 4];
        for r in records {
            for (m, x) in mean.iter_mut().zip(log_counts(r)) {
                *m += x / n;
            }
        }
        let mut var = [0.0; 4];
        for r in records {
            for ((v, x), m) in var.iter_mut().zip(log_counts(r)).zip(mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(StandardizationStats { mean, std })
    }

    pub fn apply(&self, r: &TweetRecord) -> [f64; 4] {
        let mut out = log_counts(r);
        for i in 0..4 {
            out[i] = (out[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub subjectivity: f64,
    pub polarity: f64,
    pub sentiment: f64,
    pub followers: f64,
    pub likes: f64,
    pub replies: f64,
    pub retweets: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.subjectivity,
            self.polarity,
            self.sentiment,
            self.followers,
            self.likes,
            self.replies,
            self.retweets,
        ]
    }
}

pub fn extract_features(
    record: &TweetRecord,
    lexicon: &Lexicon,
    stats: &StandardizationStats,
) -> FeatureVector {
    let (polarity, subjectivity) = lexicon.score(&tokenize(&record.text));
    let [followers, likes, replies, retweets] = stats.apply(record);
    FeatureVector {
        subjectivity,
        polarity,
        sentiment: sentiment_class(polarity),
        followers,
        likes,
        replies,
        retweets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(text: &str, counts: [u64; 4]) -> TweetRecord {
        TweetRecord {
            id: "x".into(),
            text: text.into(),
            followers: counts[0],
            likes: counts[1],
            replies: counts[2],
            retweets: counts[3],
            created_at: String::new(),
            label: None,
        }
    }

    fn lex() -> Lexicon {
        Lexicon::from_csv(
            "term,polarity,subjectivity\ngreat,0.8,0.75\ngood,0.5,0.6\nbad,-0.5,0.4\n",
        )
        .unwrap()
    }

    #[test]
    fn bundled_lexicon_is_about_300_terms() {
        let l = Lexicon::bundled();
        assert!((250..=350).contains(&l.len()), "{}", l.len());
    }

    #[test]
    fn feature_examples() {
        let stats = StandardizationStats {
            mean: [0.0; 4],
            std: [1.0; 4],
        };
        let f = extract_features(&rec("nothing matches here", [0; 4]), &lex(), &stats);
        assert_eq!((f.polarity, f.subjectivity, f.sentiment), (0.0, 0.0, 0.0));
        let f = extract_features(&rec("a GREAT day", [0; 4]), &lex(), &stats);
        assert_eq!((f.polarity, f.sentiment), (0.8, 1.0));
        assert_eq!(f.subjectivity, 0.75);
        let f = extract_features(&rec("good and bad", [0; 4]), &lex(), &stats);
        assert_eq!((f.polarity, f.sentiment), (0.0, 0.0));
        assert_eq!(sentiment_class(0.05), 0.0);
        assert_eq!(sentiment_class(-0.051), -1.0);
    }

    #[test]
    fn standardised_counts_have_unit_moments() {
        let records: Vec<TweetRecord> = (0..50u64)
            .map(|i| rec("t", [i * i * 13 % 997, i * 7 % 31, i % 5, (i * 11) % 200]))
            .collect();
        let stats = StandardizationStats::fit(&records).unwrap();
        for k in 0..4 {
            let xs: Vec<f64> = records.iter().map(|r| stats.apply(r)[k]).collect();
            let mean = xs.iter().sum::<f64>() / 50.0;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_counts_do_not_divide_by_zero() {
        let records = vec![rec("t", [5; 4]), rec("u", [5; 4])];
        let stats = StandardizationStats::fit(&records).unwrap();
        assert_eq!(stats.apply(&records[0]), [0.0; 4]);
    }

    #[test]
    fn bad_lexicon_rows() {
        assert!(Lexicon::from_csv("term,polarity,subjectivity\nx,2.0,0.5\n").is_err());
        assert!(Lexicon::from_csv("term,polarity,subjectivity\nx,0.1,0.5\nX,0.2,0.5\n").is_err());
        assert!(Lexicon::from_csv("term,polarity\nx,0.1\n").is_err());
    }
}
