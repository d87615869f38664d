use serde::{Deserialize, Serialize};

use super::record::{Label, TweetRecord};
use super::text::tokenize;

/// Phrases treated as direct references to suicide or self-harm.
pub const SUICIDE_TERMS: &[&str] = &[
    "suicide",
    "suicidal",
    "kill myself",
    "killing myself",
    "end my life",
    "ending my life",
    "end it all",
    "take my own life",
    "want to die",
    "wanna die",
    "better off dead",
    "wish i was dead",
    "no reason to live",
    "self harm",
    "overdose",
    "cut myself",
    "hang myself",
];

const NEGATIONS: &[&str] = &[
    "not", "never", "won't", "wont", "don't", "dont", "wouldn't", "no",
];
const FIRST_PERSON: &[&str] = &[
    "i", "i'm", "im", "i've", "i'd", "i'll", "me", "my", "myself", "mine",
];
const THIRD_PERSON: &[&str] = &[
    "he",
    "she",
    "they",
    "his",
    "her",
    "their",
    "them",
    "him",
    "someone",
    "somebody",
    "people",
    "friend",
    "brother",
    "sister",
    "celebrity",
    "singer",
    "actor",
    "article",
    "news",
    "documentary",
    "report",
    "study",
];

/// Tokens before a term in which a negation marks denial.
pub const NEGATION_WINDOW: usize = 3;
/// Tokens on either side of a term searched for a first-person subject.
pub const PRONOUN_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    LackOfConnection,
    Denial,
    FirstPerson,
    ThirdPerson,
    NoRuleMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub label: Label,
    pub rule: Rule,
    pub trace: String,
}

/// Token spans `[start, end)` of suicide-term matches.
fn term_spans(tokens: &[String]) -> Vec<(usize, usize, &'static str)> {
    let mut spans = Vec::new();
    for term in SUICIDE_TERMS {
        let words: Vec<&str> = term.split(' ').collect();
        if words.len() > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - words.len() {
            if tokens[start..start + words.len()]
                .iter()
                .zip(&words)
                .all(|(t, w)| t == w)
            {
                spans.push((start, start + words.len(), *term));
            }
        }
    }
    spans.sort();
    spans
}

fn any_in(
    tokens: &[String],
    range: std::ops::Range<usize>,
    skip: (usize, usize),
    set: &[&str],
) -> Option<usize> {
    range
        .filter(|&i| i < skip.0 || i >= skip.1)
        .find(|&i| set.contains(&tokens[i].as_str()))
}

/// Rule-based label suggestion. Rules are tried in order: no suicide term,
/// negated term, first-person subject near a term, third-person subject
/// near a term; anything else is negative.
pub fn annotate_assist(record: &TweetRecord) -> Suggestion {
    let tokens = tokenize(&record.text);
    let spans = term_spans(&tokens);
    if spans.is_empty() {
        return Suggestion {
            label: Label::Negative,
            rule: Rule::LackOfConnection,
            trace: "no suicide-related term".into(),
        };
    }
    for &(s, e, term) in &spans {
        if let Some(i) = any_in(
            &tokens,
            s.saturating_sub(NEGATION_WINDOW)..s,
            (s, e),
            NEGATIONS,
        ) {
            return Suggestion {
                label: Label::Negative,
                rule: Rule::Denial,
                trace: format!("'{}' negates '{term}'", tokens[i]),
            };
        }
    }
    for &(s, e, term) in &spans {
        let window = s.saturating_sub(PRONOUN_WINDOW)..(e + PRONOUN_WINDOW).min(tokens.len());
        if let Some(i) = any_in(&tokens, window, (s, e), FIRST_PERSON) {
            return Suggestion {
                label: Label::Positive,
                rule: Rule::FirstPerson,
                trace: format!("first-person '{}' near '{term}'", tokens[i]),
            };
        }
    }
    for &(s, e, term) in &spans {
        let window = s.saturating_sub(PRONOUN_WINDOW)..(e + PRONOUN_WINDOW).min(tokens.len());
        if let Some(i) = any_in(&tokens, window, (s, e), THIRD_PERSON) {
            return Suggestion {
                label: Label::Negative,
                rule: Rule::ThirdPerson,
                trace: format!("third-person '{}' near '{term}'", tokens[i]),
            };
        }
    }
    Suggestion {
        label: Label::Negative,
        rule: Rule::NoRuleMatched,
        trace: "term without a personal subject".into(),
    }
}
