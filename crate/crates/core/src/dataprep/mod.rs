//! Data preparation: ingestion, filtering, features, rule-assisted
//! labelling, splitting, and token embeddings.

mod annotate;
mod embed;
mod features;
mod prepare;
mod record;
mod split;
mod synthetic;
mod text;

pub use annotate::{
    annotate_assist, Rule, Suggestion, NEGATION_WINDOW, PRONOUN_WINDOW, SUICIDE_TERMS,
};
pub use embed::{
    content_tokens, EmbeddingProvider, PrecomputedEmbeddings, PseudoHash, EMBEDDING_MAGIC,
    EMPTY_TOKEN,
};
pub use features::{
    extract_features, sentiment_class, FeatureVector, Lexicon, LexiconEntry, StandardizationStats,
    DEFAULT_LEXICON, NEUTRAL_BAND,
};
pub use prepare::{
    prepare, to_examples, LabelSource, PrepareOptions, PreparedDataset, PreparedRecord, StageCount,
};
pub use record::{ingest, ingest_str, write_jsonl, IngestReport, Label, Reject, TweetRecord};
pub use split::{split_train_test, stratified_folds, stratified_split};
pub use synthetic::synthetic_corpus;
pub use text::{
    contains_url, keyword_filter, noise_filter, parse_list, tokenize, PhraseMatcher,
    DEFAULT_EXCLUSIONS, DEFAULT_KEYWORDS, DEFAULT_STOPWORDS,
};
