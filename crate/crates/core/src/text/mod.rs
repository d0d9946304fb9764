//! Text normalisation, character and word encodings, and log ingestion.

mod alphabet;
mod dataset;
mod embedding;

pub use alphabet::{encode_chars, Alphabet, DEFAULT_ALPHABET};
pub use dataset::{read_dataset, write_dataset, DatasetReader, Device, QueryAdRecord};
pub use embedding::{encode_words, load_embedding_table, EmbeddingTable};

/// Lowercases and collapses every whitespace run to a single space, trimming
/// both ends.
pub fn canonicalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Joins the ad fields in title, description, URL order with single spaces.
pub fn concat_ad_fields(title: &str, description: &str, display_url: &str) -> String {
    format!("{title} {description} {display_url}")
}

/// Canonical single-sequence form of an ad.
pub fn ad_text(title: &str, description: &str, display_url: &str) -> String {
    canonicalize(&concat_ad_fields(
        &canonicalize(title),
        &canonicalize(description),
        &canonicalize(display_url),
    ))
}

/// Whitespace split with punctuation trimmed from both token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|tok| !tok.is_empty())
        .map(str::to_owned)
        .collect()
}
