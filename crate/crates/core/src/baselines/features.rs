//! Text-only query-ad features.
//!
//! Layout (42 values), see [`FEATURE_NAMES`]:
//! - 0..12: common counts, granularity-major (unigram, bigram, char
//!   trigram) over targets (title, description, url, ad)
//! - 12..24: Jaccard, same order
//! - 24..34: char length then word length of the query, title, description,
//!   url and ad
//! - 34..38: unigram term-frequency cosine per target
//! - 38..42: BM25 per target
//!
//! Overlaps are computed on sets; an empty union gives Jaccard 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::text::{canonicalize, tokenize, QueryAdRecord};

pub const NUM_FEATURES: usize = 42;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

const TARGETS: [&str; 4] = ["title", "description", "url", "ad"];
const GRANULARITIES: [&str; 3] = ["unigram", "bigram", "trigram"];

pub static FEATURE_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut v = Vec::with_capacity(NUM_FEATURES);
    for family in ["common", "jaccard"] {
        for g in GRANULARITIES {
            for t in TARGETS {
                v.push(format!("{family}_{g}_{t}"));
            }
        }
    }
    for field in ["query", "title", "description", "url", "ad"] {
        v.push(format!("chars_{field}"));
        v.push(format!("words_{field}"));
    }
    for family in ["cosine", "bm25"] {
        for t in TARGETS {
            v.push(format!("{family}_{t}"));
        }
    }
    v
});

/// Index range of the ten length features.
pub const LENGTH_FEATURES: std::ops::Range<usize> = 24..34;

/// Canonical text of the four targets in title, description, url, ad order.
fn targets(record: &QueryAdRecord) -> [String; 4] {
    [
        canonicalize(&record.ad_title),
        canonicalize(&record.ad_description),
        canonicalize(&record.ad_display_url),
        record.ad_text(),
    ]
}

/// Document frequencies and average token lengths per target field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub df: [BTreeMap<String, usize>; 4],
    pub avg_len: [f64; 4],
}

impl CorpusStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a QueryAdRecord>) -> Self {
        let mut s = CorpusStats::default();
        let mut total = [0usize; 4];
        for r in records {
            s.documents += 1;
            for (f, text) in targets(r).iter().enumerate() {
                let toks = tokenize(text);
                total[f] += toks.len();
                let uniq: HashSet<String> = toks.into_iter().collect();
                for t in uniq {
                    *s.df[f].entry(t).or_insert(0) += 1;
                }
            }
        }
        for f in 0..4 {
            s.avg_len[f] = if s.documents == 0 {
                0.0
            } else {
                total[f] as f64 / s.documents as f64
            };
        }
        s
    }

    fn idf(&self, field: usize, term: &str) -> f64 {
        let n = self.documents as f64;
        let df = self.df[field].get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

/// Okapi BM25 of the distinct query terms against one field.
pub fn bm25<S: AsRef<str>>(query: &[S], field: &[S], field_type: usize, stats: &CorpusStats) -> f64 {
    let mut tf: HashMap<&str, f64> = HashMap::new();
    for t in field {
        *tf.entry(t.as_ref()).or_insert(0.0) += 1.0;
    }
    let avg = stats.avg_len[field_type];
    let norm = if avg > 0.0 {
        1.0 - BM25_B + BM25_B * field.len() as f64 / avg
    } else {
        1.0
    };
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for q in query {
        let q = q.as_ref();
        if !seen.insert(q) {
            continue;
        }
        let f = tf.get(q).copied().unwrap_or(0.0);
        if f > 0.0 {
            score += stats.idf(field_type, q) * f * (BM25_K1 + 1.0) / (f + BM25_K1 * norm);
        }
    }
    score
}

fn bigrams(tokens: &[String]) -> HashSet<String> {
    tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect()
}

fn char_trigrams(text: &str) -> HashSet<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

fn overlap(a: &HashSet<String>, b: &HashSet<String>) -> (f64, f64) {
    let common = a.intersection(b).count();
    let union = a.len() + b.len() - common;
    let jac = if union == 0 { 0.0 } else { common as f64 / union as f64 };
    (common as f64, jac)
}

fn term_counts(toks: &[String]) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for t in toks {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

fn cosine(a: &[String], b: &[String]) -> f64 {
    let count = term_counts;
    let (ca, cb) = (count(a), count(b));
    let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).copied().unwrap_or(0.0)).sum();
    let na: f64 = ca.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).min(1.0)
    }
}

struct Views {
    text: String,
    words: Vec<String>,
    sets: [HashSet<String>; 3],
}

impl Views {
    fn new(text: String) -> Self {
        let words = tokenize(&text);
        let sets = [
            words.iter().cloned().collect(),
            bigrams(&words),
            char_trigrams(&text),
        ];
        Views { text, words, sets }
    }
}

pub fn extract_features(record: &QueryAdRecord, stats: &CorpusStats) -> Vec<f64> {
    let q = Views::new(record.query_text());
    let ts = targets(record).map(Views::new);
    let mut common = [[0.0; 4]; 3];
    let mut jaccard = [[0.0; 4]; 3];
    for g in 0..3 {
        for (t, tv) in ts.iter().enumerate() {
            (common[g][t], jaccard[g][t]) = overlap(&q.sets[g], &tv.sets[g]);
        }
    }
    let mut v = Vec::with_capacity(NUM_FEATURES);
    v.extend(common.iter().flatten());
    v.extend(jaccard.iter().flatten());
    for view in std::iter::once(&q).chain(ts.iter()) {
        v.push(view.text.chars().count() as f64);
        v.push(view.words.len() as f64);
    }
    for tv in &ts {
        v.push(cosine(&q.words, &tv.words));
    }
    for (f, tv) in ts.iter().enumerate() {
        v.push(bm25(&q.words, &tv.words, f, stats));
    }
    debug_assert_eq!(v.len(), NUM_FEATURES);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(name: &str) -> usize {
        FEATURE_NAMES.iter().position(|n| n == name).unwrap()
    }

    #[test]
    fn names_are_complete_and_unique() {
        assert_eq!(FEATURE_NAMES.len(), NUM_FEATURES);
        let set: HashSet<&String> = FEATURE_NAMES.iter().collect();
        assert_eq!(set.len(), NUM_FEATURES);
        assert_eq!(FEATURE_NAMES[LENGTH_FEATURES.start], "chars_query");
        assert_eq!(FEATURE_NAMES[LENGTH_FEATURES.end - 1], "words_ad");
    }

    #[test]
    fn unigram_jaccard() {
        let r = QueryAdRecord::new("red shoes", "red shoes sale", "", "", 0);
        let f = extract_features(&r, &CorpusStats::from_records([&r]));
        assert!((f[idx("jaccard_unigram_title")] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f[idx("common_unigram_title")], 2.0);
    }

    #[test]
    fn identical_texts() {
        let r = QueryAdRecord::new("cheap red shoes", "cheap red shoes", "cheap red shoes", "cheap red shoes", 0);
        let f = extract_features(&r, &CorpusStats::from_records([&r]));
        for g in GRANULARITIES {
            for t in ["title", "description", "url"] {
                assert_eq!(f[idx(&format!("jaccard_{g}_{t}"))], 1.0, "{g} {t}");
            }
        }
        for t in ["title", "description", "url"] {
            assert!((f[idx(&format!("cosine_{t}"))] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_texts() {
        let r = QueryAdRecord::new("abc", "xyz", "uvw", "qqq.com", 1);
        let f = extract_features(&r, &CorpusStats::from_records([&r]));
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            if LENGTH_FEATURES.contains(&i) {
                assert!(f[i] > 0.0, "{name}");
            } else {
                assert_eq!(f[i], 0.0, "{name}");
            }
        }
    }

    #[test]
    fn bm25_single_document() {
        let r = QueryAdRecord::new("a", "a", "", "", 0);
        let stats = CorpusStats::from_records([&r]);
        assert_eq!(stats.avg_len[0], 1.0);
        let got = bm25(&["a"], &["a"], 0, &stats);
        // idf = ln((1 - 1 + 0.5) / (1 + 0.5) + 1), tf part = 2.2 / (1 + 1.2).
        let idf = (0.5f64 / 1.5 + 1.0).ln();
        assert!((got - idf * 2.2 / 2.2).abs() < 1e-15);
    }

    #[test]
    fn bm25_absent_term_is_zero() {
        let r = QueryAdRecord::new("a", "b c", "", "", 0);
        let stats = CorpusStats::from_records([&r]);
        assert_eq!(bm25(&["zzz"], &["b", "c"], 0, &stats), 0.0);
    }

    #[test]
    fn bm25_grows_with_term_frequency() {
        let recs: Vec<QueryAdRecord> = ["a b", "a c d", "e f"]
            .iter()
            .map(|t| QueryAdRecord::new("q", t, "", "", 0))
            .collect();
        let stats = CorpusStats::from_records(&recs);
        let mut prev = 0.0;
        for k in 1..6 {
            let mut field = vec!["a"; k];
            field.resize(6, "x");
            let s = bm25(&["a"], &field, 0, &stats);
            assert!(s >= prev);
            prev = s;
        }
    }

    proptest! {
        #[test]
        fn features_are_bounded(q in "[a-c ]{0,12}", t in "[a-c ]{0,12}", d in "[a-c ]{0,12}", u in "[a-c.]{0,8}") {
            let r = QueryAdRecord::new(&q, &t, &d, &u, 0);
            let f = extract_features(&r, &CorpusStats::from_records([&r]));
            prop_assert_eq!(f.len(), NUM_FEATURES);
            for (i, v) in f.iter().enumerate() {
                prop_assert!(v.is_finite() && *v >= 0.0);
                if (12..24).contains(&i) || (34..38).contains(&i) {
                    prop_assert!(*v <= 1.0);
                }
            }
            prop_assert_eq!(&f, &extract_features(&r, &CorpusStats::from_records([&r])));
        }

        #[test]
        fn jaccard_is_symmetric(a in prop::collection::hash_set("[a-d]{1,2}", 0..6), b in prop::collection::hash_set("[a-d]{1,2}", 0..6)) {
            prop_assert_eq!(overlap(&a, &b), overlap(&b, &a));
        }
    }
}
