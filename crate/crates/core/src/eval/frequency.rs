use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::metrics::auc;
use crate::text::{Device, QueryAdRecord};

/// Upper bound of the tail stratum (exclusive).
pub const TAIL_BELOW: f64 = 1e-6;
/// Lower bound of the head stratum (inclusive).
pub const HEAD_FROM: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredImpression {
    pub score: f64,
    pub click: u8,
    pub query_key: String,
    pub ad_key: String,
    pub device: Device,
}

impl ScoredImpression {
    pub fn from_record(record: &QueryAdRecord, score: f64) -> Self {
        ScoredImpression {
            score,
            click: record.click,
            query_key: record.query_text(),
            ad_key: record.ad_text(),
            device: record.device.unwrap_or_default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Query,
    Ad,
    Pair,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Query, Dimension::Ad, Dimension::Pair];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Query => "query",
            Dimension::Ad => "ad",
            Dimension::Pair => "pair",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Tail,
    Torso,
    Head,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Tail, Stratum::Torso, Stratum::Head];

    pub fn of(nf: f64) -> Stratum {
        if nf < TAIL_BELOW {
            Stratum::Tail
        } else if nf < HEAD_FROM {
            Stratum::Torso
        } else {
            Stratum::Head
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Tail => "tail",
            Stratum::Torso => "torso",
            Stratum::Head => "head",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// Impression counts per query, ad and (query, ad) pair over a reference
/// stream.
#[derive(Clone, Debug, Default)]
pub struct FrequencyIndex {
    query: HashMap<String, u64>,
    ad: HashMap<String, u64>,
    pair: HashMap<(String, String), u64>,
    max: [u64; 3],
}

impl FrequencyIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, query_key: &str, ad_key: &str) {
        fn bump<K: Eq + std::hash::Hash>(map: &mut HashMap<K, u64>, key: K, max: &mut u64) {
            let n = map.entry(key).or_insert(0);
            *n += 1;
            *max = (*max).max(*n);
        }
        let [mq, ma, mp] = &mut self.max;
        bump(&mut self.query, query_key.to_owned(), mq);
        bump(&mut self.ad, ad_key.to_owned(), ma);
        bump(&mut self.pair, (query_key.to_owned(), ad_key.to_owned()), mp);
    }

    /// Index over canonical query and ad texts.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a QueryAdRecord>) -> Self {
        let mut idx = Self::new();
        for r in records {
            idx.observe(&r.query_text(), &r.ad_text());
        }
        idx
    }

    pub fn count(&self, dim: Dimension, query_key: &str, ad_key: &str) -> u64 {
        match dim {
            Dimension::Query => self.query.get(query_key).copied(),
            Dimension::Ad => self.ad.get(ad_key).copied(),
            Dimension::Pair => self.pair.get(&(query_key.to_owned(), ad_key.to_owned())).copied(),
        }
        .unwrap_or(0)
    }

    pub fn max(&self, dim: Dimension) -> u64 {
        self.max[dim as usize]
    }

    /// Count over the dimension's maximum; 0 for unseen keys.
    pub fn nf(&self, dim: Dimension, query_key: &str, ad_key: &str) -> f64 {
        let max = self.max(dim);
        if max == 0 {
            return 0.0;
        }
        self.count(dim, query_key, ad_key) as f64 / max as f64
    }

    pub fn nf_of(&self, dim: Dimension, imp: &ScoredImpression) -> f64 {
        self.nf(dim, &imp.query_key, &imp.ad_key)
    }
}

/// Indices of the impressions falling in each stratum, in input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Slices {
    pub tail: Vec<usize>,
    pub torso: Vec<usize>,
    pub head: Vec<usize>,
}

impl Slices {
    pub fn get(&self, s: Stratum) -> &[usize] {
        match s {
            Stratum::Tail => &self.tail,
            Stratum::Torso => &self.torso,
            Stratum::Head => &self.head,
        }
    }
}

pub fn slice_tail_torso_head(imps: &[ScoredImpression], index: &FrequencyIndex, dim: Dimension) -> Slices {
    let mut s = Slices::default();
    for (i, imp) in imps.iter().enumerate() {
        match Stratum::of(index.nf_of(dim, imp)) {
            Stratum::Tail => s.tail.push(i),
            Stratum::Torso => s.torso.push(i),
            Stratum::Head => s.head.push(i),
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub nf_below: f64,
    pub impressions: usize,
    #[serde(with = "super::report::undefined")]
    pub auc: Option<f64>,
}

/// For each edge `x`, AUC over impressions whose normalised frequency is
/// strictly below `x`.
pub fn cumulative_auc_curve(
    imps: &[ScoredImpression],
    index: &FrequencyIndex,
    dim: Dimension,
    edges: &[f64],
) -> Vec<CurvePoint> {
    let mut keyed: Vec<(f64, f64, f64)> = imps
        .iter()
        .map(|i| (index.nf_of(dim, i), i.score, f64::from(i.click)))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    edges
        .iter()
        .map(|&x| {
            let n = keyed.partition_point(|k| k.0 < x);
            let s: Vec<f64> = keyed[..n].iter().map(|k| k.1).collect();
            let c: Vec<f64> = keyed[..n].iter().map(|k| k.2).collect();
            CurvePoint {
                nf_below: x,
                impressions: n,
                auc: auc(&s, &c),
            }
        })
        .collect()
}
