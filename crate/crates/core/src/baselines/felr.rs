//! Logistic regression over standardised text features.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, CorpusStats, FEATURE_NAMES, LENGTH_FEATURES, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::layers::{sigmoid, Mode};
use crate::params::{Param, Parameters};
use crate::text::QueryAdRecord;
use crate::train::{train, ClickModel, Examples, TrainConfig, TrainHistory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    All,
    LengthOnly,
}

impl FeatureSet {
    pub fn indices(self) -> Vec<usize> {
        match self {
            FeatureSet::All => (0..NUM_FEATURES).collect(),
            FeatureSet::LengthOnly => LENGTH_FEATURES.collect(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(FeatureSet::All),
            "length_only" => Some(FeatureSet::LengthOnly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::All => "all",
            FeatureSet::LengthOnly => "length_only",
        }
    }
}

/// Full feature vectors with click labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_records(records: &[QueryAdRecord], stats: &CorpusStats) -> Self {
        FeatureMatrix {
            rows: records.iter().map(|r| extract_features(r, stats)).collect(),
            labels: records.iter().map(QueryAdRecord::label).collect(),
        }
    }

    /// Writes the named feature columns plus `label`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut s = FEATURE_NAMES.join("\t");
        s.push_str("\tlabel\n");
        for (row, label) in self.rows.iter().zip(&self.labels) {
            for v in row {
                let _ = write!(s, "{v:?}\t");
            }
            let _ = writeln!(s, "{label}");
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
        let expected: Vec<&str> = FEATURE_NAMES.iter().map(String::as_str).chain(["label"]).collect();
        if header != expected {
            return Err(err(1, "unexpected feature header".into()));
        }
        let mut m = FeatureMatrix::default();
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split('\t')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(i + 2, format!("{e}")))?;
            if vals.len() != NUM_FEATURES + 1 {
                return Err(err(i + 2, format!("expected {} fields, got {}", NUM_FEATURES + 1, vals.len())));
            }
            m.labels.push(vals[NUM_FEATURES]);
            m.rows.push(vals[..NUM_FEATURES].to_vec());
        }
        Ok(m)
    }
}

impl Examples for FeatureMatrix {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }
}

/// `p = sigmoid(w . standardise(x) + b)` on a subset of the features.
#[derive(Clone, Debug, PartialEq)]
pub struct Felr {
    pub feature_set: FeatureSet,
    pub weights: Param,
    pub bias: Param,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Corpus statistics the BM25 features are computed against.
    pub corpus: CorpusStats,
}

#[derive(Serialize, Deserialize)]
struct FelrFile {
    feature_set: FeatureSet,
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
    corpus: CorpusStats,
}

#[derive(Default)]
pub struct FelrCache {
    xhat: Vec<Vec<f64>>,
}

impl Felr {
    /// Zero weights with identity standardisation.
    pub fn new(feature_set: FeatureSet) -> Self {
        let n = feature_set.indices().len();
        Felr {
            feature_set,
            weights: Param::zeros("felr.weight", n),
            bias: Param::zeros("felr.bias", 1),
            mean: vec![0.0; n],
            std: vec![1.0; n],
            corpus: CorpusStats::default(),
        }
    }

    /// Per-feature mean and population standard deviation; a zero deviation
    /// is replaced by 1.
    pub fn fit_standardization(&mut self, data: &FeatureMatrix) {
        let idx = self.feature_set.indices();
        let n = data.rows.len().max(1) as f64;
        for (j, &f) in idx.iter().enumerate() {
            let mean = data.rows.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = data.rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            self.mean[j] = mean;
            self.std[j] = if std > 0.0 { std } else { 1.0 };
        }
    }

    fn standardize(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != NUM_FEATURES {
            return Err(Error::shape("felr features", NUM_FEATURES, row.len()));
        }
        Ok(self
            .feature_set
            .indices()
            .iter()
            .enumerate()
            .map(|(j, &f)| (row[f] - self.mean[j]) / self.std[j])
            .collect())
    }

    fn logit(&self, xhat: &[f64]) -> f64 {
        self.bias.value[0] + xhat.iter().zip(&self.weights.value).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Probability for one full feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(&self.standardize(features)?)))
    }

    /// Probability for a record, with features computed against the stored
    /// corpus statistics.
    pub fn predict_record(&self, record: &QueryAdRecord) -> f64 {
        sigmoid(self.logit(&self.standardize(&extract_features(record, &self.corpus)).unwrap()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FelrFile {
            feature_set: self.feature_set,
            weights: self.weights.value.clone(),
            bias: self.bias.value[0],
            mean: self.mean.clone(),
            std: self.std.clone(),
            corpus: self.corpus.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FelrFile = serde_json::from_str(text)?;
        let n = f.feature_set.indices().len();
        if f.weights.len() != n || f.mean.len() != n || f.std.len() != n {
            return Err(Error::Invalid(format!("felr model arrays must have {n} entries")));
        }
        Ok(Felr {
            feature_set: f.feature_set,
            weights: Param::from_values("felr.weight", f.weights),
            bias: Param::from_values("felr.bias", vec![f.bias]),
            mean: f.mean,
            std: f.std,
            corpus: f.corpus,
        })
    }
}

impl Parameters for Felr {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weights, &mut self.bias]
    }
}

impl ClickModel<FeatureMatrix> for Felr {
    type Cache = FelrCache;

    fn batch_logits(&self, data: &FeatureMatrix, idx: &[usize], _mode: Mode, cache: &mut FelrCache) -> Result<Vec<f64>> {
        cache.xhat = idx
            .iter()
            .map(|&i| self.standardize(&data.rows[i]).map_err(|e| e.at_record(i)))
            .collect::<Result<_>>()?;
        Ok(cache.xhat.iter().map(|x| self.logit(x)).collect())
    }

    fn backward(&mut self, dlogits: &[f64], cache: &mut FelrCache) -> Result<()> {
        let xhat = std::mem::take(&mut cache.xhat);
        if xhat.is_empty() {
            return Err(Error::MissingCache("felr"));
        }
        if xhat.len() != dlogits.len() {
            return Err(Error::LengthMismatch(dlogits.len(), xhat.len()));
        }
        for (x, &g) in xhat.iter().zip(dlogits) {
            for (w, xi) in self.weights.grad.iter_mut().zip(x) {
                *w += g * xi;
            }
            self.bias.grad[0] += g;
        }
        Ok(())
    }
}

/// Standardises on `data`, then trains with the shared Adam loop. `corpus`
/// must be the statistics `data` was extracted with.
pub fn felr_train(
    data: &FeatureMatrix,
    corpus: &CorpusStats,
    heldout: Option<&FeatureMatrix>,
    feature_set: FeatureSet,
    config: &TrainConfig,
) -> Result<(Felr, TrainHistory)> {
    let mut model = Felr::new(feature_set);
    model.corpus = corpus.clone();
    model.fit_standardization(data);
    let history = train(&mut model, data, heldout, config)?;
    Ok((model, history))
}

pub fn felr_predict(model: &Felr, features: &[f64]) -> Result<f64> {
    model.predict(features)
}
