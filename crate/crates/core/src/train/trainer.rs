use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::encoder::Encoder;
use super::loss::{cross_entropy_loss, logit_gradient, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::layers::{sigmoid, Mode, SeededRng};
use crate::model::{DeepModel, ModelCache};
use crate::params::Parameters;
use crate::tensor::Tensor2;
use crate::text::QueryAdRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
    /// Held-out AUC every this many steps; 0 means only after the last step.
    pub eval_every: usize,
    pub prob_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 1,
            max_steps: None,
            learning_rate: 1e-3,
            seed: 1,
            eval_every: 0,
            prob_clamp: PROB_CLAMP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".to_string());
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            errs.push("epochs must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            errs.push(format!("prob_clamp {} must lie in (0, 0.5)", self.prob_clamp));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// A labelled collection addressed by index.
pub trait Examples {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> f64;
}

/// A model trainable by [`train`] on data of type `D`.
pub trait ClickModel<D: Examples + ?Sized>: Parameters {
    type Cache: Default;

    /// Logits for the selected examples. Must not mutate the model.
    fn batch_logits(&self, data: &D, idx: &[usize], mode: Mode, cache: &mut Self::Cache) -> Result<Vec<f64>>;

    /// Applies state changes (running statistics) from a train-mode pass.
    fn commit(&mut self, _cache: &Self::Cache) {}

    fn backward(&mut self, dlogits: &[f64], cache: &mut Self::Cache) -> Result<()>;
}

/// Records paired with the encoder that turns them into model inputs.
#[derive(Clone, Copy)]
pub struct EncodedRecords<'a> {
    pub records: &'a [QueryAdRecord],
    pub encoder: &'a Encoder,
}

impl<'a> EncodedRecords<'a> {
    pub fn new(records: &'a [QueryAdRecord], encoder: &'a Encoder) -> Self {
        EncodedRecords { records, encoder }
    }
}

impl Examples for EncodedRecords<'_> {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn label(&self, i: usize) -> f64 {
        self.records[i].label()
    }
}

fn encode_batch(model: &DeepModel, data: &EncodedRecords<'_>, idx: &[usize]) -> Result<(Vec<Tensor2>, Vec<Tensor2>)> {
    if data.encoder.kind() != model.kind() {
        return Err(Error::KindMismatch {
            model: model.kind().as_str(),
            input: data.encoder.kind().as_str(),
        });
    }
    Ok(idx.iter().map(|&i| data.encoder.encode(&data.records[i])).unzip())
}

impl ClickModel<EncodedRecords<'_>> for DeepModel {
    type Cache = ModelCache;

    fn batch_logits(
        &self,
        data: &EncodedRecords<'_>,
        idx: &[usize],
        mode: Mode,
        cache: &mut ModelCache,
    ) -> Result<Vec<f64>> {
        let (q, a) = encode_batch(self, data, idx)?;
        self.logits(&q, &a, mode, cache)
    }

    fn commit(&mut self, cache: &ModelCache) {
        DeepModel::commit(self, cache);
    }

    fn backward(&mut self, dlogits: &[f64], cache: &mut ModelCache) -> Result<()> {
        DeepModel::backward(self, dlogits, cache)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub loss: f64,
    /// Outer `None`: not evaluated at this step. Inner `None`: AUC undefined.
    pub heldout_auc: Option<Option<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub entries: Vec<HistoryEntry>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.loss)
    }

    pub fn last_heldout_auc(&self) -> Option<f64> {
        self.entries.iter().rev().find_map(|e| e.heldout_auc.flatten())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tloss\theldout_auc\n");
        for e in &self.entries {
            let auc = match e.heldout_auc {
                None => String::new(),
                Some(None) => "undefined".into(),
                Some(Some(a)) => format!("{a:?}"),
            };
            let _ = writeln!(s, "{}\t{:?}\t{}", e.step, e.loss, auc);
        }
        s
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "step\tloss\theldout_auc")) => {}
            _ => return Err(err(1, "expected header `step\\tloss\\theldout_auc`".into())),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err(i + 1, format!("expected 3 fields, got {}", f.len())));
            }
            let step = f[0].parse().map_err(|e| err(i + 1, format!("step: {e}")))?;
            let loss = f[1].parse().map_err(|e| err(i + 1, format!("loss: {e}")))?;
            let heldout_auc = match f[2] {
                "" => None,
                "undefined" => Some(None),
                v => Some(Some(v.parse().map_err(|e| err(i + 1, format!("heldout_auc: {e}")))?)),
            };
            entries.push(HistoryEntry {
                step,
                loss,
                heldout_auc,
            });
        }
        Ok(TrainHistory { entries })
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        Self::parse_tsv(&fs::read_to_string(path)?, path)
    }
}

/// Inference-mode probabilities for every example, in order.
pub fn predict_all<M, D>(model: &M, data: &D, batch_size: usize) -> Result<Vec<f64>>
where
    D: Examples + ?Sized,
    M: ClickModel<D>,
{
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(idx.len());
    let mut cache = M::Cache::default();
    for chunk in idx.chunks(batch_size.max(1)) {
        let z = model.batch_logits(data, chunk, Mode::Infer, &mut cache)?;
        out.extend(z.into_iter().map(sigmoid));
    }
    Ok(out)
}

fn heldout_auc<M, D>(model: &M, data: &D, batch_size: usize) -> Result<Option<f64>>
where
    D: Examples + ?Sized,
    M: ClickModel<D>,
{
    let p = predict_all(model, data, batch_size)?;
    let c: Vec<f64> = (0..data.len()).map(|i| data.label(i)).collect();
    Ok(auc(&p, &c))
}

/// Mini-batch Adam on the mean cross-entropy. Examples are reshuffled every
/// epoch from `config.seed`.
pub fn train<M, D>(model: &mut M, data: &D, heldout: Option<&D>, config: &TrainConfig) -> Result<TrainHistory>
where
    D: Examples + ?Sized,
    M: ClickModel<D>,
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rng = SeededRng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.adam(), model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cache = M::Cache::default();
    let mut history = TrainHistory::default();
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let total = match config.max_steps {
        Some(s) => s,
        None => steps_per_epoch * config.epochs,
    };
    let mut step = 0;
    'outer: loop {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            if step >= total {
                break 'outer;
            }
            model.zero_grads();
            let z = model.batch_logits(data, batch, Mode::Train, &mut cache)?;
            model.commit(&cache);
            let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
            let c: Vec<f64> = batch.iter().map(|&i| data.label(i)).collect();
            let loss = cross_entropy_loss(&p, &c, config.prob_clamp)?;
            let dz = logit_gradient(&p, &c)?;
            model.backward(&dz, &mut cache)?;
            adam.step(model)?;
            step += 1;
            let due = step == total || (config.eval_every > 0 && step % config.eval_every == 0);
            let heldout_auc = match heldout {
                Some(h) if due => Some(heldout_auc(model, h, config.batch_size)?),
                _ => None,
            };
            history.entries.push(HistoryEntry {
                step,
                loss,
                heldout_auc,
            });
        }
        if total == 0 {
            break;
        }
    }
    Ok(history)
}

/// Inference-mode scores, one per record. Records that fail to encode or
/// score get their own error; the rest are unaffected.
pub fn predict_batch(model: &DeepModel, encoder: &Encoder, records: &[QueryAdRecord]) -> Vec<Result<f64>> {
    let data = EncodedRecords::new(records, encoder);
    let mut cache = ModelCache::default();
    let mut out = Vec::with_capacity(records.len());
    let idx: Vec<usize> = (0..records.len()).collect();
    for chunk in idx.chunks(64) {
        match model.batch_logits(&data, chunk, Mode::Infer, &mut cache) {
            Ok(z) => out.extend(z.into_iter().map(|z| Ok(sigmoid(z)))),
            Err(_) => {
                for &i in chunk {
                    out.push(
                        model
                            .batch_logits(&data, &[i], Mode::Infer, &mut cache)
                            .map(|z| sigmoid(z[0]))
                            .map_err(|e| e.at_record(i)),
                    );
                }
            }
        }
    }
    out
}
