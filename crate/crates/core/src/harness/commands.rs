//! Train, eval, predict and compare pipelines behind the command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::run::{ModelSpec, RunConfig};
use crate::baselines::{felr_train, CorpusStats, FeatureMatrix, Felr};
use crate::error::{Error, Result};
use crate::eval::{auc, make_report, EvalReport, FrequencyIndex, ScoredImpression, DEFAULT_CURVE_EDGES};
use crate::layers::SeededRng;
use crate::model::{checkpoint_bytes, checkpoint_from_bytes, DeepModel, ModelConfig, ModelKind, CHECKPOINT_MAGIC};
use crate::text::{load_embedding_table, read_dataset, QueryAdRecord};
use crate::train::{predict_batch, train, EncodedRecords, Encoder, TrainHistory};

pub const DEEP_CHECKPOINT: &str = "model.ckpt";
pub const FELR_CHECKPOINT: &str = "felr.json";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_TSV: &str = "report.tsv";
pub const REPORT_JSON: &str = "report.json";
pub const COMPARE_FILE: &str = "compare.tsv";

pub fn load_records(path: &Path) -> Result<Vec<QueryAdRecord>> {
    read_dataset(path)?.collect()
}

/// A trained scorer of either family.
#[derive(Clone, Debug)]
pub enum Scorer {
    Deep { model: DeepModel, encoder: Encoder },
    Felr(Felr),
}

impl Scorer {
    /// One probability per record, in order.
    pub fn score(&self, records: &[QueryAdRecord]) -> Vec<Result<f64>> {
        match self {
            Scorer::Deep { model, encoder } => predict_batch(model, encoder, records),
            Scorer::Felr(m) => records.iter().map(|r| Ok(m.predict_record(r))).collect(),
        }
    }

    pub fn score_all(&self, records: &[QueryAdRecord]) -> Result<Vec<f64>> {
        self.score(records).into_iter().collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Scorer::Deep { model, .. } => checkpoint_bytes(model),
            Scorer::Felr(m) => Ok(m.to_json()?.into_bytes()),
        }
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            Scorer::Deep { .. } => DEEP_CHECKPOINT,
            Scorer::Felr(_) => FELR_CHECKPOINT,
        }
    }
}

/// Builds the input encoder for a deep model config, fixing the word input
/// width from the embedding file.
pub fn make_encoder(cfg: &RunConfig, model: &mut ModelConfig) -> Result<Encoder> {
    match model.kind {
        ModelKind::Char => Encoder::chars(model, cfg.alphabet.clone()),
        ModelKind::Word => {
            let path = cfg
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["word models need `embeddings`".into()]))?;
            let table = load_embedding_table(path)?;
            model.input_channels = table.dim();
            Encoder::words(model, table)
        }
    }
}

/// Loads a checkpoint written by [`cmd_train`], deep or FELR.
pub fn load_scorer(cfg: &RunConfig, path: &Path) -> Result<Scorer> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let model = checkpoint_from_bytes(&bytes)?;
        let mut config = model.config().clone();
        if let ModelSpec::Deep(c) = &cfg.model {
            if c.kind != config.kind {
                return Err(Error::KindMismatch {
                    model: config.kind.as_str(),
                    input: c.kind.as_str(),
                });
            }
        }
        let encoder = make_encoder(cfg, &mut config)?;
        if config.input_channels != model.config().input_channels {
            return Err(Error::Config(vec![format!(
                "checkpoint expects {} input channels, encoder gives {}",
                model.config().input_channels,
                config.input_channels
            )]));
        }
        Ok(Scorer::Deep { model, encoder })
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Checkpoint("unrecognised checkpoint format".into()))?;
        Ok(Scorer::Felr(Felr::from_json(&text)?))
    }
}

/// Trains the configured model on `records`.
pub fn fit(cfg: &RunConfig, records: &[QueryAdRecord], heldout: Option<&[QueryAdRecord]>) -> Result<(Scorer, TrainHistory)> {
    match &cfg.model {
        ModelSpec::Deep(c) => {
            let mut config = c.clone();
            let encoder = make_encoder(cfg, &mut config)?;
            let mut model = DeepModel::new(config)?;
            let data = EncodedRecords::new(records, &encoder);
            let held = heldout.map(|h| EncodedRecords::new(h, &encoder));
            let history = train(&mut model, &data, held.as_ref(), &cfg.train)?;
            Ok((Scorer::Deep { model, encoder }, history))
        }
        ModelSpec::Felr(fs) => {
            let stats = CorpusStats::from_records(records);
            let data = FeatureMatrix::from_records(records, &stats);
            let held = heldout.map(|h| FeatureMatrix::from_records(h, &stats));
            let (model, history) = felr_train(&data, &stats, held.as_ref(), *fs, &cfg.train)?;
            Ok((Scorer::Felr(model), history))
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: TrainHistory,
    pub scorer: Scorer,
}

/// Trains on `train_data`, writing the checkpoint and loss history into the
/// output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.check_paths(&[("train_data", &cfg.train_data)])?;
    let records = load_records(cfg.train_data.as_ref().unwrap())?;
    let heldout = cfg.heldout_data.as_deref().map(load_records).transpose()?;
    let (scorer, history) = fit(cfg, &records, heldout.as_deref())?;
    fs::create_dir_all(&cfg.out_dir)?;
    let checkpoint = cfg.out_dir.join(scorer.file_name());
    fs::write(&checkpoint, scorer.to_bytes()?)?;
    let history_path = cfg.out_dir.join(HISTORY_FILE);
    history.write_tsv(&history_path)?;
    Ok(TrainOutcome {
        checkpoint,
        history_path,
        history,
        scorer,
    })
}

/// Scores `records` and assembles the full report. External scores are used
/// when every record carries one.
pub fn evaluate(scorer: &Scorer, records: &[QueryAdRecord], index: &FrequencyIndex) -> Result<EvalReport> {
    let scores = scorer.score_all(records)?;
    let imps: Vec<ScoredImpression> = records
        .iter()
        .zip(&scores)
        .map(|(r, &s)| ScoredImpression::from_record(r, s))
        .collect();
    let external: Option<Vec<f64>> = records.iter().map(|r| r.external_score).collect();
    make_report(&imps, index, external.as_deref(), &DEFAULT_CURVE_EDGES)
}

/// Evaluates a checkpoint on `test_data`, writing `report.tsv` and
/// `report.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.check_paths(&[("test_data", &cfg.test_data)])?;
    let scorer = load_scorer(cfg, checkpoint)?;
    let test = load_records(cfg.test_data.as_ref().unwrap())?;
    let reference = cfg.reference_data.as_ref().or(cfg.train_data.as_ref());
    let index = match reference {
        Some(p) => FrequencyIndex::from_records(&load_records(p)?),
        None => FrequencyIndex::from_records(&test),
    };
    let report = evaluate(&scorer, &test, &index)?;
    fs::create_dir_all(&cfg.out_dir)?;
    report.write(&cfg.out_dir.join(REPORT_TSV), &cfg.out_dir.join(REPORT_JSON))?;
    Ok(report)
}

/// Writes one `score` line per input record; records that fail carry their
/// error in the second column instead. Returns the number of records.
pub fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, input: &Path, output: &Path) -> Result<usize> {
    let scorer = load_scorer(cfg, checkpoint)?;
    let records = load_records(input)?;
    let mut s = String::from("score\terror\n");
    for r in scorer.score(&records) {
        match r {
            Ok(p) => {
                let _ = writeln!(s, "{p:?}\t");
            }
            Err(e) => {
                let _ = writeln!(s, "undefined\t{}", e.to_string().replace(['\t', '\n'], " "));
            }
        }
    }
    if let Some(dir) = output.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(output, s)?;
    Ok(records.len())
}

/// Reads the output of [`cmd_predict`].
pub fn read_predictions(path: &Path) -> Result<Vec<Option<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("score\terror") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "expected header `score\\terror`".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let score = l.split('\t').next().unwrap_or("");
            if score == "undefined" {
                Ok(None)
            } else {
                score.parse().map(Some).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    msg: format!("{e}"),
                })
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub model: String,
    pub size: usize,
    pub auc: Option<f64>,
}

pub fn curve_tsv(rows: &[CurveRow]) -> String {
    let mut s = String::from("model\tsize\tauc\n");
    for r in rows {
        let a = r.auc.map_or_else(|| "undefined".to_string(), |a| format!("{a:?}"));
        let _ = writeln!(s, "{}\t{}\t{a}", r.model, r.size);
    }
    s
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|l| l.1) != Some("model\tsize\tauc") {
        return Err(bad(1, "expected header `model\\tsize\\tauc`".into()));
    }
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(i + 1, format!("expected 3 fields, got {}", f.len())));
            }
            Ok(CurveRow {
                model: f[0].to_string(),
                size: f[1].parse().map_err(|e| bad(i + 1, format!("size: {e}")))?,
                auc: match f[2] {
                    "undefined" => None,
                    v => Some(v.parse().map_err(|e| bad(i + 1, format!("auc: {e}")))?),
                },
            })
        })
        .collect()
}

/// The training records in the fixed order whose prefixes [`cmd_compare`]
/// trains on.
pub fn shuffled_training_set(records: &[QueryAdRecord], seed: u64) -> Vec<QueryAdRecord> {
    let mut v = records.to_vec();
    v.shuffle(&mut SeededRng::seed_from_u64(seed));
    v
}

/// Learning curves: every config is trained on each prefix of one shuffled
/// training set and scored on the shared test set. Cells run on
/// `configs[0].threads` workers; results do not depend on the count.
pub fn compare_on(configs: &[RunConfig], train: &[QueryAdRecord], test: &[QueryAdRecord], sizes: &[usize]) -> Result<Vec<CurveRow>> {
    if sizes.len() < 2 {
        return Err(Error::Config(vec!["compare needs at least two training sizes".into()]));
    }
    if configs.is_empty() {
        return Err(Error::Config(vec!["compare needs at least one model config".into()]));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > train.len()) {
        return Err(Error::Config(vec![format!(
            "training size {s} outside 1..={}",
            train.len()
        )]));
    }
    let pool = shuffled_training_set(train, configs[0].train.seed);
    let labels: Vec<f64> = test.iter().map(QueryAdRecord::label).collect();
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| sizes.iter().map(move |&s| (c, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<CurveRow>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = configs[0].threads.clamp(1, cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let (c, size) = cells[i];
                let cfg = &configs[c];
                let row = fit(cfg, &pool[..size], None).and_then(|(scorer, _)| {
                    let p = scorer.score_all(test)?;
                    Ok(CurveRow {
                        model: cfg.name.clone(),
                        size,
                        auc: auc(&p, &labels),
                    })
                });
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell runs"))
        .collect()
}

/// [`compare_on`] over the first config's data files, writing
/// `compare.tsv` into its output directory.
pub fn cmd_compare(configs: &[RunConfig], sizes: &[usize]) -> Result<Vec<CurveRow>> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config(vec!["compare needs at least one model config".into()]))?;
    first.check_paths(&[("train_data", &first.train_data), ("test_data", &first.test_data)])?;
    for c in &configs[1..] {
        if c.train_data != first.train_data || c.test_data != first.test_data {
            return Err(Error::Config(vec![format!(
                "config `{}` must use the same train_data and test_data as `{}`",
                c.name, first.name
            )]));
        }
    }
    let train = load_records(first.train_data.as_ref().unwrap())?;
    let test = load_records(first.test_data.as_ref().unwrap())?;
    let rows = compare_on(configs, &train, &test, sizes)?;
    fs::create_dir_all(&first.out_dir)?;
    fs::write(first.out_dir.join(COMPARE_FILE), curve_tsv(&rows))?;
    Ok(rows)
}
