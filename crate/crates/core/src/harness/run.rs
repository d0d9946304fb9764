//! Run configuration files.
//!
//! Keys (all optional unless noted):
//!
//! | key | meaning |
//! |-----|---------|
//! | `model` | `char`, `word` or `felr` (required) |
//! | `name` | label in comparison output; defaults to the model kind |
//! | `preset` | `desk` (default), `full` or `toy` layer sizes |
//! | `query_len`, `ad_len` | input rows |
//! | `subnet_filters`, `cross_filters`, `cross_pool` | layer sizes |
//! | `lead_activation`, `cross_activation` | `identity` or `relu` |
//! | `final_filters`, `final_pools`, `dense` | two comma-separated values each |
//! | `model_seed` | initialisation seed |
//! | `alphabet` | character set for `char` models |
//! | `felr_features` | `all` (default) or `length_only` |
//! | `batch_size`, `epochs`, `max_steps`, `learning_rate`, `seed`, `eval_every`, `prob_clamp` | training |
//! | `train_data`, `test_data`, `heldout_data` | datasets |
//! | `reference_data` | frequency reference for slicing; defaults to `train_data` |
//! | `embeddings` | word vectors, required for `word` models |
//! | `out_dir` | output directory, default `out` |
//! | `threads` | worker threads for `compare`, default 1 |
//!
//! Relative paths are resolved against the config file's directory.
//! `DEEPMATCH_OUT_DIR` and `DEEPMATCH_THREADS` override `out_dir` and
//! `threads`.

use std::path::{Path, PathBuf};

use super::kv::KvFile;
use crate::baselines::FeatureSet;
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::model::{ModelConfig, ModelKind};
use crate::text::{Alphabet, DEFAULT_ALPHABET};
use crate::train::TrainConfig;

pub const ENV_OUT_DIR: &str = "DEEPMATCH_OUT_DIR";
pub const ENV_THREADS: &str = "DEEPMATCH_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Deep(ModelConfig),
    Felr(FeatureSet),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelSpec,
    pub alphabet: Alphabet,
    pub train: TrainConfig,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub heldout_data: Option<PathBuf>,
    pub reference_data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub threads: usize,
}

fn parse_activation(kv: &mut KvFile, key: &str) -> Option<Activation> {
    let v = kv.raw(key)?;
    match v.as_str() {
        "identity" => Some(Activation::Identity),
        "relu" => Some(Activation::Relu),
        _ => {
            kv.error(format!("{key}: expected `identity` or `relu`, got `{v}`"));
            None
        }
    }
}

impl RunConfig {
    /// A configuration with default settings for `model`.
    pub fn new(model: ModelSpec) -> Self {
        let name = match &model {
            ModelSpec::Deep(c) => c.kind.as_str().to_string(),
            ModelSpec::Felr(FeatureSet::All) => "felr".into(),
            ModelSpec::Felr(FeatureSet::LengthOnly) => "felr_length_only".into(),
        };
        RunConfig {
            name,
            model,
            alphabet: Alphabet::default(),
            train: TrainConfig::default(),
            train_data: None,
            test_data: None,
            heldout_data: None,
            reference_data: None,
            embeddings: None,
            out_dir: PathBuf::from("out"),
            threads: 1,
        }
    }

    pub fn from_kv(mut kv: KvFile) -> Result<Self> {
        let kind = kv.raw("model");
        let preset = kv.raw("preset").unwrap_or_else(|| "desk".into());
        let alphabet = match kv.raw("alphabet") {
            Some(a) => match Alphabet::new(&a) {
                Ok(a) => a,
                Err(e) => {
                    kv.error(format!("alphabet: {e}"));
                    Alphabet::default()
                }
            },
            None => Alphabet::new(DEFAULT_ALPHABET).unwrap(),
        };

        let model = match kind.as_deref() {
            Some("felr") => {
                let fs = kv.raw("felr_features").unwrap_or_else(|| "all".into());
                match FeatureSet::parse(&fs) {
                    Some(fs) => Some(ModelSpec::Felr(fs)),
                    None => {
                        kv.error(format!("felr_features: expected `all` or `length_only`, got `{fs}`"));
                        None
                    }
                }
            }
            Some(k) => match ModelKind::parse(k) {
                Some(kind) => {
                    let base = match preset.as_str() {
                        "desk" => Some(ModelConfig::desk_for(kind)),
                        "full" => Some(ModelConfig::default_for(kind)),
                        "toy" => Some(match kind {
                            ModelKind::Char => ModelConfig::char_toy(),
                            ModelKind::Word => ModelConfig::word_toy(),
                        }),
                        other => {
                            kv.error(format!("preset: expected desk, full or toy, got `{other}`"));
                            None
                        }
                    };
                    base.map(|mut c| {
                        c.query_len = kv.get_or("query_len", c.query_len);
                        c.ad_len = kv.get_or("ad_len", c.ad_len);
                        c.subnet_filters = kv.get_or("subnet_filters", c.subnet_filters);
                        c.cross_filters = kv.get_or("cross_filters", c.cross_filters);
                        c.cross_pool = kv.get_or("cross_pool", c.cross_pool);
                        c.final_filters = kv.get_array("final_filters").unwrap_or(c.final_filters);
                        c.final_pools = kv.get_array("final_pools").unwrap_or(c.final_pools);
                        c.dense = kv.get_array("dense").unwrap_or(c.dense);
                        c.seed = kv.get_or("model_seed", c.seed);
                        c.lead_activation = parse_activation(&mut kv, "lead_activation").unwrap_or(c.lead_activation);
                        c.cross_activation =
                            parse_activation(&mut kv, "cross_activation").unwrap_or(c.cross_activation);
                        if kind == ModelKind::Char {
                            c.input_channels = alphabet.len();
                        }
                        ModelSpec::Deep(c)
                    })
                }
                None => {
                    kv.error(format!("model: expected char, word or felr, got `{k}`"));
                    None
                }
            },
            None => {
                kv.error("model: required key missing".into());
                None
            }
        };

        let d = TrainConfig::default();
        let train = TrainConfig {
            batch_size: kv.get_or("batch_size", d.batch_size),
            epochs: kv.get_or("epochs", d.epochs),
            max_steps: kv.get("max_steps"),
            learning_rate: kv.get_or("learning_rate", d.learning_rate),
            seed: kv.get_or("seed", d.seed),
            eval_every: kv.get_or("eval_every", d.eval_every),
            prob_clamp: kv.get_or("prob_clamp", d.prob_clamp),
        };
        let name = kv.raw("name");
        let train_data = kv.get_path("train_data");
        let test_data = kv.get_path("test_data");
        let heldout_data = kv.get_path("heldout_data");
        let reference_data = kv.get_path("reference_data");
        let embeddings = kv.get_path("embeddings");
        let out_dir = kv.get_path("out_dir");
        let threads = kv.get_or("threads", 1usize);

        let mut errs = kv.into_errors();
        let Some(model) = model else {
            return Err(Error::Config(errs));
        };
        let mut cfg = RunConfig::new(model);
        if let Some(n) = name {
            cfg.name = n;
        }
        cfg.alphabet = alphabet;
        cfg.train = train;
        cfg.train_data = train_data;
        cfg.test_data = test_data;
        cfg.heldout_data = heldout_data;
        cfg.reference_data = reference_data;
        cfg.embeddings = embeddings;
        if let Some(o) = out_dir {
            cfg.out_dir = o;
        }
        cfg.threads = threads;
        if let Err(e) = cfg.apply_env() {
            errs.push(e.to_string());
        }
        errs.extend(cfg.problems());
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(KvFile::read(path)?)
    }

    /// Applies the output-directory and thread-count environment overrides.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
        if let Ok(t) = std::env::var(ENV_THREADS) {
            match t.parse::<usize>() {
                Ok(n) if n >= 1 => self.threads = n,
                _ => return Err(Error::Invalid(format!("{ENV_THREADS}={t}: expected a positive integer"))),
            }
        }
        Ok(())
    }

    /// Every inconsistency that does not need the filesystem.
    fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(Error::Config(v)) = self.train.validate() {
            errs.extend(v);
        }
        if self.threads == 0 {
            errs.push("threads must be at least 1".into());
        }
        if let ModelSpec::Deep(c) = &self.model {
            if c.kind == ModelKind::Word && self.embeddings.is_none() {
                errs.push("word models need `embeddings`".into());
            }
            // Word input width comes from the embedding file; skip the shape
            // check until it is known.
            let mut probe = c.clone();
            if c.kind == ModelKind::Word {
                probe.input_channels = probe.input_channels.max(1);
            }
            if let Err(Error::Config(v)) = probe.validate() {
                errs.extend(v);
            }
        }
        errs
    }

    /// Checks that the listed data files exist.
    pub fn check_paths(&self, needed: &[(&str, &Option<PathBuf>)]) -> Result<()> {
        let mut errs = Vec::new();
        for (key, p) in needed {
            match p {
                None => errs.push(format!("`{key}` is required for this command")),
                Some(p) if !p.is_file() => errs.push(format!("{key}: {} does not exist", p.display())),
                _ => {}
            }
        }
        for (key, p) in [("embeddings", &self.embeddings), ("heldout_data", &self.heldout_data), ("reference_data", &self.reference_data)] {
            if let Some(p) = p {
                if !p.is_file() {
                    errs.push(format!("{key}: {} does not exist", p.display()));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.model {
            ModelSpec::Deep(c) => c.kind.as_str(),
            ModelSpec::Felr(_) => "felr",
        }
    }
}
