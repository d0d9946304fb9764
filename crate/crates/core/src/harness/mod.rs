//! Configuration files, synthetic data and the command pipelines.

mod commands;
mod kv;
mod run;
mod synthetic;

pub use commands::{
    cmd_compare, cmd_eval, cmd_predict, cmd_train, compare_on, curve_tsv, evaluate, fit, load_records, load_scorer,
    make_encoder, read_curve, read_predictions, shuffled_training_set, CurveRow, Scorer, TrainOutcome, COMPARE_FILE,
    DEEP_CHECKPOINT, FELR_CHECKPOINT, HISTORY_FILE, REPORT_JSON, REPORT_TSV,
};
pub use kv::KvFile;
pub use run::{ModelSpec, RunConfig, ENV_OUT_DIR, ENV_THREADS};
pub use synthetic::{gen_synthetic, generate, SyntheticData, SyntheticFiles, SyntheticSpec};
