//! Feature-engineered logistic regression and score combination.

mod features;
mod felr;

pub use crate::eval::combine_average;
pub use features::{bm25, extract_features, CorpusStats, BM25_B, BM25_K1, FEATURE_NAMES, LENGTH_FEATURES, NUM_FEATURES};
pub use felr::{felr_predict, felr_train, FeatureMatrix, FeatureSet, Felr, FelrCache};
