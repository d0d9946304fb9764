//! Ranking and calibration metrics, frequency slicing and reports.

mod frequency;
mod metrics;
mod report;

pub use frequency::{
    cumulative_auc_curve, slice_tail_torso_head, CurvePoint, Dimension, FrequencyIndex, ScoredImpression, Slices,
    Stratum, HEAD_FROM, TAIL_BELOW,
};
pub use metrics::{auc, calibration, calibration_gain, combine_average, relative_auc_improvement};
pub use report::{
    make_report, Comparison, CurveSeries, DeviceMetrics, EvalReport, Metrics, Scored, SliceMetrics,
    DEFAULT_CURVE_EDGES,
};
