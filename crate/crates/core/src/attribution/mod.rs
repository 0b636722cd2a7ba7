//! Integrated-gradients attribution and per-modality feature rankings.

pub mod ig;
pub mod rank;

pub use ig::{integrated_gradients, integrated_gradients_fn, IgResult, DEFAULT_STEPS};
pub use rank::{attribute_windows, rank_features, AttributionReport, FeatureImportance, FeatureNames, SampleResidual, DEFAULT_TOP_K};
