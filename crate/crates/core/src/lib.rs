//! Hierarchical multi-process fusion for visual place recognition.
//!
//! Several image-scoring methods are arranged in tiers. Each tier scores the
//! candidates it receives, normalizes every method's distances to `[0, 1]`
//! and forwards a smaller pool; the final tier averages its methods, and an
//! optional combined score also weighs in the earlier tiers.

pub mod config;
pub mod dataset;
pub mod descriptors;
mod error;
pub mod evaluation;
pub mod hmpf;
pub mod model;
pub mod pipeline;
pub mod scoring;

pub use config::{load_config, KOut, Metric, MethodKind, MethodSpec, PipelineConfig, TierSpec};
pub use dataset::{load_dataset, Dataset, GroundTruthSpec, ImageList, ListKind, Manifest};
pub use error::{Error, ErrorCategory, Result};
pub use hmpf::{load_feature_file, write_feature_file, FeatureFile};
pub use model::{
    CandidateSet, FeatureVector, MatchResult, NormalizedScores, QueryId, RawDistances, RefId,
    ScoreMap, StandardizedScores, TierRecord,
};
pub use pipeline::Pipeline;
