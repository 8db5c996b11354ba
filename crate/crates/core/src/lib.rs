//! Audits classifiers trained on subjective-label, multi-annotator
//! datasets for unfairness as opinion exclusion: how unequally a model's
//! performance is distributed across users grouped by their disagreement
//! with the majority opinion.
//!
//! The pipeline keeps every individual annotation instead of collapsing
//! them into one label per sample, reframes prediction as (sample, user)
//! to label, and compares model configurations that do or do not condition
//! on the user:
//!
//! - [`dataset`] and [`ingest`]: the validated annotation multiset and its
//!   JSONL/CSV file formats.
//! - [`stats`]: majority vote, ambiguity, popularity and per-annotator
//!   disagreement rates.
//! - [`quality`]: leave-one-out annotator quality and spam filtering.
//! - [`featurize`] and [`learn`]: hashed bag-of-words features and a
//!   seeded logistic-regression learner with cross-validation.
//! - [`models`]: the majority-vote, annotator-conditioned and oracle
//!   configurations.
//! - [`fairness`]: per-user performance, grouping and the unfairness /
//!   general-performance scores.
//! - [`synth`]: seeded synthetic datasets with planted opinion clusters.
//! - [`pipeline`], [`report`], [`heatmap`]: the end-to-end audit, its
//!   replayable report and the group-performance SVG.

pub mod dataset;
pub mod error;
pub mod fairness;
pub mod featurize;
pub mod heatmap;
pub mod ingest;
pub mod learn;
pub mod models;
pub mod pipeline;
pub mod quality;
pub mod report;
pub mod stats;
pub mod synth;

pub use dataset::{AnnotatedDataset, Annotation, Annotator, Sample};
pub use error::{AuditError, Result};
pub use fairness::{
    AuditScore, GroupedEvaluation, GroupingKind, GroupingStrategy, MetricKind, PerUserPerformance,
    ScoredAnnotation,
};
pub use featurize::{FeatureSpec, FeatureVector};
pub use ingest::{ingest, DatasetManifest, FileFormat};
pub use learn::{LrModel, TrainConfig};
pub use models::{ModelConfig, ModelKind, TrainedAuditModel};
pub use pipeline::{run_audit, AuditOptions};
pub use quality::QualityScore;
pub use report::{parse_report, render_report, AuditReport, ReportFormat};
pub use stats::{AnnotatorProfile, SampleStats};
pub use synth::{generate, SynthConfig, SynthTruth};
