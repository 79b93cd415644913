//! Rubric-based judge evaluation toolkit.
//!
//! The crate covers the whole annotation loop around a small judge model:
//! rubric and annotation types ([`types`]), agreement statistics
//! ([`agreement`]), training-data augmentation ([`augmentation`]), prompt
//! rendering and completion parsing ([`prompt`]), judge execution against an
//! OpenAI-compatible endpoint ([`judge`]), file formats ([`dataset`]) and
//! table-shaped reports ([`report`]).

pub mod agreement;
pub mod augmentation;
pub mod dataset;
pub mod error;
pub mod judge;
pub mod prompt;
pub mod report;
pub mod types;

pub use agreement::{
    build_reliability_matrix, classification_metrics, coincidence_matrix, krippendorff_alpha,
    AgreementResult, ClassificationMetrics, CoincidenceMatrix, CriterionPooling, Metric,
    Prediction, ReliabilityMatrix,
};
pub use augmentation::{
    augment_dataset, paraphrase, permute_components, split_train_test, token_dropout,
    AugmentationConfig, AugmentedExample,
};
pub use error::{Error, Result};
pub use judge::{
    aggregate_classification, aggregate_runs, run_classifier, run_judge, AggregateOptions,
    AggregatedAgreement, AggregatedClassification, JudgeRunConfig, RunAggregation, RunResult,
};
pub use prompt::{
    export_training_jsonl, parse_label, parse_scores, render_completion, render_prompt, Component,
    PromptTemplate, RenderedPrompt, TrainingExample,
};
pub use report::{
    agreement_report, classification_report, reports_from_results, Report, ReportSet,
    SystemReportRow, SystemResult,
};
pub use types::{
    default_sps_rubric, validate_score_vector, AnnotationRecord, EvaluationItem, Payload, Rubric,
    RubricCriterion, ScoreVector,
};
