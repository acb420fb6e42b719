//! Automatic balance-exercise rating from trunk sway.
//!
//! Raw pitch/roll recordings become 61 per-set features ([`kinematics`]),
//! which feed a class-weighted one-vs-one linear SVM ([`svm`]). Models are
//! assessed by nested leave-one-participant-out cross-validation
//! ([`evaluation`]) and features are ranked by backward elimination
//! ([`ranking`]). [`synth`] generates seeded stand-in datasets.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod ranking;
pub mod report;
pub mod stats;
pub mod svm;
pub mod synth;

pub use data::{
    group_to_three, validate_set, Dataset, ExerciseDescriptor, ExerciseSet, Label, ParticipantId, SwaySample,
    SwayTrial, Violation,
};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate_three_class, lopo_folds, run_nested_lopo, tune_c, Audit, CVReport, EvalConfig, FeatureTable, Fold,
    FoldResult, NoAudit, RecordingAudit, ThreeClassMode,
};
pub use io::{load_dataset, write_dataset, ModelFile};
pub use kinematics::{
    apply_scaler, fit_scaler, set_features, trial_metrics, FeatureName, FeatureVector, ScalerParams, TrialMetrics,
};
pub use metrics::{accuracy, confusion_matrix, macro_f1, per_class_metrics, ClassMetrics, ConfusionMatrix};
pub use ranking::{backward_eliminate, importance_from_orders, rank_features, EliminationOrder, ImportanceTable};
pub use stats::{paired_t_test, student_t_two_tailed_p, PairedTTestResult};
pub use svm::{
    class_weights, predict, train_binary, train_multiclass, BinaryLinearSVM, MultiClassSVM, SolverConfig, TrainConfig,
};
pub use synth::{generate_dataset, oracle_rate, OracleRater, SynthConfig};
