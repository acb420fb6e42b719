//! Nested leave-one-participant-out evaluation.
//!
//! The outer loop holds out each participant in turn. On the remaining
//! participants an inner leave-one-participant-out loop picks the cost `C`
//! maximizing mean macro F1; the model is then refit on the full outer
//! training portion and scored on the held-out participant. Scalers and
//! class weights are fitted only on the rows of the fold being trained.

use std::collections::BTreeSet;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{group_to_three, Dataset, Label, ParticipantId};
use crate::error::{Error, Result};
use crate::io::generator;
use crate::kinematics::{feature_keys, set_features};
use crate::metrics::{accuracy, confusion_matrix, macro_f1, mean_sd, per_class_metrics, ClassMetrics, ConfusionMatrix};
use crate::stats::{paired_t_test, PairedTTestResult};
use crate::svm::{MultiClassTrainer, SolverConfig};

/// Feature rows with their labels and participant identity, the unit every
/// evaluation routine works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub self_ratings: Vec<Label>,
    pub participants: Vec<ParticipantId>,
}

impl FeatureTable {
    /// Computes the 61 features of every set.
    pub fn from_dataset(ds: &Dataset, zone_threshold_deg: f64) -> Result<Self> {
        let rows = ds
            .sets
            .par_iter()
            .map(|s| set_features(s, zone_threshold_deg).map(|f| f.values))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            feature_names: feature_keys(),
            rows,
            labels: ds.sets.iter().map(|s| s.pt_rating).collect(),
            self_ratings: ds.sets.iter().map(|s| s.self_rating).collect(),
            participants: ds.participant_of_sets(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Distinct participants in order of first appearance.
    pub fn participant_list(&self) -> Vec<ParticipantId> {
        let mut seen = Vec::new();
        for p in &self.participants {
            if !seen.contains(p) {
                seen.push(p.clone());
            }
        }
        seen
    }

    /// Ascending union of truth labels and self ratings.
    pub fn classes(&self) -> Vec<Label> {
        self.labels
            .iter()
            .chain(&self.self_ratings)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Same rows with labels and self ratings collapsed to three levels.
    pub fn with_grouped_labels(&self) -> Result<Self> {
        let group = |v: &[Label]| v.iter().map(|&l| group_to_three(l)).collect::<Result<Vec<_>>>();
        Ok(Self {
            labels: group(&self.labels)?,
            self_ratings: group(&self.self_ratings)?,
            ..self.clone()
        })
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn gather_rows(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.rows[i].clone()).collect()
    }

    pub(crate) fn gather_labels(&self, idx: &[usize]) -> Vec<Label> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// One leave-one-participant-out split, as row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out: ParticipantId,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct participant of `row_participants`, in order of
/// first appearance.
pub fn lopo_folds(row_participants: &[ParticipantId]) -> Result<Vec<Fold>> {
    lopo_folds_over(row_participants, &(0..row_participants.len()).collect::<Vec<_>>())
}

/// Leave-one-participant-out over the subset `rows` of a table.
pub fn lopo_folds_over(row_participants: &[ParticipantId], rows: &[usize]) -> Result<Vec<Fold>> {
    let mut order: Vec<&ParticipantId> = Vec::new();
    for &r in rows {
        if !order.contains(&&row_participants[r]) {
            order.push(&row_participants[r]);
        }
    }
    if order.len() < 2 {
        return Err(Error::TooFewParticipants { needed: 2, found: order.len() });
    }
    Ok(order
        .into_iter()
        .map(|p| {
            let (test, train): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| &row_participants[r] == p);
            Fold {
                held_out: p.clone(),
                train,
                test,
            }
        })
        .collect())
}

/// Splits a dataset into (training, test) datasets, one per participant.
pub fn lopo_dataset_folds(ds: &Dataset) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = lopo_folds(&ds.participant_of_sets())?;
    Ok(folds
        .into_iter()
        .map(|f| {
            let pick = |idx: &[usize]| Dataset::from_sets(idx.iter().map(|&i| ds.sets[i].clone()).collect());
            (pick(&f.train), pick(&f.test))
        })
        .collect())
}

/// Powers of ten from 1e-7 to 1e3.
pub fn default_grid() -> Vec<f64> {
    (-7..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub grid: Vec<f64>,
    pub solver: SolverConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            solver: SolverConfig::default(),
        }
    }
}

/// Where a fit happens: an outer training portion, or an inner fold of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Outer { held_out: ParticipantId },
    Inner { outer: ParticipantId, held_out: ParticipantId },
}

impl Scope {
    /// The participant held out of the outer loop.
    pub fn outer(&self) -> &ParticipantId {
        match self {
            Scope::Outer { held_out } => held_out,
            Scope::Inner { outer, .. } => outer,
        }
    }
}

/// Observer of every data-dependent fit. Row indices refer to the
/// evaluated [`FeatureTable`].
pub trait Audit: Sync {
    fn scaler_fit(&self, _scope: &Scope, _rows: &[usize]) {}
    fn class_weights(&self, _scope: &Scope, _rows: &[usize]) {}
    fn inner_fold(&self, _outer: &ParticipantId, _fold: &Fold) {}
}

pub struct NoAudit;

impl Audit for NoAudit {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditEvent {
    ScalerFit { scope: Scope, rows: Vec<usize> },
    ClassWeights { scope: Scope, rows: Vec<usize> },
    InnerFold { outer: ParticipantId, fold: Fold },
}

/// Records every audit event.
#[derive(Debug, Default)]
pub struct RecordingAudit {
    events: Mutex<Vec<AuditEvent>>,
}

impl RecordingAudit {
    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().unwrap().clone()
    }

    fn push(&self, e: AuditEvent) {
        self.events.lock().unwrap().push(e);
    }
}

impl Audit for RecordingAudit {
    fn scaler_fit(&self, scope: &Scope, rows: &[usize]) {
        self.push(AuditEvent::ScalerFit { scope: scope.clone(), rows: rows.to_vec() });
    }

    fn class_weights(&self, scope: &Scope, rows: &[usize]) {
        self.push(AuditEvent::ClassWeights { scope: scope.clone(), rows: rows.to_vec() });
    }

    fn inner_fold(&self, outer: &ParticipantId, fold: &Fold) {
        self.push(AuditEvent::InnerFold { outer: outer.clone(), fold: fold.clone() });
    }
}

/// Builds a trainer on `rows` of `table`, reporting the fit to `audit`.
/// Returns `None` when the rows hold fewer than two classes.
pub(crate) fn prepare_trainer(
    table: &FeatureTable,
    rows: &[usize],
    solver: &SolverConfig,
    scope: &Scope,
    audit: &dyn Audit,
) -> Result<Option<MultiClassTrainer>> {
    let labels = table.gather_labels(rows);
    if labels.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Ok(None);
    }
    audit.scaler_fit(scope, rows);
    audit.class_weights(scope, rows);
    MultiClassTrainer::new(&table.gather_rows(rows), &labels, None, *solver).map(Some)
}

/// Mean inner macro F1 for every grid value, over the inner folds of
/// `train` that contain at least two classes.
pub fn inner_scores(
    table: &FeatureTable,
    train: &[usize],
    outer: &ParticipantId,
    grid: &[f64],
    solver: &SolverConfig,
    audit: &dyn Audit,
) -> Result<Vec<f64>> {
    let folds = lopo_folds_over(&table.participants, train)?;
    let classes = table.classes();
    let per_fold: Vec<Option<Vec<f64>>> = folds
        .par_iter()
        .map(|fold| -> Result<Option<Vec<f64>>> {
            audit.inner_fold(outer, fold);
            let scope = Scope::Inner { outer: outer.clone(), held_out: fold.held_out.clone() };
            let Some(trainer) = prepare_trainer(table, &fold.train, solver, &scope, audit)? else {
                return Ok(None);
            };
            let test_z = fold
                .test
                .iter()
                .map(|&i| trainer.scaler().transform(&table.rows[i]))
                .collect::<Result<Vec<_>>>()?;
            let truth = table.gather_labels(&fold.test);
            grid.iter()
                .map(|&c| {
                    let model = trainer.fit(c);
                    let pred = test_z.iter().map(|z| model.predict_scaled(z)).collect::<Result<Vec<_>>>()?;
                    macro_f1(&confusion_matrix(&truth, &pred, &classes)?)
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let used: Vec<&Vec<f64>> = per_fold.iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no inner fold for held-out {outer} has two classes to train on"
        )));
    }
    Ok((0..grid.len())
        .map(|k| used.iter().map(|s| s[k]).sum::<f64>() / used.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub c: f64,
    /// Mean inner macro F1 per grid value; empty when the grid has one entry.
    pub scores: Vec<f64>,
}

/// Picks the grid value with the best mean inner macro F1; ties go to the
/// smallest C. A single-value grid is returned without inner validation.
pub fn tune_c(
    table: &FeatureTable,
    train: &[usize],
    outer: &ParticipantId,
    grid: &[f64],
    solver: &SolverConfig,
    audit: &dyn Audit,
) -> Result<TuneResult> {
    validate_grid(grid)?;
    if grid.len() == 1 {
        return Ok(TuneResult { c: grid[0], scores: Vec::new() });
    }
    let scores = inner_scores(table, train, outer, grid, solver, audit)?;
    Ok(TuneResult { c: argmax_smallest(grid, &scores), scores })
}

pub(crate) fn argmax_smallest(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = 0;
    for k in 1..grid.len() {
        if scores[k] > scores[best] || (scores[k] == scores[best] && grid[k] < grid[best]) {
            best = k;
        }
    }
    grid[best]
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("C grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
        return Err(Error::InvalidInput(format!("C grid value {bad} is not a positive number")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub held_out_participant: ParticipantId,
    pub chosen_c: f64,
    pub inner_scores: Vec<f64>,
    pub n_test: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    /// Self ratings against the truth for the same sets.
    pub self_confusion: ConfusionMatrix,
    pub self_accuracy: f64,
    pub self_macro_f1: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub participant: ParticipantId,
    pub reason: String,
}

/// Pooled and per-fold summary of one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub pooled_confusion: ConfusionMatrix,
    pub per_class: Vec<(Label, ClassMetrics)>,
    pub overall_accuracy: f64,
    pub overall_macro_f1: f64,
    pub per_fold_accuracy_mean_sd: (f64, f64),
    pub per_fold_macro_f1_mean_sd: (f64, f64),
}

impl Agreement {
    fn from_folds(classes: &[Label], confusions: &[&ConfusionMatrix]) -> Result<Self> {
        let mut pooled = ConfusionMatrix::zeros(classes);
        for cm in confusions {
            pooled.add(cm)?;
        }
        let accs = confusions.iter().map(|c| accuracy(c)).collect::<Result<Vec<_>>>()?;
        let f1s = confusions.iter().map(|c| macro_f1(c)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            per_class: per_class_metrics(&pooled).into_iter().collect(),
            overall_accuracy: accuracy(&pooled)?,
            overall_macro_f1: macro_f1(&pooled)?,
            per_fold_accuracy_mean_sd: mean_sd(&accs),
            per_fold_macro_f1_mean_sd: mean_sd(&f1s),
            pooled_confusion: pooled,
        })
    }
}

/// Outcome of a paired comparison, or why none was possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Test(PairedTTestResult),
    Unavailable(String),
}

impl Comparison {
    fn of(a: &[f64], b: &[f64]) -> Self {
        match paired_t_test(a, b) {
            Ok(r) => Comparison::Test(r),
            Err(e) => Comparison::Unavailable(e.to_string()),
        }
    }

    pub fn result(&self) -> Option<&PairedTTestResult> {
        match self {
            Comparison::Test(r) => Some(r),
            Comparison::Unavailable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub generator: String,
    pub classes: Vec<Label>,
    pub grid: Vec<f64>,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
    pub pooled_confusion: ConfusionMatrix,
    pub per_class: Vec<(Label, ClassMetrics)>,
    pub overall_accuracy: f64,
    pub overall_macro_f1: f64,
    pub per_fold_accuracy_mean_sd: (f64, f64),
    pub per_fold_macro_f1_mean_sd: (f64, f64),
    pub self_assessment: Agreement,
    /// Per-fold model accuracy against per-fold self-rating accuracy.
    pub accuracy_t_test: Comparison,
    pub macro_f1_t_test: Comparison,
    /// Pairwise solves of the final fold models that hit the iteration cap.
    pub non_converged_folds: usize,
}

impl CVReport {
    pub(crate) fn assemble(classes: Vec<Label>, grid: Vec<f64>, folds: Vec<FoldResult>, skipped: Vec<SkippedFold>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::InvalidInput("every outer fold was skipped".into()));
        }
        let model = Agreement::from_folds(&classes, &folds.iter().map(|f| &f.confusion).collect::<Vec<_>>())?;
        let selfa = Agreement::from_folds(&classes, &folds.iter().map(|f| &f.self_confusion).collect::<Vec<_>>())?;
        let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let self_acc: Vec<f64> = folds.iter().map(|f| f.self_accuracy).collect();
        let f1: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
        let self_f1: Vec<f64> = folds.iter().map(|f| f.self_macro_f1).collect();
        Ok(Self {
            generator: generator(),
            classes,
            grid,
            non_converged_folds: folds.iter().filter(|f| !f.converged).count(),
            skipped,
            pooled_confusion: model.pooled_confusion,
            per_class: model.per_class,
            overall_accuracy: model.overall_accuracy,
            overall_macro_f1: model.overall_macro_f1,
            per_fold_accuracy_mean_sd: model.per_fold_accuracy_mean_sd,
            per_fold_macro_f1_mean_sd: model.per_fold_macro_f1_mean_sd,
            self_assessment: selfa,
            accuracy_t_test: Comparison::of(&acc, &self_acc),
            macro_f1_t_test: Comparison::of(&f1, &self_f1),
            folds,
        })
    }
}

fn evaluate_fold(table: &FeatureTable, fold: &Fold, classes: &[Label], cfg: &EvalConfig, audit: &dyn Audit) -> Result<std::result::Result<FoldResult, SkippedFold>> {
    let skip = |reason: String| Ok(Err(SkippedFold { participant: fold.held_out.clone(), reason }));
    let train_classes: BTreeSet<Label> = fold.train.iter().map(|&i| table.labels[i]).collect();
    if train_classes.len() < 2 {
        return skip(format!("training portion has {} class(es)", train_classes.len()));
    }
    let tuned = match tune_c(table, &fold.train, &fold.held_out, &cfg.grid, &cfg.solver, audit) {
        Ok(t) => t,
        Err(e @ (Error::TooFewParticipants { .. } | Error::InvalidInput(_))) if cfg.grid.len() > 1 => {
            return skip(format!("C tuning impossible: {e}"));
        }
        Err(e) => return Err(e),
    };
    let scope = Scope::Outer { held_out: fold.held_out.clone() };
    let trainer = prepare_trainer(table, &fold.train, &cfg.solver, &scope, audit)?.expect("two classes checked above");
    let model = trainer.fit(tuned.c);
    let pred = fold.test.iter().map(|&i| model.predict(&table.rows[i])).collect::<Result<Vec<_>>>()?;
    let truth = table.gather_labels(&fold.test);
    let selfr: Vec<Label> = fold.test.iter().map(|&i| table.self_ratings[i]).collect();
    let confusion = confusion_matrix(&truth, &pred, classes)?;
    let self_confusion = confusion_matrix(&truth, &selfr, classes)?;
    Ok(Ok(FoldResult {
        held_out_participant: fold.held_out.clone(),
        chosen_c: tuned.c,
        inner_scores: tuned.scores,
        n_test: fold.test.len(),
        accuracy: accuracy(&confusion)?,
        macro_f1: macro_f1(&confusion)?,
        self_accuracy: accuracy(&self_confusion)?,
        self_macro_f1: macro_f1(&self_confusion)?,
        confusion,
        self_confusion,
        converged: model.all_converged(),
    }))
}

/// Nested leave-one-participant-out evaluation of the one-vs-one model.
pub fn run_nested_lopo(table: &FeatureTable, cfg: &EvalConfig, audit: &dyn Audit) -> Result<CVReport> {
    validate_grid(&cfg.grid)?;
    let n_participants = table.participant_list().len();
    if n_participants < 3 {
        return Err(Error::TooFewParticipants { needed: 3, found: n_participants });
    }
    let classes = table.classes();
    let folds = lopo_folds(&table.participants)?;
    let outcomes = folds
        .par_iter()
        .map(|fold| evaluate_fold(table, fold, &classes, cfg, audit))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(f) => done.push(f),
            Err(s) => skipped.push(s),
        }
    }
    CVReport::assemble(classes, cfg.grid.clone(), done, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThreeClassMode {
    /// Group truth and predictions of an existing five-class report.
    MapPredictions,
    /// Group labels first, then rerun the nested evaluation.
    #[default]
    Retrain,
}

/// Groups every confusion matrix of a five-class report into three levels.
pub fn map_report_to_three(report: &CVReport) -> Result<CVReport> {
    let map = |cm: &ConfusionMatrix| cm.map_classes(group_to_three);
    let folds = report
        .folds
        .iter()
        .map(|f| {
            let confusion = map(&f.confusion)?;
            let self_confusion = map(&f.self_confusion)?;
            Ok(FoldResult {
                accuracy: accuracy(&confusion)?,
                macro_f1: macro_f1(&confusion)?,
                self_accuracy: accuracy(&self_confusion)?,
                self_macro_f1: macro_f1(&self_confusion)?,
                confusion,
                self_confusion,
                ..f.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = map(&report.pooled_confusion)?.classes;
    CVReport::assemble(classes, report.grid.clone(), folds, report.skipped.clone())
}

/// Three-level evaluation. `MapPredictions` needs the five-class `report`;
/// `Retrain` reruns the nested evaluation on grouped labels.
pub fn evaluate_three_class(
    mode: ThreeClassMode,
    table: &FeatureTable,
    report: Option<&CVReport>,
    cfg: &EvalConfig,
    audit: &dyn Audit,
) -> Result<CVReport> {
    match mode {
        ThreeClassMode::MapPredictions => match report {
            Some(r) => map_report_to_three(r),
            None => map_report_to_three(&run_nested_lopo(table, cfg, audit)?),
        },
        ThreeClassMode::Retrain => run_nested_lopo(&table.with_grouped_labels()?, cfg, audit),
    }
}
