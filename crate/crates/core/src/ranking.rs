//! Backward feature elimination and averaged relative importance.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Label, ParticipantId};
use crate::error::{Error, Result};
use crate::evaluation::{lopo_folds_over, lopo_folds, prepare_trainer, tune_c, validate_grid, Audit, EvalConfig, FeatureTable, Scope};
use crate::io::generator;
use crate::kinematics::{Descriptor, FeatureName, Metric};
use crate::metrics::{confusion_matrix, macro_f1, mean_sd};
use crate::svm::{Gram, MultiClassTrainer, SolverConfig};

/// Features in the order they were removed; the last entry survived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationOrder {
    pub fold_participant: ParticipantId,
    pub order: Vec<String>,
}

impl EliminationOrder {
    /// Rank of every feature: last remaining 1, first removed `len`.
    pub fn ranks(&self) -> BTreeMap<&str, usize> {
        let n = self.order.len();
        self.order.iter().enumerate().map(|(pos, f)| (f.as_str(), n - pos)).collect()
    }
}

struct InnerFold {
    trainer: MultiClassTrainer,
    test_z: Vec<Vec<f64>>,
    truth: Vec<Label>,
    gram: Gram,
}

fn mean_score(folds: &[InnerFold], classes: &[Label], c: f64, drop: Option<usize>, mask: &[bool]) -> Result<f64> {
    let mut mask = mask.to_vec();
    if let Some(col) = drop {
        mask[col] = false;
    }
    let mut total = 0.0;
    for f in folds {
        let model = match drop {
            Some(col) => {
                let g = f.gram.without_column(f.trainer.scaled_rows(), col);
                f.trainer.fit_with(&g, c, Some(&mask))
            }
            None => f.trainer.fit_with(&f.gram, c, Some(&mask)),
        };
        let pred = f.test_z.iter().map(|z| model.predict_scaled(z)).collect::<Result<Vec<_>>>()?;
        total += macro_f1(&confusion_matrix(&f.truth, &pred, classes)?)?;
    }
    Ok(total / folds.len() as f64)
}

/// Removes features one at a time from the columns of `table`, each round
/// dropping the feature whose removal gives the best mean inner
/// leave-one-participant-out macro F1 over `train` (ties to the lower
/// column index), with `c` held fixed.
pub fn backward_eliminate(
    table: &FeatureTable,
    train: &[usize],
    c: f64,
    solver: &SolverConfig,
    fold_participant: &ParticipantId,
    audit: &dyn Audit,
) -> Result<EliminationOrder> {
    validate_grid(&[c])?;
    let n_features = table.n_features();
    if n_features == 0 {
        return Err(Error::InvalidInput("no features to eliminate".into()));
    }
    let classes = table.classes();
    let mut folds = Vec::new();
    for fold in lopo_folds_over(&table.participants, train)? {
        audit.inner_fold(fold_participant, &fold);
        let scope = Scope::Inner { outer: fold_participant.clone(), held_out: fold.held_out.clone() };
        let Some(trainer) = prepare_trainer(table, &fold.train, solver, &scope, audit)? else {
            continue;
        };
        let test_z = fold
            .test
            .iter()
            .map(|&i| trainer.scaler().transform(&table.rows[i]))
            .collect::<Result<Vec<_>>>()?;
        folds.push(InnerFold {
            gram: trainer.gram().clone(),
            truth: table.gather_labels(&fold.test),
            trainer,
            test_z,
        });
    }
    if folds.is_empty() {
        return Err(Error::TooFewClasses(1));
    }

    let mut mask = vec![true; n_features];
    let mut order = Vec::with_capacity(n_features);
    for _ in 1..n_features {
        let active: Vec<usize> = (0..n_features).filter(|&j| mask[j]).collect();
        let scores = active
            .par_iter()
            .map(|&j| mean_score(&folds, &classes, c, Some(j), &mask))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for k in 1..active.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        let col = active[best];
        mask[col] = false;
        order.push(table.feature_names[col].clone());
        for f in folds.iter_mut() {
            f.gram = f.gram.without_column(f.trainer.scaled_rows(), col);
        }
    }
    let last = mask.iter().position(|&m| m).expect("one feature remains");
    order.push(table.feature_names[last].clone());
    Ok(EliminationOrder { fold_participant: fold_participant.clone(), order })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub key: String,
    pub label: String,
    pub mean_rank: f64,
    pub sd_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub n_features: usize,
    pub n_orders: usize,
    /// Sorted by mean rank, most important first; ties by feature order.
    pub per_feature: Vec<ImportanceEntry>,
    pub per_metric: Vec<ImportanceEntry>,
    pub per_descriptor: Vec<ImportanceEntry>,
}

impl ImportanceTable {
    pub fn top(&self, n: usize) -> &[ImportanceEntry] {
        &self.per_feature[..n.min(self.per_feature.len())]
    }

    pub fn feature(&self, key: &str) -> Option<&ImportanceEntry> {
        self.per_feature.iter().find(|e| e.key == key)
    }
}

fn entry(key: String, label: String, ranks: &[f64]) -> ImportanceEntry {
    let (mean_rank, sd_rank) = mean_sd(ranks);
    ImportanceEntry { key, label, mean_rank, sd_rank }
}

fn sort_by_rank(v: &mut [ImportanceEntry]) {
    v.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank));
}

/// Averages per-fold ranks. Category entries pool the per-fold ranks of
/// their member features; features outside the metric × descriptor grid
/// belong to no category.
pub fn importance_from_orders(orders: &[EliminationOrder]) -> Result<ImportanceTable> {
    let first = orders.first().ok_or_else(|| Error::InvalidInput("no elimination orders".into()))?;
    let features: BTreeSet<&String> = first.order.iter().collect();
    if features.len() != first.order.len() {
        return Err(Error::InvalidInput(format!("order for {} repeats a feature", first.fold_participant)));
    }
    let rank_maps: Vec<BTreeMap<&str, usize>> = orders
        .iter()
        .map(|o| {
            if o.order.len() != features.len() || o.order.iter().collect::<BTreeSet<_>>() != features {
                return Err(Error::InvalidInput(format!(
                    "order for {} is over a different feature set",
                    o.fold_participant
                )));
            }
            Ok(o.ranks())
        })
        .collect::<Result<_>>()?;

    // Canonical order: by feature index where known, then by key.
    let mut keys: Vec<&String> = features.into_iter().collect();
    keys.sort_by_key(|k| (FeatureName::parse(k).map_or(usize::MAX, FeatureName::index), (*k).clone()));

    let ranks_of = |k: &str| -> Vec<f64> { rank_maps.iter().map(|m| m[k] as f64).collect() };
    let mut per_feature: Vec<ImportanceEntry> = keys
        .iter()
        .map(|k| {
            let label = FeatureName::parse(k).map_or_else(|| (*k).clone(), FeatureName::label);
            entry((*k).clone(), label, &ranks_of(k))
        })
        .collect();
    sort_by_rank(&mut per_feature);

    let mut by_metric: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut by_descriptor: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for k in &keys {
        let Some(name) = FeatureName::parse(k) else { continue };
        if let (Some(m), Some(d)) = (name.metric(), name.descriptor()) {
            by_metric.entry(m as usize).or_default().extend(ranks_of(k));
            by_descriptor.entry(d as usize).or_default().extend(ranks_of(k));
        }
    }
    let mut per_metric: Vec<ImportanceEntry> = by_metric
        .iter()
        .map(|(&m, r)| entry(Metric::ALL[m].key().into(), Metric::ALL[m].label().into(), r))
        .collect();
    let mut per_descriptor: Vec<ImportanceEntry> = by_descriptor
        .iter()
        .map(|(&d, r)| entry(Descriptor::ALL[d].key().into(), Descriptor::ALL[d].label().into(), r))
        .collect();
    sort_by_rank(&mut per_metric);
    sort_by_rank(&mut per_descriptor);

    Ok(ImportanceTable {
        n_features: keys.len(),
        n_orders: orders.len(),
        per_feature,
        per_metric,
        per_descriptor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldElimination {
    pub chosen_c: f64,
    pub elimination: EliminationOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub generator: String,
    pub grid: Vec<f64>,
    pub folds: Vec<FoldElimination>,
    pub skipped: Vec<ParticipantId>,
    pub importance: ImportanceTable,
}

/// For each outer fold: tune C on all features, then eliminate with that C
/// frozen. Folds whose training portion has fewer than two classes are
/// skipped.
pub fn rank_features(table: &FeatureTable, cfg: &EvalConfig, audit: &dyn Audit) -> Result<RankingReport> {
    validate_grid(&cfg.grid)?;
    let n_participants = table.participant_list().len();
    if n_participants < 3 {
        return Err(Error::TooFewParticipants { needed: 3, found: n_participants });
    }
    let outcomes = lopo_folds(&table.participants)?
        .par_iter()
        .map(|fold| -> Result<Option<FoldElimination>> {
            let train_classes: BTreeSet<Label> = fold.train.iter().map(|&i| table.labels[i]).collect();
            if train_classes.len() < 2 {
                return Ok(None);
            }
            let tuned = tune_c(table, &fold.train, &fold.held_out, &cfg.grid, &cfg.solver, audit)?;
            let elimination = backward_eliminate(table, &fold.train, tuned.c, &cfg.solver, &fold.held_out, audit)?;
            Ok(Some(FoldElimination { chosen_c: tuned.c, elimination }))
        })
        .collect::<Vec<_>>();
    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for (o, p) in outcomes.into_iter().zip(table.participant_list()) {
        match o? {
            Some(f) => folds.push(f),
            None => skipped.push(p),
        }
    }
    let orders: Vec<EliminationOrder> = folds.iter().map(|f| f.elimination.clone()).collect();
    Ok(RankingReport {
        generator: generator(),
        grid: cfg.grid.clone(),
        importance: importance_from_orders(&orders)?,
        folds,
        skipped,
    })
}
