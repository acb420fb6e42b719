//! Weighted soft-margin linear SVM and the one-vs-one multi-class wrapper.
//!
//! A binary model minimizes
//!
//! ```text
//! ½‖w‖² + C Σ_i c(y_i) · max(0, 1 − y_i (w·x_i + b))
//! ```
//!
//! with an unregularized bias. The multi-class model trains one binary
//! classifier per unordered class pair, costing each example by the
//! inverse frequency of its class in the full training set.

mod ipm;
mod solver;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::kinematics::{fit_scaler, ScalerParams};

pub use solver::{Gram, SolveStats, SolverConfig, SMO_BUDGET_PER_EXAMPLE};
pub(crate) use solver::{dot, solve_dual};

pub type ClassWeights = BTreeMap<Label, f64>;

/// Training settings for a multi-class model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    /// Per-class costs; `None` derives inverse-frequency weights from the labels.
    pub class_weights: Option<ClassWeights>,
    pub solver: SolverConfig,
}

impl TrainConfig {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            class_weights: None,
            solver: SolverConfig::default(),
        }
    }
}

/// Inverse-frequency class weights `N / (K · n_k)`.
pub fn class_weights(labels: &[Label]) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("class weights of empty label set".into()));
    }
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::SingleClass);
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    Ok(counts.into_iter().map(|(l, c)| (l, n / (k * c as f64))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLinearSVM {
    pub w: Vec<f64>,
    pub b: f64,
    /// `(negative label, positive label)`.
    pub class_pair: (Label, Label),
    #[serde(default)]
    pub stats: SolveStats,
}

impl BinaryLinearSVM {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Signed score `w·x + b`; positive favours `class_pair.1`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.w, x) + self.b)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let v = self.decision_value(x)?;
        Ok(if v > 0.0 { self.class_pair.1 } else { self.class_pair.0 })
    }

    /// Weighted hinge objective of this model on a training set.
    pub fn objective(&self, x: &[Vec<f64>], y: &[f64], c: f64, cost_neg: f64, cost_pos: f64) -> f64 {
        let reg = 0.5 * dot(&self.w, &self.w);
        let loss: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, &yi)| {
                let cost = if yi > 0.0 { cost_pos } else { cost_neg };
                cost * (1.0 - yi * (dot(&self.w, xi) + self.b)).max(0.0)
            })
            .sum();
        reg + c * loss
    }
}

/// Decision value of `model` at `x`.
pub fn decision_value(model: &BinaryLinearSVM, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let dim = x.first().map_or(0, Vec::len);
    for r in x {
        if r.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
    }
    Ok(dim)
}

/// Class pair recorded by [`train_binary`]: label 0 stands for `y = −1`,
/// label 1 for `y = +1`.
pub const BINARY_PAIR: (Label, Label) = (0, 1);

/// Trains a binary model on labels `y ∈ {−1, +1}`.
///
/// A solve that hits `max_iterations` still returns its best iterate; check
/// `stats.converged`.
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    cost_neg: f64,
    cost_pos: f64,
    config: &SolverConfig,
) -> Result<BinaryLinearSVM> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if !(c > 0.0 && cost_neg > 0.0 && cost_pos > 0.0) {
        return Err(Error::InvalidInput("C and class costs must be positive".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput(format!("binary label {bad} is not ±1")));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    check_rows(x)?;
    let gram = Gram::from_rows(x);
    let idx: Vec<usize> = (0..x.len()).collect();
    let upper: Vec<f64> = y.iter().map(|&v| c * if v > 0.0 { cost_pos } else { cost_neg }).collect();
    Ok(fit_pair(&gram, x, &idx, y, &upper, BINARY_PAIR, config, None))
}

/// Solves one pairwise problem on a prepared Gram matrix and assembles `w`.
#[allow(clippy::too_many_arguments)]
fn fit_pair(
    gram: &Gram,
    rows: &[Vec<f64>],
    idx: &[usize],
    y: &[f64],
    upper: &[f64],
    class_pair: (Label, Label),
    config: &SolverConfig,
    column_mask: Option<&[bool]>,
) -> BinaryLinearSVM {
    let dim = rows.first().map_or(0, Vec::len);
    let mut sol = solve_dual(gram, idx, y, upper, config);
    if !sol.stats.converged && config.interior_point_fallback {
        let cols: Vec<usize> = (0..dim).filter(|&k| column_mask.is_none_or(|m| m[k])).collect();
        let z = nalgebra::DMatrix::from_fn(idx.len(), cols.len(), |a, k| y[a] * rows[idx[a]][cols[k]]);
        let smo_iterations = sol.stats.iterations;
        sol = ipm::solve_dual_ipm(&z, y, upper, config.tolerance);
        sol.stats.interior_point = true;
        sol.stats.iterations += smo_iterations;
    }
    let mut w = vec![0.0; dim];
    for ((&i, &a), &yi) in idx.iter().zip(&sol.alpha).zip(y) {
        if a != 0.0 {
            let s = a * yi;
            for (wk, xk) in w.iter_mut().zip(&rows[i]) {
                *wk += s * xk;
            }
        }
    }
    if let Some(mask) = column_mask {
        for (wk, &keep) in w.iter_mut().zip(mask) {
            if !keep {
                *wk = 0.0;
            }
        }
    }
    BinaryLinearSVM {
        w,
        b: sol.bias,
        class_pair,
        stats: sol.stats,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassSVM {
    /// One classifier per pair `(lo, hi)`, in lexicographic pair order.
    pub classifiers: Vec<BinaryLinearSVM>,
    /// Ascending class labels.
    pub classes: Vec<Label>,
    pub scaler: ScalerParams,
}

impl MultiClassSVM {
    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    /// Predicts from an unscaled feature row.
    pub fn predict(&self, raw: &[f64]) -> Result<Label> {
        let z = self.scaler.transform(raw)?;
        self.predict_scaled(&z)
    }

    /// Predicts from a row that has already been z-scaled with `self.scaler`.
    pub fn predict_scaled(&self, z: &[f64]) -> Result<Label> {
        let decisions = self
            .classifiers
            .iter()
            .map(|m| Ok((m.class_pair, m.decision_value(z)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(vote(&self.classes, &decisions))
    }

    pub fn all_converged(&self) -> bool {
        self.classifiers.iter().all(|m| m.stats.converged)
    }
}

/// One-vs-one majority vote.
///
/// Ties go to the class with the largest sum of signed margins over its own
/// classifiers (the positive class of a pair gains `v`, the negative class
/// gains `−v`), then to the smallest label.
pub fn vote(classes: &[Label], decisions: &[((Label, Label), f64)]) -> Label {
    let pos = |l: Label| classes.iter().position(|&c| c == l).expect("label in class list");
    let mut votes = vec![0usize; classes.len()];
    let mut margin = vec![0.0f64; classes.len()];
    for &((neg, positive), v) in decisions {
        let (n, p) = (pos(neg), pos(positive));
        if v > 0.0 {
            votes[p] += 1;
        } else {
            votes[n] += 1;
        }
        margin[p] += v;
        margin[n] -= v;
    }
    let mut best = 0;
    for k in 1..classes.len() {
        let better = votes[k] > votes[best] || (votes[k] == votes[best] && margin[k] > margin[best]);
        if better {
            best = k;
        }
    }
    classes[best]
}

/// Prepared training data shared across cost values and feature subsets:
/// the fitted scaler, scaled rows, Gram matrix and class costs.
#[derive(Debug, Clone)]
pub struct MultiClassTrainer {
    scaled: Vec<Vec<f64>>,
    labels: Vec<Label>,
    classes: Vec<Label>,
    weights: ClassWeights,
    scaler: ScalerParams,
    gram: Gram,
    solver: SolverConfig,
}

impl MultiClassTrainer {
    /// Fits the scaler on `rows` and prepares the kernel. `weights = None`
    /// uses inverse-frequency weights of `labels`.
    pub fn new(rows: &[Vec<f64>], labels: &[Label], weights: Option<ClassWeights>, solver: SolverConfig) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
        }
        check_rows(rows)?;
        let weights = match weights {
            Some(w) => w,
            None => class_weights(labels)?,
        };
        let classes: Vec<Label> = labels.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        if classes.len() < 2 {
            return Err(Error::TooFewClasses(classes.len()));
        }
        if let Some(missing) = weights.keys().find(|k| !classes.contains(k)) {
            return Err(Error::InvalidInput(format!("class {missing} absent from training data")));
        }
        for c in &classes {
            match weights.get(c) {
                Some(&w) if w > 0.0 => {}
                _ => return Err(Error::InvalidInput(format!("class {c} has no positive weight"))),
            }
        }
        let scaler = fit_scaler(rows)?;
        let scaled = rows.iter().map(|r| scaler.transform(r)).collect::<Result<Vec<_>>>()?;
        let gram = Gram::from_rows(&scaled);
        Ok(Self {
            scaled,
            labels: labels.to_vec(),
            classes,
            weights,
            scaler,
            gram,
            solver,
        })
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn scaled_rows(&self) -> &[Vec<f64>] {
        &self.scaled
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    pub fn weights(&self) -> &ClassWeights {
        &self.weights
    }

    pub fn fit(&self, c: f64) -> MultiClassSVM {
        self.fit_with(&self.gram, c, None)
    }

    /// Trains with a substitute Gram matrix over the same rows. Columns
    /// whose mask entry is false get zero weight, which must match how
    /// `gram` was built.
    pub fn fit_with(&self, gram: &Gram, c: f64, column_mask: Option<&[bool]>) -> MultiClassSVM {
        assert_eq!(gram.len(), self.scaled.len(), "Gram matrix built over different rows");
        let pairs: Vec<(Label, Label)> = self
            .classes
            .iter()
            .enumerate()
            .flat_map(|(a, &lo)| self.classes[a + 1..].iter().map(move |&hi| (lo, hi)))
            .collect();
        let classifiers = pairs
            .iter()
            .map(|&(lo, hi)| {
                let idx: Vec<usize> = (0..self.labels.len())
                    .filter(|&i| self.labels[i] == lo || self.labels[i] == hi)
                    .collect();
                let y: Vec<f64> = idx.iter().map(|&i| if self.labels[i] == hi { 1.0 } else { -1.0 }).collect();
                let upper: Vec<f64> = idx.iter().map(|&i| c * self.weights[&self.labels[i]]).collect();
                fit_pair(gram, &self.scaled, &idx, &y, &upper, (lo, hi), &self.solver, column_mask)
            })
            .collect();
        MultiClassSVM {
            classifiers,
            classes: self.classes.clone(),
            scaler: self.scaler.clone(),
        }
    }
}

/// Fits a one-vs-one model on unscaled rows; the scaler is fitted on `x`
/// and stored in the model.
pub fn train_multiclass(x: &[Vec<f64>], labels: &[Label], config: &TrainConfig) -> Result<MultiClassSVM> {
    if !(config.c > 0.0) {
        return Err(Error::InvalidInput("C must be positive".into()));
    }
    let trainer = MultiClassTrainer::new(x, labels, config.class_weights.clone(), config.solver)?;
    Ok(trainer.fit(config.c))
}

/// Predicts every row of `rows` (unscaled) in parallel.
pub fn predict_all(model: &MultiClassSVM, rows: &[Vec<f64>]) -> Result<Vec<Label>> {
    rows.par_iter().map(|r| model.predict(r)).collect()
}

/// Predicts one unscaled row.
pub fn predict(model: &MultiClassSVM, x: &[f64]) -> Result<Label> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_from_rating_counts() {
        let counts = [(1u8, 66usize), (2, 234), (3, 127), (4, 67), (5, 76)];
        let labels: Vec<Label> = counts.iter().flat_map(|&(l, c)| std::iter::repeat(l).take(c)).collect();
        let w = class_weights(&labels).unwrap();
        // Oracle: 570 / (5 · n_k).
        let expected = [1.7273, 0.4872, 0.8976, 1.7015, 1.5000];
        for ((l, c), e) in counts.iter().zip(expected) {
            assert!((w[l] - 570.0 / (5.0 * *c as f64)).abs() < 1e-12);
            assert!((w[l] - e).abs() < 1e-4, "class {l}: {}", w[l]);
        }
        let mean: f64 = labels.iter().map(|l| w[l]).sum::<f64>() / labels.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_balanced_and_errors() {
        let labels: Vec<Label> = [vec![1u8; 10], vec![2u8; 10]].concat();
        let w = class_weights(&labels).unwrap();
        assert_eq!(w[&1], 1.0);
        assert_eq!(w[&2], 1.0);
        assert!(class_weights(&[]).is_err());
        assert!(matches!(class_weights(&[3, 3, 3]), Err(Error::SingleClass)));
    }

    #[test]
    fn two_point_hard_margin() {
        let x = vec![vec![-1.0], vec![1.0]];
        let m = train_binary(&x, &[-1.0, 1.0], 1e6, 1.0, 1.0, &SolverConfig::default()).unwrap();
        assert!((m.w[0] - 1.0).abs() < 1e-3);
        assert!(m.b.abs() < 1e-3);
        assert!(m.decision_value(&[0.0]).unwrap().abs() < 1e-3);
        assert!(m.stats.converged);
    }

    #[test]
    fn binary_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_binary(&x, &[1.0, 1.0], 1.0, 1.0, 1.0, &SolverConfig::default()),
            Err(Error::SingleClass)
        ));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            train_binary(&ragged, &[1.0, -1.0], 1.0, 1.0, 1.0, &SolverConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decision_value_examples() {
        let m = BinaryLinearSVM { w: vec![0.0; 3], b: 0.5, class_pair: (1, 2), stats: SolveStats::default() };
        assert_eq!(m.decision_value(&[4.0, -2.0, 9.0]).unwrap(), 0.5);
        let m = BinaryLinearSVM { w: vec![1.0, 0.0, 0.0], b: 0.0, class_pair: (1, 2), stats: SolveStats::default() };
        assert_eq!(m.decision_value(&[3.0, 5.0, 7.0]).unwrap(), 3.0);
        assert!(m.decision_value(&[1.0]).is_err());
    }

    #[test]
    fn cyclic_vote_breaks_on_margin() {
        // 1 beats 2 by 0.9, 2 beats 3 by 0.5, 3 beats 1 by 0.1.
        let decisions = [((1, 2), -0.9), ((2, 3), -0.5), ((1, 3), 0.1)];
        assert_eq!(vote(&[1, 2, 3], &decisions), 1);
    }

    #[test]
    fn unanimous_vote() {
        let decisions = [((1, 2), 0.3), ((2, 3), -2.0), ((1, 3), -0.4)];
        assert_eq!(vote(&[1, 2, 3], &decisions), 2);
    }

    #[test]
    fn full_tie_goes_to_smallest_label() {
        let decisions = [((1, 2), 0.0)];
        assert_eq!(vote(&[1, 2], &decisions), 1);
        let decisions = [((4, 7), 1.0), ((7, 9), 1.0), ((4, 9), -1.0)];
        // votes 1-1-1, margins: 4 → 0, 7 → 0, 9 → 0.
        assert_eq!(vote(&[4, 7, 9], &decisions), 4);
    }

    fn blobs() -> (Vec<Vec<f64>>, Vec<Label>) {
        let centers = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0), (4.0, 4.0), (8.0, 8.0)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (k, (cx, cy)) in centers.iter().enumerate() {
            for j in 0..8 {
                let a = j as f64 * 0.785;
                x.push(vec![cx + 0.5 * a.cos(), cy + 0.5 * a.sin(), (j % 3) as f64]);
                y.push(k as Label + 1);
            }
        }
        (x, y)
    }

    #[test]
    fn five_classes_give_ten_classifiers() {
        let (x, y) = blobs();
        let m = train_multiclass(&x, &y, &TrainConfig::new(10.0)).unwrap();
        assert_eq!(m.classifiers.len(), 10);
        let pairs: Vec<_> = m.classifiers.iter().map(|c| c.class_pair).collect();
        assert_eq!(pairs[0], (1, 2));
        assert_eq!(pairs[9], (4, 5));
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap(), *yi);
        }
    }

    #[test]
    fn two_classes_reduce_to_sign_rule() {
        let (x, y) = blobs();
        let (x2, y2): (Vec<_>, Vec<_>) = x.into_iter().zip(y).filter(|(_, l)| *l <= 2).unzip();
        let m = train_multiclass(&x2, &y2, &TrainConfig::new(1.0)).unwrap();
        assert_eq!(m.classifiers.len(), 1);
        for xi in &x2 {
            let z = m.scaler.transform(xi).unwrap();
            let v = m.classifiers[0].decision_value(&z).unwrap();
            assert_eq!(m.predict(xi).unwrap(), if v > 0.0 { 2 } else { 1 });
        }
    }

    #[test]
    fn absent_class_weight_rejected() {
        let (x, y) = blobs();
        let mut cfg = TrainConfig::new(1.0);
        cfg.class_weights = Some([(1, 1.0), (2, 1.0)].into_iter().collect());
        assert!(train_multiclass(&x, &y, &cfg).is_err());
        // Three expected classes, one missing from the data.
        let (x3, y3): (Vec<_>, Vec<_>) = x.iter().cloned().zip(y.iter().copied()).filter(|(_, l)| *l <= 2).unzip();
        cfg.class_weights = Some([(1, 1.0), (2, 1.0), (3, 1.0)].into_iter().collect());
        assert!(train_multiclass(&x3, &y3, &cfg).is_err());
        assert!(matches!(train_multiclass(&x[..8], &y[..8], &TrainConfig::new(1.0)), Err(Error::SingleClass)));
    }

    #[test]
    fn predict_dimension_mismatch() {
        let (x, y) = blobs();
        let m = train_multiclass(&x, &y, &TrainConfig::new(1.0)).unwrap();
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }
}
