//! Sequential minimal optimization for the weighted soft-margin dual
//!
//! ```text
//! min_a  ½ aᵀQa − Σ a_i    s.t.  0 ≤ a_i ≤ U_i,  Σ y_i a_i = 0
//! ```
//!
//! with `Q_ij = y_i y_j K_ij` and per-example bounds `U_i = C · cost(y_i)`.
//! The equality constraint comes from the unregularized bias. Working pairs
//! use second-order selection; no shrinking.

use serde::{Deserialize, Serialize};

const TAU: f64 = 1e-12;

/// How often (in pair updates) the duality gap is evaluated.
const GAP_CHECK_PERIOD: u64 = 16;

/// Dense symmetric linear-kernel matrix over a fixed set of rows.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            let ri = rows[i].as_ref();
            for j in i..n {
                let v = dot(ri, rows[j].as_ref());
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Self { n, k }
    }

    /// Gram matrix restricted to the columns `keep` of `rows`.
    pub fn from_rows_columns<R: AsRef<[f64]>>(rows: &[R], keep: &[usize]) -> Self {
        let reduced: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let r = r.as_ref();
                keep.iter().map(|&c| r[c]).collect()
            })
            .collect();
        Self::from_rows(&reduced)
    }

    /// The Gram matrix after dropping column `col` of `rows`: `K − x_c x_cᵀ`.
    pub fn without_column<R: AsRef<[f64]>>(&self, rows: &[R], col: usize) -> Self {
        let n = self.n;
        debug_assert_eq!(rows.len(), n);
        let c: Vec<f64> = rows.iter().map(|r| r.as_ref()[col]).collect();
        let mut k = self.k.clone();
        for i in 0..n {
            let ci = c[i];
            for j in 0..n {
                k[i * n + j] -= ci * c[j];
            }
        }
        Self { n, k }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convergence record of one dual solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SolveStats {
    /// Pair updates performed, plus Newton steps after a fallback.
    pub iterations: u64,
    /// Maximal KKT violation `m(a) − M(a)` at the returned iterate.
    pub kkt_violation: f64,
    /// `(primal − dual) / primal` at the returned iterate.
    pub relative_gap: f64,
    pub primal_objective: f64,
    pub converged: bool,
    /// Whether the interior-point fallback produced the solution. Its
    /// iterations are Newton steps and `kkt_violation` is the largest
    /// stationarity residual.
    #[serde(default)]
    pub interior_point: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when the relative duality gap falls below this.
    pub tolerance: f64,
    /// Cap on pair updates.
    pub max_iterations: u64,
    /// Hand problems SMO cannot finish within `SMO_BUDGET_PER_EXAMPLE`
    /// updates per example to the interior-point solver.
    #[serde(default = "default_true")]
    pub interior_point_fallback: bool,
}

fn default_true() -> bool {
    true
}

/// Pair updates per example allowed before the interior-point fallback.
pub const SMO_BUDGET_PER_EXAMPLE: u64 = 10;

impl SolverConfig {
    /// SMO iteration cap for a subproblem of `n` examples.
    pub(crate) fn smo_budget(&self, n: usize) -> u64 {
        if self.interior_point_fallback {
            self.max_iterations.min(SMO_BUDGET_PER_EXAMPLE * n as u64 + 1000)
        } else {
            self.max_iterations
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 10_000_000,
            interior_point_fallback: true,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub stats: SolveStats,
}

/// Solves the dual over the rows `idx` of `gram` with labels `y` (±1) and
/// upper bounds `upper`.
pub(crate) fn solve_dual(gram: &Gram, idx: &[usize], y: &[f64], upper: &[f64], cfg: &SolverConfig) -> DualSolution {
    let n = idx.len();
    debug_assert!(n == y.len() && n == upper.len());

    // Signed kernel, row-major, local to this subproblem.
    let mut q = vec![0.0; n * n];
    for a in 0..n {
        let ia = idx[a];
        for b in 0..n {
            q[a * n + b] = y[a] * y[b] * gram.get(ia, idx[b]);
        }
    }
    let qd: Vec<f64> = (0..n).map(|a| q[a * n + a]).collect();
    let max_iterations = cfg.smo_budget(n);

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut stats = SolveStats::default();

    let at_upper = |a: &[f64], t: usize| a[t] >= upper[t];
    let at_lower = |a: &[f64], t: usize| a[t] <= 0.0;

    loop {
        // First index: maximal violation among the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let cand = if y[t] > 0.0 {
                (!at_upper(&alpha, t)).then(|| -grad[t])
            } else {
                (!at_lower(&alpha, t)).then(|| grad[t])
            };
            if let Some(v) = cand {
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let qi = &q[i_sel * n..(i_sel + 1) * n];
            for t in 0..n {
                if y[t] > 0.0 {
                    if at_lower(&alpha, t) {
                        continue;
                    }
                    let diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if diff > 0.0 {
                        let quad = qd[i_sel] + qd[t] - 2.0 * y[i_sel] * qi[t];
                        let obj = -(diff * diff) / quad.max(TAU);
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = t;
                        }
                    }
                } else {
                    if at_upper(&alpha, t) {
                        continue;
                    }
                    let diff = gmax - grad[t];
                    gmax2 = gmax2.max(-grad[t]);
                    if diff > 0.0 {
                        let quad = qd[i_sel] + qd[t] + 2.0 * y[i_sel] * qi[t];
                        let obj = -(diff * diff) / quad.max(TAU);
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = t;
                        }
                    }
                }
            }
        }

        stats.kkt_violation = (gmax + gmax2).max(0.0);
        if i_sel == usize::MAX || j_sel == usize::MAX {
            stats.converged = true;
            break;
        }
        if gmax + gmax2 < cfg.tolerance || (stats.iterations % GAP_CHECK_PERIOD == 0 && stats.iterations > 0) {
            let (_, _, rel) = objectives(&alpha, &grad, y, upper);
            if rel <= cfg.tolerance {
                stats.converged = true;
                break;
            }
        }
        if stats.iterations >= max_iterations {
            break;
        }
        stats.iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q[i * n + j];
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let qi = &q[i * n..(i + 1) * n];
        let qj = &q[j * n..(j + 1) * n];
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    let (primal, _, rel) = objectives(&alpha, &grad, y, upper);
    stats.primal_objective = primal;
    stats.relative_gap = rel;
    let margins: Vec<f64> = grad.iter().map(|g| g + 1.0).collect();
    let bias = best_bias(&margins, y, upper);
    DualSolution { alpha, bias, stats }
}

/// Bias minimizing `Σ U_i max(0, 1 − m_i − y_i b)` for fixed margins
/// `m_i = y_i w·x_i`; the midpoint when the minimizers form an interval.
pub(crate) fn best_bias(margins: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let mut kinks: Vec<(f64, f64)> = (0..margins.len()).map(|i| (y[i] * (1.0 - margins[i]), upper[i])).collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = upper.iter().sum();
    let mut slope: f64 = -(0..y.len()).filter(|&i| y[i] > 0.0).map(|i| upper[i]).sum::<f64>();
    for (j, &(k, u)) in kinks.iter().enumerate() {
        slope += u;
        if slope > 1e-12 * total {
            return k;
        }
        if slope >= -1e-12 * total {
            return kinks.get(j + 1).map_or(k, |next| 0.5 * (k + next.0));
        }
    }
    kinks.last().map_or(0.0, |l| l.0)
}

/// Primal value, dual value and relative gap at the current iterate.
///
/// Uses `Qa = grad + 1`, so `‖w‖² = Σ a_i (grad_i + 1)` and
/// `y_i (w·x_i) = grad_i + 1`.
fn objectives(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> (f64, f64, f64) {
    let margins: Vec<f64> = grad.iter().map(|g| g + 1.0).collect();
    let b = best_bias(&margins, y, upper);
    let mut w2 = 0.0;
    let mut sum_a = 0.0;
    let mut loss = 0.0;
    for t in 0..alpha.len() {
        w2 += alpha[t] * (grad[t] + 1.0);
        sum_a += alpha[t];
        let margin = grad[t] + 1.0 + y[t] * b;
        loss += upper[t] * (1.0 - margin).max(0.0);
    }
    let primal = 0.5 * w2 + loss;
    let dual = sum_a - 0.5 * w2;
    let rel = if primal > 0.0 {
        (primal - dual) / primal
    } else {
        0.0
    };
    (primal, dual, rel)
}
