//! Primal-dual interior-point method (Mehrotra predictor-corrector) for the
//! same dual as [`super::solver`], specialised to a linear kernel.
//!
//! With `Z` the label-signed rows, `Q = Z Zᵀ` has rank at most the feature
//! count `d`, so each Newton system `(D + Z Zᵀ) Δa = r` is solved through
//! the Woodbury identity with a `d × d` Cholesky factor, followed by one
//! step of iterative refinement.

use nalgebra::{DMatrix, DVector};

use super::solver::{best_bias, DualSolution, SolveStats};

const MAX_ITERATIONS: u64 = 200;
const STEP_FRACTION: f64 = 0.995;

struct Newton<'a> {
    z: &'a DMatrix<f64>,
    dinv: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Newton<'a> {
    fn new(z: &'a DMatrix<f64>, d: &DVector<f64>) -> Option<Self> {
        let dinv = d.map(|v| 1.0 / v);
        let scaled = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * dinv[i]);
        let mut g = z.transpose() * scaled;
        for k in 0..g.nrows() {
            g[(k, k)] += 1.0;
        }
        let chol = g.cholesky()?;
        Some(Self { z, dinv, chol })
    }

    fn apply_inverse_once(&self, g: &DVector<f64>) -> DVector<f64> {
        let dg = g.component_mul(&self.dinv);
        let t = self.chol.solve(&(self.z.transpose() * &dg));
        dg - (self.z * t).component_mul(&self.dinv)
    }

    /// `(D + Z Zᵀ)⁻¹ g` with one refinement step.
    fn solve(&self, g: &DVector<f64>) -> DVector<f64> {
        let x = self.apply_inverse_once(g);
        let mx = x.component_div(&self.dinv) + self.z * (self.z.transpose() * &x);
        x + self.apply_inverse_once(&(g - mx))
    }
}

fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Primal value at `(w, b)` and relative gap to the dual value at `a`.
fn gap(a: &DVector<f64>, qa: &DVector<f64>, w2: f64, y: &DVector<f64>, upper: &DVector<f64>, b: f64) -> (f64, f64) {
    let mut loss = 0.0;
    for i in 0..a.len() {
        loss += upper[i] * (1.0 - qa[i] - y[i] * b).max(0.0);
    }
    let primal = 0.5 * w2 + loss;
    let dual = a.sum() - 0.5 * w2;
    let rel = if primal > 0.0 { (primal - dual) / primal } else { 0.0 };
    (primal, rel)
}

/// Solves the dual given the label-signed rows `z` (`n × d`).
pub(crate) fn solve_dual_ipm(z: &DMatrix<f64>, y: &[f64], upper: &[f64], tolerance: f64) -> DualSolution {
    let n = z.nrows();
    let y = DVector::from_column_slice(y);
    let u = DVector::from_column_slice(upper);
    let mut a = &u * 0.5;
    let mut s = &u * 0.5;
    let mut zl = DVector::from_element(n, 1.0);
    let mut v = DVector::from_element(n, 1.0);
    let mut b = 0.0;
    let mut bias;
    let mut stats = SolveStats::default();
    let ones = DVector::from_element(n, 1.0);

    loop {
        let w = z.transpose() * &a;
        let qa = z * &w;
        let w2 = w.norm_squared();
        let r_d = &qa - &ones + &y * b - &zl + &v;
        let r_p = y.dot(&a);
        bias = best_bias(qa.as_slice(), y.as_slice(), upper);
        let (primal, rel) = gap(&a, &qa, w2, &y, &u, bias);
        stats.primal_objective = primal;
        stats.relative_gap = rel;
        stats.kkt_violation = r_d.amax();
        if rel.abs() <= tolerance && r_p.abs() <= tolerance * a.sum() {
            stats.converged = true;
            break;
        }
        if stats.iterations >= MAX_ITERATIONS {
            break;
        }
        stats.iterations += 1;

        let mu = (a.dot(&zl) + s.dot(&v)) / (2 * n) as f64;
        let d = zl.component_div(&a) + v.component_div(&s);
        let Some(newton) = Newton::new(z, &d) else { break };
        let my = newton.solve(&y);
        let y_my = y.dot(&my);

        let direction = |rhs_z: &DVector<f64>, rhs_v: &DVector<f64>| {
            let r = -&r_d + rhs_z.component_div(&a) - rhs_v.component_div(&s);
            let mr = newton.solve(&r);
            let db = (y.dot(&mr) + r_p) / y_my;
            let da = mr - &my * db;
            let dz = (rhs_z - zl.component_mul(&da)).component_div(&a);
            let dv = (rhs_v + v.component_mul(&da)).component_div(&s);
            (da, db, dz, dv)
        };
        let step_of = |da: &DVector<f64>, dz: &DVector<f64>, dv: &DVector<f64>| {
            let ds = -da;
            max_step(&a, da).min(max_step(&s, &ds)).min(max_step(&zl, dz)).min(max_step(&v, dv))
        };

        // Predictor.
        let (da, _, dz, dv) = direction(&-a.component_mul(&zl), &-s.component_mul(&v));
        let t = step_of(&da, &dz, &dv).min(1.0);
        let ds = -&da;
        let mu_aff = ((&a + &da * t).dot(&(&zl + &dz * t)) + (&s + &ds * t).dot(&(&v + &dv * t))) / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3);

        // Corrector.
        let rhs_z = DVector::from_element(n, sigma * mu) - a.component_mul(&zl) - da.component_mul(&dz);
        let rhs_v = DVector::from_element(n, sigma * mu) - s.component_mul(&v) - ds.component_mul(&dv);
        let (da, db, dz, dv) = direction(&rhs_z, &rhs_v);
        let t = (STEP_FRACTION * step_of(&da, &dz, &dv)).min(1.0);
        a += &da * t;
        s -= &da * t;
        zl += &dz * t;
        v += &dv * t;
        b += db * t;
    }

    DualSolution {
        alpha: a.iter().zip(upper).map(|(&x, &c)| x.clamp(0.0, c)).collect(),
        bias,
        stats,
    }
}
