//! Student's t tail probabilities and the paired t-test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Stirling correction `lnΓ(z) − [(z − ½) ln z − z + ½ ln 2π]` for large z.
fn stirling_tail(z: f64) -> f64 {
    let z2 = z * z;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z
}

/// `lnΓ(a + b) − lnΓ(a)` without the cancellation of two large logs.
fn ln_gamma_shift(a: f64, b: f64) -> f64 {
    if a < 10.0 {
        return ln_gamma(a + b) - ln_gamma(a);
    }
    (a - 0.5) * (b / a).ln_1p() + b * (a + b).ln() - b + stirling_tail(a + b) - stirling_tail(a)
}

/// `ln B(a, b)`.
fn ln_beta(a: f64, b: f64) -> f64 {
    let (big, small) = if a >= b { (a, b) } else { (b, a) };
    ln_gamma(small) - ln_gamma_shift(big, small)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 200_000;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, taking `x` and `1 − x`
/// separately so callers can supply both without cancellation.
pub fn regularized_incomplete_beta(x: f64, one_minus_x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, one_minus_x) / b
    }
}

/// Two-tailed tail mass `P(|T| ≥ |t|)` of Student's t with `df` degrees of
/// freedom, `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_tailed_p(t: f64, df: u64) -> Result<f64> {
    if df < 1 {
        return Err(Error::InvalidInput("degrees of freedom must be at least 1".into()));
    }
    if t.is_nan() {
        return Err(Error::InvalidInput("t statistic is NaN".into()));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let v = df as f64;
    let t2 = t * t;
    let x = v / (v + t2);
    let y = t2 / (v + t2);
    Ok(regularized_incomplete_beta(x, y, 0.5 * v, 0.5).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTestResult {
    pub t: f64,
    pub df: u64,
    pub p: f64,
    /// Mean of `a − b`.
    pub mean_difference: f64,
}

impl PairedTTestResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Paired two-tailed t-test on `a − b`.
///
/// All-zero differences give `t = 0, p = 1`; constant non-zero differences
/// have no finite statistic and are reported as
/// [`Error::DegenerateVariance`].
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = (n - 1) as u64;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(PairedTTestResult { t: 0.0, df, p: 1.0, mean_difference: 0.0 });
        }
        return Err(Error::DegenerateVariance { mean });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let p = student_t_two_tailed_p(t, df)?;
    Ok(PairedTTestResult { t, df, p, mean_difference: mean })
}
