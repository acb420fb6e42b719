//! Per-trial kinematic metrics, cross-trial descriptors and z-scaling.
//!
//! Each exercise set is summarized by ten metrics computed on every trial,
//! reduced across trials by six descriptors, plus the count of completed
//! (non-step-out) trials: 61 features in total.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::data::{ExerciseSet, SwayTrial};
use crate::error::{Error, Result};

/// Quantile of the chi-squared distribution with two degrees of freedom at 0.95.
pub const CHI2_2DOF_95: f64 = 5.991;

/// Slopes with magnitude below this are reported as a flat trend.
pub const TREND_FLAT_THRESHOLD: f64 = 0.005;

pub const DEFAULT_ZONE_THRESHOLD_DEG: f64 = 1.0;

pub const N_METRICS: usize = 10;
pub const N_DESCRIPTORS: usize = 6;
pub const N_FEATURES: usize = N_METRICS * N_DESCRIPTORS + 1;

/// Scaler standard deviations below this are replaced by 1.
pub const MIN_SCALER_SD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RmsSway,
    RmsPitch,
    RmsRoll,
    CenterPitch,
    CenterRoll,
    EllipticalArea,
    PercentageZone,
    TrialLength,
    PathLength,
    RmsVelocity,
}

impl Metric {
    pub const ALL: [Metric; N_METRICS] = [
        Metric::RmsSway,
        Metric::RmsPitch,
        Metric::RmsRoll,
        Metric::CenterPitch,
        Metric::CenterRoll,
        Metric::EllipticalArea,
        Metric::PercentageZone,
        Metric::TrialLength,
        Metric::PathLength,
        Metric::RmsVelocity,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::RmsSway => "rms_sway",
            Metric::RmsPitch => "rms_pitch",
            Metric::RmsRoll => "rms_roll",
            Metric::CenterPitch => "center_pitch",
            Metric::CenterRoll => "center_roll",
            Metric::EllipticalArea => "elliptical_area",
            Metric::PercentageZone => "percentage_zone",
            Metric::TrialLength => "trial_length",
            Metric::PathLength => "path_length",
            Metric::RmsVelocity => "rms_velocity",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::RmsSway => "RMS of Trunk Sway",
            Metric::RmsPitch => "RMS in Pitch",
            Metric::RmsRoll => "RMS in Roll",
            Metric::CenterPitch => "Center of Sway in Pitch",
            Metric::CenterRoll => "Center of Sway in Roll",
            Metric::EllipticalArea => "EA",
            Metric::PercentageZone => "PZ",
            Metric::TrialLength => "Trial Length",
            Metric::PathLength => "Path Length",
            Metric::RmsVelocity => "RMS of Velocity",
        }
    }

    fn position(self) -> usize {
        Metric::ALL.iter().position(|&m| m == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Descriptor {
    Mean,
    Sd,
    Min,
    Max,
    Median,
    Trend,
}

impl Descriptor {
    pub const ALL: [Descriptor; N_DESCRIPTORS] = [
        Descriptor::Mean,
        Descriptor::Sd,
        Descriptor::Min,
        Descriptor::Max,
        Descriptor::Median,
        Descriptor::Trend,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Descriptor::Mean => "mean",
            Descriptor::Sd => "sd",
            Descriptor::Min => "min",
            Descriptor::Max => "max",
            Descriptor::Median => "median",
            Descriptor::Trend => "trend",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Descriptor::Mean => "Mean",
            Descriptor::Sd => "Standard Deviation",
            Descriptor::Min => "Min",
            Descriptor::Max => "Max",
            Descriptor::Median => "Median",
            Descriptor::Trend => "Trend",
        }
    }

    fn position(self) -> usize {
        Descriptor::ALL.iter().position(|&d| d == self).unwrap()
    }
}

/// Name of one of the 61 features. Canonical order is metric-major
/// (`rms_sway_mean`, `rms_sway_sd`, ..., `rms_velocity_trend`) followed by
/// `non_step_out_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureName {
    Cell(Metric, Descriptor),
    NonStepOutCount,
}

impl FeatureName {
    pub fn all() -> impl Iterator<Item = FeatureName> {
        Metric::ALL
            .into_iter()
            .flat_map(|m| Descriptor::ALL.into_iter().map(move |d| FeatureName::Cell(m, d)))
            .chain(std::iter::once(FeatureName::NonStepOutCount))
    }

    pub fn index(self) -> usize {
        match self {
            FeatureName::Cell(m, d) => m.position() * N_DESCRIPTORS + d.position(),
            FeatureName::NonStepOutCount => N_FEATURES - 1,
        }
    }

    pub fn from_index(i: usize) -> Option<FeatureName> {
        if i + 1 == N_FEATURES {
            Some(FeatureName::NonStepOutCount)
        } else if i < N_FEATURES {
            Some(FeatureName::Cell(Metric::ALL[i / N_DESCRIPTORS], Descriptor::ALL[i % N_DESCRIPTORS]))
        } else {
            None
        }
    }

    /// Machine key, e.g. `rms_roll_min`.
    pub fn key(self) -> String {
        match self {
            FeatureName::Cell(m, d) => format!("{}_{}", m.key(), d.key()),
            FeatureName::NonStepOutCount => "non_step_out_count".to_string(),
        }
    }

    pub fn parse(key: &str) -> Option<FeatureName> {
        FeatureName::all().find(|f| f.key() == key)
    }

    /// Human label, e.g. `Min of RMS in Roll`.
    pub fn label(self) -> String {
        match self {
            FeatureName::Cell(m, d) => format!("{} of {}", d.label(), m.label()),
            FeatureName::NonStepOutCount => "# of Non-\"Step-out\" Trials".to_string(),
        }
    }

    pub fn metric(self) -> Option<Metric> {
        match self {
            FeatureName::Cell(m, _) => Some(m),
            FeatureName::NonStepOutCount => None,
        }
    }

    pub fn descriptor(self) -> Option<Descriptor> {
        match self {
            FeatureName::Cell(_, d) => Some(d),
            FeatureName::NonStepOutCount => None,
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Canonical feature keys in column order.
pub fn feature_keys() -> Vec<String> {
    FeatureName::all().map(FeatureName::key).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub rms_sway: f64,
    pub rms_pitch: f64,
    pub rms_roll: f64,
    pub center_pitch: f64,
    pub center_roll: f64,
    pub elliptical_area: f64,
    pub percentage_zone: f64,
    pub trial_length: f64,
    pub path_length: f64,
    pub rms_velocity: f64,
}

impl TrialMetrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::RmsSway => self.rms_sway,
            Metric::RmsPitch => self.rms_pitch,
            Metric::RmsRoll => self.rms_roll,
            Metric::CenterPitch => self.center_pitch,
            Metric::CenterRoll => self.center_roll,
            Metric::EllipticalArea => self.elliptical_area,
            Metric::PercentageZone => self.percentage_zone,
            Metric::TrialLength => self.trial_length,
            Metric::PathLength => self.path_length,
            Metric::RmsVelocity => self.rms_velocity,
        }
    }
}

/// Computes the ten kinematic metrics of one trial.
///
/// RMS values are taken about the per-trial mean; `rms_sway` is the root of
/// the summed per-axis mean squares. The elliptical area is the 95%
/// confidence ellipse of the (pitch, roll) sample covariance. The
/// percentage zone is the share of trial time, weighted by sample spacing,
/// during which the raw tilt magnitude `sqrt(pitch² + roll²)` exceeds
/// `zone_threshold_deg`. Velocities use central differences in the interior
/// and one-sided differences at the ends, divided by actual time steps.
pub fn trial_metrics(trial: &SwayTrial, zone_threshold_deg: f64) -> Result<TrialMetrics> {
    let s = &trial.samples;
    let n = s.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("trial has {n} samples, need at least 2")));
    }
    if let Some(k) = trial.first_non_monotone() {
        return Err(Error::InvalidInput(format!("non-monotone timestamps at sample {k}")));
    }
    if !(zone_threshold_deg > 0.0) {
        return Err(Error::InvalidInput("zone threshold must be positive".into()));
    }
    let nf = n as f64;

    let center_pitch = s.iter().map(|x| x.pitch).sum::<f64>() / nf;
    let center_roll = s.iter().map(|x| x.roll).sum::<f64>() / nf;

    let (mut spp, mut srr, mut spr) = (0.0, 0.0, 0.0);
    for x in s {
        let p = x.pitch - center_pitch;
        let r = x.roll - center_roll;
        spp += p * p;
        srr += r * r;
        spr += p * r;
    }
    let rms_pitch = (spp / nf).sqrt();
    let rms_roll = (srr / nf).sqrt();
    let rms_sway = ((spp + srr) / nf).sqrt();

    // Covariance determinant in the principal-axis frame, where the minor
    // variance is summed directly instead of by cancellation.
    let theta = 0.5 * (2.0 * spr).atan2(spp - srr);
    let (sin, cos) = theta.sin_cos();
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for x in s {
        let p = x.pitch - center_pitch;
        let r = x.roll - center_roll;
        let u = cos * p + sin * r;
        let v = cos * r - sin * p;
        suu += u * u;
        svv += v * v;
        suv += u * v;
    }
    let denom = nf - 1.0;
    let det = (suu / denom) * (svv / denom) - (suv / denom).powi(2);
    let elliptical_area = std::f64::consts::PI * CHI2_2DOF_95 * det.max(0.0).sqrt();

    let t0 = s[0].t;
    let trial_length = s[n - 1].t - t0;

    let mut outside = 0.0;
    for (i, x) in s.iter().enumerate() {
        let left = if i > 0 { x.t - s[i - 1].t } else { 0.0 };
        let right = if i + 1 < n { s[i + 1].t - x.t } else { 0.0 };
        if x.pitch.hypot(x.roll) > zone_threshold_deg {
            outside += 0.5 * (left + right);
        }
    }
    let percentage_zone = (100.0 * outside / trial_length).min(100.0);

    let path_length = s
        .windows(2)
        .map(|w| (w[1].pitch - w[0].pitch).hypot(w[1].roll - w[0].roll))
        .sum();

    let mut sq_vel = 0.0;
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i + 1 == n => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        let dt = s[b].t - s[a].t;
        let vp = (s[b].pitch - s[a].pitch) / dt;
        let vr = (s[b].roll - s[a].roll) / dt;
        sq_vel += vp * vp + vr * vr;
    }
    let rms_velocity = (sq_vel / nf).sqrt();

    Ok(TrialMetrics {
        rms_sway,
        rms_pitch,
        rms_roll,
        center_pitch,
        center_roll,
        elliptical_area,
        percentage_zone,
        trial_length,
        path_length,
        rms_velocity,
    })
}

/// Sign of the least-squares slope of `values` against their positions,
/// or 0 when the slope is flatter than [`TREND_FLAT_THRESHOLD`].
pub fn linear_trend(values: &[f64]) -> Result<i8> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidInput("trend of empty sequence".into()));
    }
    if n < 2 {
        return Ok(0);
    }
    let nf = n as f64;
    let mean_x = (nf + 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = (i + 1) as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(if slope.abs() < TREND_FLAT_THRESHOLD {
        0
    } else if slope > 0.0 {
        1
    } else {
        -1
    })
}

/// Mean, sample sd, min, max, median and trend of a non-empty sequence.
pub(crate) fn describe(values: &[f64]) -> [f64; N_DESCRIPTORS] {
    debug_assert!(!values.is_empty());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let trend = linear_trend(values).unwrap_or(0) as f64;
    [mean, sd, sorted[0], sorted[k - 1], median, trend]
}

/// The 61 named features of one exercise set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn get(&self, name: FeatureName) -> f64 {
        self.values[name.index()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Index<FeatureName> for FeatureVector {
    type Output = f64;

    fn index(&self, name: FeatureName) -> &f64 {
        &self.values[name.index()]
    }
}

/// Computes the 61-feature summary of a set.
///
/// Trials with fewer than two samples contribute only their duration to
/// the trial-length pool; all other metrics are pooled over trials with
/// at least two samples, in the order performed.
pub fn set_features(set: &ExerciseSet, zone_threshold_deg: f64) -> Result<FeatureVector> {
    let mut pools: Vec<Vec<f64>> = vec![Vec::with_capacity(set.trials.len()); N_METRICS];
    let trial_length_slot = Metric::TrialLength.position();
    for trial in &set.trials {
        if trial.samples.len() < 2 {
            pools[trial_length_slot].push(trial.end_time());
            continue;
        }
        let m = trial_metrics(trial, zone_threshold_deg)?;
        for (slot, metric) in Metric::ALL.iter().enumerate() {
            pools[slot].push(m.get(*metric));
        }
    }
    if pools[0].is_empty() {
        return Err(Error::InvalidInput(format!(
            "set of participant {} session {} has no trial with at least 2 samples",
            set.participant_id, set.session_index
        )));
    }
    let mut values = Vec::with_capacity(N_FEATURES);
    for pool in &pools {
        values.extend_from_slice(&describe(pool));
    }
    values.push((set.trials.len() - set.step_out_count()) as f64);
    Ok(FeatureVector { values })
}

/// Per-feature mean and standard deviation for z-scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ScalerParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            sd: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scales a raw row slice into `out`.
    pub fn transform_into(&self, row: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        out.clear();
        out.extend(row.iter().zip(self.mean.iter().zip(&self.sd)).map(|(x, (m, s))| (x - m) / s));
        Ok(())
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(row.len());
        self.transform_into(row, &mut out)?;
        Ok(out)
    }
}

/// Fits per-column mean and sample standard deviation. Columns whose sd is
/// below [`MIN_SCALER_SD`] keep sd = 1, so scaling only removes the mean.
pub fn fit_scaler<R: AsRef<[f64]>>(rows: &[R]) -> Result<ScalerParams> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!("scaler needs at least 2 rows, got {}", rows.len())));
    }
    let dim = rows[0].as_ref().len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m).powi(2);
        }
    }
    let sd = var
        .into_iter()
        .map(|v| {
            let s = (v / (n - 1.0)).sqrt();
            if s < MIN_SCALER_SD {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(ScalerParams { mean, sd })
}

/// Entry-wise `(x - mean) / sd`.
pub fn apply_scaler(params: &ScalerParams, row: &FeatureVector) -> Result<FeatureVector> {
    Ok(FeatureVector::new(params.transform(&row.values)?))
}
