//! Domain types for sway trials, exercise sets and datasets.
//!
//! Angles are in degrees. Positive pitch is a forward lean and positive roll
//! a rightward lean; every downstream metric is either sign-symmetric or
//! mean-based, so the convention only matters for interpretation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label. Ratings use 1..=5, grouped ratings 1..=3.
pub type Label = u8;

pub const MAX_TRIALS_PER_SET: usize = 6;
pub const MAX_SESSION_INDEX: u32 = 18;
pub const DEFAULT_TRIAL_DURATION_S: f64 = 30.0;

/// Fraction of the nominal duration a completed (non-step-out) trial must reach.
pub const MIN_COMPLETED_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwaySample {
    /// Seconds since trial start.
    pub t: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl SwaySample {
    pub fn new(t: f64, pitch: f64, roll: f64) -> Self {
        Self { t, pitch, roll }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwayTrial {
    pub samples: Vec<SwaySample>,
    /// Nominal rate; timestamps are authoritative.
    pub sample_rate_hz: f64,
    pub step_out: bool,
    pub nominal_duration_s: f64,
}

impl SwayTrial {
    pub fn new(samples: Vec<SwaySample>, sample_rate_hz: f64, step_out: bool) -> Self {
        Self {
            samples,
            sample_rate_hz,
            step_out,
            nominal_duration_s: DEFAULT_TRIAL_DURATION_S,
        }
    }

    /// Builds a trial from uniformly spaced pitch/roll channels starting at t = 0.
    pub fn from_channels(pitch: &[f64], roll: &[f64], sample_rate_hz: f64, step_out: bool) -> Self {
        assert_eq!(pitch.len(), roll.len(), "channel lengths differ");
        let samples = pitch
            .iter()
            .zip(roll)
            .enumerate()
            .map(|(k, (&p, &r))| SwaySample::new(k as f64 / sample_rate_hz, p, r))
            .collect();
        Self::new(samples, sample_rate_hz, step_out)
    }

    /// Time of the last sample, 0 for an empty trial.
    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Index of the first sample whose timestamp does not exceed its predecessor's.
    pub fn first_non_monotone(&self) -> Option<usize> {
        self.samples
            .windows(2)
            .position(|w| !(w[1].t > w[0].t))
            .map(|i| i + 1)
    }
}

macro_rules! kebab_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} value {:?}", stringify!($name), other)),
                }
            }
        }
    };
}

kebab_enum!(Vision { Open => "open", Closed => "closed" });
kebab_enum!(Stance {
    FeetApart => "feet-apart",
    FeetTogether => "feet-together",
    SemiTandem => "semi-tandem",
    Tandem => "tandem",
    SingleLeg => "single-leg",
});
kebab_enum!(HeadMotion { None => "none", Pitch => "pitch", Yaw => "yaw" });
kebab_enum!(Surface { Firm => "firm", Foam => "foam" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExerciseDescriptor {
    pub vision: Vision,
    pub stance: Stance,
    pub head_motion: HeadMotion,
    pub surface: Surface,
}

impl Default for ExerciseDescriptor {
    fn default() -> Self {
        Self {
            vision: Vision::Open,
            stance: Stance::FeetApart,
            head_motion: HeadMotion::None,
            surface: Surface::Firm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One exercise performed as up to six trials, rated once by the therapist
/// and once by the participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseSet {
    pub participant_id: ParticipantId,
    pub session_index: u32,
    pub exercise: ExerciseDescriptor,
    pub trials: Vec<SwayTrial>,
    pub pt_rating: Label,
    pub self_rating: Label,
}

impl ExerciseSet {
    pub fn step_out_count(&self) -> usize {
        self.trials.iter().filter(|t| t.step_out).count()
    }
}

/// A single invariant violation reported by [`validate_set`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TrialsEmpty,
    TooManyTrials(usize),
    PtRatingOutOfRange(Label),
    SelfRatingOutOfRange(Label),
    SessionOutOfRange(u32),
    NonPositiveRate { trial: usize },
    NonPositiveDuration { trial: usize },
    NonFiniteSample { trial: usize, sample: usize },
    NonMonotoneTime { trial: usize, sample: usize },
    TrialTooShort { trial: usize },
    StepOutTooLong { trial: usize },
}

impl Violation {
    /// Zero-based index of the offending trial, if the violation is trial-level.
    pub fn trial(&self) -> Option<usize> {
        match *self {
            Violation::NonPositiveRate { trial }
            | Violation::NonPositiveDuration { trial }
            | Violation::NonFiniteSample { trial, .. }
            | Violation::NonMonotoneTime { trial, .. }
            | Violation::TrialTooShort { trial }
            | Violation::StepOutTooLong { trial } => Some(trial),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TrialsEmpty => f.write_str("trials empty"),
            Violation::TooManyTrials(n) => write!(f, "too many trials ({n} > {MAX_TRIALS_PER_SET})"),
            Violation::PtRatingOutOfRange(r) => write!(f, "rating out of range (pt_rating = {r})"),
            Violation::SelfRatingOutOfRange(r) => write!(f, "rating out of range (self_rating = {r})"),
            Violation::SessionOutOfRange(s) => write!(f, "session index {s} outside 1..={MAX_SESSION_INDEX}"),
            Violation::NonPositiveRate { .. } => f.write_str("sample rate not positive"),
            Violation::NonPositiveDuration { .. } => f.write_str("nominal duration not positive"),
            Violation::NonFiniteSample { sample, .. } => write!(f, "non-finite value at sample {sample}"),
            Violation::NonMonotoneTime { sample, .. } => write!(f, "non-monotone timestamps at sample {sample}"),
            Violation::TrialTooShort { .. } => f.write_str("trial too short for non-step-out"),
            Violation::StepOutTooLong { .. } => f.write_str("step-out trial exceeds nominal duration"),
        }
    }
}

/// Checks every set- and trial-level invariant, returning one entry per violation.
pub fn validate_set(set: &ExerciseSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if set.trials.is_empty() {
        out.push(Violation::TrialsEmpty);
    } else if set.trials.len() > MAX_TRIALS_PER_SET {
        out.push(Violation::TooManyTrials(set.trials.len()));
    }
    if !(1..=5).contains(&set.pt_rating) {
        out.push(Violation::PtRatingOutOfRange(set.pt_rating));
    }
    if !(1..=5).contains(&set.self_rating) {
        out.push(Violation::SelfRatingOutOfRange(set.self_rating));
    }
    if !(1..=MAX_SESSION_INDEX).contains(&set.session_index) {
        out.push(Violation::SessionOutOfRange(set.session_index));
    }
    for (i, trial) in set.trials.iter().enumerate() {
        validate_trial(i, trial, &mut out);
    }
    out
}

fn validate_trial(i: usize, trial: &SwayTrial, out: &mut Vec<Violation>) {
    if !(trial.sample_rate_hz > 0.0) {
        out.push(Violation::NonPositiveRate { trial: i });
    }
    if !(trial.nominal_duration_s > 0.0) {
        out.push(Violation::NonPositiveDuration { trial: i });
    }
    if let Some(k) = trial
        .samples
        .iter()
        .position(|s| !(s.t.is_finite() && s.t >= 0.0 && s.pitch.is_finite() && s.roll.is_finite()))
    {
        out.push(Violation::NonFiniteSample { trial: i, sample: k });
    }
    if let Some(k) = trial.first_non_monotone() {
        out.push(Violation::NonMonotoneTime { trial: i, sample: k });
    }
    let end = trial.end_time();
    if trial.step_out {
        if end > trial.nominal_duration_s {
            out.push(Violation::StepOutTooLong { trial: i });
        }
    } else if end < MIN_COMPLETED_FRACTION * trial.nominal_duration_s {
        out.push(Violation::TrialTooShort { trial: i });
    }
}

/// Collapses the five-level rating scale to three levels: {1,2} → 1, {3,4} → 2, 5 → 3.
pub fn group_to_three(rating5: Label) -> Result<Label> {
    match rating5 {
        1 | 2 => Ok(1),
        3 | 4 => Ok(2),
        5 => Ok(3),
        other => Err(Error::InvalidInput(format!("rating {other} outside 1..=5"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sets: Vec<ExerciseSet>,
    pub participants: Vec<ParticipantId>,
}

impl Dataset {
    /// Builds a dataset, listing participants in order of first appearance.
    pub fn from_sets(sets: Vec<ExerciseSet>) -> Self {
        let mut participants: Vec<ParticipantId> = Vec::new();
        for s in &sets {
            if !participants.contains(&s.participant_id) {
                participants.push(s.participant_id.clone());
            }
        }
        Self { sets, participants }
    }

    /// Checks dataset-level bookkeeping and every set; returns the first problem.
    pub fn validate(&self) -> Result<()> {
        for (k, set) in self.sets.iter().enumerate() {
            if !self.participants.contains(&set.participant_id) {
                return Err(Error::InvalidInput(format!(
                    "set {k}: participant {} not listed",
                    set.participant_id
                )));
            }
            if let Some(v) = validate_set(set).first() {
                return Err(Error::InvalidInput(format!("set {k}: {v}")));
            }
        }
        Ok(())
    }

    pub fn set_counts(&self) -> BTreeMap<&ParticipantId, usize> {
        let mut counts: BTreeMap<&ParticipantId, usize> =
            self.participants.iter().map(|p| (p, 0)).collect();
        for s in &self.sets {
            *counts.entry(&s.participant_id).or_default() += 1;
        }
        counts
    }

    pub fn participant_of_sets(&self) -> Vec<ParticipantId> {
        self.sets.iter().map(|s| s.participant_id.clone()).collect()
    }
}
