//! Seeded synthetic sway datasets rated by a deterministic oracle.
//!
//! Each set draws a latent difficulty 1..=5. Pitch and roll of every trial
//! are independent zero-mean AR(1) processes whose stationary standard
//! deviation grows with difficulty and is scaled by a per-participant skill
//! factor. Harder sets step out more often; a step-out truncates the trial.
//! The therapist rating comes from [`oracle_rate`], the self rating is that
//! rating moved to a neighbouring level with fixed probability.
//!
//! Randomness is ChaCha8 keyed by `(seed, participant, session, set)`, so
//! every set is reproducible on its own and parallel generation matches
//! serial generation bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Dataset, ExerciseDescriptor, ExerciseSet, HeadMotion, Label, ParticipantId, Stance, Surface, SwayTrial, Vision,
    MAX_SESSION_INDEX, MAX_TRIALS_PER_SET,
};
use crate::error::{Error, Result};
use crate::kinematics::{set_features, FeatureName, Metric, Descriptor, DEFAULT_ZONE_THRESHOLD_DEG};

/// Per-axis stationary sway standard deviation (degrees) by difficulty.
pub const DIFFICULTY_SWAY_SD: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.6];
/// Relative frequency of each difficulty level.
pub const DIFFICULTY_WEIGHTS: [f64; 5] = [0.12, 0.40, 0.22, 0.12, 0.14];
/// Per-trial step-out probability by difficulty.
pub const STEP_OUT_PROBABILITY: [f64; 5] = [0.0, 0.0, 0.02, 0.08, 0.40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRater {
    /// Strictly increasing mean `rms_sway` cut points, degrees.
    pub rms_thresholds: [f64; 4],
    /// Step-out count at or above which the rating is 5.
    pub step_out_rule: usize,
}

impl Default for OracleRater {
    fn default() -> Self {
        // Midpoints between adjacent difficulty levels of sqrt(2)·sd.
        let r2 = std::f64::consts::SQRT_2;
        Self {
            rms_thresholds: [0.75 * r2, 1.25 * r2, 1.75 * r2, 2.3 * r2],
            step_out_rule: 3,
        }
    }
}

impl OracleRater {
    pub fn validate(&self) -> Result<()> {
        let t = &self.rms_thresholds;
        if !(t[0] > 0.0 && t.windows(2).all(|w| w[0] < w[1]) && t[3].is_finite()) {
            return Err(Error::InvalidInput("oracle thresholds must be positive and strictly increasing".into()));
        }
        if self.step_out_rule == 0 {
            return Err(Error::InvalidInput("step-out rule must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rates a set: 5 when it has at least `step_out_rule` step-outs, otherwise
/// one plus the number of thresholds below the set's mean `rms_sway`.
pub fn oracle_rate(set: &ExerciseSet, oracle: &OracleRater) -> Result<Label> {
    if set.step_out_count() >= oracle.step_out_rule {
        return Ok(5);
    }
    let f = set_features(set, DEFAULT_ZONE_THRESHOLD_DEG)?;
    let rms = f[FeatureName::Cell(Metric::RmsSway, Descriptor::Mean)];
    Ok(1 + oracle.rms_thresholds.iter().filter(|&&t| t < rms).count() as Label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub sessions_per_participant: u32,
    pub sets_per_session: usize,
    pub trials_per_set: usize,
    pub sample_rate_hz: f64,
    pub trial_duration_s: f64,
    pub difficulty_sway_scale: f64,
    pub ar_coefficient: f64,
    pub participant_skill_sd: f64,
    pub label_noise: f64,
    pub self_rating_noise: f64,
    pub oracle: OracleRater,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_participants: 16,
            sessions_per_participant: 18,
            sets_per_session: 2,
            trials_per_set: 6,
            sample_rate_hz: 50.0,
            trial_duration_s: 30.0,
            difficulty_sway_scale: 1.0,
            ar_coefficient: 0.95,
            participant_skill_sd: 0.12,
            label_noise: 0.0,
            self_rating_noise: 0.5,
            oracle: OracleRater::default(),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.n_participants == 0 {
            return bad("n_participants must be positive");
        }
        if !(1..=MAX_SESSION_INDEX).contains(&self.sessions_per_participant) {
            return bad(&format!("sessions_per_participant must be in 1..={MAX_SESSION_INDEX}"));
        }
        if self.sets_per_session == 0 {
            return bad("sets_per_session must be positive");
        }
        if !(1..=MAX_TRIALS_PER_SET).contains(&self.trials_per_set) {
            return bad(&format!("trials_per_set must be in 1..={MAX_TRIALS_PER_SET}"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive");
        }
        if !(self.trial_duration_s.is_finite() && self.trial_duration_s * self.sample_rate_hz >= 3.0) {
            return bad("trial_duration_s must span at least three sample intervals");
        }
        if !(self.difficulty_sway_scale.is_finite() && self.difficulty_sway_scale > 0.0) {
            return bad("difficulty_sway_scale must be positive");
        }
        if !(self.ar_coefficient > 0.0 && self.ar_coefficient < 1.0) {
            return bad("ar_coefficient must lie in (0, 1)");
        }
        if !(self.participant_skill_sd.is_finite() && self.participant_skill_sd >= 0.0) {
            return bad("participant_skill_sd must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.self_rating_noise) {
            return bad("self_rating_noise must lie in [0, 1]");
        }
        self.oracle.validate()
    }

    pub fn n_sets(&self) -> usize {
        self.n_participants * self.sessions_per_participant as usize * self.sets_per_session
    }
}

fn rng_for(seed: u64, participant: u64, session: u64, set: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, participant, session, set]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn participant_id(p: usize, n: usize) -> ParticipantId {
    let width = n.to_string().len().max(2);
    ParticipantId::new(format!("P{:0width$}", p + 1))
}

/// Moves a rating to a uniformly chosen valid neighbour.
fn neighbour(rating: Label, rng: &mut impl Rng) -> Label {
    match rating {
        1 => 2,
        5 => 4,
        r if rng.random_bool(0.5) => r - 1,
        r => r + 1,
    }
}

fn ar1(n: usize, sd: f64, phi: f64, rng: &mut impl Rng) -> Vec<f64> {
    let innovation = sd * (1.0 - phi * phi).sqrt();
    let mut x: f64 = sd * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        x = phi * x + innovation * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

fn random_exercise(rng: &mut impl Rng) -> ExerciseDescriptor {
    fn pick<T: Copy>(all: &[T], rng: &mut impl Rng) -> T {
        all[rng.random_range(0..all.len())]
    }
    ExerciseDescriptor {
        vision: pick(&Vision::ALL, rng),
        stance: pick(&Stance::ALL, rng),
        head_motion: pick(&HeadMotion::ALL, rng),
        surface: pick(&Surface::ALL, rng),
    }
}

struct Generated {
    set: ExerciseSet,
    difficulty: Label,
}

fn generate_set(cfg: &SynthConfig, p: usize, session: u32, k: usize, skill: f64) -> Result<Generated> {
    let mut rng = rng_for(cfg.seed, p as u64, session as u64, k as u64);
    let difficulty = WeightedIndex::new(DIFFICULTY_WEIGHTS).expect("valid weights").sample(&mut rng);
    let sd = cfg.difficulty_sway_scale * DIFFICULTY_SWAY_SD[difficulty] * skill;
    let n_full = (cfg.trial_duration_s * cfg.sample_rate_hz).round() as usize + 1;
    let cut = Uniform::new(cfg.trial_duration_s / 3.0, cfg.trial_duration_s).expect("valid range");
    let exercise = random_exercise(&mut rng);
    let trials = (0..cfg.trials_per_set)
        .map(|_| {
            let step_out = rng.random_bool(STEP_OUT_PROBABILITY[difficulty]);
            let n = if step_out {
                (cut.sample(&mut rng) * cfg.sample_rate_hz).floor() as usize + 1
            } else {
                n_full
            };
            let pitch = ar1(n, sd, cfg.ar_coefficient, &mut rng);
            let roll = ar1(n, sd, cfg.ar_coefficient, &mut rng);
            let mut trial = SwayTrial::from_channels(&pitch, &roll, cfg.sample_rate_hz, step_out);
            trial.nominal_duration_s = cfg.trial_duration_s;
            trial
        })
        .collect();
    let mut set = ExerciseSet {
        participant_id: participant_id(p, cfg.n_participants),
        session_index: session,
        exercise,
        trials,
        pt_rating: 1,
        self_rating: 1,
    };
    let mut rating = oracle_rate(&set, &cfg.oracle)?;
    if rng.random_bool(cfg.label_noise) {
        rating = neighbour(rating, &mut rng);
    }
    set.pt_rating = rating;
    set.self_rating = if rng.random_bool(cfg.self_rating_noise) {
        neighbour(rating, &mut rng)
    } else {
        rating
    };
    Ok(Generated { set, difficulty: difficulty as Label + 1 })
}

/// Generates a dataset along with each set's latent difficulty (1..=5).
pub fn generate_with_latent(cfg: &SynthConfig) -> Result<(Dataset, Vec<Label>)> {
    cfg.validate()?;
    let skills: Vec<f64> = (0..cfg.n_participants)
        .map(|p| {
            let mut rng = rng_for(cfg.seed, p as u64, u64::MAX, u64::MAX);
            (cfg.participant_skill_sd * rng.sample::<f64, _>(StandardNormal)).exp()
        })
        .collect();
    let keys: Vec<(usize, u32, usize)> = (0..cfg.n_participants)
        .flat_map(|p| {
            (1..=cfg.sessions_per_participant).flat_map(move |s| (0..cfg.sets_per_session).map(move |k| (p, s, k)))
        })
        .collect();
    let generated = keys
        .par_iter()
        .map(|&(p, s, k)| generate_set(cfg, p, s, k, skills[p]))
        .collect::<Result<Vec<_>>>()?;
    let latent = generated.iter().map(|g| g.difficulty).collect();
    let ds = Dataset::from_sets(generated.into_iter().map(|g| g.set).collect());
    Ok((ds, latent))
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    generate_with_latent(cfg).map(|(ds, _)| ds)
}
