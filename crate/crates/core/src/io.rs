//! On-disk formats: dataset manifest, trial files, feature table and model file.
//!
//! A dataset directory holds `manifest.toml` plus one CSV per trial:
//!
//! ```toml
//! format = "sway-manifest"
//! version = 1
//! participants = ["P01", "P02"]
//!
//! [[sets]]
//! participant_id = "P01"
//! session_index = 1
//! vision = "open"
//! stance = "feet-apart"
//! head_motion = "none"
//! surface = "firm"
//! pt_rating = 3
//! self_rating = 2
//!
//! [[sets.trials]]
//! file = "trials/P01_s01_0001_t1.csv"
//! step_out = false
//! sample_rate_hz = 50.0
//! nominal_duration_s = 30.0
//! ```
//!
//! Trial paths are relative to the manifest. Each trial file has the header
//! `t,pitch,roll` and one sample per row. Floats are written in shortest
//! round-trip form, so reading back reproduces every value exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::data::{
    validate_set, Dataset, ExerciseDescriptor, ExerciseSet, ParticipantId, SwaySample, SwayTrial,
    DEFAULT_TRIAL_DURATION_S,
};
use crate::error::{Error, Result};
use crate::kinematics::{feature_keys, set_features};
use crate::svm::MultiClassSVM;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_FORMAT: &str = "sway-manifest";
pub const MANIFEST_VERSION: i64 = 1;
pub const MODEL_FORMAT: &str = "sway-model";
pub const MODEL_VERSION: u32 = 1;
pub const TRIAL_HEADER: [&str; 3] = ["t", "pitch", "roll"];

/// Version string embedded in written artifacts.
pub fn generator() -> String {
    format!("sway {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Deserialize)]
struct RawManifest {
    format: Option<String>,
    version: Option<Spanned<i64>>,
    participants: Option<Vec<String>>,
    #[serde(default)]
    sets: Vec<Spanned<RawSet>>,
}

#[derive(Debug, Deserialize)]
struct RawSet {
    participant_id: String,
    session_index: Spanned<i64>,
    vision: Spanned<String>,
    stance: Spanned<String>,
    head_motion: Spanned<String>,
    surface: Spanned<String>,
    pt_rating: Spanned<i64>,
    self_rating: Spanned<i64>,
    #[serde(default)]
    trials: Vec<Spanned<RawTrial>>,
}

#[derive(Debug, Deserialize)]
struct RawTrial {
    file: String,
    step_out: bool,
    sample_rate_hz: Option<f64>,
    nominal_duration_s: Option<f64>,
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    format: &'a str,
    version: i64,
    generator: String,
    participants: Vec<&'a str>,
    sets: Vec<SetOut<'a>>,
}

#[derive(Serialize)]
struct SetOut<'a> {
    participant_id: &'a str,
    session_index: u32,
    vision: &'a str,
    stance: &'a str,
    head_motion: &'a str,
    surface: &'a str,
    pt_rating: u8,
    self_rating: u8,
    trials: Vec<TrialOut>,
}

#[derive(Serialize)]
struct TrialOut {
    file: String,
    step_out: bool,
    sample_rate_hz: f64,
    nominal_duration_s: f64,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

struct ManifestCtx<'a> {
    path: &'a Path,
    text: &'a str,
}

impl ManifestCtx<'_> {
    fn err(&self, span: Range<usize>, msg: impl Into<String>) -> Error {
        Error::data(self.path, Some(line_of(self.text, span.start)), msg)
    }

    fn rating(&self, field: &str, v: &Spanned<i64>) -> Result<u8> {
        let r = *v.get_ref();
        if !(1..=5).contains(&r) {
            return Err(self.err(v.span(), format!("rating out of range: {field} = {r}")));
        }
        Ok(r as u8)
    }

    fn parse_enum<T: std::str::FromStr<Err = String>>(&self, v: &Spanned<String>) -> Result<T> {
        v.get_ref().parse().map_err(|e: String| self.err(v.span(), e))
    }
}

/// Resolves a dataset path: a directory means `<dir>/manifest.toml`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads and validates a dataset from a manifest file or dataset directory.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = manifest_path(path);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let raw: RawManifest = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| line_of(&text, s.start));
        Error::data(&manifest, line, e.message().to_string())
    })?;
    let ctx = ManifestCtx { path: &manifest, text: &text };
    if let Some(f) = &raw.format {
        if f != MANIFEST_FORMAT {
            return Err(Error::data(&manifest, None, format!("unexpected format {f:?}")));
        }
    }
    if let Some(v) = &raw.version {
        if *v.get_ref() != MANIFEST_VERSION {
            return Err(ctx.err(v.span(), format!("unsupported manifest version {}", v.get_ref())));
        }
    }
    let base = manifest.parent().unwrap_or(Path::new("."));

    // Header fields first so errors come out in file order.
    struct Pending {
        set: ExerciseSet,
        span: Range<usize>,
        trials: Vec<(PathBuf, bool, Option<f64>, f64)>,
    }
    let mut pending = Vec::with_capacity(raw.sets.len());
    for spanned in &raw.sets {
        let span = spanned.span();
        let s = spanned.get_ref();
        let session = *s.session_index.get_ref();
        if !(1..=i64::from(crate::data::MAX_SESSION_INDEX)).contains(&session) {
            return Err(ctx.err(s.session_index.span(), format!("session index {session} out of range")));
        }
        let exercise = ExerciseDescriptor {
            vision: ctx.parse_enum(&s.vision)?,
            stance: ctx.parse_enum(&s.stance)?,
            head_motion: ctx.parse_enum(&s.head_motion)?,
            surface: ctx.parse_enum(&s.surface)?,
        };
        let pt_rating = ctx.rating("pt_rating", &s.pt_rating)?;
        let self_rating = ctx.rating("self_rating", &s.self_rating)?;
        let mut trials = Vec::with_capacity(s.trials.len());
        for t in &s.trials {
            let r = t.get_ref();
            let nominal = r.nominal_duration_s.unwrap_or(DEFAULT_TRIAL_DURATION_S);
            if let Some(rate) = r.sample_rate_hz {
                if !(rate > 0.0) {
                    return Err(ctx.err(t.span(), "sample_rate_hz must be positive"));
                }
            }
            if !(nominal > 0.0) {
                return Err(ctx.err(t.span(), "nominal_duration_s must be positive"));
            }
            trials.push((base.join(&r.file), r.step_out, r.sample_rate_hz, nominal));
        }
        pending.push(Pending {
            set: ExerciseSet {
                participant_id: ParticipantId::new(s.participant_id.clone()),
                session_index: session as u32,
                exercise,
                trials: Vec::new(),
                pt_rating,
                self_rating,
            },
            span,
            trials,
        });
    }

    let loaded: Vec<Result<Vec<SwayTrial>>> = pending
        .par_iter()
        .map(|p| {
            p.trials
                .iter()
                .map(|(file, step_out, rate, nominal)| {
                    let samples = read_trial_file(file)?;
                    let rate = rate.unwrap_or_else(|| estimate_rate(&samples));
                    Ok(SwayTrial {
                        samples,
                        sample_rate_hz: rate,
                        step_out: *step_out,
                        nominal_duration_s: *nominal,
                    })
                })
                .collect()
        })
        .collect();

    let mut sets = Vec::with_capacity(pending.len());
    for (p, trials) in pending.into_iter().zip(loaded) {
        let mut set = p.set;
        set.trials = trials?;
        if let Some(v) = validate_set(&set).first() {
            let msg = match v.trial() {
                Some(k) => format!("{v} (trial {} = {})", k + 1, p.trials[k].0.display()),
                None => v.to_string(),
            };
            return Err(ctx.err(p.span, msg));
        }
        sets.push(set);
    }

    let ds = match raw.participants {
        Some(list) => Dataset {
            sets,
            participants: list.into_iter().map(ParticipantId::new).collect(),
        },
        None => Dataset::from_sets(sets),
    };
    for s in &ds.sets {
        if !ds.participants.contains(&s.participant_id) {
            return Err(Error::data(
                &manifest,
                None,
                format!("participant {} not listed in participants", s.participant_id),
            ));
        }
    }
    Ok(ds)
}

fn estimate_rate(samples: &[SwaySample]) -> f64 {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) if b.t > a.t => (samples.len() - 1) as f64 / (b.t - a.t),
        _ => 1.0,
    }
}

/// Reads one `t,pitch,roll` trial file.
pub fn read_trial_file(path: &Path) -> Result<Vec<SwaySample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::data(path, Some(1), e.to_string()))?
        .clone();
    if header.iter().map(str::trim).ne(TRIAL_HEADER) {
        return Err(Error::data(path, Some(1), "expected header t,pitch,roll"));
    }
    let mut samples: Vec<SwaySample> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::data(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize);
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::data(path, line, format!("malformed number {raw:?} in column {}", TRIAL_HEADER[i])))?;
            if !v.is_finite() {
                return Err(Error::data(path, line, format!("non-finite {}", TRIAL_HEADER[i])));
            }
            Ok(v)
        };
        if rec.len() != 3 {
            return Err(Error::data(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let s = SwaySample::new(field(0)?, field(1)?, field(2)?);
        if s.t < 0.0 {
            return Err(Error::data(path, line, "negative timestamp"));
        }
        if let Some(prev) = samples.last() {
            if !(s.t > prev.t) {
                return Err(Error::data(path, line, "non-monotone timestamps"));
            }
        }
        samples.push(s);
    }
    Ok(samples)
}

pub fn write_trial_file(path: &Path, trial: &SwayTrial) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "{}", TRIAL_HEADER.join(","))?;
        for s in &trial.samples {
            writeln!(w, "{},{},{}", s.t, s.pitch, s.roll)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Writes `manifest.toml` and `trials/*.csv` under `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let trial_dir = dir.join("trials");
    fs::create_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;

    let mut sets_out = Vec::with_capacity(ds.sets.len());
    let mut jobs: Vec<(PathBuf, &SwayTrial)> = Vec::new();
    for (k, set) in ds.sets.iter().enumerate() {
        let mut trials = Vec::with_capacity(set.trials.len());
        for (j, trial) in set.trials.iter().enumerate() {
            let rel = format!(
                "trials/{}_s{:02}_{:04}_t{}.csv",
                sanitize(set.participant_id.as_str()),
                set.session_index,
                k + 1,
                j + 1
            );
            jobs.push((dir.join(&rel), trial));
            trials.push(TrialOut {
                file: rel,
                step_out: trial.step_out,
                sample_rate_hz: trial.sample_rate_hz,
                nominal_duration_s: trial.nominal_duration_s,
            });
        }
        sets_out.push(SetOut {
            participant_id: set.participant_id.as_str(),
            session_index: set.session_index,
            vision: set.exercise.vision.as_str(),
            stance: set.exercise.stance.as_str(),
            head_motion: set.exercise.head_motion.as_str(),
            surface: set.exercise.surface.as_str(),
            pt_rating: set.pt_rating,
            self_rating: set.self_rating,
            trials,
        });
    }
    jobs.par_iter()
        .map(|(path, trial)| write_trial_file(path, trial))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<()>>()?;

    let manifest = ManifestOut {
        format: MANIFEST_FORMAT,
        version: MANIFEST_VERSION,
        generator: generator(),
        participants: ds.participants.iter().map(ParticipantId::as_str).collect(),
        sets: sets_out,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes the 61-column feature table, one row per set, to `out`.
pub fn write_feature_table<W: Write>(out: W, ds: &Dataset, zone_threshold_deg: f64) -> Result<()> {
    let rows = ds
        .sets
        .par_iter()
        .map(|s| set_features(s, zone_threshold_deg))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Serde(e.to_string());
    let mut header = vec![
        "participant_id".to_string(),
        "session_index".to_string(),
        "pt_rating".to_string(),
        "self_rating".to_string(),
    ];
    header.extend(feature_keys());
    w.write_record(&header).map_err(to_err)?;
    for (set, fv) in ds.sets.iter().zip(&rows) {
        let mut rec = vec![
            set.participant_id.to_string(),
            set.session_index.to_string(),
            set.pt_rating.to_string(),
            set.self_rating.to_string(),
        ];
        rec.extend(fv.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

/// Serialized multi-class model with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub generator: String,
    pub c: f64,
    pub zone_threshold_deg: f64,
    pub feature_names: Vec<String>,
    pub model: MultiClassSVM,
}

impl ModelFile {
    pub fn new(model: MultiClassSVM, c: f64, zone_threshold_deg: f64, feature_names: Vec<String>) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            generator: generator(),
            c,
            zone_threshold_deg,
            feature_names,
            model,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ModelFile = serde_json::from_str(&text).map_err(|e| Error::data(path, Some(e.line()), e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::data(path, None, format!("unsupported model {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}
