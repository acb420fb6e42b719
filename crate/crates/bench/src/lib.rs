//! Shared fixtures for the criterion benchmarks.

use sway_core::evaluation::FeatureTable;
use sway_core::synth::{generate_dataset, SynthConfig};
use sway_core::Dataset;

/// A seeded synthetic dataset with `participants` participants and
/// `sessions` sessions each.
pub fn dataset(participants: usize, sessions: u32) -> Dataset {
    generate_dataset(&SynthConfig {
        n_participants: participants,
        sessions_per_participant: sessions,
        ..SynthConfig::with_seed(2024)
    })
    .expect("valid synthetic config")
}

pub fn feature_table(participants: usize, sessions: u32) -> FeatureTable {
    FeatureTable::from_dataset(&dataset(participants, sessions), 1.0).expect("features of synthetic data")
}
