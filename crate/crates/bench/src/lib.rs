//! Shared fixtures for the benchmarks.

use excon_core::ingest::{generate_synthetic, SynthConfig};
use excon_core::LabeledDataset;

/// The default synthetic training set: 400 instances, τ = 64, N = 4.
pub fn synthetic_train() -> LabeledDataset {
    generate_synthetic(&SynthConfig::default()).expect("default synthetic config is valid")
}
