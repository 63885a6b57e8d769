//! Scoring, synthetic data and end-to-end experiments.

pub mod dictionary;
pub mod experiment;
pub mod synth;

pub use dictionary::{accuracy_at_1, bin_accuracy, default_bins, BinAccuracy, GoldDictionary, RankBin};
pub use experiment::{
    run_experiment, run_with_data, ExperimentConfig, ExperimentData, ExperimentReport, ExperimentSettings,
    LambdaMode,
};
pub use synth::{generate_synthetic_pair_spaces, SynthConfig, SyntheticData};
