//! Experiment plumbing: planted instances, the peeling simulator and the
//! config-driven runner. The bit-counting transport lives in [`crate::transport`].

pub mod experiment;
pub mod peel_sim;
pub mod planted;

pub use experiment::{load_config, parse_config, run_config, run_experiment, Experiment, ExperimentConfig, ExperimentReport};
pub use peel_sim::{peel_error_sim, EdgeSampler, PeelStats};
pub use planted::{generate_emd_instance, generate_gap_instance, PlantedEmdInstance, PlantedGapInstance};
