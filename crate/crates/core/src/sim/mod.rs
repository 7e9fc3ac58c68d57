//! Simulation models, samplers and the Monte Carlo harness.

pub mod example1;
pub mod harness;
pub mod metrics;
pub mod models;

pub use example1::{run_example1, Example1Config, Example1Result};
pub use harness::{condition_numbers, run_mc, run_replicate, McOutput, Method};
pub use metrics::{metrics, strong_weak_counts, MeanSd, MetricsRow, Rates, Summary};
pub use models::{
    gen_model1, gen_model2, gen_model3, sample_gaussian, CovFactor, CovModel, EntryDist, Population, SimSpec,
};
