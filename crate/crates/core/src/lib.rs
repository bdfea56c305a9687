//! Simulation toolkit for stochastic combinatorial semi-bandits.
//!
//! The crate is organised bottom-up:
//!
//! * [`mathutil`] — Bernoulli KL divergence, KL confidence indices, Beta
//!   sampling and the Beta/Binomial CDF pair.
//! * [`environment`] — outcome generation and semi-bandit feedback.
//! * [`oracle`] — exact offline optimizers (matroid greedy, maximum spanning
//!   tree, shortest path, enumeration) and the two counterexample oracles.
//! * [`policy`] — combinatorial Thompson sampling and the UCB-family baselines.
//! * [`instances`] — generators for every benchmark instance.
//! * [`engine`] — the select/observe/update loop, regret accounting and the
//!   seeded batch runner (data-parallel with the `parallel` feature).
//! * [`experiment`] and [`verify`] — the file-level commands behind the `cmab`
//!   binary.

pub mod engine;
pub mod environment;
mod error;
pub mod experiment;
pub mod instances;
pub mod mathutil;
pub mod oracle;
pub mod policy;
pub mod verify;

pub use engine::{
    first_hitting_time, mix64, play_count_histogram, run_batch, run_single, AggregateStats,
    BatchResult, Execution, RegretTrace, RunConfig,
};
pub use environment::{EnvironmentKind, EnvironmentModel, Feedback, MeanVector, RewardKind, Sense};
pub use error::{Error, Result};
pub use instances::ProblemInstance;
pub use oracle::{Graph, MatroidSpec, Oracle, SuperArm};
pub use policy::{Policy, PolicyKind, PolicyState};

/// Independent random stream for one role inside a run.
pub type Stream = rand_chacha::ChaCha8Rng;

/// Configures the global worker pool used by the parallel batch runner.
///
/// `0` keeps rayon's default (one worker per core). Returns an error if the
/// pool was already initialised.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> Result<()> {
    Ok(())
}
