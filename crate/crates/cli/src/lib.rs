//! Command-line companion to `openset-core`: feature-table and model file
//! formats, seeded synthetic data, and the experiment runner behind the
//! `openset` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod synth;

pub use error::{Error, Result};
pub use experiment::{run_experiment, write_experiment, Experiment, Method, RunConfig};
pub use synth::{generate_synthetic, SyntheticSpec};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "OPENSET_WORKERS";

/// Sizes the global rayon pool from `workers`, falling back to
/// `OPENSET_WORKERS`. Leaves the default pool alone when neither is set.
pub fn init_workers(workers: Option<usize>) -> Result<()> {
    let n = match workers {
        Some(n) => n,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{WORKERS_ENV}={v:?} is not a thread count")))?,
            Err(_) => return Ok(()),
        },
    };
    if n == 0 {
        return Err(Error::Usage("worker count must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot size worker pool: {e}")))
}
