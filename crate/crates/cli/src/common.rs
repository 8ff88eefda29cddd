use clap::ValueEnum;

use niece_core::envelope::Task;

use crate::error::{CliError, Result};

/// Task names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    ResponseLinear,
    PredictorLinear,
    Simultaneous,
    Logistic,
    Cox,
}

impl TaskArg {
    pub fn to_task(self) -> Task {
        match self {
            TaskArg::ResponseLinear => Task::ResponseLinear,
            TaskArg::PredictorLinear => Task::PredictorLinear,
            TaskArg::Simultaneous => Task::SimultaneousLinear,
            TaskArg::Logistic => Task::Logistic,
            TaskArg::Cox => Task::Cox,
        }
    }
}

/// Worker count: the NIECE_THREADS environment variable wins over the flag;
/// zero means one thread per core.
pub fn resolve_threads(flag: usize) -> Result<usize> {
    match std::env::var("NIECE_THREADS") {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            CliError::Input(format!(
                "NIECE_THREADS is '{raw}', expected a non-negative integer"
            ))
        }),
        Err(_) => Ok(flag),
    }
}

pub fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| CliError::Input(format!("cannot build the thread pool: {e}")))
}

/// Per-replicate seed: a fixed odd stride keeps the streams disjoint while
/// staying independent of how replicates are scheduled across threads.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn timestamp() -> String {
    chrono::Utc::now()
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
