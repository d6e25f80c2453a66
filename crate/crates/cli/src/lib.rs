//! Library side of the `bdt` command: model loading, reports, sweeps,
//! the verification suite and result writing.

pub mod error;
pub mod output;
pub mod report;
pub mod source;
pub mod sweep;
pub mod verify;

pub use error::{CliError, Result};

/// Thread pool sized by `BDT_THREADS` when set, otherwise rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("BDT_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("BDT_THREADS must be a positive integer (got `{raw}`)")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
