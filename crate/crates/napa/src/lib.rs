//! File formats, configuration parsing and subcommands for the `napa`
//! command-line tool. The statistics live in `napa-core`.

pub mod commands;
pub mod config;
pub mod io;

/// Builds the global worker pool from `NAPA_THREADS` (hardware parallelism
/// when unset). Output never depends on the worker count.
pub fn init_thread_pool() -> anyhow::Result<()> {
    let threads = match std::env::var("NAPA_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("NAPA_THREADS must be a positive integer, got `{v}`"))?;
            anyhow::ensure!(n >= 1, "NAPA_THREADS must be a positive integer, got `{v}`");
            n
        }
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot start worker pool: {e}"))
}
