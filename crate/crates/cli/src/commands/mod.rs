pub mod eval;
pub mod inspect;
pub mod refine;
pub mod segment;
pub mod synth;
pub mod train;

use anyhow::Context;
use std::path::Path;

/// Install a rayon pool bounded to `jobs` threads when requested.
pub fn thread_pool(jobs: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().context("building thread pool")
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T, pretty: bool) -> anyhow::Result<()> {
    let json = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
