//! Episode execution and the self-supervised data loop.

mod dataset;
mod episode;
mod pipeline;
mod record;
mod rounds;

use rayon::prelude::*;

use crate::error::Result;

pub use dataset::{manifest_config, sha256_hex, Dataset, CLOUDS_FILE, CONFIG_MARKER, MANIFEST_FILE, RECORDS_FILE};
pub use episode::{replay, run_episode, run_with_keypoints, scene_for, Episode, EpisodeSpec, Models, Policy};
pub use pipeline::{attempt, observe_tool, plan, Attempt, GRASP_CANDIDATES};
pub use record::{read_records, write_records, EpisodeRecord, PolicyTag};
pub use rounds::{
    rounds_csv, run_loop, train_models, LoopConfig, LoopOutput, RoundReport, DEFAULT_EPISODES_PER_ROUND,
    DEFAULT_POINTS, DEFAULT_SCHEDULE, EVALUATION_FILE, PROPOSAL_FILE, ROUNDS_FILE,
};

/// Worker count for episode execution: `KETO_THREADS` when set to a
/// positive integer, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var("KETO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map over [`thread_count`] workers; the first
/// error in item order wins.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    pool.install(|| items.par_iter().map(&f).collect())
}
