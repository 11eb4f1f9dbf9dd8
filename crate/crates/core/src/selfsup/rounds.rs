use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use super::episode::{run_episode, EpisodeSpec, Models, Policy};
use super::parallel_map;
use crate::error::{Error, Result};
use crate::learner::{train_evaluation, train_proposal, Hyper, TrainBatch, DEFAULT_PROPOSALS};
use crate::rng;
use crate::simulator::TaskKind;
use crate::toolgen::ToolSpec;

/// Probability of the heuristic policy in each round.
pub const DEFAULT_SCHEDULE: [f64; 3] = [1.0, 0.3, 0.0];
pub const DEFAULT_EPISODES_PER_ROUND: usize = 1000;
pub const DEFAULT_POINTS: usize = 1024;
pub const PROPOSAL_FILE: &str = "proposal.ketm";
pub const EVALUATION_FILE: &str = "evaluation.ketm";
pub const ROUNDS_FILE: &str = "rounds.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub task: TaskKind,
    pub episodes_per_round: usize,
    pub schedule: Vec<f64>,
    /// Points per observed cloud.
    pub points: usize,
    pub proposals: usize,
    pub seed: u64,
    pub hyper: Hyper,
}

impl LoopConfig {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            episodes_per_round: DEFAULT_EPISODES_PER_ROUND,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            points: DEFAULT_POINTS,
            proposals: DEFAULT_PROPOSALS,
            seed: 0,
            hyper: Hyper::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.episodes_per_round == 0 || self.points == 0 || self.proposals == 0 {
            return bad("episode, point and proposal counts must be positive");
        }
        if self.schedule.first() != Some(&1.0) {
            return bad("the first round must be fully heuristic");
        }
        if self.schedule.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("heuristic probabilities must lie in [0, 1]");
        }
        if self.schedule.windows(2).any(|w| w[1] > w[0]) {
            return bad("heuristic probabilities must not increase");
        }
        self.hyper.check()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub p_heuristic: f64,
    pub episodes: usize,
    pub successes: usize,
}

impl RoundReport {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

pub fn rounds_csv(rounds: &[RoundReport]) -> String {
    let mut s = String::from("round,p_heuristic,episodes,successes,rate\n");
    for r in rounds {
        let _ = writeln!(s, "{},{},{},{},{:.6}", r.round, r.p_heuristic, r.episodes, r.successes, r.rate());
    }
    s
}

#[derive(Debug, Clone)]
pub struct LoopOutput {
    pub dataset: Dataset,
    pub models: Models,
    pub rounds: Vec<RoundReport>,
}

/// Trains both heads on every record of `data` that has keypoints; the
/// proposal head sees the successes only.
pub fn train_models(data: &Dataset, hyper: &Hyper, proposals: usize, seed: u64) -> Result<Models> {
    let samples = data.samples()?;
    let batch = TrainBatch::fitted(&samples, hyper.input_points)?;
    let evaluation = train_evaluation(&batch, &Hyper { seed: rng::derive(seed, "evaluation", 0), ..*hyper })?;
    let proposal = train_proposal(&batch, &Hyper { seed: rng::derive(seed, "proposal", 0), ..*hyper })?;
    Ok(Models { proposal: proposal.params, evaluation: evaluation.params, proposals })
}

/// Runs the collection/retraining rounds. Episode `i` uses tool
/// `i mod tools.len()`. With `out`, the cumulative dataset, the latest models
/// and the per-round rates are rewritten after every round, with `config`
/// echoed into the manifest.
pub fn run_loop(cfg: &LoopConfig, tools: &[ToolSpec], out: Option<&Path>, config: &str) -> Result<LoopOutput> {
    cfg.check()?;
    if tools.is_empty() {
        return Err(Error::InvalidInput("no tools".into()));
    }
    let mut dataset = Dataset::default();
    let mut models: Option<Models> = None;
    let mut rounds = Vec::new();
    for (round, &p) in cfg.schedule.iter().enumerate() {
        let first = (round * cfg.episodes_per_round) as u64;
        let ids: Vec<u64> = (first..first + cfg.episodes_per_round as u64).collect();
        let policy = match &models {
            None => Policy::Heuristic,
            Some(_) if p >= 1.0 => Policy::Heuristic,
            Some(m) if p <= 0.0 => Policy::Learned(m),
            Some(m) => Policy::Mixed(p, m),
        };
        let episodes = parallel_map(&ids, |&id| {
            let ep = EpisodeSpec {
                id,
                task: cfg.task,
                tool: &tools[id as usize % tools.len()],
                seed: rng::derive(cfg.seed, "episode", id),
                points: cfg.points,
            };
            run_episode(&ep, policy)
        })?;
        let successes = episodes.iter().filter(|e| e.record.success).count();
        episodes.into_iter().for_each(|e| dataset.push(e));
        rounds.push(RoundReport { round, p_heuristic: p, episodes: ids.len(), successes });
        if round == 0 && successes == 0 {
            return Err(Error::BootstrapFailed);
        }
        let trained = train_models(&dataset, &cfg.hyper, cfg.proposals, rng::derive(cfg.seed, "train", round as u64))?;
        if let Some(dir) = out {
            dataset.save(dir, config)?;
            trained.proposal.save(&dir.join(PROPOSAL_FILE))?;
            trained.evaluation.save(&dir.join(EVALUATION_FILE))?;
            fs::write(dir.join(ROUNDS_FILE), rounds_csv(&rounds))?;
        }
        models = Some(trained);
    }
    let models = models.expect("at least one round");
    Ok(LoopOutput { dataset, models, rounds })
}
