//! Experiment configuration: a TOML file of `key = value` lines grouped in
//! sections. Every key has a default and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Hyper, DEFAULT_PROPOSALS};
use crate::selfsup::{LoopConfig, DEFAULT_EPISODES_PER_ROUND, DEFAULT_POINTS, DEFAULT_SCHEDULE};
use crate::simulator::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Heuristic,
    Template,
    Learned,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Heuristic, Method::Template, Method::Learned];

    pub fn name(self) -> &'static str {
        match self {
            Method::Heuristic => "heuristic",
            Method::Template => "template",
            Method::Learned => "learned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub tasks: Vec<TaskKind>,
    pub out: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { seed: 0, tasks: TaskKind::ALL.to_vec(), out: "kptool-out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    pub train_per_category: usize,
    pub test_per_category: usize,
    /// Points per observed cloud (M).
    pub points: usize,
}

impl Default for ToolsSection {
    fn default() -> Self {
        Self { train_per_category: 50, test_per_category: 50, points: DEFAULT_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionSection {
    pub episodes_per_round: usize,
    /// Heuristic probability per round.
    pub schedule: Vec<f64>,
    /// Keypoint candidates per prediction (B).
    pub proposals: usize,
}

impl Default for CollectionSection {
    fn default() -> Self {
        Self {
            episodes_per_round: DEFAULT_EPISODES_PER_ROUND,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            proposals: DEFAULT_PROPOSALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub kl_weight: f64,
    pub input_points: usize,
    /// Iterations for the single-category models of the generalization matrix.
    pub category_iterations: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let h = Hyper::default();
        Self {
            learning_rate: h.learning_rate,
            batch_size: h.batch_size,
            iterations: h.iterations,
            kl_weight: h.kl_weight,
            input_points: h.input_points,
            category_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub methods: Vec<Method>,
    /// Scene seeds per test tool.
    pub scenes_per_tool: usize,
    /// Train single-category models and report the 2x2 matrix.
    pub generalization: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { methods: Method::ALL.to_vec(), scenes_per_tool: 10, generalization: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub tools: ToolsSection,
    pub collection: CollectionSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Full-scale values: 300 + 300 tools per split, 256 candidates and the
    /// reference training schedule.
    pub fn paper_scale() -> Self {
        let h = Hyper::paper_scale();
        let mut c = Self::default();
        c.tools.train_per_category = 300;
        c.tools.test_per_category = 300;
        c.collection.proposals = 256;
        c.training.learning_rate = h.learning_rate;
        c.training.batch_size = h.batch_size;
        c.training.iterations = h.iterations;
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_over(&Self::default(), text)
    }

    /// Keys in `text` override `base`.
    pub fn parse_over(base: &Self, text: &str) -> Result<Self> {
        let over: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        let mut table = toml::Table::try_from(base).map_err(|e| Error::Format(e.to_string()))?;
        merge(&mut table, over);
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load_over(base: &Self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::parse_over(base, &text)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.experiment.tasks.is_empty() || self.evaluation.methods.is_empty() {
            return bad("tasks and methods must be non-empty");
        }
        if self.tools.train_per_category == 0 || self.tools.test_per_category == 0 || self.tools.points < 64 {
            return bad("tool counts must be positive and clouds need at least 64 points");
        }
        if self.evaluation.scenes_per_tool == 0 || self.training.category_iterations == 0 {
            return bad("scene and iteration counts must be positive");
        }
        for t in &self.experiment.tasks {
            self.loop_config(*t).check()?;
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        let t = &self.training;
        Hyper {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            iterations: t.iterations,
            kl_weight: t.kl_weight,
            input_points: t.input_points,
            ..Hyper::default()
        }
    }

    pub fn loop_config(&self, task: TaskKind) -> LoopConfig {
        LoopConfig {
            task,
            episodes_per_round: self.collection.episodes_per_round,
            schedule: self.collection.schedule.clone(),
            points: self.tools.points,
            proposals: self.collection.proposals,
            seed: self.experiment.seed,
            hyper: self.hyper(),
        }
    }
}
