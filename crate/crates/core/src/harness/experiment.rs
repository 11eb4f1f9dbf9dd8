//! Experiment orchestration: tool generation, collection, training,
//! evaluation, the artifact manifest and replay.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{ExperimentConfig, Method};
use super::metrics::{eval_csv, find, one_sided_p, EvalRow, ALL_CATEGORIES, UNTRAINED};
use crate::creator::{create_tool, detached_hammer, CreateOptions, CreationResult, PartPose};
use crate::error::{Error, Result};
use crate::geometry::io as cloud_io;
use crate::keypoints::TemplateLibrary;
use crate::learner::{Hyper, NetParams};
use crate::rng;
use crate::selfsup::{
    parallel_map, read_records, rounds_csv, run_episode, run_loop, sha256_hex, train_models, write_records, Dataset,
    Episode, EpisodeRecord, EpisodeSpec, Models, Policy, RoundReport, CONFIG_MARKER, EVALUATION_FILE, PROPOSAL_FILE,
    ROUNDS_FILE,
};
use crate::simulator::TaskKind;
use crate::toolgen::{generate_split, load_specs, render_cloud, save_specs, Category, ToolSpec, DEFAULT_NOISE_SD};

pub const TOOLS_DIR: &str = "tools";
pub const CATEGORY_DIR: &str = "by-category";
pub const EVAL_DIR: &str = "eval";
pub const EVAL_CSV: &str = "eval.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST: &str = "manifest.txt";
pub const CREATE_DIR: &str = "create";
/// Seed of the fixed two-part creation instance.
pub const CREATION_SEED: u64 = 0;
/// Head displacement of the fixed creation instance.
pub const CREATION_DETACH: PartPose = PartPose { t: [-0.12, -0.08], phi: 0.6 };
pub const CREATION_POINTS_PER_PART: usize = 512;

fn read_artifact(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tools {
    pub train: Vec<ToolSpec>,
    pub test: Vec<ToolSpec>,
}

impl Tools {
    pub fn category_of(&self, id: &str) -> Option<Category> {
        self.train.iter().chain(&self.test).find(|t| t.id == id).map(|t| t.category)
    }
}

fn split_file(dir: &Path, split: &str, cat: Category, ext: &str) -> PathBuf {
    dir.join(TOOLS_DIR).join(format!("{split}-{}.{ext}", cat.name()))
}

/// Writes the specs and one noisy cloud per tool for each split and category.
pub fn gen_tools(cfg: &ExperimentConfig, out: &Path) -> Result<Tools> {
    fs::create_dir_all(out.join(TOOLS_DIR))?;
    let seed = cfg.experiment.seed;
    let train = generate_split("train", cfg.tools.train_per_category, seed)?;
    let test = generate_split("test", cfg.tools.test_per_category, seed)?;
    for (split, specs) in [("train", &train), ("test", &test)] {
        for cat in Category::ALL {
            let of: Vec<ToolSpec> = specs.iter().filter(|s| s.category == cat).cloned().collect();
            let clouds = of
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    render_cloud(s, cfg.tools.points, DEFAULT_NOISE_SD, rng::derive(seed, split, i as u64))
                        .map(|c| c.quantized())
                })
                .collect::<Result<Vec<_>>>()?;
            save_specs(&split_file(out, split, cat, "jsonl"), &of)?;
            cloud_io::save(&split_file(out, split, cat, "keto"), &clouds)?;
        }
    }
    Ok(Tools { train, test })
}

pub fn load_tools(out: &Path) -> Result<Tools> {
    let load = |split: &str| -> Result<Vec<ToolSpec>> {
        let mut v = Vec::new();
        for cat in Category::ALL {
            let p = split_file(out, split, cat, "jsonl");
            if !p.exists() {
                return Err(Error::MissingArtifact(p.display().to_string()));
            }
            v.extend(load_specs(&p)?);
        }
        Ok(v)
    };
    Ok(Tools { train: load("train")?, test: load("test")? })
}

pub fn task_dir(out: &Path, task: TaskKind) -> PathBuf {
    out.join(task.name())
}

fn category_dir(out: &Path, task: TaskKind, cat: Category) -> PathBuf {
    task_dir(out, task).join(CATEGORY_DIR).join(cat.name())
}

/// Runs the self-supervision rounds on the training tools of `task`.
pub fn collect(cfg: &ExperimentConfig, task: TaskKind, tools: &Tools, out: &Path) -> Result<Vec<RoundReport>> {
    let dir = task_dir(out, task);
    Ok(run_loop(&cfg.loop_config(task), &tools.train, Some(&dir), &cfg.to_text())?.rounds)
}

/// The records (and their clouds) of tools in one category.
pub fn filter_category(data: &Dataset, tools: &Tools, cat: Category) -> Result<Dataset> {
    let mut out = Dataset::default();
    for r in &data.records {
        if tools.category_of(&r.tool_id) == Some(cat) {
            out.push(Episode { record: r.clone(), cloud: data.cloud(r)?.clone() });
        }
    }
    Ok(out)
}

pub fn save_models(m: &Models, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    m.proposal.save(&dir.join(PROPOSAL_FILE))?;
    m.evaluation.save(&dir.join(EVALUATION_FILE))
}

pub fn load_models(dir: &Path, proposals: usize) -> Result<Models> {
    Ok(Models {
        proposal: NetParams::load(&dir.join(PROPOSAL_FILE))?,
        evaluation: NetParams::load(&dir.join(EVALUATION_FILE))?,
        proposals,
    })
}

/// Retrains the models of `task` from its stored dataset: on every record,
/// or on one tool category with the shorter category schedule.
pub fn train(cfg: &ExperimentConfig, task: TaskKind, tools: &Tools, out: &Path, category: Option<Category>) -> Result<Models> {
    let data = Dataset::load(&task_dir(out, task))?;
    let seed = rng::derive(cfg.experiment.seed, "retrain", task as u64);
    let models = match category {
        None => {
            let m = train_models(&data, &cfg.hyper(), cfg.collection.proposals, seed)?;
            save_models(&m, &task_dir(out, task))?;
            m
        }
        Some(cat) => {
            let subset = filter_category(&data, tools, cat)?;
            let hyper = Hyper { iterations: cfg.training.category_iterations, ..cfg.hyper() };
            let m = train_models(&subset, &hyper, cfg.collection.proposals, rng::derive(seed, cat.name(), 0))?;
            save_models(&m, &category_dir(out, task, cat))?;
            m
        }
    };
    Ok(models)
}

/// Runs every test tool once per scene seed. Episode ids are
/// `tool * scenes + scene`; seeds are shared by every method.
pub fn eval_episodes<F>(cfg: &ExperimentConfig, task: TaskKind, tools: &[ToolSpec], run: F) -> Result<Vec<EpisodeRecord>>
where
    F: Fn(&EpisodeSpec) -> Result<Episode> + Sync + Send,
{
    let scenes = cfg.evaluation.scenes_per_tool as u64;
    let ids: Vec<u64> = (0..tools.len() as u64 * scenes).collect();
    parallel_map(&ids, |&id| {
        let ep = EpisodeSpec {
            id,
            task,
            tool: &tools[(id / scenes) as usize],
            seed: rng::derive(cfg.experiment.seed, "eval", id),
            points: cfg.tools.points,
        };
        run(&ep).map(|e| e.record)
    })
}

/// Rows for `records` split by test category, the pooled row first.
pub fn tally(method: Method, task: TaskKind, train: &str, records: &[EpisodeRecord], tools: &Tools) -> Vec<EvalRow> {
    let row = |test: &str, keep: &dyn Fn(&EpisodeRecord) -> bool| {
        let sel: Vec<&EpisodeRecord> = records.iter().filter(|r| keep(r)).collect();
        EvalRow {
            method,
            task,
            train_category: train.into(),
            test_category: test.into(),
            successes: sel.iter().filter(|r| r.success).count(),
            episodes: sel.len(),
        }
    };
    let mut rows = vec![row(ALL_CATEGORIES, &|_| true)];
    for cat in Category::ALL {
        rows.push(row(cat.name(), &|r| tools.category_of(&r.tool_id) == Some(cat)));
    }
    rows
}

fn eval_records_path(out: &Path, task: TaskKind, method: Method, train: &str) -> PathBuf {
    out.join(EVAL_DIR).join(task.name()).join(format!("{}-{train}.jsonl", method.name()))
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub rounds: Vec<(TaskKind, Vec<RoundReport>)>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn csv(&self) -> Result<String> {
        eval_csv(&self.rows)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:<10} {:<11} {:<11} {:>9} {:>7}  95% interval", "method", "task", "train", "test", "successes", "rate");
        for r in &self.rows {
            let (lo, hi) = r.interval();
            let _ = writeln!(
                s,
                "{:<10} {:<10} {:<11} {:<11} {:>4}/{:<4} {:>7.3}  [{lo:.3}, {hi:.3}]",
                r.method.name(),
                r.task.name(),
                r.train_category,
                r.test_category,
                r.successes,
                r.episodes,
                r.rate()
            );
        }
        for task in self.rows.iter().map(|r| r.task).fold(Vec::new(), |mut v, t| {
            if !v.contains(&t) {
                v.push(t);
            }
            v
        }) {
            let Some(l) = find(&self.rows, Method::Learned, task, ALL_CATEGORIES, ALL_CATEGORIES) else { continue };
            for (m, train) in [(Method::Heuristic, UNTRAINED), (Method::Template, ALL_CATEGORIES)] {
                if let Some(o) = find(&self.rows, m, task, train, ALL_CATEGORIES) {
                    let p = one_sided_p(l.successes, l.episodes, o.successes, o.episodes);
                    let _ = writeln!(s, "{}: learned vs {}: one-sided p = {p:.2e}", task.name(), m.name());
                }
            }
        }
        for (task, rounds) in &self.rounds {
            let _ = write!(s, "\n{} rounds\n{}", task.name(), rounds_csv(rounds));
        }
        if !self.timings.is_empty() {
            s.push_str("\nwall clock (s)\n");
            for (stage, secs) in &self.timings {
                let _ = writeln!(s, "{stage:<28} {secs:>9.1}");
            }
        }
        s
    }
}

/// Evaluates every configured method on the test tools. With `write`, the
/// per-episode records, the CSV and the text report are stored in `out`.
pub fn evaluate(cfg: &ExperimentConfig, out: &Path, write: bool) -> Result<EvalReport> {
    let tools = load_tools(out)?;
    let mut report = EvalReport::default();
    let emit = |report: &mut EvalReport, method: Method, task: TaskKind, train: &str, records: Vec<EpisodeRecord>| -> Result<()> {
        if write {
            let p = eval_records_path(out, task, method, train);
            fs::create_dir_all(p.parent().expect("has parent"))?;
            let mut buf = Vec::new();
            write_records(&mut buf, &records)?;
            fs::write(p, buf)?;
        }
        let rows = tally(method, task, train, &records, &tools);
        if train == ALL_CATEGORIES || train == UNTRAINED {
            report.rows.extend(rows);
        } else {
            // the matrix keeps single-category test cells only
            report.rows.extend(rows.into_iter().skip(1));
        }
        Ok(())
    };
    for &task in &cfg.experiment.tasks {
        let started = Instant::now();
        let dir = task_dir(out, task);
        let needs_data = cfg.evaluation.methods.contains(&Method::Template);
        let data = if needs_data { Some(Dataset::load(&dir)?) } else { None };
        for &method in &cfg.evaluation.methods {
            let mut variants: Vec<Option<Category>> = vec![None];
            if cfg.evaluation.generalization && method != Method::Heuristic {
                variants.extend(Category::ALL.map(Some));
            }
            for cat in variants {
                let train = match (method, cat) {
                    (Method::Heuristic, _) => UNTRAINED,
                    (_, None) => ALL_CATEGORIES,
                    (_, Some(c)) => c.name(),
                };
                let records = match method {
                    Method::Heuristic => eval_episodes(cfg, task, &tools.test, |ep| run_episode(ep, Policy::Heuristic))?,
                    Method::Learned => {
                        let d = cat.map_or(dir.clone(), |c| category_dir(out, task, c));
                        let models = load_models(&d, cfg.collection.proposals)?;
                        eval_episodes(cfg, task, &tools.test, |ep| run_episode(ep, Policy::Learned(&models)))?
                    }
                    Method::Template => {
                        let data = data.as_ref().expect("loaded for template");
                        let entries = match cat {
                            None => data.template_entries()?,
                            Some(c) => filter_category(data, &tools, c)?.template_entries()?,
                        };
                        let lib = TemplateLibrary::new(&entries)?;
                        eval_episodes(cfg, task, &tools.test, |ep| run_episode(ep, Policy::Template(&lib)))?
                    }
                };
                emit(&mut report, method, task, train, records)?;
            }
        }
        if let Ok(text) = fs::read_to_string(dir.join(ROUNDS_FILE)) {
            report.rounds.push((task, parse_rounds(&text)));
        }
        report.timings.push((format!("eval {}", task.name()), started.elapsed().as_secs_f64()));
    }
    if write {
        fs::write(out.join(EVAL_CSV), report.csv()?)?;
        fs::write(out.join(REPORT_FILE), report.text())?;
    }
    Ok(report)
}

fn parse_rounds(text: &str) -> Vec<RoundReport> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some(RoundReport {
                round: f.first()?.parse().ok()?,
                p_heuristic: f.get(1)?.parse().ok()?,
                episodes: f.get(2)?.parse().ok()?,
                successes: f.get(3)?.parse().ok()?,
            })
        })
        .collect()
}

/// Recomputes every CSV row from the stored episode records and returns the
/// rows that disagree.
pub fn audit(out: &Path) -> Result<Vec<EvalRow>> {
    let tools = load_tools(out)?;
    let rows = super::metrics::read_eval_csv(&String::from_utf8_lossy(&read_artifact(&out.join(EVAL_CSV))?))?;
    let mut bad = Vec::new();
    for r in &rows {
        let bytes = read_artifact(&eval_records_path(out, r.task, r.method, &r.train_category))?;
        let records = read_records(BufReader::new(&bytes[..]))?;
        let again = tally(r.method, r.task, &r.train_category, &records, &tools);
        if !again.iter().any(|a| a == r) {
            bad.push(r.clone());
        }
    }
    Ok(bad)
}

fn artifact_files(out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(out)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.path().strip_prefix(out).expect("under out").to_path_buf())
        .filter(|p| p != Path::new(MANIFEST) && p != Path::new(REPORT_FILE))
        .collect();
    files.sort();
    files
}

/// Hash of every artifact below `out` followed by the configuration text.
/// The text report holds wall-clock times and is left out.
pub fn write_manifest(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut s = String::new();
    for rel in artifact_files(out) {
        let _ = writeln!(s, "{} {}", rel.display(), sha256_hex(&fs::read(out.join(&rel))?));
    }
    let _ = write!(s, "{CONFIG_MARKER}\n{}", cfg.to_text());
    fs::write(out.join(MANIFEST), s)?;
    Ok(())
}

/// Checks every manifest hash and returns the recorded configuration.
pub fn verify_manifest(out: &Path) -> Result<ExperimentConfig> {
    let text = String::from_utf8(read_artifact(&out.join(MANIFEST))?).map_err(|e| Error::Parse(e.to_string()))?;
    let (files, config) = text
        .split_once(&format!("{CONFIG_MARKER}\n"))
        .ok_or_else(|| Error::Parse("manifest has no configuration".into()))?;
    for line in files.lines() {
        let (rel, hash) = line.rsplit_once(' ').ok_or_else(|| Error::Parse(format!("manifest line {line:?}")))?;
        if sha256_hex(&read_artifact(&out.join(rel))?) != hash {
            return Err(Error::Format(format!("{rel} does not match its manifest hash")));
        }
    }
    ExperimentConfig::parse(config)
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub stored: String,
    pub replayed: String,
}

impl Replay {
    pub fn matches(&self) -> bool {
        self.stored == self.replayed
    }
}

/// Verifies the stored artifacts against the manifest, then reruns the
/// evaluation from the stored tools and models with the recorded
/// configuration.
pub fn replay(out: &Path) -> Result<Replay> {
    let cfg = verify_manifest(out)?;
    let stored = String::from_utf8_lossy(&read_artifact(&out.join(EVAL_CSV))?).into_owned();
    let replayed = evaluate(&cfg, out, false)?.csv()?;
    Ok(Replay { stored, replayed })
}

/// Assembles a tool for the fixed detached-hammer instance with the
/// hammering evaluation head stored in `out`.
pub fn create(cfg: &ExperimentConfig, out: &Path, opts: &CreateOptions) -> Result<(crate::creator::CreationInstance, CreationResult)> {
    let models = load_models(&task_dir(out, TaskKind::Hammering), cfg.collection.proposals)?;
    let inst = detached_hammer(CREATION_SEED, CREATION_DETACH, CREATION_POINTS_PER_PART)?;
    let start = vec![PartPose::default(); inst.parts.len()];
    let res = create_tool(&inst.parts, &start, &inst.desired, &models.evaluation, opts)?;
    Ok((inst, res))
}

/// Full run: tools, collection for every task, single-category models,
/// evaluation and the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<EvalReport> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut timings = Vec::new();
    let t = Instant::now();
    let tools = gen_tools(cfg, out)?;
    timings.push(("tools".to_string(), t.elapsed().as_secs_f64()));
    for &task in &cfg.experiment.tasks {
        let t = Instant::now();
        collect(cfg, task, &tools, out)?;
        timings.push((format!("collect {}", task.name()), t.elapsed().as_secs_f64()));
        if cfg.evaluation.generalization {
            let t = Instant::now();
            for cat in Category::ALL {
                train(cfg, task, &tools, out, Some(cat))?;
            }
            timings.push((format!("category models {}", task.name()), t.elapsed().as_secs_f64()));
        }
    }
    let mut report = evaluate(cfg, out, true)?;
    timings.append(&mut report.timings);
    report.timings = timings;
    fs::write(out.join(REPORT_FILE), report.text())?;
    write_manifest(cfg, out)?;
    Ok(report)
}
