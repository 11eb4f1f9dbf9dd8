//! `kptool`: generate tools, collect self-supervised data, train, evaluate,
//! create tools and render keypoint overlays.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kptool::creator::{assemble, created_spec, CreateOptions};
use kptool::geometry::io as cloud_io;
use kptool::harness::{self, ExperimentConfig, Sketch, ViewBox};
use kptool::keypoints::ToolKeypoints;
use kptool::simulator::{EnvKeypoints, TaskKind};
use kptool::toolgen::{save_specs, Category};
use kptool::{Error, Result};

#[derive(Parser)]
#[command(name = "kptool", version, about = "Keypoint-based tool manipulation experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML sections of key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (the SVG file for `render`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Start from the paper-scale defaults instead of the desk-scale ones.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write train and test tool specs and clouds.
    GenTools,
    /// Run the self-supervision rounds.
    Collect {
        #[arg(long)]
        task: Vec<String>,
    },
    /// Retrain models from collected data, optionally on one tool category.
    Train {
        #[arg(long)]
        task: Vec<String>,
        #[arg(long)]
        category: Option<String>,
    },
    /// Evaluate every configured method on the test tools.
    Eval,
    /// Assemble a hammer from separated parts by gradient ascent.
    Create {
        #[arg(long, default_value_t = CreateOptions::default().max_iters)]
        max_iters: usize,
        #[arg(long, default_value_t = CreateOptions::default().step)]
        step: f64,
        #[arg(long, default_value_t = CreateOptions::default().tol)]
        tol: f64,
    },
    /// Draw a cloud with keypoints as SVG.
    Render {
        /// KETO cloud file.
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// gx,gy,fx,fy,ex,ey
        #[arg(long)]
        keypoints: Option<String>,
        /// tx,ty,rx,ry
        #[arg(long)]
        env: Option<String>,
    },
    /// Full experiment: tools, collection, training, evaluation, manifest.
    Run,
    /// Verify an experiment against its manifest and rerun its evaluation.
    Replay,
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let base = if c.paper_scale { ExperimentConfig::paper_scale() } else { ExperimentConfig::default() };
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load_over(&base, p)?,
        None => base,
    };
    if let Some(s) = c.seed {
        cfg.experiment.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.experiment.out = o.display().to_string();
    }
    cfg.check()?;
    Ok(cfg)
}

fn tasks(cfg: &ExperimentConfig, names: &[String]) -> Result<Vec<TaskKind>> {
    if names.is_empty() {
        Ok(cfg.experiment.tasks.clone())
    } else {
        names.iter().map(|n| TaskKind::parse(n)).collect()
    }
}

fn env_keypoints(s: &str) -> Result<EnvKeypoints> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("env keypoints: {e}")))?;
    match v[..] {
        [tx, ty, rx, ry] => EnvKeypoints::new([tx, ty], [rx, ry]),
        _ => Err(Error::Parse(format!("env keypoints: expected 4 values, got {}", v.len()))),
    }
}

fn create(cfg: &ExperimentConfig, out: &Path, opts: CreateOptions) -> Result<()> {
    let (inst, res) = harness::create(cfg, out, &opts)?;
    let dir = out.join(harness::CREATE_DIR);
    fs::create_dir_all(&dir)?;
    let spec = created_spec("created-hammer", &inst.source, &inst.parts, &res.poses)?;
    save_specs(&dir.join("tool.jsonl"), &[spec])?;
    let frames: Vec<_> = res.history.iter().map(|p| assemble(&inst.parts, p)).collect::<Result<_>>()?;
    let view = frames
        .iter()
        .map(|c| Sketch { clouds: vec![c], keypoints: Some(inst.desired), ..Sketch::default() }.view_box())
        .reduce(ViewBox::union);
    let mut scores = String::from("step,score\n");
    for (i, (cloud, score)) in frames.iter().zip(&res.scores).enumerate() {
        let sketch = Sketch {
            clouds: vec![cloud],
            keypoints: Some(inst.desired),
            title: Some(format!("step {i} score {score:.3}")),
            view,
            ..Sketch::default()
        };
        fs::write(dir.join(format!("frame-{i:04}.svg")), harness::render_svg(&sketch))?;
        scores.push_str(&format!("{i},{score}\n"));
    }
    fs::write(dir.join("scores.csv"), scores)?;
    println!(
        "score {:.4} -> {:.4} in {} steps, converged: {}",
        res.scores[0],
        res.scores.last().expect("initial score"),
        res.accepted_steps(),
        res.converged
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Render { cloud, index, keypoints, env } = &cli.command {
        let clouds = cloud_io::load(cloud)?;
        let c = clouds
            .get(*index)
            .ok_or_else(|| Error::InvalidInput(format!("{} holds {} clouds", cloud.display(), clouds.len())))?;
        let sketch = Sketch {
            clouds: vec![c],
            keypoints: keypoints.as_deref().map(ToolKeypoints::parse).transpose()?,
            env: env.as_deref().map(env_keypoints).transpose()?,
            ..Sketch::default()
        };
        let svg = harness::render_svg(&sketch);
        match &cli.common.out {
            Some(p) => fs::write(p, svg)?,
            None => print!("{svg}"),
        }
        return Ok(());
    }
    let cfg = config(&cli.common)?;
    let out = PathBuf::from(&cfg.experiment.out);
    match cli.command {
        Command::GenTools => {
            let t = harness::gen_tools(&cfg, &out)?;
            println!("{} training and {} test tools in {}", t.train.len(), t.test.len(), out.display());
        }
        Command::Collect { task } => {
            let tools = harness::load_tools(&out)?;
            for t in tasks(&cfg, &task)? {
                let rounds = harness::collect(&cfg, t, &tools, &out)?;
                print!("{}\n{}", t.name(), kptool::selfsup::rounds_csv(&rounds));
            }
        }
        Command::Train { task, category } => {
            let cat = category.as_deref().map(Category::parse).transpose()?;
            let tools = harness::load_tools(&out)?;
            for t in tasks(&cfg, &task)? {
                harness::train(&cfg, t, &tools, &out, cat)?;
                println!("trained {} ({})", t.name(), cat.map_or("all", Category::name));
            }
        }
        Command::Eval => print!("{}", harness::evaluate(&cfg, &out, true)?.text()),
        Command::Create { max_iters, step, tol } => create(&cfg, &out, CreateOptions { max_iters, step, tol })?,
        Command::Run => print!("{}", harness::run_experiment(&cfg, &out)?.text()),
        Command::Replay => {
            let r = harness::replay(&out)?;
            let bad = harness::audit(&out)?;
            println!("report reproduced: {}; rows failing audit: {}", r.matches(), bad.len());
            if !r.matches() || !bad.is_empty() {
                return Err(Error::Format("replay mismatch".into()));
            }
        }
        Command::Render { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kptool: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
