// SPDX-License-Identifier: MIT OR Apache-2.0

//! `laekit` subcommands. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use laekit_core::backbones::labelled_rng;
use laekit_core::io::{write_png, write_pose_sweep};
use laekit_core::backbones::BackboneKind;
use laekit_core::{pose_grid, CameraPose, LaeError, PoseLayout};
use laekit_eval::{evaluate_checkpoint, toy_classifier, EvalError, EvalOptions, OracleDepth, OraclePose};
use laekit_train::{load_checkpoint, read_manifest, train_attribute_set, Branch, RunOutputs, TrainConfig, TrainError, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Poses in a sweep.
pub const SWEEP_POSES: usize = 9;

#[derive(Debug, Parser)]
#[command(name = "laekit", version, about = "Latent attribute editing for multiplane-image generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file (JSON); defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// toy, gmpi, eg3d, stylenerf or cips3d.
    #[arg(long, global = true)]
    pub backbone: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub attr: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub yaw: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub pitch: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub steps: Option<u64>,
    /// `dotted.key=value`; repeatable, applied in order.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a config file.
    Init,
    /// Train style tokens, mappers and the alpha branch.
    Train,
    /// Render one edited latent at one pose.
    Edit,
    /// Render the 3x3 pose grid for each attribute.
    Sweep,
    /// Compute the metric report of a checkpoint.
    Eval {
        /// Latents per metric.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Also write per-sample values as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a checkpoint manifest.
    Inspect {
        /// Checkpoint directory; same as --checkpoint.
        path: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

impl From<LaeError> for CliError {
    fn from(e: LaeError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Log filter from `LAEKIT_LOG`, default `warn`.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("LAEKIT_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Config file, then `--override`s, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> CliResult<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_override("seed", &seed.to_string())?;
    }
    if let Some(steps) = cli.steps {
        cfg = cfg.with_override("steps", &steps.to_string())?;
    }
    if let Some(kind) = &cli.backbone {
        kind.parse::<BackboneKind>().map_err(|e| CliError::Config(e.to_string()))?;
        cfg = cfg.with_override("backbone", kind)?;
    }
    Ok(cfg)
}

fn checkpoint_arg(cli: &Cli, positional: Option<&PathBuf>) -> CliResult<PathBuf> {
    positional
        .or(cli.checkpoint.as_ref())
        .cloned()
        .ok_or_else(|| CliError::Config("--checkpoint is required".into()))
}

fn open_checkpoint(cli: &Cli) -> CliResult<TrainState> {
    let dir = checkpoint_arg(cli, None)?;
    if !dir.exists() {
        return Err(CliError::Runtime(format!("checkpoint {} not found", dir.display())));
    }
    Ok(load_checkpoint(&dir)?)
}

fn requested_pose(cli: &Cli) -> CliResult<CameraPose> {
    CameraPose::new(cli.yaw.unwrap_or(0.0), cli.pitch.unwrap_or(0.0)).map_err(|e| CliError::Config(e.to_string()))
}

fn attribute_index(state: &TrainState, name: &str) -> CliResult<usize> {
    Ok(state.attribute_index(name)?)
}

/// File-system friendly form of an attribute name.
pub fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Init => cmd_init(cli),
        Command::Train => cmd_train(cli),
        Command::Edit => cmd_edit(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Eval { samples, csv } => cmd_eval(cli, *samples, csv.as_deref()),
        Command::Inspect { path } => cmd_inspect(cli, path.as_ref()),
    }
}

fn cmd_init(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("laekit.json"));
    fs::write(&out, cfg.to_json_pretty()? + "\n")?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_train(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    fs::create_dir_all(&out)?;
    let outputs = RunOutputs {
        checkpoint_dir: Some(cli.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint"))),
        log_path: Some(out.join("train.jsonl")),
    };
    log::info!("training {} attributes for {} steps", cfg.attributes.len(), cfg.steps);
    let run = train_attribute_set(&cfg, &outputs)?;
    if let (Some(first), Some(last)) = (run.history.first(), run.history.last()) {
        println!("step 1 total {:.6}, step {} total {:.6}", first.total, run.state.step, last.total);
    }
    println!("checkpoint {}", outputs.checkpoint_dir.as_ref().expect("set above").display());
    Ok(())
}

fn cmd_edit(cli: &Cli) -> CliResult<()> {
    let name = cli.attr.as_deref().ok_or_else(|| CliError::Config("--attr is required".into()))?;
    let pose = requested_pose(cli)?;
    let state = open_checkpoint(cli)?;
    let attr = attribute_index(&state, name)?;
    let seed = cli.seed.unwrap_or(state.config.seed);
    let w = state.sample_latent(&mut labelled_rng(seed, "cli.latent"))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("edit"));
    fs::create_dir_all(&out)?;
    let original = out.join(format!("original_{}.png", pose.file_stem()));
    let edited = out.join(format!("{}_{}.png", slug(name), pose.file_stem()));
    write_png(&state.render(&w, pose, Branch::Original)?, &original)?;
    write_png(&state.render(&state.edit(&w, attr)?, pose, Branch::Trained)?, &edited)?;
    println!("wrote {} and {}", original.display(), edited.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> CliResult<()> {
    let state = open_checkpoint(cli)?;
    let names: Vec<String> = match &cli.attr {
        Some(a) => vec![a.clone()],
        None => state.attribute_names().to_vec(),
    };
    let poses = pose_grid(state.config.yaw_range, state.config.pitch_range, SWEEP_POSES, PoseLayout::Grid)?;
    let seed = cli.seed.unwrap_or(state.config.seed);
    let w = state.sample_latent(&mut labelled_rng(seed, "cli.latent"))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    for name in &names {
        let edited = state.edit(&w, attribute_index(&state, name)?)?;
        let renders = poses.iter().map(|&p| state.render(&edited, p, Branch::Trained)).collect::<Result<Vec<_>, _>>()?;
        let dir = if cli.attr.is_some() { out.clone() } else { out.join(slug(name)) };
        let index = write_pose_sweep(&dir, Some(name), &renders)?;
        println!("{name}: {}", index.display());
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, samples: usize, csv: Option<&Path>) -> CliResult<()> {
    let state = open_checkpoint(cli)?;
    let seed = cli.seed.unwrap_or(state.config.seed);
    let opts = EvalOptions { n_samples: samples, seed, ..EvalOptions::default() };
    let clf = toy_classifier(&state, opts.n_reference, seed)?;
    let report = evaluate_checkpoint(&state, &clf, &OracleDepth, &OraclePose, &opts)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    report.write_json(&out)?;
    if let Some(path) = csv {
        report.write_csv(path)?;
    }
    println!("{}", report.to_json_pretty()?);
    Ok(())
}

fn cmd_inspect(cli: &Cli, positional: Option<&PathBuf>) -> CliResult<()> {
    let dir = checkpoint_arg(cli, positional)?;
    if !dir.exists() {
        return Err(CliError::Runtime(format!("checkpoint {} not found", dir.display())));
    }
    let m = read_manifest(&dir)?;
    println!("format_version {}", m.format_version);
    println!("dtype {}", m.dtype);
    println!("step {}", m.step);
    println!("attributes {}", m.attribute_names.join(", "));
    println!("frozen_fingerprint {}", m.frozen_fingerprint);
    for e in &m.arrays {
        println!("{} shape={:?} file={} offset={} bytes={} crc32={:08x}", e.name, e.shape, e.file, e.byte_offset, e.byte_len, e.crc32);
    }
    Ok(())
}
