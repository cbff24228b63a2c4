use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clip_transfer::align::{save_model, AlignConfig};
use clip_transfer::env::{Cell, GridSpec, Instruction};
use clip_transfer::harness::{
    align_bases, fmt_float, oracle_report, run_experiment, run_objectgrid_probe, seeds, train_base_policies, BaseSet,
    ExperimentConfig,
};
use clip_transfer::policy::{load_policy, save_policy};
use clip_transfer::transfer::Strategy;
use clip_transfer::{Error, Result};

#[derive(Parser)]
#[command(name = "clip-transfer", version, about = "Language-conditioned policy transfer on grid worlds")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Restrict to one grid size.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Restrict to one strategy: scratch, language, clip or clip-crossmodal.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the base policies and save them under `<out>/grid<N>/policies`.
    TrainBase,
    /// Align base instructions with base policies (trains bases if missing).
    Align,
    /// Run transfer trials for one grid size.
    Transfer,
    /// Run the full protocol over every configured grid size.
    RunExperiment,
    /// Color/shape grid probe of projected similarity.
    ProbeObjectgrid,
    /// Print the optimal episode-length oracles for one task.
    Oracle {
        /// Goal cell as `row,col`.
        #[arg(long, default_value = "0,0")]
        goal: String,
    },
}

impl Shared {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            c.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(trials) = self.trials {
            c.trials = trials;
        }
        if let Some(grid) = self.grid {
            c.grid_sizes = vec![grid];
            c.probe.grid_size = grid;
        }
        if let Some(strategy) = self.strategy {
            c.strategies = vec![strategy];
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_cell(text: &str) -> Result<Cell> {
    let bad = || Error::Config(format!("expected row,col but got {text:?}"));
    let (r, c) = text.split_once(',').ok_or_else(bad)?;
    Ok(Cell { row: r.trim().parse().map_err(|_| bad())?, col: c.trim().parse().map_err(|_| bad())? })
}

fn policy_dir(out: &Path, grid: usize) -> PathBuf {
    out.join(format!("grid{grid}")).join("policies")
}

fn navigation_tasks(config: &ExperimentConfig, n: usize) -> Result<Vec<(Instruction, GridSpec)>> {
    config
        .base_instructions
        .iter()
        .map(|t| {
            let i = Instruction::new(t)?;
            let spec = GridSpec::for_instruction(&i.text, n)?;
            Ok((i, spec))
        })
        .collect()
}

fn train_bases(config: &ExperimentConfig) -> Result<()> {
    for &n in &config.grid_sizes {
        let tasks = navigation_tasks(config, n)?;
        let bases = train_base_policies(&tasks, &config.train, config.seed)?;
        let dir = policy_dir(&config.out_dir, n);
        fs::create_dir_all(&dir)?;
        for ((inst, policy), curve) in bases.instructions.iter().zip(&bases.policies).zip(&bases.curves) {
            let path = dir.join(format!("{}.policy", inst.task_id));
            save_policy(policy, &path)?;
            println!("grid {n} {:<18} {:>6} episodes  {}", inst.text, curve.episodes(), path.display());
        }
    }
    Ok(())
}

fn align(config: &ExperimentConfig) -> Result<()> {
    let table = config.embedding_table()?;
    for &n in &config.grid_sizes {
        let dir = policy_dir(&config.out_dir, n);
        let tasks = navigation_tasks(config, n)?;
        let stored: Option<Vec<_>> = tasks
            .iter()
            .map(|(i, _)| load_policy(&dir.join(format!("{}.policy", i.task_id))).ok())
            .collect();
        let bases = match stored {
            Some(policies) => BaseSet {
                instructions: tasks.iter().map(|t| t.0.clone()).collect(),
                specs: tasks.iter().map(|t| t.1.clone()).collect(),
                policies,
                curves: Vec::new(),
            },
            None => train_base_policies(&tasks, &config.train, config.seed)?,
        };
        let align_config = AlignConfig { seed: seeds::align_seed(config.seed, n), ..config.align.clone() };
        let (model, trace, s) = align_bases(&bases, &table, &align_config)?;
        let path = config.out_dir.join(format!("grid{n}")).join("alignment.model");
        fs::create_dir_all(path.parent().expect("has parent"))?;
        save_model(&model, &path)?;
        println!("grid {n}: loss {} -> {}", fmt_float(trace[0]), fmt_float(*trace.last().expect("epochs > 0")));
        for (inst, row) in bases.instructions.iter().zip(s.rows()) {
            let cells: Vec<String> = row.iter().map(|&v| format!("{:>8.4}", v)).collect();
            println!("  {:<18} {}", inst.text, cells.join(" "));
        }
        println!("  diagonal argmax: {}  saved {}", s.diagonal_argmax(), path.display());
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut progress = |line: &str| eprintln!("{line}");
    match cli.command {
        Command::Oracle { goal } => {
            let n = cli.shared.grid.unwrap_or(8);
            print!("{}", oracle_report(&GridSpec::new(n, parse_cell(&goal)?)?)?);
        }
        Command::TrainBase => train_bases(&cli.shared.config()?)?,
        Command::Align => align(&cli.shared.config()?)?,
        Command::Transfer => {
            let mut config = cli.shared.config()?;
            config.grid_sizes.truncate(1);
            let report = run_experiment(&config, &mut progress)?;
            print!("{}", report.summary_csv());
        }
        Command::RunExperiment => {
            let config = cli.shared.config()?;
            run_experiment(&config, &mut progress)?;
            print!("{}", fs::read_to_string(config.out_dir.join("report.txt"))?);
        }
        Command::ProbeObjectgrid => {
            let report = run_objectgrid_probe(&cli.shared.config()?, &mut progress)?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
