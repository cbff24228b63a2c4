use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use super::seeds::{align_seed, base_seed, scratch_init_seed, trial_seed};
use super::{fmt_float, mean, median};
use crate::align::{save_model, similarity_matrix, train_alignment, AlignConfig, AlignmentDataset, AlignmentModel, SimilarityMatrix};
use crate::embed::EmbeddingTable;
use crate::env::{GridSpec, Instruction};
use crate::error::{Error, Result};
use crate::policy::{new_policy, save_policy, train_policy, Architecture, LearningCurve, PolicyNetwork, TrainConfig};
use crate::transfer::{
    blend, clip_similarities, crossmodal_similarities, language_similarities, SimilarityProfile, Strategy,
};

/// Converged base policies for one board, in instruction order.
#[derive(Clone, Debug)]
pub struct BaseSet {
    pub instructions: Vec<Instruction>,
    pub specs: Vec<GridSpec>,
    pub policies: Vec<PolicyNetwork>,
    pub curves: Vec<LearningCurve>,
}

/// Trains one policy per task from its own random init. Fails with
/// [`Error::BaseNotConverged`] on the first task that misses the threshold.
pub fn train_base_policies(tasks: &[(Instruction, GridSpec)], train: &TrainConfig, seed: u64) -> Result<BaseSet> {
    let mut set = BaseSet { instructions: Vec::new(), specs: Vec::new(), policies: Vec::new(), curves: Vec::new() };
    for (instruction, spec) in tasks {
        let config = TrainConfig { seed: base_seed(seed, spec.size, &instruction.task_id), ..train.clone() };
        let (policy, curve) = train_policy(spec, &config, None)?;
        if !curve.converged {
            return Err(Error::BaseNotConverged { task: instruction.text.clone(), episodes: curve.episodes() });
        }
        set.instructions.push(instruction.clone());
        set.specs.push(spec.clone());
        set.policies.push(policy);
        set.curves.push(curve);
    }
    Ok(set)
}

/// Fits the alignment heads on (instruction embedding, base weights) pairs.
pub fn align_bases(
    bases: &BaseSet,
    table: &EmbeddingTable,
    config: &AlignConfig,
) -> Result<(AlignmentModel, Vec<f64>, SimilarityMatrix)> {
    let texts = bases
        .instructions
        .iter()
        .map(|i| table.embedding(&i.text).map(|e| e.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let policies = bases.policies.iter().map(|p| p.weights().to_vec()).collect();
    let data = AlignmentDataset::new(texts, policies)?;
    let (model, trace) = train_alignment(&data, config)?;
    let s = similarity_matrix(&model, &data)?;
    Ok((model, trace, s))
}

/// Similarity profile of `target` against the bases; `None` for scratch.
pub fn similarity_profile(
    strategy: Strategy,
    target: &Instruction,
    bases: &BaseSet,
    model: &AlignmentModel,
    table: &EmbeddingTable,
) -> Result<Option<SimilarityProfile>> {
    let sources = &bases.instructions;
    Ok(Some(match strategy {
        Strategy::Scratch => return Ok(None),
        Strategy::Language => language_similarities(target, sources, table)?,
        Strategy::Clip => clip_similarities(target, sources, model, table)?,
        Strategy::ClipCrossmodal => crossmodal_similarities(target, sources, model, table, &bases.policies)?,
    }))
}

/// Initial target policy for one trial: fresh random weights for scratch,
/// otherwise the profile's blend of the base weights.
pub fn target_init(
    profile: Option<&SimilarityProfile>,
    bases: &BaseSet,
    arch: &Architecture,
    seed: u64,
    grid: usize,
    trial: usize,
) -> Result<PolicyNetwork> {
    match profile {
        None => Ok(new_policy(arch, scratch_init_seed(seed, grid, trial))),
        Some(p) => blend(p, &bases.policies)?.into_policy(),
    }
}

/// One target-training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub grid_size: usize,
    pub strategy: Strategy,
    pub trial: usize,
    pub episodes_to_convergence: usize,
    pub env_steps_to_convergence: usize,
    pub converged: bool,
}

/// Aggregates over the trials of one (grid size, strategy) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub grid_size: usize,
    pub strategy: Strategy,
    pub trials: usize,
    pub mean_episodes: f64,
    pub median_episodes: f64,
    pub mean_env_steps: f64,
    pub median_env_steps: f64,
    pub convergence_rate: f64,
}

/// Per-trial transfer costs. Aggregates are always recomputed from `rows`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransferReport {
    pub rows: Vec<TrialRow>,
}

const SUMMARY_HEADER: [&str; 6] =
    ["grid_size", "strategy", "trial", "episodes_to_convergence", "env_steps_to_convergence", "converged"];
const CURVES_HEADER: [&str; 6] = ["grid_size", "strategy", "trial", "episode", "steps", "return"];
const SIMILARITIES_HEADER: [&str; 7] =
    ["grid_size", "strategy", "target", "source", "raw_d", "clamped_w", "normalized_w"];

/// Reads a headed CSV, checking the header, and hands each record with its
/// 1-based line number to `row`.
fn read_csv(
    text: &str,
    origin: &Path,
    header: &[&str],
    mut row: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let err = |line: usize, msg: String| Error::Format { path: origin.to_path_buf(), line, msg };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    if reader.headers()?.iter().ne(header.iter().copied()) {
        return Err(err(1, format!("expected header {:?}", header.join(","))));
    }
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        row(line, &record)?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: usize, origin: &Path) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(i).unwrap_or_default();
    raw.parse().map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        line,
        msg: format!("column {}: cannot parse {raw:?}: {e}", i + 1),
    })
}

impl TransferReport {
    pub fn cells(&self) -> Vec<CellStats> {
        let mut groups: BTreeMap<(usize, Strategy), Vec<&TrialRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.grid_size, r.strategy)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((grid_size, strategy), rows)| {
                let eps: Vec<f64> = rows.iter().map(|r| r.episodes_to_convergence as f64).collect();
                let steps: Vec<f64> = rows.iter().map(|r| r.env_steps_to_convergence as f64).collect();
                CellStats {
                    grid_size,
                    strategy,
                    trials: rows.len(),
                    mean_episodes: mean(&eps),
                    median_episodes: median(&eps),
                    mean_env_steps: mean(&steps),
                    median_env_steps: median(&steps),
                    convergence_rate: rows.iter().filter(|r| r.converged).count() as f64 / rows.len() as f64,
                }
            })
            .collect()
    }

    pub fn cell(&self, grid_size: usize, strategy: Strategy) -> Option<CellStats> {
        self.cells().into_iter().find(|c| c.grid_size == grid_size && c.strategy == strategy)
    }

    /// `median(clip) / median(language)` of environment steps.
    pub fn clip_language_ratio(&self, grid_size: usize) -> Option<f64> {
        let clip = self.cell(grid_size, Strategy::Clip)?;
        let language = self.cell(grid_size, Strategy::Language)?;
        Some(clip.median_env_steps / language.median_env_steps)
    }

    pub fn summary_csv(&self) -> String {
        let rows = self.rows.iter().map(|r| {
            [
                r.grid_size.to_string(),
                r.strategy.to_string(),
                r.trial.to_string(),
                r.episodes_to_convergence.to_string(),
                r.env_steps_to_convergence.to_string(),
                r.converged.to_string(),
            ]
        });
        super::csv_text(&SUMMARY_HEADER, rows).expect("in-memory csv")
    }

    pub fn parse_summary(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        read_csv(text, origin, &SUMMARY_HEADER, |line, r| {
            rows.push(TrialRow {
                grid_size: field(r, 0, line, origin)?,
                strategy: field(r, 1, line, origin)?,
                trial: field(r, 2, line, origin)?,
                episodes_to_convergence: field(r, 3, line, origin)?,
                env_steps_to_convergence: field(r, 4, line, origin)?,
                converged: field(r, 5, line, origin)?,
            });
            Ok(())
        })?;
        Ok(TransferReport { rows })
    }

    /// Loads `summary.csv` from `dir` and checks every row against the
    /// episode records in `curves.csv`.
    pub fn load(dir: &Path) -> Result<Self> {
        let summary_path = dir.join("summary.csv");
        let report = Self::parse_summary(&fs::read_to_string(&summary_path)?, &summary_path)?;
        let curves_path = dir.join("curves.csv");
        let curves = fs::read_to_string(&curves_path)?;
        let mut totals: BTreeMap<(usize, Strategy, usize), (usize, usize)> = BTreeMap::new();
        read_csv(&curves, &curves_path, &CURVES_HEADER, |line, r| {
            let key = (field(r, 0, line, &curves_path)?, field(r, 1, line, &curves_path)?, field(r, 2, line, &curves_path)?);
            let steps: usize = field(r, 4, line, &curves_path)?;
            let e = totals.entry(key).or_default();
            e.0 += 1;
            e.1 += steps;
            Ok(())
        })?;
        for r in &report.rows {
            let got = totals.get(&(r.grid_size, r.strategy, r.trial)).copied().unwrap_or_default();
            if got != (r.episodes_to_convergence, r.env_steps_to_convergence) {
                return Err(Error::Format {
                    path: summary_path.clone(),
                    line: 0,
                    msg: format!(
                        "grid {} {} trial {}: summary says ({}, {}) but curves give {got:?}",
                        r.grid_size, r.strategy, r.trial, r.episodes_to_convergence, r.env_steps_to_convergence
                    ),
                });
            }
        }
        Ok(report)
    }
}

/// Runs the full protocol for every configured grid size and writes
/// `curves.csv`, `summary.csv`, `similarities.csv`, `report.txt` and
/// `config.toml` to `config.out_dir`, plus per-board model files under
/// `grid{N}/`. `progress` receives one line per finished stage.
pub fn run_experiment(config: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<TransferReport> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out)?;
    let table = config.embedding_table()?;
    let target = Instruction::new(&config.target_instruction)?;
    let bases: Vec<Instruction> = config.base_instructions.iter().map(|t| Instruction::new(t)).collect::<Result<_>>()?;
    let arch = Architecture::default();

    let mut report = TransferReport::default();
    let mut curve_rows: Vec<[String; 6]> = Vec::new();
    let mut sim_rows: Vec<[String; 7]> = Vec::new();
    let mut text = String::new();
    let _ = writeln!(text, "target instruction: {} (label: {})", target.text, config.target_label);
    let _ = writeln!(text, "base instructions: {}", bases.iter().map(|b| b.text.as_str()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(text, "trials: {}  seed: {}", config.trials, config.seed);

    for &n in &config.grid_sizes {
        let grid_dir = out.join(format!("grid{n}"));
        fs::create_dir_all(grid_dir.join("policies"))?;
        let tasks = bases
            .iter()
            .map(|b| Ok((b.clone(), GridSpec::for_instruction(&b.text, n)?)))
            .collect::<Result<Vec<_>>>()?;
        let base_set = train_base_policies(&tasks, &config.train, config.seed)?;
        for (inst, policy) in base_set.instructions.iter().zip(&base_set.policies) {
            save_policy(policy, &grid_dir.join("policies").join(format!("{}.policy", inst.task_id)))?;
        }
        let base_eps: Vec<String> = base_set.curves.iter().map(|c| c.episodes().to_string()).collect();
        progress(&format!("grid {n}: base policies converged after {} episodes", base_eps.join("/")));

        let align_config = AlignConfig { seed: align_seed(config.seed, n), ..config.align.clone() };
        let (model, trace, s) = align_bases(&base_set, &table, &align_config)?;
        if model.normalize {
            save_model(&model, &grid_dir.join("alignment.model"))?;
        }
        let final_loss = trace.last().copied().unwrap_or(f64::NAN);
        progress(&format!("grid {n}: alignment loss {}, diagonal argmax {}", fmt_float(final_loss), s.diagonal_argmax()));

        let target_spec = GridSpec::for_instruction(&target.text, n)?;
        let _ = writeln!(text, "\n== grid {n}x{n} (target goal {}) ==", target_spec.goal);
        let _ = writeln!(text, "base convergence episodes: {}", base_eps.join(", "));
        let _ = writeln!(
            text,
            "alignment: loss {} -> {}, diagonal argmax {}",
            fmt_float(trace.first().copied().unwrap_or(f64::NAN)),
            fmt_float(final_loss),
            s.diagonal_argmax()
        );

        for &strategy in &config.strategies {
            let profile = similarity_profile(strategy, &target, &base_set, &model, &table)?;
            if let Some(p) = &profile {
                for e in &p.entries {
                    sim_rows.push([
                        n.to_string(),
                        strategy.to_string(),
                        p.target.text.clone(),
                        e.source.text.clone(),
                        fmt_float(e.raw),
                        fmt_float(e.clamped),
                        fmt_float(e.normalized),
                    ]);
                }
                let init = blend(p, &base_set.policies)?.into_policy()?;
                save_policy(&init, &grid_dir.join("policies").join(format!("init_{}.policy", strategy.name())))?;
                let w: Vec<String> = p.weights().iter().map(|&x| fmt_float(x)).collect();
                let fallback = if p.uniform_fallback { " (uniform fallback)" } else { "" };
                let _ = writeln!(text, "{strategy} weights: [{}]{fallback}", w.join(", "));
            }
            for trial in 0..config.trials {
                let init = target_init(profile.as_ref(), &base_set, &arch, config.seed, n, trial)?;
                let train = TrainConfig { seed: trial_seed(config.seed, n, strategy.name(), trial), ..config.train.clone() };
                let (_, curve) = train_policy(&target_spec, &train, Some(&init))?;
                for r in &curve.records {
                    curve_rows.push([
                        n.to_string(),
                        strategy.to_string(),
                        trial.to_string(),
                        r.episode.to_string(),
                        r.steps.to_string(),
                        fmt_float(r.ret),
                    ]);
                }
                report.rows.push(TrialRow {
                    grid_size: n,
                    strategy,
                    trial,
                    episodes_to_convergence: curve.episodes(),
                    env_steps_to_convergence: curve.env_steps(),
                    converged: curve.converged,
                });
            }
            let c = report.cell(n, strategy).expect("cell just filled");
            progress(&format!("grid {n}: {strategy} median env steps {}", fmt_float(c.median_env_steps)));
        }

        let _ = writeln!(text, "strategy          trials  conv_rate  mean_eps  median_eps  mean_steps  median_steps");
        for c in report.cells().iter().filter(|c| c.grid_size == n) {
            let _ = writeln!(
                text,
                "{:<17} {:>6}  {:>9}  {:>8}  {:>10}  {:>10}  {:>12}",
                c.strategy.name(),
                c.trials,
                fmt_float(c.convergence_rate),
                fmt_float(c.mean_episodes),
                fmt_float(c.median_episodes),
                fmt_float(c.mean_env_steps),
                fmt_float(c.median_env_steps)
            );
        }
        if let Some(ratio) = report.clip_language_ratio(n) {
            let _ = writeln!(text, "median env steps clip/language: {}", fmt_float(ratio));
        }
    }

    fs::write(out.join("curves.csv"), super::csv_text(&CURVES_HEADER, curve_rows)?)?;
    fs::write(out.join("summary.csv"), report.summary_csv())?;
    fs::write(out.join("similarities.csv"), super::csv_text(&SIMILARITIES_HEADER, sim_rows)?)?;
    fs::write(out.join("report.txt"), text)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    Ok(report)
}
