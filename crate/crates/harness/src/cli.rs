//! Command-line interface. Usage errors exit with 2 (clap's default), the
//! same code as configuration errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuroevo_core::evolution::{EnergyRegime, FitnessMode};

use crate::analyze::{self, AnalyzeOptions};
use crate::config::{Profile, Settings};
use crate::error::{HarnessError, Result};
use crate::run::{self, ExperimentReport};
use crate::{metrics, plotdata, table};

#[derive(Debug, Parser)]
#[command(name = "neuroevo", version, about = "Neuroevolution of learning agents under energy costs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every run of one (regime, environment) cell.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "NEC")]
        regime: EnergyRegime,
        #[arg(long, default_value_t = 1)]
        seasons: usize,
        #[arg(long, default_value = "task")]
        mode: FitnessMode,
    },
    /// Run the full grid of regimes and environments in task mode.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Random-fitness runs, with or without a size penalty.
    Randomwalk {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Penalty::Both)]
        penalty: Penalty,
        #[arg(long, default_value = "NEC")]
        regime: EnergyRegime,
        #[arg(long, default_value_t = 1)]
        seasons: usize,
    },
    /// Statistical tables from an experiment directory or a tidy CSV.
    Analyze {
        input: PathBuf,
        /// Defaults to `<input>/analysis` (or next to a CSV input).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Box plot, trajectory and scatter tables from an experiment directory.
    Plotdata {
        input: PathBuf,
        /// Defaults to `<input>/plotdata`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Scatter every individual instead of the fittest per generation.
        #[arg(long)]
        population: bool,
    },
    /// Complexity metrics of an edge list ("u v" per line) as one CSV row.
    Metrics {
        edges: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Continue interrupted runs from their checkpoints.
    Resume {
        /// A run directory or an experiment directory.
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Penalty {
    On,
    Off,
    Both,
}

impl Penalty {
    fn modes(self) -> Vec<FitnessMode> {
        match self {
            Penalty::On => vec![FitnessMode::RandomSizePenalty],
            Penalty::Off => vec![FitnessMode::Random],
            Penalty::Both => vec![FitnessMode::Random, FitnessMode::RandomSizePenalty],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Named preset the configuration starts from.
    #[arg(long)]
    pub profile: Option<Profile>,
    /// TOML file layered over the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any field, e.g. `--set evolution.generations=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl Common {
    /// Settings with the dedicated flags applied last so they win.
    pub fn settings(&self, extra: &[String]) -> Result<Settings> {
        let mut ov = self.overrides.clone();
        ov.extend_from_slice(extra);
        if let Some(s) = self.master_seed {
            ov.push(format!("experiment.master_seed={s}"));
        }
        if let Some(r) = self.runs {
            ov.push(format!("experiment.runs_per_cell={r}"));
        }
        if let Some(w) = self.workers {
            ov.push(format!("experiment.workers={w}"));
        }
        if let Some(o) = &self.output {
            ov.push(format!("experiment.output={}", toml::Value::String(o.display().to_string())));
        }
        Settings::load(self.profile, self.config.as_deref(), &ov)
    }
}

fn cell_overrides(regime: EnergyRegime, seasons: usize) -> Vec<String> {
    vec![
        format!("experiment.regimes=[\"{regime}\"]"),
        format!("experiment.environments=[{seasons}]"),
    ]
}

fn report(r: ExperimentReport) -> Result<()> {
    for (spec, res) in &r.runs {
        if let Err(e) = res {
            eprintln!("run {} failed: {e}", spec.dir.display());
        }
    }
    let done = r.runs.len() - r.failed();
    println!("{done}/{} runs complete; summary in {}", r.runs.len(), r.root.join(run::SUMMARY).display());
    r.into_result().map(|_| ())
}

fn default_out(input: &Path, name: &str) -> PathBuf {
    if input.is_file() {
        input.parent().unwrap_or(Path::new(".")).join(name)
    } else {
        input.join(name)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evolve {
            common,
            regime,
            seasons,
            mode,
        } => {
            let settings = common.settings(&cell_overrides(regime, seasons))?;
            report(run::run_experiment(&settings, &[mode])?)
        }
        Command::Experiment { common } => {
            let settings = common.settings(&[])?;
            report(run::run_experiment(&settings, &[FitnessMode::Task])?)
        }
        Command::Randomwalk {
            common,
            penalty,
            regime,
            seasons,
        } => {
            let settings = common.settings(&cell_overrides(regime, seasons))?;
            report(run::run_experiment(&settings, &penalty.modes())?)
        }
        Command::Analyze {
            input,
            output,
            n_boot,
            seed,
        } => {
            let out = output.unwrap_or_else(|| default_out(&input, "analysis"));
            let b = analyze::analyze(&input, &out, &AnalyzeOptions { n_boot, seed, ..Default::default() })?;
            for w in &b.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} runs analyzed; tables in {}", b.tidy.len(), out.display());
            Ok(())
        }
        Command::Plotdata {
            input,
            output,
            population,
        } => {
            let out = output.unwrap_or_else(|| default_out(&input, "plotdata"));
            let data = plotdata::plotdata(&input, population)?;
            plotdata::write_plotdata(&data, &out)?;
            println!("plot tables in {}", out.display());
            Ok(())
        }
        Command::Metrics { edges, seed, output } => {
            let row = metrics::metrics_for_file(&edges, seed)?;
            match output {
                Some(path) => table::write_table(&path, &[row]),
                None => {
                    let mut buf = Vec::new();
                    {
                        let mut w = csv::Writer::from_writer(&mut buf);
                        w.serialize(&row).map_err(HarnessError::csv(&edges))?;
                        w.flush().map_err(HarnessError::io(&edges))?;
                    }
                    print!("{}\n{}", table::version_line(), String::from_utf8_lossy(&buf));
                    Ok(())
                }
            }
        }
        Command::Resume { dir, workers } => resume(&dir, workers),
    }
}

fn resume(dir: &Path, workers: usize) -> Result<()> {
    if dir.join(run::MANIFEST).is_file() {
        let s = run::resume_run(dir)?;
        println!("{} complete at generation {}", s.dir.display(), s.final_record.generation);
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(HarnessError::MissingInput(dir.display().to_string()));
    }
    let mut pending = Vec::new();
    for d in run::find_runs(dir)? {
        let m: run::Manifest = table::read_json(&d.join(run::MANIFEST))?;
        if m.status != run::RunStatus::Complete {
            pending.push(d);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    use rayon::prelude::*;
    let results: Vec<Result<run::RunSummary>> = pool.install(|| pending.par_iter().map(|d| run::resume_run(d)).collect());
    let failed = results.iter().filter(|r| r.is_err()).count();
    for (d, r) in pending.iter().zip(&results) {
        if let Err(e) = r {
            eprintln!("run {} failed: {e}", d.display());
        }
    }
    run::summarize_dir(dir)?;
    println!("resumed {} runs, {failed} failed", pending.len());
    if failed > 0 {
        Err(HarnessError::PartialFailure {
            failed,
            total: pending.len(),
        })
    } else {
        Ok(())
    }
}
