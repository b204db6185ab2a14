//! Executing runs and experiment grids, with checkpoints and manifests.
//!
//! Per run directory:
//! - `manifest.json` settings, seeds, versions and status
//! - `records.csv` one row per generation (deterministic)
//! - `timing.csv` wall time per generation (not deterministic)
//! - `scatter.csv` every individual's size and structure per generation
//! - `champions.jsonl` fittest genome per generation
//! - `checkpoint.json` resumable state

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use neuroevo_core::evolution::{EnergyRegime, Evolution, EvolutionConfig, FitnessMode, GenerationOutcome};
use neuroevo_core::genome::Genome;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{run_seed, Settings};
use crate::error::{HarnessError, Result};
use crate::table::{self, FORMAT_VERSION};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.csv";
pub const TIMING: &str = "timing.csv";
pub const SCATTER: &str = "scatter.csv";
pub const CHAMPIONS: &str = "champions.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const SUMMARY: &str = "summary.csv";

/// Build identifier baked in at compile time.
pub const BUILD: &str = env!("NEUROEVO_BUILD");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub run_seed: u64,
    pub run_index: usize,
    pub fitness_mode: String,
    pub regime: String,
    pub n_seasons: usize,
    pub generation: usize,
    pub best_genome_id: u64,
    pub best_fitness: f64,
    pub best_task_performance: f64,
    pub best_n_s: usize,
    pub best_n_c: f64,
    pub best_modularity: f64,
    pub best_efficiency: f64,
    pub mean_fitness: f64,
    pub mean_n_s: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub generation: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub generation: usize,
    pub individual: usize,
    pub n_s: usize,
    pub n_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub crate_version: String,
    pub build: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub master_seed: u64,
    pub run_index: usize,
    pub run_seed: u64,
    pub regime: EnergyRegime,
    pub n_seasons: usize,
    pub fitness_mode: FitnessMode,
    pub checkpoint_every: usize,
    pub generations_completed: usize,
    pub config_sha256: String,
    /// Exact configuration the run executes, seed included.
    pub config: EvolutionConfig,
}

/// One cell-and-index of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub master_seed: u64,
    pub run_index: usize,
    pub config: EvolutionConfig,
    pub checkpoint_every: usize,
    pub dir: PathBuf,
}

impl RunSpec {
    /// Fill in the per-run fields of `template` and place the run under
    /// `root/<mode>/<REGIME>-s<n>/run-<index>`.
    pub fn new(
        root: &Path,
        template: &EvolutionConfig,
        master_seed: u64,
        regime: EnergyRegime,
        n_seasons: usize,
        fitness_mode: FitnessMode,
        run_index: usize,
        checkpoint_every: usize,
    ) -> Self {
        let config = EvolutionConfig {
            regime,
            n_seasons,
            fitness_mode,
            seed: run_seed(master_seed, regime, n_seasons, run_index),
            ..template.clone()
        };
        Self {
            master_seed,
            run_index,
            checkpoint_every,
            dir: run_dir(root, fitness_mode, regime, n_seasons, run_index),
            config,
        }
    }
}

pub fn cell_dir(root: &Path, mode: FitnessMode, regime: EnergyRegime, n_seasons: usize) -> PathBuf {
    root.join(mode.to_string()).join(format!("{regime}-s{n_seasons}"))
}

pub fn run_dir(root: &Path, mode: FitnessMode, regime: EnergyRegime, n_seasons: usize, run_index: usize) -> PathBuf {
    cell_dir(root, mode, regime, n_seasons).join(format!("run-{run_index:02}"))
}

pub fn config_hash(config: &EvolutionConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub final_record: RecordRow,
}

#[derive(Serialize)]
struct ChampionLine<'a> {
    generation: usize,
    genome: &'a Genome,
}

struct RunFiles {
    dir: PathBuf,
    manifest: Manifest,
}

impl RunFiles {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn save_manifest(&self) -> Result<()> {
        table::write_json_atomic(&self.path(MANIFEST), &self.manifest)
    }

    fn row(&self, out: &GenerationOutcome) -> RecordRow {
        let m = &self.manifest;
        let r = &out.record;
        RecordRow {
            run_seed: m.run_seed,
            run_index: m.run_index,
            fitness_mode: m.fitness_mode.to_string(),
            regime: m.regime.to_string(),
            n_seasons: m.n_seasons,
            generation: r.generation,
            best_genome_id: r.best_genome_id,
            best_fitness: r.best_fitness,
            best_task_performance: r.best_task_performance,
            best_n_s: r.best_n_s,
            best_n_c: r.best_n_c,
            best_modularity: r.best_modularity,
            best_efficiency: r.best_efficiency,
            mean_fitness: r.mean_fitness,
            mean_n_s: r.mean_n_s,
            diverged: r.diverged,
        }
    }

    fn append(&self, out: &GenerationOutcome, wall_time: f64) -> Result<RecordRow> {
        let row = self.row(out);
        table::append_rows(&self.path(RECORDS), std::slice::from_ref(&row))?;
        table::append_rows(
            &self.path(TIMING),
            &[TimingRow {
                generation: out.record.generation,
                wall_time,
            }],
        )?;
        let scatter: Vec<ScatterRow> = out
            .scatter
            .iter()
            .enumerate()
            .map(|(individual, &(n_s, n_c))| ScatterRow {
                generation: out.record.generation,
                individual,
                n_s,
                n_c,
            })
            .collect();
        table::append_rows(&self.path(SCATTER), &scatter)?;
        let path = self.path(CHAMPIONS);
        let line = serde_json::to_string(&ChampionLine {
            generation: out.record.generation,
            genome: &out.champion,
        })
        .map_err(HarnessError::json(&path))?;
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(HarnessError::io(&path))?;
        writeln!(f, "{line}").map_err(HarnessError::io(&path))?;
        Ok(row)
    }

    /// Drop everything recorded at or after `generation`.
    fn truncate_to(&self, generation: usize) -> Result<()> {
        truncate_table::<RecordRow>(&self.path(RECORDS), generation, |r| r.generation)?;
        truncate_table::<TimingRow>(&self.path(TIMING), generation, |r| r.generation)?;
        truncate_table::<ScatterRow>(&self.path(SCATTER), generation, |r| r.generation)?;
        let path = self.path(CHAMPIONS);
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        let kept: String = text.lines().take(generation).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, kept).map_err(HarnessError::io(&path))
    }
}

fn truncate_table<T>(path: &Path, generation: usize, gen_of: fn(&T) -> usize) -> Result<()>
where
    T: Serialize + serde::de::DeserializeOwned + Default,
{
    let rows: Vec<T> = if path.exists() { table::read_table(path)? } else { Vec::new() };
    let keep: Vec<T> = rows.into_iter().filter(|r| gen_of(r) < generation).collect();
    if keep.is_empty() {
        table::create_table::<T>(path)
    } else {
        table::write_table(path, &keep)
    }
}

fn drive(files: &mut RunFiles, mut evo: Evolution) -> Result<RunSummary> {
    let mut last = None;
    let result = (|| -> Result<()> {
        while !evo.is_finished() {
            let t0 = Instant::now();
            let out = evo.step_generation()?;
            last = Some(files.append(&out, t0.elapsed().as_secs_f64())?);
            if evo.generation % files.manifest.checkpoint_every == 0 || evo.is_finished() {
                table::write_json_atomic(&files.path(CHECKPOINT), &evo)?;
                files.manifest.generations_completed = evo.generation;
                files.save_manifest()?;
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            files.manifest.status = RunStatus::Complete;
            files.manifest.generations_completed = evo.generation;
            files.save_manifest()?;
            let final_record = match last {
                Some(r) => r,
                None => table::read_table::<RecordRow>(&files.path(RECORDS))?
                    .pop()
                    .ok_or_else(|| HarnessError::MissingInput(files.path(RECORDS).display().to_string()))?,
            };
            Ok(RunSummary {
                dir: files.dir.clone(),
                final_record,
            })
        }
        Err(e) => {
            files.manifest.status = RunStatus::Failed;
            files.manifest.error = Some(e.to_string());
            files.save_manifest()?;
            Err(e)
        }
    }
}

/// Execute a run from scratch, replacing any previous output in its
/// directory.
pub fn execute_run(spec: &RunSpec) -> Result<RunSummary> {
    std::fs::create_dir_all(&spec.dir).map_err(HarnessError::io(&spec.dir))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        build: BUILD.into(),
        status: RunStatus::Running,
        error: None,
        master_seed: spec.master_seed,
        run_index: spec.run_index,
        run_seed: spec.config.seed,
        regime: spec.config.regime,
        n_seasons: spec.config.n_seasons,
        fitness_mode: spec.config.fitness_mode,
        checkpoint_every: spec.checkpoint_every,
        generations_completed: 0,
        config_sha256: config_hash(&spec.config),
        config: spec.config.clone(),
    };
    let mut files = RunFiles {
        dir: spec.dir.clone(),
        manifest,
    };
    files.save_manifest()?;
    let ckpt = files.path(CHECKPOINT);
    if ckpt.exists() {
        std::fs::remove_file(&ckpt).map_err(HarnessError::io(&ckpt))?;
    }
    table::create_table::<RecordRow>(&files.path(RECORDS))?;
    table::create_table::<TimingRow>(&files.path(TIMING))?;
    table::create_table::<ScatterRow>(&files.path(SCATTER))?;
    std::fs::write(files.path(CHAMPIONS), "").map_err(HarnessError::io(files.path(CHAMPIONS)))?;
    let evo = match Evolution::new(spec.config.clone()) {
        Ok(e) => e,
        Err(e) => {
            files.manifest.status = RunStatus::Failed;
            files.manifest.error = Some(e.to_string());
            files.save_manifest()?;
            return Err(e.into());
        }
    };
    drive(&mut files, evo)
}

/// Continue a run from its latest checkpoint. Output written after that
/// checkpoint is discarded and regenerated, so the result matches an
/// uninterrupted run. Without a checkpoint the run restarts.
pub fn resume_run(dir: &Path) -> Result<RunSummary> {
    let manifest: Manifest = table::read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(HarnessError::FormatVersion {
            path: dir.join(MANIFEST),
            found: Some(manifest.format_version.to_string()),
            expected: FORMAT_VERSION,
        });
    }
    let ckpt = dir.join(CHECKPOINT);
    if !ckpt.exists() {
        let spec = RunSpec {
            master_seed: manifest.master_seed,
            run_index: manifest.run_index,
            checkpoint_every: manifest.checkpoint_every,
            dir: dir.to_path_buf(),
            config: manifest.config,
        };
        return execute_run(&spec);
    }
    let evo: Evolution = table::read_json(&ckpt)?;
    if evo.config != manifest.config {
        return Err(HarnessError::Config(format!(
            "{}: checkpoint configuration differs from manifest",
            dir.display()
        )));
    }
    let mut files = RunFiles {
        dir: dir.to_path_buf(),
        manifest,
    };
    files.truncate_to(evo.generation)?;
    files.manifest.status = RunStatus::Running;
    files.manifest.error = None;
    files.manifest.generations_completed = evo.generation;
    files.save_manifest()?;
    drive(&mut files, evo)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub fitness_mode: String,
    pub regime: String,
    pub n_seasons: usize,
    pub runs: usize,
    pub completed: usize,
    pub median_best_fitness: f64,
    pub median_best_task_performance: f64,
    pub median_best_n_s: f64,
    pub median_best_n_c: f64,
    pub mean_best_fitness: f64,
    pub mean_best_task_performance: f64,
    pub mean_best_n_s: f64,
    pub mean_best_n_c: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub root: PathBuf,
    pub runs: Vec<(RunSpec, Result<RunSummary>)>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|(_, r)| r.is_err()).count()
    }

    pub fn into_result(self) -> Result<Self> {
        let failed = self.failed();
        if failed > 0 {
            Err(HarnessError::PartialFailure {
                failed,
                total: self.runs.len(),
            })
        } else {
            Ok(self)
        }
    }
}

/// Every run of the grid `modes × regimes × environments × runs`.
pub fn plan(settings: &Settings, modes: &[FitnessMode]) -> Vec<RunSpec> {
    let e = &settings.experiment;
    let mut specs = Vec::new();
    for &mode in modes {
        for &regime in &e.regimes {
            for &n in &e.environments {
                for idx in 0..e.runs_per_cell {
                    specs.push(RunSpec::new(
                        &e.output,
                        &settings.evolution,
                        e.master_seed,
                        regime,
                        n,
                        mode,
                        idx,
                        e.checkpoint_every,
                    ));
                }
            }
        }
    }
    specs
}

/// Run every planned run (concurrently up to `workers`), then write the
/// cross-run summary. Failed runs are reported, not propagated.
pub fn run_experiment(settings: &Settings, modes: &[FitnessMode]) -> Result<ExperimentReport> {
    let root = settings.experiment.output.clone();
    std::fs::create_dir_all(&root).map_err(HarnessError::io(&root))?;
    table::write_json_atomic(&root.join("experiment.json"), settings)?;
    let specs = plan(settings, modes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.experiment.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| specs.par_iter().map(execute_run).collect());
    let runs: Vec<_> = specs.into_iter().zip(results).collect();
    let summary = summarize(&runs);
    table::write_table(&root.join(SUMMARY), &summary)?;
    Ok(ExperimentReport { root, runs, summary })
}

fn summarize(runs: &[(RunSpec, Result<RunSummary>)]) -> Vec<SummaryRow> {
    let finals: Vec<_> = runs
        .iter()
        .map(|(s, r)| {
            let key = (s.config.fitness_mode, s.config.regime, s.config.n_seasons);
            (key, r.as_ref().ok().map(|x| x.final_record.clone()))
        })
        .collect();
    summary_rows(&finals)
}

type CellKey = (FitnessMode, EnergyRegime, usize);

/// One summary row per cell, in order of first appearance.
pub fn summary_rows(finals: &[(CellKey, Option<RecordRow>)]) -> Vec<SummaryRow> {
    let mut cells: Vec<CellKey> = Vec::new();
    for (key, _) in finals {
        if !cells.contains(key) {
            cells.push(*key);
        }
    }
    cells
        .into_iter()
        .map(|key| {
            let in_cell: Vec<&Option<RecordRow>> = finals.iter().filter(|(k, _)| *k == key).map(|(_, r)| r).collect();
            let done: Vec<&RecordRow> = in_cell.iter().filter_map(|r| r.as_ref()).collect();
            let col = |f: fn(&RecordRow) -> f64| done.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let fit = col(|r| r.best_fitness);
            let perf = col(|r| r.best_task_performance);
            let ns = col(|r| r.best_n_s as f64);
            let nc = col(|r| r.best_n_c);
            let (mode, regime, n) = key;
            SummaryRow {
                fitness_mode: mode.to_string(),
                regime: regime.to_string(),
                n_seasons: n,
                runs: in_cell.len(),
                completed: done.len(),
                median_best_fitness: median(&fit),
                median_best_task_performance: median(&perf),
                median_best_n_s: median(&ns),
                median_best_n_c: median(&nc),
                mean_best_fitness: mean(&fit),
                mean_best_task_performance: mean(&perf),
                mean_best_n_s: mean(&ns),
                mean_best_n_c: mean(&nc),
            }
        })
        .collect()
}

/// Rebuild `summary.csv` from the run directories below `root`.
pub fn summarize_dir(root: &Path) -> Result<Vec<SummaryRow>> {
    let mut finals = Vec::new();
    for dir in find_runs(root)? {
        let m: Manifest = table::read_json(&dir.join(MANIFEST))?;
        let last = if m.status == RunStatus::Complete {
            table::read_table::<RecordRow>(&dir.join(RECORDS))?.pop()
        } else {
            None
        };
        finals.push(((m.fitness_mode, m.regime, m.n_seasons), last));
    }
    let rows = summary_rows(&finals);
    table::write_table(&root.join(SUMMARY), &rows)?;
    Ok(rows)
}

/// Every run directory (one holding a manifest) below `root`.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(MANIFEST).is_file() {
            out.push(dir);
            continue;
        }
        let entries = std::fs::read_dir(&dir).map_err(HarnessError::io(&dir))?;
        for entry in entries {
            let path = entry.map_err(HarnessError::io(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
