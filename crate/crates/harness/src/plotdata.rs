//! Plot-ready tables: final-generation box plots, per-generation
//! trajectories and the size-versus-structure scatter.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::run::{self, mean, Manifest, RecordRow, ScatterRow};
use crate::table;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub fitness_mode: String,
    pub regime: String,
    pub n_seasons: usize,
    pub run: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub fitness_mode: String,
    pub regime: String,
    pub n_seasons: usize,
    pub generation: usize,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotScatterRow {
    pub mode: String,
    pub generation: usize,
    pub n_s: usize,
    pub n_c: f64,
}

const METRICS: [(&str, fn(&RecordRow) -> f64); 4] = [
    ("fitness", |r| r.best_fitness),
    ("task_performance", |r| r.best_task_performance),
    ("n_s", |r| r.best_n_s as f64),
    ("n_c", |r| r.best_n_c),
];

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Scatter label: fitness mode, regime and environment of the run.
pub fn mode_label(m: &Manifest) -> String {
    format!("{}-{}-s{}", m.fitness_mode, m.regime, m.n_seasons)
}

#[derive(Debug, Default)]
pub struct PlotData {
    pub boxplot: Vec<BoxRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub scatter: Vec<PlotScatterRow>,
}

/// Build every table from the runs below `root`. With `population` the
/// scatter holds every individual; otherwise the fittest per generation.
pub fn plotdata(root: &Path, population: bool) -> Result<PlotData> {
    let dirs = if root.is_dir() { run::find_runs(root)? } else { Vec::new() };
    if dirs.is_empty() {
        return Err(HarnessError::MissingInput(format!("{}: no runs", root.display())));
    }
    let mut out = PlotData::default();
    type Key = (String, String, usize);
    let mut cells: BTreeMap<Key, Vec<Vec<RecordRow>>> = BTreeMap::new();
    for dir in dirs {
        let m: Manifest = table::read_json(&dir.join(run::MANIFEST))?;
        let records: Vec<RecordRow> = table::read_table(&dir.join(run::RECORDS))?;
        if let Some(last) = records.last() {
            for (name, f) in METRICS {
                out.boxplot.push(BoxRow {
                    fitness_mode: m.fitness_mode.to_string(),
                    regime: m.regime.to_string(),
                    n_seasons: m.n_seasons,
                    run: m.run_index,
                    metric: name.into(),
                    value: f(last),
                });
            }
        }
        let label = mode_label(&m);
        if population {
            let rows: Vec<ScatterRow> = table::read_table(&dir.join(run::SCATTER))?;
            out.scatter.extend(rows.into_iter().map(|r| PlotScatterRow {
                mode: label.clone(),
                generation: r.generation,
                n_s: r.n_s,
                n_c: r.n_c,
            }));
        } else {
            out.scatter.extend(records.iter().map(|r| PlotScatterRow {
                mode: label.clone(),
                generation: r.generation,
                n_s: r.best_n_s,
                n_c: r.best_n_c,
            }));
        }
        cells
            .entry((m.fitness_mode.to_string(), m.regime.to_string(), m.n_seasons))
            .or_default()
            .push(records);
    }
    for ((mode, regime, n), runs) in &cells {
        let generations = runs.iter().map(Vec::len).max().unwrap_or(0);
        for (name, f) in METRICS {
            for g in 0..generations {
                let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(g)).map(f).collect();
                out.trajectories.push(TrajectoryRow {
                    fitness_mode: mode.clone(),
                    regime: regime.clone(),
                    n_seasons: *n,
                    generation: g,
                    metric: name.into(),
                    runs: xs.len(),
                    mean: mean(&xs),
                    std: sample_std(&xs),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_plotdata(data: &PlotData, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    table::write_table(&out.join("boxplot.csv"), &data.boxplot)?;
    table::write_table(&out.join("trajectories.csv"), &data.trajectories)?;
    table::write_table(&out.join("scatter.csv"), &data.scatter)
}
