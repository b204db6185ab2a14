//! Statistical battery over the final generation of task-mode runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use neuroevo_core::evolution::{EnergyRegime, FitnessMode};
use neuroevo_core::stats::{self, StatsError};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::run::{self, median, Manifest, RecordRow};
use crate::table;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub run: usize,
    pub n_seasons: usize,
    pub regime: String,
    pub fitness: f64,
    pub task_performance: f64,
    pub n_s: f64,
    pub n_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Fitness,
    TaskPerformance,
    NS,
    NC,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Fitness, Metric::TaskPerformance, Metric::NS, Metric::NC];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fitness => "fitness",
            Metric::TaskPerformance => "task_performance",
            Metric::NS => "n_s",
            Metric::NC => "n_c",
        }
    }

    pub fn of(self, r: &TidyRow) -> f64 {
        match self {
            Metric::Fitness => r.fitness,
            Metric::TaskPerformance => r.task_performance,
            Metric::NS => r.n_s,
            Metric::NC => r.n_c,
        }
    }

    fn of_record(self, r: &RecordRow) -> f64 {
        match self {
            Metric::Fitness => r.best_fitness,
            Metric::TaskPerformance => r.best_task_performance,
            Metric::NS => r.best_n_s as f64,
            Metric::NC => r.best_n_c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KruskalRow {
    pub regime: String,
    pub metric: String,
    pub groups: usize,
    pub n: usize,
    pub h: f64,
    pub p_value: f64,
    pub eta2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DunnRow {
    pub regime: String,
    pub metric: String,
    pub seasons_a: usize,
    pub seasons_b: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpearmanRow {
    pub regime: String,
    /// `n_seasons` (across environments) or `generation` (trend).
    pub variable: String,
    /// Environment of a trend test; `all` when pooled.
    pub cell: String,
    pub metric: String,
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub n_seasons: usize,
    pub metric: String,
    pub n_nec: usize,
    pub n_ec: usize,
    pub median_nec: f64,
    pub median_ec: f64,
    /// U of the NEC sample.
    pub u: f64,
    pub p_value: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MediationRow {
    /// `a_s<n>` contrasts against the baseline, `b`, `ab_s<n>`, or `ab`.
    pub term: String,
    pub estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_bootstrap: usize,
    pub n_degenerate: usize,
    pub interval: String,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            n_boot: 5000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

/// Everything analyze writes, kept in memory for callers and tests.
#[derive(Debug, Default)]
pub struct Battery {
    pub tidy: Vec<TidyRow>,
    pub kruskal: Vec<KruskalRow>,
    pub dunn: Vec<DunnRow>,
    pub spearman: Vec<SpearmanRow>,
    pub energy: Vec<EnergyRow>,
    pub mediation: Vec<MediationRow>,
    pub warnings: Vec<String>,
}

/// Per-generation records of every task-mode run below `root`.
pub fn load_task_records(root: &Path) -> Result<Vec<(Manifest, Vec<RecordRow>)>> {
    let mut out = Vec::new();
    for dir in run::find_runs(root)? {
        let manifest: Manifest = table::read_json(&dir.join(run::MANIFEST))?;
        if manifest.fitness_mode != FitnessMode::Task {
            continue;
        }
        let records: Vec<RecordRow> = table::read_table(&dir.join(run::RECORDS))?;
        out.push((manifest, records));
    }
    Ok(out)
}

/// Final-generation tidy rows of complete runs.
pub fn tidy_from_records(runs: &[(Manifest, Vec<RecordRow>)], warnings: &mut Vec<String>) -> Vec<TidyRow> {
    let mut rows = Vec::new();
    for (m, records) in runs {
        if m.status != run::RunStatus::Complete {
            warnings.push(format!(
                "{}-s{} run {}: status {:?}, excluded",
                m.regime, m.n_seasons, m.run_index, m.status
            ));
            continue;
        }
        let Some(last) = records.last() else { continue };
        rows.push(TidyRow {
            run: m.run_index,
            n_seasons: m.n_seasons,
            regime: m.regime.to_string(),
            fitness: last.best_fitness,
            task_performance: last.best_task_performance,
            n_s: last.best_n_s as f64,
            n_c: last.best_n_c,
        });
    }
    rows.sort_by(|a, b| (&a.regime, a.n_seasons, a.run).cmp(&(&b.regime, b.n_seasons, b.run)));
    rows
}

fn by_seasons<'a>(rows: impl Iterator<Item = &'a TidyRow>) -> BTreeMap<usize, Vec<&'a TidyRow>> {
    let mut m: BTreeMap<usize, Vec<&TidyRow>> = BTreeMap::new();
    for r in rows {
        m.entry(r.n_seasons).or_default().push(r);
    }
    m
}

fn skip(warnings: &mut Vec<String>, what: String, e: StatsError) {
    warnings.push(format!("{what}: skipped ({e})"));
}

/// Run the battery. `trends` holds per-generation records for the
/// generation-trend tests; pass an empty slice when only final values are
/// known.
pub fn run_battery(tidy: Vec<TidyRow>, trends: &[(Manifest, Vec<RecordRow>)], opts: &AnalyzeOptions) -> Battery {
    let mut b = Battery {
        tidy,
        ..Battery::default()
    };
    let regimes: Vec<String> = EnergyRegime::ALL.iter().map(|r| r.to_string()).collect();

    for regime in &regimes {
        let cells = by_seasons(b.tidy.iter().filter(|r| &r.regime == regime));
        if cells.is_empty() {
            b.warnings.push(format!("{regime}: no runs"));
            continue;
        }
        let seasons: Vec<usize> = cells.keys().copied().collect();
        for metric in Metric::ALL {
            let groups: Vec<Vec<f64>> = cells.values().map(|v| v.iter().map(|r| metric.of(r)).collect()).collect();
            let what = format!("{regime} {} across seasons", metric.name());
            match stats::kruskal_wallis(&groups) {
                Ok(t) => b.kruskal.push(KruskalRow {
                    regime: regime.clone(),
                    metric: metric.name().into(),
                    groups: groups.len(),
                    n: groups.iter().map(Vec::len).sum(),
                    h: t.statistic,
                    p_value: t.p_value,
                    eta2: t.effect_size,
                }),
                Err(e) => skip(&mut b.warnings, format!("Kruskal-Wallis {what}"), e),
            }
            match stats::dunn_posthoc(&groups) {
                Ok(d) => {
                    for i in 0..groups.len() {
                        for j in i + 1..groups.len() {
                            b.dunn.push(DunnRow {
                                regime: regime.clone(),
                                metric: metric.name().into(),
                                seasons_a: seasons[i],
                                seasons_b: seasons[j],
                                z: d.z[i][j],
                                p_raw: d.p_raw[i][j],
                                p_adjusted: d.p_adjusted[i][j],
                            });
                        }
                    }
                }
                Err(e) => skip(&mut b.warnings, format!("Dunn {what}"), e),
            }
            let xs: Vec<f64> = cells.iter().flat_map(|(&n, v)| v.iter().map(move |_| n as f64)).collect();
            let ys: Vec<f64> = groups.concat();
            match stats::spearman(&xs, &ys) {
                Ok(t) => b.spearman.push(SpearmanRow {
                    regime: regime.clone(),
                    variable: "n_seasons".into(),
                    cell: "all".into(),
                    metric: metric.name().into(),
                    n: xs.len(),
                    rho: t.statistic,
                    p_value: t.p_value,
                }),
                Err(e) => skip(&mut b.warnings, format!("Spearman {what}"), e),
            }
        }
    }

    trend_tests(&mut b, trends);
    energy_tests(&mut b);
    mediation(&mut b, opts);
    b
}

fn trend_tests(b: &mut Battery, trends: &[(Manifest, Vec<RecordRow>)]) {
    for regime in EnergyRegime::ALL {
        let runs: Vec<&(Manifest, Vec<RecordRow>)> = trends.iter().filter(|(m, _)| m.regime == regime).collect();
        if runs.is_empty() {
            continue;
        }
        let mut cells: Vec<Option<usize>> = vec![None];
        let mut seasons: Vec<usize> = runs.iter().map(|(m, _)| m.n_seasons).collect();
        seasons.sort_unstable();
        seasons.dedup();
        cells.extend(seasons.into_iter().map(Some));
        for cell in cells {
            let records: Vec<&RecordRow> = runs
                .iter()
                .filter(|(m, _)| cell.is_none_or(|n| m.n_seasons == n))
                .flat_map(|(_, r)| r.iter())
                .collect();
            let label = cell.map_or_else(|| "all".to_string(), |n| n.to_string());
            for metric in Metric::ALL {
                let x: Vec<f64> = records.iter().map(|r| r.generation as f64).collect();
                let y: Vec<f64> = records.iter().map(|r| metric.of_record(r)).collect();
                match stats::spearman(&x, &y) {
                    Ok(t) => b.spearman.push(SpearmanRow {
                        regime: regime.to_string(),
                        variable: "generation".into(),
                        cell: label.clone(),
                        metric: metric.name().into(),
                        n: x.len(),
                        rho: t.statistic,
                        p_value: t.p_value,
                    }),
                    Err(e) => skip(
                        &mut b.warnings,
                        format!("Spearman {regime} s{label} {} over generations", metric.name()),
                        e,
                    ),
                }
            }
        }
    }
}

fn energy_tests(b: &mut Battery) {
    let nec = by_seasons(b.tidy.iter().filter(|r| r.regime == EnergyRegime::Nec.to_string()));
    let ec = by_seasons(b.tidy.iter().filter(|r| r.regime == EnergyRegime::Ec.to_string()));
    let mut seasons: Vec<usize> = nec.keys().chain(ec.keys()).copied().collect();
    seasons.sort_unstable();
    seasons.dedup();
    for n in seasons {
        let (Some(a), Some(c)) = (nec.get(&n), ec.get(&n)) else {
            b.warnings.push(format!("NEC vs EC at {n} seasons: one regime missing, skipped"));
            continue;
        };
        for metric in Metric::ALL {
            let xa: Vec<f64> = a.iter().map(|r| metric.of(r)).collect();
            let xc: Vec<f64> = c.iter().map(|r| metric.of(r)).collect();
            match stats::mann_whitney_u(&xa, &xc) {
                Ok(t) => b.energy.push(EnergyRow {
                    n_seasons: n,
                    metric: metric.name().into(),
                    n_nec: xa.len(),
                    n_ec: xc.len(),
                    median_nec: median(&xa),
                    median_ec: median(&xc),
                    u: t.statistic,
                    p_value: t.p_value,
                    effect: t.effect_size.unwrap_or(f64::NAN),
                }),
                Err(e) => skip(&mut b.warnings, format!("NEC vs EC {} at {n} seasons", metric.name()), e),
            }
        }
    }
}

fn mediation(b: &mut Battery, opts: &AnalyzeOptions) {
    let ec: Vec<&TidyRow> = b.tidy.iter().filter(|r| r.regime == EnergyRegime::Ec.to_string()).collect();
    let seasons: Vec<u32> = ec.iter().map(|r| r.n_seasons as u32).collect();
    let mediator: Vec<f64> = ec.iter().map(|r| r.task_performance).collect();
    let outcome: Vec<f64> = ec.iter().map(|r| r.n_s).collect();
    let res = match stats::bootstrap_mediation(&seasons, &mediator, &outcome, opts.n_boot, opts.seed) {
        Ok(r) => r,
        Err(e) => return skip(&mut b.warnings, "EC mediation".into(), e),
    };
    let row = |term: String, estimate: f64, ci: Option<(f64, f64)>| MediationRow {
        term,
        estimate,
        ci_low: ci.map(|c| c.0),
        ci_high: ci.map(|c| c.1),
        n_bootstrap: res.n_bootstrap,
        n_degenerate: res.n_degenerate,
        interval: res.interval.clone(),
    };
    let levels = &res.levels[1..];
    let mut rows: Vec<MediationRow> = levels
        .iter()
        .zip(&res.a_paths)
        .map(|(l, &a)| row(format!("a_s{l}"), a, None))
        .collect();
    rows.push(row("b".into(), res.b_path, None));
    rows.extend(levels.iter().zip(&res.ab_levels).map(|(l, &ab)| row(format!("ab_s{l}"), ab, None)));
    rows.push(row("ab".into(), res.indirect_ab, Some((res.ci_low, res.ci_high))));
    b.mediation = rows;
}

/// Where analyze reads from: an experiment tree or a tidy CSV.
pub fn load_input(input: &Path) -> Result<(Vec<TidyRow>, Vec<(Manifest, Vec<RecordRow>)>, Vec<String>)> {
    let mut warnings = Vec::new();
    if input.is_file() {
        let tidy: Vec<TidyRow> = table::read_table(input)?;
        warnings.push("tidy input: generation-trend tests unavailable".into());
        return Ok((tidy, Vec::new(), warnings));
    }
    if !input.is_dir() {
        return Err(HarnessError::MissingInput(input.display().to_string()));
    }
    let runs = load_task_records(input)?;
    if runs.is_empty() {
        return Err(HarnessError::MissingInput(format!("{}: no task-mode runs", input.display())));
    }
    let tidy = tidy_from_records(&runs, &mut warnings);
    Ok((tidy, runs, warnings))
}

/// Load, run the battery and write every table into `out`.
pub fn analyze(input: &Path, out: &Path, opts: &AnalyzeOptions) -> Result<Battery> {
    let (tidy, runs, mut warnings) = load_input(input)?;
    let mut battery = run_battery(tidy, &runs, opts);
    warnings.append(&mut battery.warnings);
    battery.warnings = warnings;
    write_battery(&battery, out)?;
    Ok(battery)
}

pub fn write_battery(b: &Battery, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let p = |name: &str| out.join(name);
    table::write_table(&p("tidy.csv"), &b.tidy)?;
    table::write_table(&p("kruskal.csv"), &b.kruskal)?;
    table::write_table(&p("dunn.csv"), &b.dunn)?;
    table::write_table(&p("spearman.csv"), &b.spearman)?;
    table::write_table(&p("energy_impact.csv"), &b.energy)?;
    table::write_table(&p("mediation.csv"), &b.mediation)?;
    let text: String = b.warnings.iter().map(|w| format!("{w}\n")).collect();
    std::fs::write(p("warnings.txt"), text).map_err(HarnessError::io(p("warnings.txt")))?;
    Ok(["tidy.csv", "kruskal.csv", "dunn.csv", "spearman.csv", "energy_impact.csv", "mediation.csv", "warnings.txt"]
        .iter()
        .map(|n| p(n))
        .collect())
}
