use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neuroevo_core::evolution::{Evolution, EvolutionConfig, FitnessMode};
use neuroevo_harness::run::{self, Manifest, RecordRow, RunSpec, RunStatus};
use neuroevo_harness::table;

const TINY: &str = r#"
profile = "desk"
[experiment]
master_seed = 5
environments = [1, 2]
runs_per_cell = 2
checkpoint_every = 2
[evolution]
population_size = 8
parent_fraction = 0.25
generations = 3
learning_episodes = 10
eval_episodes = 3
train_seed_count = 20
eval_seed_count = 5
"#;

fn neuroevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuroevo")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn experiment_layout_determinism_and_downstream_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = neuroevo(&["experiment", "--config", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let runs = run::find_runs(&a).unwrap();
    assert_eq!(runs.len(), 2 * 2 * 2);
    for dir in &runs {
        let rel = dir.strip_prefix(&a).unwrap();
        assert_eq!(read(dir.join("records.csv")), read(b.join(rel).join("records.csv")), "{rel:?}");
        assert_eq!(read(dir.join("champions.jsonl")).lines().count(), 3);
        let m: Manifest = table::read_json(&dir.join("manifest.json")).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert_eq!(m.generations_completed, 3);
        assert_eq!(m.config_sha256, run::config_hash(&m.config));
        assert!(read(dir.join("records.csv")).starts_with("# format_version=1\n"));
    }
    let summary: Vec<run::SummaryRow> = table::read_table(&a.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 4);
    assert!(summary.iter().all(|s| s.completed == 2));

    let an = tmp.path().join("an");
    let o = neuroevo(&["analyze", a.to_str().unwrap(), "-o", an.to_str().unwrap(), "--n-boot", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["tidy.csv", "kruskal.csv", "dunn.csv", "spearman.csv", "energy_impact.csv", "mediation.csv"] {
        assert!(read(an.join(f)).starts_with("# format_version=1\n"), "{f}");
    }
    assert!(read(an.join("kruskal.csv")).lines().nth(1).unwrap().contains("eta2"));

    // a tidy CSV is accepted as input too
    let an2 = tmp.path().join("an2");
    let o = neuroevo(&["analyze", an.join("tidy.csv").to_str().unwrap(), "-o", an2.to_str().unwrap(), "--n-boot", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(an.join("kruskal.csv")), read(an2.join("kruskal.csv")));

    let pd = tmp.path().join("pd");
    let o = neuroevo(&["plotdata", a.to_str().unwrap(), "-o", pd.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    // header + version line + runs × cells × metrics
    assert_eq!(read(pd.join("boxplot.csv")).lines().count(), 2 + 8 * 4);
    let traj = read(pd.join("trajectories.csv"));
    for g in 0..3 {
        assert!(traj.contains(&format!(",{g},n_s,")));
    }
    let scatter = read(pd.join("scatter.csv"));
    assert_eq!(scatter.lines().nth(1).unwrap(), "mode,generation,n_s,n_c");
}

#[test]
fn randomwalk_writes_both_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("rw");
    let o = neuroevo(&["randomwalk", "--config", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run::find_runs(&out.join("random")).unwrap().len(), 2);
    assert_eq!(run::find_runs(&out.join("random_size_penalty")).unwrap().len(), 2);
    let rows: Vec<RecordRow> = table::read_table(&out.join("random/NEC-s1/run-00/records.csv")).unwrap();
    assert!(rows.iter().all(|r| r.best_task_performance == 0.0));
    // paired seeds across modes
    let m0: Manifest = table::read_json(&out.join("random/NEC-s1/run-01/manifest.json")).unwrap();
    let m1: Manifest = table::read_json(&out.join("random_size_penalty/NEC-s1/run-01/manifest.json")).unwrap();
    assert_eq!(m0.run_seed, m1.run_seed);
    let pd = tmp.path().join("pd");
    assert_eq!(code(&neuroevo(&["plotdata", out.to_str().unwrap(), "-o", pd.to_str().unwrap(), "--population"])), 0);
    let scatter = read(pd.join("scatter.csv"));
    assert!(scatter.contains("\nrandom-NEC-s1,") && scatter.contains("\nrandom_size_penalty-NEC-s1,"));
    assert_eq!(scatter.lines().count(), 2 + 4 * 3 * 8);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = EvolutionConfig {
        population_size: 8,
        parent_fraction: 0.25,
        generations: 4,
        learning_episodes: 10,
        eval_episodes: 3,
        train_seed_count: 20,
        eval_seed_count: 5,
        seed: 99,
        ..EvolutionConfig::default()
    };
    let spec = |dir: PathBuf| RunSpec {
        master_seed: 0,
        run_index: 0,
        config: config.clone(),
        checkpoint_every: 2,
        dir,
    };
    let whole = spec(tmp.path().join("whole"));
    run::execute_run(&whole).unwrap();

    // Simulate a kill after generation 3 was written but before its checkpoint.
    let cut = spec(tmp.path().join("cut"));
    run::execute_run(&cut).unwrap();
    let mut evo = Evolution::new(config.clone()).unwrap();
    evo.step_generation().unwrap();
    evo.step_generation().unwrap();
    table::write_json_atomic(&cut.dir.join("checkpoint.json"), &evo).unwrap();
    let records = read(cut.dir.join("records.csv"));
    let partial: String = records.lines().take(2 + 3).map(|l| format!("{l}\n")).collect();
    std::fs::write(cut.dir.join("records.csv"), partial).unwrap();
    let mut m: Manifest = table::read_json(&cut.dir.join("manifest.json")).unwrap();
    m.status = RunStatus::Running;
    table::write_json_atomic(&cut.dir.join("manifest.json"), &m).unwrap();

    let o = neuroevo(&["resume", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["records.csv", "champions.jsonl", "scatter.csv", "checkpoint.json"] {
        assert_eq!(read(whole.dir.join(f)), read(cut.dir.join(f)), "{f}");
    }
    let m: Manifest = table::read_json(&cut.dir.join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(code(&neuroevo(&["analyze", missing.to_str().unwrap()])), 4);
    assert_eq!(code(&neuroevo(&["plotdata", missing.to_str().unwrap()])), 4);
    assert_eq!(code(&neuroevo(&["metrics", missing.to_str().unwrap()])), 4);
    std::fs::create_dir(&missing).unwrap();
    assert_eq!(code(&neuroevo(&["analyze", missing.to_str().unwrap()])), 4);

    let stale = tmp.path().join("old.csv");
    std::fs::write(&stale, "# format_version=0\nrun,n_seasons,regime,fitness,task_performance,n_s,n_c\n").unwrap();
    assert_eq!(code(&neuroevo(&["analyze", stale.to_str().unwrap()])), 4);

    let cfg = tiny_config(tmp.path());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&neuroevo(&["experiment", "--config", c, "--set", "experiment.environments=[7]"])), 2);
    assert_eq!(code(&neuroevo(&["experiment", "--config", c, "--set", "evolution.bogus=1"])), 2);
    assert_eq!(code(&neuroevo(&["experiment", "--profile", "huge"])), 2);
    assert_eq!(code(&neuroevo(&["evolve", "--config", c, "--seasons", "9"])), 2);

    // one run directory is blocked by a file, the others complete
    let out = tmp.path().join("partial");
    let blocked = run::run_dir(&out, FitnessMode::Task, "EC".parse().unwrap(), 1, 1);
    std::fs::create_dir_all(blocked.parent().unwrap()).unwrap();
    std::fs::write(&blocked, "").unwrap();
    let o = neuroevo(&["evolve", "--config", c, "--regime", "EC", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Vec<run::SummaryRow> = table::read_table(&out.join("summary.csv")).unwrap();
    assert_eq!((summary[0].runs, summary[0].completed), (2, 1));
}

#[test]
fn metrics_prints_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("g.txt");
    std::fs::write(&edges, "0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3\n").unwrap();
    let o = neuroevo(&["metrics", edges.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# format_version=1");
    assert_eq!(lines[1], "n_s,modularity,efficiency,n_c,n_nodes,n_edges");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("13,0.357142857142857"));
}
