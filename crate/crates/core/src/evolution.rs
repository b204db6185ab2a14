//! Generational loop: learn, evaluate, select, reproduce.
//!
//! Every random draw comes from a stream derived from the run seed plus
//! (purpose, generation, individual index), so evaluation order and thread
//! count never change a result, and resuming from a serialized [`Evolution`]
//! continues bit-exactly.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::{complexity_report, ComplexityReport};
use crate::genome::{Genome, InnovationRegistry, MutationRates, INITIAL_SIZE};
use crate::gridworld::{ActionMode, WorldConfig, WorldError};
use crate::learner::{self, EvalSetup, LearnError, LearnSetup};
use crate::seeds::{self, purpose};

/// Per-step energy of the constant regime.
pub const BASE_ENERGY: f64 = -0.01;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("individual {genome_id}: {source}")]
    Learn {
        genome_id: u64,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("run already finished")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyRegime {
    #[serde(rename = "NEC")]
    Nec,
    #[serde(rename = "EC")]
    Ec,
}

impl EnergyRegime {
    pub const ALL: [EnergyRegime; 2] = [EnergyRegime::Nec, EnergyRegime::Ec];

    /// Stable numeric tag used in seed derivation.
    pub fn tag(self) -> u64 {
        match self {
            EnergyRegime::Nec => 0,
            EnergyRegime::Ec => 1,
        }
    }
}

impl fmt::Display for EnergyRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyRegime::Nec => "NEC",
            EnergyRegime::Ec => "EC",
        })
    }
}

impl FromStr for EnergyRegime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NEC" => Ok(EnergyRegime::Nec),
            "EC" => Ok(EnergyRegime::Ec),
            other => Err(format!("unknown regime {other:?} (expected NEC or EC)")),
        }
    }
}

/// Per-step energy for a genome under `regime`.
pub fn energy_rate(regime: EnergyRegime, genome: &Genome) -> f64 {
    energy_for_size(regime, genome.ann_size())
}

pub fn energy_for_size(regime: EnergyRegime, n_s: usize) -> f64 {
    match regime {
        EnergyRegime::Nec => BASE_ENERGY,
        EnergyRegime::Ec => BASE_ENERGY * (n_s as f64 / INITIAL_SIZE as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    Task,
    Random,
    RandomSizePenalty,
}

impl FitnessMode {
    pub fn is_random(self) -> bool {
        !matches!(self, FitnessMode::Task)
    }
}

impl fmt::Display for FitnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitnessMode::Task => "task",
            FitnessMode::Random => "random",
            FitnessMode::RandomSizePenalty => "random_size_penalty",
        })
    }
}

impl FromStr for FitnessMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task" => Ok(FitnessMode::Task),
            "random" => Ok(FitnessMode::Random),
            "random_size_penalty" => Ok(FitnessMode::RandomSizePenalty),
            other => Err(format!("unknown fitness mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub elites: usize,
    pub parent_fraction: f64,
    pub regime: EnergyRegime,
    pub n_seasons: usize,
    pub fitness_mode: FitnessMode,
    pub size_penalty_alpha: f64,
    pub mutation: MutationRates,
    pub learning_episodes: usize,
    pub eval_episodes: usize,
    pub train_seed_count: usize,
    pub eval_seed_count: usize,
    pub eval_mode: ActionMode,
    /// Run lifetime learning even when fitness is random.
    pub learn_in_random_modes: bool,
    pub episode_length: usize,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 150,
            generations: 400,
            elites: 2,
            parent_fraction: 0.10,
            regime: EnergyRegime::Nec,
            n_seasons: 1,
            fitness_mode: FitnessMode::Task,
            size_penalty_alpha: 0.5,
            mutation: MutationRates::default(),
            learning_episodes: 1000,
            eval_episodes: 100,
            train_seed_count: 1000,
            eval_seed_count: 100,
            eval_mode: ActionMode::Sample,
            learn_in_random_modes: false,
            episode_length: 100,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    /// Small preset that finishes a run in seconds.
    pub fn desk() -> Self {
        Self {
            population_size: 24,
            generations: 30,
            learning_episodes: 50,
            eval_episodes: 20,
            ..Self::default()
        }
    }

    pub fn parent_count(&self) -> usize {
        ((self.parent_fraction * self.population_size as f64).round() as usize).max(1)
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            episode_length: self.episode_length,
            ..WorldConfig::with_seasons(self.n_seasons)
        }
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        let fail = |m: &str| Err(EvolutionError::Config(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.generations == 0 {
            return fail("generations must be positive");
        }
        if !(self.parent_fraction > 0.0 && self.parent_fraction <= 1.0) {
            return fail("parent_fraction must lie in (0, 1]");
        }
        if self.elites > self.parent_count() {
            return fail("elites must not exceed the parent count");
        }
        if self.elites >= self.population_size {
            return fail("elites must leave room for offspring");
        }
        if !self.mutation.is_valid() {
            return fail("mutation rates must lie in [0, 1]");
        }
        if !(self.size_penalty_alpha.is_finite() && self.size_penalty_alpha >= 0.0) {
            return fail("size_penalty_alpha must be non-negative");
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes must be positive");
        }
        if self.eval_seed_count < self.eval_episodes {
            return fail("eval_seed_count must cover eval_episodes");
        }
        if self.train_seed_count == 0 && self.learning_episodes > 0 {
            return fail("learning needs training seeds");
        }
        self.world().validate().map_err(|e| EvolutionError::Config(e.to_string()))
    }

    fn learns(&self) -> bool {
        !self.fitness_mode.is_random() || self.learn_in_random_modes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    /// `None` until evaluated; elites carry theirs forward.
    pub fitness: Option<f64>,
    pub task_performance: f64,
    pub complexity: ComplexityReport,
    pub diverged: bool,
}

impl Individual {
    pub fn new(genome: Genome, complexity_seed: u64) -> Self {
        let complexity = complexity_report(&genome, complexity_seed);
        Self {
            genome,
            fitness: None,
            task_performance: 0.0,
            complexity,
            diverged: false,
        }
    }

    pub fn fitness_or_min(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Higher fitness first; ties go to the lower genome id.
pub fn rank_order(a: &Individual, b: &Individual) -> Ordering {
    b.fitness_or_min()
        .total_cmp(&a.fitness_or_min())
        .then(a.genome.id.cmp(&b.genome.id))
}

/// Fitness in a random mode: `U(0,1)`, minus `alpha · N_S / 254` with the
/// size penalty. Task mode passes the evaluated fitness through.
pub fn assign_fitness(
    mode: FitnessMode,
    evaluated: f64,
    n_s: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> f64 {
    match mode {
        FitnessMode::Task => evaluated,
        FitnessMode::Random => rng.random::<f64>(),
        FitnessMode::RandomSizePenalty => {
            rng.random::<f64>() - alpha * n_s as f64 / INITIAL_SIZE as f64
        }
    }
}

/// Indices of the parents and elites, both in rank order.
pub fn select_parents(pop: &[Individual], n_parents: usize, n_elites: usize) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| rank_order(&pop[a], &pop[b]));
    let parents: Vec<usize> = order.iter().take(n_parents).copied().collect();
    let elites = order.iter().take(n_elites).copied().collect();
    (parents, elites)
}

/// Breed `count` offspring: two parents drawn uniformly with replacement,
/// crossover with the fitter first, then mutation.
pub fn reproduce(
    pop: &[Individual],
    parents: &[usize],
    count: usize,
    rates: &MutationRates,
    next_id: &mut u64,
    registry: &mut InnovationRegistry,
    rng: &mut impl Rng,
) -> Vec<Genome> {
    assert!(!parents.is_empty(), "reproduction needs parents");
    (0..count)
        .map(|_| {
            let a = &pop[parents[rng.random_range(0..parents.len())]];
            let b = &pop[parents[rng.random_range(0..parents.len())]];
            let (fitter, other) = if rank_order(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
            let mut child = Genome::crossover(&fitter.genome, &other.genome, *next_id, rng);
            *next_id += 1;
            child.mutate(rates, rng, registry);
            child
        })
        .collect()
}

/// Fittest individual of one generation plus population summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
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

#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub record: GenerationRecord,
    pub champion: Genome,
    /// Every individual's (n_s, n_c) after evaluation.
    pub scatter: Vec<(usize, f64)>,
}

/// Resumable state of one run. `generation` is the next generation to
/// evaluate; the population holds its genomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub config: EvolutionConfig,
    pub generation: usize,
    pub population: Vec<Individual>,
    pub registry: InnovationRegistry,
    pub next_genome_id: u64,
    pub train_seeds: Vec<u64>,
    pub eval_seeds: Vec<u64>,
}

/// Disjoint training and evaluation episode seeds, fixed for a run.
pub fn split_seeds(run_seed: u64, n_train: usize, n_eval: usize) -> (Vec<u64>, Vec<u64>) {
    let mut rng = seeds::stream(run_seed, &[purpose::SEED_SPLIT]);
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::with_capacity(n_train + n_eval);
    while all.len() < n_train + n_eval {
        let s: u64 = rng.random();
        if seen.insert(s) {
            all.push(s);
        }
    }
    let eval = all.split_off(n_train);
    (all, eval)
}

/// Initial population: independent initial genomes with ids `0..n`.
pub fn init_population(config: &EvolutionConfig) -> Vec<Individual> {
    let cseed = complexity_seed(config.seed);
    (0..config.population_size)
        .map(|i| {
            let mut rng = seeds::stream(config.seed, &[purpose::INIT, i as u64]);
            Individual::new(Genome::initial(i as u64, &mut rng), cseed)
        })
        .collect()
}

fn complexity_seed(run_seed: u64) -> u64 {
    seeds::derive(run_seed, &[purpose::COMPLEXITY])
}

struct Scored {
    fitness: f64,
    task_performance: f64,
    diverged: bool,
}

impl Evolution {
    pub fn new(config: EvolutionConfig) -> Result<Self, EvolutionError> {
        config.validate()?;
        let (train_seeds, eval_seeds) = split_seeds(config.seed, config.train_seed_count, config.eval_seed_count);
        let population = init_population(&config);
        Ok(Self {
            next_genome_id: population.len() as u64,
            generation: 0,
            population,
            registry: InnovationRegistry::new(),
            train_seeds,
            eval_seeds,
            config,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.generation >= self.config.generations
    }

    fn score(&self, index: usize, ind: &Individual) -> Result<Scored, EvolutionError> {
        let cfg = &self.config;
        let gen = self.generation as u64;
        let energy = energy_rate(cfg.regime, &ind.genome);
        let mut scored = Scored {
            fitness: 0.0,
            task_performance: 0.0,
            diverged: false,
        };
        if cfg.learns() {
            let wrap = |source| EvolutionError::Learn {
                genome_id: ind.genome.id,
                source,
            };
            let learn = LearnSetup {
                world: cfg.world(),
                run_seed: cfg.seed,
                per_step_energy: energy,
                train_seeds: &self.train_seeds,
                episodes: cfg.learning_episodes,
            };
            let stream_seed = seeds::derive(cfg.seed, &[gen, index as u64]);
            let (nets, state) = learner::lifetime_learn(&ind.genome, &learn, stream_seed).map_err(wrap)?;
            if state.diverged() {
                scored.diverged = true;
            } else {
                let eval = EvalSetup {
                    world: cfg.world(),
                    run_seed: cfg.seed,
                    per_step_energy: energy,
                    eval_seeds: &self.eval_seeds[..cfg.eval_episodes],
                    mode: cfg.eval_mode,
                };
                match learner::evaluate(&nets, &state, &eval) {
                    Ok(e) => {
                        scored.fitness = e.fitness;
                        scored.task_performance = e.task_performance;
                    }
                    Err(LearnError::NonFiniteLogits) | Err(LearnError::Phenotype(_)) => scored.diverged = true,
                    Err(e) => return Err(wrap(e)),
                }
            }
        }
        if cfg.fitness_mode.is_random() {
            let mut rng = seeds::stream(cfg.seed, &[purpose::FITNESS, gen, index as u64]);
            scored.fitness = assign_fitness(
                cfg.fitness_mode,
                scored.fitness,
                ind.complexity.n_s,
                cfg.size_penalty_alpha,
                &mut rng,
            );
            scored.diverged = false;
        }
        Ok(scored)
    }

    fn evaluate_pending(&mut self) -> Result<(), EvolutionError> {
        let pending: Vec<usize> = (0..self.population.len())
            .filter(|&i| self.population[i].fitness.is_none())
            .collect();
        let this = &*self;
        let job = |&i: &usize| this.score(i, &this.population[i]);
        #[cfg(feature = "parallel")]
        let results: Vec<Result<Scored, EvolutionError>> = {
            use rayon::prelude::*;
            pending.par_iter().map(job).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Scored, EvolutionError>> = pending.iter().map(job).collect();

        for (&i, res) in pending.iter().zip(results) {
            let s = res?;
            let ind = &mut self.population[i];
            ind.fitness = Some(s.fitness);
            ind.task_performance = s.task_performance;
            ind.diverged = s.diverged;
        }
        // diverged learners take the generation's lowest observed fitness
        let floor = self
            .population
            .iter()
            .filter(|ind| !ind.diverged)
            .filter_map(|ind| ind.fitness)
            .min_by(f64::total_cmp)
            .unwrap_or(-1.0);
        for ind in self.population.iter_mut().filter(|ind| ind.diverged) {
            ind.fitness = Some(floor);
            ind.task_performance = 0.0;
        }
        Ok(())
    }

    fn summarize(&self) -> GenerationOutcome {
        let best = self
            .population
            .iter()
            .min_by(|a, b| rank_order(a, b))
            .expect("population is never empty");
        let n = self.population.len() as f64;
        let record = GenerationRecord {
            generation: self.generation,
            best_genome_id: best.genome.id,
            best_fitness: best.fitness_or_min(),
            best_task_performance: best.task_performance,
            best_n_s: best.complexity.n_s,
            best_n_c: best.complexity.n_c,
            best_modularity: best.complexity.modularity,
            best_efficiency: best.complexity.efficiency,
            mean_fitness: self.population.iter().map(|i| i.fitness_or_min()).sum::<f64>() / n,
            mean_n_s: self.population.iter().map(|i| i.complexity.n_s as f64).sum::<f64>() / n,
            diverged: self.population.iter().filter(|i| i.diverged).count(),
        };
        GenerationOutcome {
            record,
            champion: best.genome.clone(),
            scatter: self.population.iter().map(|i| (i.complexity.n_s, i.complexity.n_c)).collect(),
        }
    }

    fn advance_population(&mut self) {
        let cfg = &self.config;
        let (parents, elites) = select_parents(&self.population, cfg.parent_count(), cfg.elites);
        let mut rng = seeds::stream(cfg.seed, &[purpose::REPRODUCE, self.generation as u64]);
        let offspring = reproduce(
            &self.population,
            &parents,
            cfg.population_size - elites.len(),
            &cfg.mutation,
            &mut self.next_genome_id,
            &mut self.registry,
            &mut rng,
        );
        let cseed = complexity_seed(cfg.seed);
        let mut next: Vec<Individual> = elites.iter().map(|&i| self.population[i].clone()).collect();
        next.extend(offspring.into_iter().map(|g| Individual::new(g, cseed)));
        self.population = next;
    }

    /// Evaluate the current generation, record its champion and, unless it
    /// was the last one, breed the next.
    pub fn step_generation(&mut self) -> Result<GenerationOutcome, EvolutionError> {
        if self.is_finished() {
            return Err(EvolutionError::Finished);
        }
        self.evaluate_pending()?;
        let outcome = self.summarize();
        self.generation += 1;
        if !self.is_finished() {
            self.advance_population();
        }
        Ok(outcome)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<GenerationRecord>,
    pub champions: Vec<Genome>,
    pub final_population: Vec<Individual>,
}

/// Run every generation, calling `observe` after each.
pub fn run_evolution(
    config: EvolutionConfig,
    mut observe: impl FnMut(&Evolution, &GenerationOutcome),
) -> Result<RunOutput, EvolutionError> {
    let mut evo = Evolution::new(config)?;
    let mut records = Vec::new();
    let mut champions = Vec::new();
    while !evo.is_finished() {
        let out = evo.step_generation()?;
        observe(&evo, &out);
        records.push(out.record);
        champions.push(out.champion);
    }
    Ok(RunOutput {
        records,
        champions,
        final_population: evo.population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(mode: FitnessMode) -> EvolutionConfig {
        EvolutionConfig {
            population_size: 8,
            parent_fraction: 0.25,
            generations: 3,
            learning_episodes: 10,
            eval_episodes: 3,
            train_seed_count: 20,
            eval_seed_count: 5,
            fitness_mode: mode,
            seed: 17,
            ..EvolutionConfig::default()
        }
    }

    fn with_fitness(id: u64, f: f64) -> Individual {
        let mut ind = Individual::new(Genome::bare(id), 0);
        ind.fitness = Some(f);
        ind
    }

    #[test]
    fn energy_examples() {
        let g = Genome::initial(0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(energy_rate(EnergyRegime::Ec, &g), -0.01);
        assert_eq!(energy_rate(EnergyRegime::Ec, &g).to_bits(), energy_rate(EnergyRegime::Nec, &g).to_bits());
        assert_eq!(energy_for_size(EnergyRegime::Ec, 508), -0.02);
        assert_eq!(energy_for_size(EnergyRegime::Nec, 1000), -0.01);
    }

    #[test]
    fn full_scale_defaults() {
        let c = EvolutionConfig::default();
        assert_eq!((c.population_size, c.generations, c.elites, c.parent_count()), (150, 400, 2, 15));
        c.validate().unwrap();
        let d = EvolutionConfig::desk();
        assert_eq!((d.population_size, d.generations, d.learning_episodes, d.eval_episodes), (24, 30, 50, 20));
        assert_eq!(d.parent_count(), 2);
        d.validate().unwrap();
        let bad = EvolutionConfig { elites: 3, population_size: 20, ..EvolutionConfig::default() };
        assert!(matches!(bad.validate(), Err(EvolutionError::Config(_))));
    }

    #[test]
    fn random_fitness_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| assign_fitness(FitnessMode::Random, 0.0, 254, 0.5, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02);
        let u = 0.7;
        let small = assign_fitness(FitnessMode::RandomSizePenalty, 0.0, 254, 0.5, &mut ConstRng(u));
        let large = assign_fitness(FitnessMode::RandomSizePenalty, 0.0, 508, 0.5, &mut ConstRng(u));
        assert!(small > large);
        assert_eq!(assign_fitness(FitnessMode::Task, -0.37, 999, 0.5, &mut rng), -0.37);
    }

    // Rng whose f64 draws are a fixed value.
    struct ConstRng(f64);

    impl rand::RngCore for ConstRng {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            // rand maps the top 53 bits onto [0, 1)
            ((self.0 * (1u64 << 53) as f64) as u64) << 11
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn truncation_selection() {
        let pop: Vec<Individual> = (0..150).map(|i| with_fitness(i, (i + 1) as f64)).collect();
        let (parents, elites) = select_parents(&pop, 15, 2);
        let mut fit: Vec<f64> = parents.iter().map(|&i| pop[i].fitness.unwrap()).collect();
        fit.sort_by(f64::total_cmp);
        assert_eq!(fit, (136..=150).map(f64::from).collect::<Vec<_>>());
        assert_eq!(elites, vec![149, 148]);

        let flat: Vec<Individual> = (0..150).rev().map(|i| with_fitness(i, 0.3)).collect();
        let (parents, _) = select_parents(&flat, 15, 2);
        let mut ids: Vec<u64> = parents.iter().map(|&i| flat[i].genome.id).collect();
        ids.sort();
        assert_eq!(ids, (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn no_op_reproduction_copies_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Genome::initial(0, &mut rng);
        let mut p = Individual::new(g.clone(), 0);
        p.fitness = Some(1.0);
        let mut id = 1;
        let mut reg = InnovationRegistry::new();
        let kids = reproduce(&[p], &[0], 5, &MutationRates::zero(), &mut id, &mut reg, &mut rng);
        assert_eq!(kids.len(), 5);
        assert_eq!(id, 6);
        for k in kids {
            assert_eq!(k.conns, g.conns);
            assert_eq!(k.nodes, g.nodes);
        }
    }

    #[test]
    fn split_is_disjoint_and_stable() {
        let (t, e) = split_seeds(5, 1000, 100);
        assert_eq!((t.len(), e.len()), (1000, 100));
        let all: std::collections::HashSet<_> = t.iter().chain(&e).collect();
        assert_eq!(all.len(), 1100);
        assert_eq!(split_seeds(5, 1000, 100), (t, e));
    }

    #[test]
    fn random_walk_run_shape_and_determinism() {
        let cfg = EvolutionConfig { generations: 6, ..tiny(FitnessMode::RandomSizePenalty) };
        let a = run_evolution(cfg.clone(), |evo, _| assert_eq!(evo.population.len(), 8)).unwrap();
        let b = run_evolution(cfg, |_, _| {}).unwrap();
        assert_eq!(a.records.len(), 6);
        assert_eq!(a.records, b.records);
        assert!(a.final_population.iter().all(|i| i.genome.validate().is_ok()));
        let ids: std::collections::HashSet<u64> = a.final_population.iter().map(|i| i.genome.id).collect();
        assert_eq!(ids.len(), 8);
    }

    #[test]
    fn task_run_keeps_elites_and_best_fitness() {
        let out = run_evolution(tiny(FitnessMode::Task), |_, _| {}).unwrap();
        for w in out.records.windows(2) {
            assert!(w[1].best_fitness >= w[0].best_fitness);
        }
        assert!(out.records.iter().all(|r| r.best_fitness.is_finite()));
        assert_eq!(out.records[0].best_n_s, 254);
    }

    #[test]
    fn elites_survive_unchanged() {
        let mut evo = Evolution::new(tiny(FitnessMode::Random)).unwrap();
        evo.step_generation().unwrap();
        let before = evo.population[..2].to_vec();
        evo.step_generation().unwrap();
        let prev_ids: Vec<u64> = before.iter().map(|i| i.genome.id).collect();
        let survivors: Vec<&Individual> = evo.population.iter().filter(|i| prev_ids.contains(&i.genome.id)).collect();
        assert!(!survivors.is_empty());
        for s in survivors {
            let old = before.iter().find(|b| b.genome.id == s.genome.id).unwrap();
            assert_eq!(s.genome.fingerprint(), old.genome.fingerprint());
        }
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let cfg = EvolutionConfig { generations: 5, ..tiny(FitnessMode::Random) };
        let full = run_evolution(cfg.clone(), |_, _| {}).unwrap();
        let mut evo = Evolution::new(cfg).unwrap();
        let mut records = vec![evo.step_generation().unwrap().record, evo.step_generation().unwrap().record];
        let saved = serde_json::to_string(&evo).unwrap();
        let mut back: Evolution = serde_json::from_str(&saved).unwrap();
        assert_eq!(back, evo);
        while !back.is_finished() {
            records.push(back.step_generation().unwrap().record);
        }
        assert_eq!(records, full.records);
        assert!(matches!(back.step_generation(), Err(EvolutionError::Finished)));
    }
}
