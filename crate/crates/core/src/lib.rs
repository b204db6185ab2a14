//! Neuroevolution of reinforcement-learning foraging agents under energy
//! budgets.
//!
//! The crate is organised bottom-up:
//!
//! - [`gridworld`]: seasonal 20×20 foraging environment.
//! - [`genome`] / [`phenotype`]: NEAT-style genotype and its compiled
//!   actor/critic networks.
//! - [`learner`]: PPO lifetime learning with hand-written reverse-mode
//!   gradients through the network DAG.
//! - [`evolution`]: generational loop with truncation selection, elitism and
//!   the two energy regimes.
//! - [`complexity`]: network size, Louvain modularity, global efficiency and
//!   the segregation/integration ratio.
//! - [`stats`]: Kruskal–Wallis, Dunn, Spearman, Mann–Whitney and bootstrap
//!   mediation.
//!
//! Every stochastic component draws from a seeded stream derived with
//! [`seeds::derive`], so whole runs are reproducible bit-for-bit.

pub mod complexity;
pub mod evolution;
pub mod genome;
pub mod gridworld;
pub mod learner;
pub mod phenotype;
pub mod seeds;
pub mod stats;

pub use complexity::ComplexityReport;
pub use evolution::{EnergyRegime, EvolutionConfig, FitnessMode};
pub use genome::Genome;
pub use gridworld::{WorldConfig, WorldState};
