//! PPO lifetime learning.
//!
//! Actor and critic are separate parameter vectors over the same compiled
//! topology (the critic's output layer is the single merged value node).
//! Gradients are accumulated by [`Phenotype::backward`]; nothing here writes
//! back into the genome, so learned weights die with the individual.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Genome, HyperParams};
use crate::gridworld::{self, ActionMode, WorldConfig, WorldError, WorldState, N_ACTIONS, OBS_LEN};
use crate::phenotype::{Phenotype, PhenotypeError, Variant};
use crate::seeds::{self, purpose};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Phenotype(#[from] PhenotypeError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training and evaluation seeds overlap")]
    SeedOverlap,
}

/// Rollout episodes per PPO update cycle.
pub const BATCH_EPISODES: usize = 10;
/// Skipped minibatches beyond which an individual counts as diverged.
pub const MAX_INCIDENTS: usize = 100;
const ADV_STD_FLOOR: f64 = 1e-8;

/// `log_softmax(logits)` computed without forming tiny probabilities.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    log_softmax_in_place(&mut out);
    out
}

fn log_softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    for l in xs {
        *l -= lse;
    }
}

fn to_probs(logits: &[f64]) -> Result<[f64; N_ACTIONS], LearnError> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(LearnError::NonFiniteLogits);
    }
    let lp = log_softmax(logits);
    let mut p = [0.0; N_ACTIONS];
    for (pi, l) in p.iter_mut().zip(lp) {
        *pi = l.exp();
    }
    Ok(p)
}

/// Softmax over the actor's five logits.
pub fn policy_distribution(actor: &Phenotype, params: &[f64], obs: &[f64]) -> Result<[f64; N_ACTIONS], LearnError> {
    let logits = actor.forward(params, obs)?;
    to_probs(&logits)
}

/// Generalised advantage estimation. `dones[t]` marks the last step of an
/// episode, after which the bootstrap value is zero.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] || t + 1 == n {
            (0.0, 0.0)
        } else {
            (values[t + 1], running)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Per-step rollout data.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Row-major, `OBS_LEN` values per step.
    pub observations: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * OBS_LEN..(i + 1) * OBS_LEN]
    }
}

/// Training samples with advantages and returns attached.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    observations: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    nonzero: Vec<u32>,
    nonzero_start: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * OBS_LEN..(i + 1) * OBS_LEN]
    }

    /// Indices of the nonzero entries of observation `i`.
    pub fn nonzero(&self, i: usize) -> &[u32] {
        &self.nonzero[self.nonzero_start[i]..self.nonzero_start[i + 1]]
    }

    /// GAE over the trajectory, then per-batch advantage standardisation.
    pub fn from_trajectory(traj: Trajectory, gamma: f64, lambda: f64) -> Self {
        let (mut advantages, returns) = compute_gae(&traj.rewards, &traj.values, &traj.dones, gamma, lambda);
        normalize(&mut advantages);
        Self::new(traj.observations, traj.actions, traj.log_probs, advantages, returns)
    }

    /// `observations` holds `OBS_LEN` values per sample, row-major.
    pub fn new(
        observations: Vec<f64>,
        actions: Vec<usize>,
        old_log_probs: Vec<f64>,
        advantages: Vec<f64>,
        returns: Vec<f64>,
    ) -> Self {
        let mut nonzero = Vec::new();
        let mut nonzero_start = vec![0];
        for row in observations.chunks(OBS_LEN) {
            nonzero.extend((0..OBS_LEN as u32).filter(|&j| row[j as usize] != 0.0));
            nonzero_start.push(nonzero.len());
        }
        Self {
            observations,
            actions,
            old_log_probs,
            advantages,
            returns,
            nonzero,
            nonzero_start,
        }
    }
}

/// Zero mean, unit std (std floored at 1e-8).
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(ADV_STD_FLOOR);
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Actor and critic networks compiled from one genome.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub actor: Phenotype,
    pub critic: Phenotype,
}

impl ActorCritic {
    pub fn from_genome(genome: &Genome) -> Result<Self, LearnError> {
        Ok(Self {
            actor: Phenotype::build(genome, Variant::Actor)?,
            critic: Phenotype::build(genome, Variant::Critic)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub actor_params: Vec<f64>,
    pub critic_params: Vec<f64>,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub episodes: usize,
    /// Minibatches skipped because of non-finite loss or gradients.
    pub incidents: usize,
    /// Total reward of every training episode, in order.
    pub episode_rewards: Vec<f64>,
}

impl TrainState {
    /// Parameters as inherited from the genome, fresh optimiser state.
    pub fn inherited(nets: &ActorCritic) -> Self {
        let actor_params = nets.actor.initial_params().to_vec();
        let critic_params = nets.critic.initial_params().to_vec();
        Self {
            actor_opt: Adam::new(actor_params.len()),
            critic_opt: Adam::new(critic_params.len()),
            actor_params,
            critic_params,
            episodes: 0,
            incidents: 0,
            episode_rewards: Vec::new(),
        }
    }

    pub fn diverged(&self) -> bool {
        self.incidents > MAX_INCIDENTS
    }
}

/// Loss terms for one sample set, all averaged over the samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Default)]
pub struct Workspace {
    slots: Vec<f64>,
    scratch: Vec<f64>,
}

/// PPO loss (clipped surrogate, value error, entropy bonus) over `indices`
/// of `batch`, and its gradient with respect to both parameter vectors.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    nets: &ActorCritic,
    actor_params: &[f64],
    critic_params: &[f64],
    batch: &Batch,
    indices: &[usize],
    hyper: &HyperParams,
    actor_grad: &mut [f64],
    critic_grad: &mut [f64],
    ws: &mut Workspace,
) -> Result<LossParts, LearnError> {
    actor_grad.fill(0.0);
    critic_grad.fill(0.0);
    let n = indices.len() as f64;
    let eps = hyper.clip_epsilon;
    let mut parts = LossParts::default();
    let mut d_logits = [0.0; N_ACTIONS];
    for &i in indices {
        let obs = batch.observation(i);
        let a = batch.actions[i];
        let adv = batch.advantages[i];

        let nz = batch.nonzero(i);
        nets.actor.forward_sparse(actor_params, obs, nz, &mut ws.slots)?;
        let mut logp = [0.0; N_ACTIONS];
        for (l, &s) in logp.iter_mut().zip(nets.actor.output_slots()) {
            *l = ws.slots[s];
        }
        log_softmax_in_place(&mut logp);
        let p = logp.map(f64::exp);
        let ratio = (logp[a] - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        let entropy = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
        parts.surrogate += unclipped.min(clipped) / n;
        parts.entropy += entropy / n;

        let through_ratio = unclipped <= clipped;
        for j in 0..N_ACTIONS {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let mut d = 0.0;
            if through_ratio {
                d -= adv * ratio * (onehot - p[j]);
            }
            // -c_e * dH/dlogit_j, with dH/dlogit_j = -p_j (log p_j + H)
            d += hyper.entropy_coef * p[j] * (logp[j] + entropy);
            d_logits[j] = d / n;
        }
        nets.actor.backward_sparse(actor_params, &ws.slots, nz, &d_logits, actor_grad, &mut ws.scratch);

        nets.critic.forward_sparse(critic_params, obs, nz, &mut ws.slots)?;
        let v = ws.slots[nets.critic.output_slots()[0]];
        let err = v - batch.returns[i];
        parts.value += err * err / n;
        let dv = [2.0 * hyper.value_coef * err / n];
        nets.critic.backward_sparse(critic_params, &ws.slots, nz, &dv, critic_grad, &mut ws.scratch);
    }
    parts.total = -parts.surrogate + hyper.value_coef * parts.value - hyper.entropy_coef * parts.entropy;
    Ok(parts)
}

/// Forward-only evaluation of the same loss.
pub fn loss(
    nets: &ActorCritic,
    actor_params: &[f64],
    critic_params: &[f64],
    batch: &Batch,
    indices: &[usize],
    hyper: &HyperParams,
) -> Result<LossParts, LearnError> {
    let mut ga = vec![0.0; actor_params.len()];
    let mut gc = vec![0.0; critic_params.len()];
    loss_and_grad(nets, actor_params, critic_params, batch, indices, hyper, &mut ga, &mut gc, &mut Workspace::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub minibatches: usize,
    pub skipped: usize,
    pub last_loss: f64,
}

/// `ppo_epochs` passes over shuffled minibatches with Adam steps. Minibatches
/// whose loss or gradient is non-finite are skipped and counted.
pub fn ppo_update(
    nets: &ActorCritic,
    state: &mut TrainState,
    batch: &Batch,
    hyper: &HyperParams,
    rng: &mut impl Rng,
) -> Result<UpdateStats, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut ga = vec![0.0; state.actor_params.len()];
    let mut gc = vec![0.0; state.critic_params.len()];
    let mut ws = Workspace::default();
    let mb = hyper.minibatch_size.max(1);
    for _ in 0..hyper.ppo_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            stats.minibatches += 1;
            let res = loss_and_grad(
                nets,
                &state.actor_params,
                &state.critic_params,
                batch,
                chunk,
                hyper,
                &mut ga,
                &mut gc,
                &mut ws,
            );
            let total = match res {
                Ok(p) if p.total.is_finite() && ga.iter().chain(&gc).all(|g| g.is_finite()) => p.total,
                Ok(_) | Err(LearnError::Phenotype(PhenotypeError::NonFinite(_))) => {
                    stats.skipped += 1;
                    state.incidents += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            stats.last_loss = total;
            state.actor_opt.step(&mut state.actor_params, &ga, hyper.learning_rate);
            state.critic_opt.step(&mut state.critic_params, &gc, hyper.learning_rate);
        }
    }
    Ok(stats)
}

/// Environment side of lifetime learning.
#[derive(Debug, Clone)]
pub struct LearnSetup<'a> {
    pub world: WorldConfig,
    pub run_seed: u64,
    pub per_step_energy: f64,
    pub train_seeds: &'a [u64],
    pub episodes: usize,
}

fn collect_rollout(
    nets: &ActorCritic,
    state: &TrainState,
    setup: &LearnSetup,
    first_episode: usize,
    n_episodes: usize,
    rng: &mut ChaCha8Rng,
    ws: &mut Workspace,
    episode_rewards: &mut Vec<f64>,
) -> Result<Trajectory, LearnError> {
    let steps = n_episodes * setup.world.episode_length;
    let mut traj = Trajectory {
        observations: Vec::with_capacity(steps * OBS_LEN),
        ..Default::default()
    };
    let mut obs = vec![0.0; OBS_LEN];
    for e in 0..n_episodes {
        let seed = setup.train_seeds[(first_episode + e) % setup.train_seeds.len()];
        let mut world = WorldState::new_episode(setup.run_seed, seed, setup.world)?;
        let mut total = 0.0;
        loop {
            world.observe_into(&mut obs);
            nets.actor.forward_into(&state.actor_params, &obs, &mut ws.slots)?;
            let logits = nets.actor.outputs(&ws.slots);
            let p = to_probs(&logits)?;
            let a = gridworld::select_action(&p, ActionMode::Sample, rng);
            nets.critic.forward_into(&state.critic_params, &obs, &mut ws.slots)?;
            let value = ws.slots[nets.critic.output_slots()[0]];
            let (reward, _, done) = world.advance(gridworld::Action::ALL[a], setup.per_step_energy)?;
            total += reward;
            traj.observations.extend_from_slice(&obs);
            traj.actions.push(a);
            traj.log_probs.push(p[a].ln());
            traj.rewards.push(reward);
            traj.values.push(value);
            traj.dones.push(done);
            if done {
                break;
            }
        }
        episode_rewards.push(total);
    }
    Ok(traj)
}

/// Learn for `setup.episodes` episodes in cycles of [`BATCH_EPISODES`],
/// starting from the genome's inherited weights. All randomness comes from
/// `stream_seed`. A forward pass that blows up ends learning early and marks
/// the state as diverged.
pub fn lifetime_learn(genome: &Genome, setup: &LearnSetup, stream_seed: u64) -> Result<(ActorCritic, TrainState), LearnError> {
    let nets = ActorCritic::from_genome(genome)?;
    let mut state = TrainState::inherited(&nets);
    if setup.episodes == 0 || setup.train_seeds.is_empty() {
        return Ok((nets, state));
    }
    let hyper = genome.hyper;
    let mut rng = seeds::stream(stream_seed, &[purpose::LEARN]);
    let mut ws = Workspace::default();
    let mut rewards = Vec::with_capacity(setup.episodes);
    while state.episodes < setup.episodes {
        let n = BATCH_EPISODES.min(setup.episodes - state.episodes);
        let traj = match collect_rollout(&nets, &state, setup, state.episodes, n, &mut rng, &mut ws, &mut rewards) {
            Ok(t) => t,
            Err(LearnError::Phenotype(PhenotypeError::NonFinite(_))) | Err(LearnError::NonFiniteLogits) => {
                state.incidents = state.incidents.max(MAX_INCIDENTS + 1);
                break;
            }
            Err(e) => return Err(e),
        };
        state.episodes += n;
        let batch = Batch::from_trajectory(traj, hyper.discount_gamma, hyper.gae_lambda);
        ppo_update(&nets, &mut state, &batch, &hyper, &mut rng)?;
    }
    state.episode_rewards = rewards;
    Ok((nets, state))
}

#[derive(Debug, Clone)]
pub struct EvalSetup<'a> {
    pub world: WorldConfig,
    pub run_seed: u64,
    pub per_step_energy: f64,
    pub eval_seeds: &'a [u64],
    pub mode: ActionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean total reward per episode, energy cost included.
    pub fitness: f64,
    /// Mean edible minus poisonous items eaten per episode.
    pub task_performance: f64,
}

/// Evaluate trained actor parameters on held-out episode seeds.
pub fn evaluate(nets: &ActorCritic, trained: &TrainState, setup: &EvalSetup) -> Result<Evaluation, LearnError> {
    evaluate_params(&nets.actor, &trained.actor_params, setup)
}

pub fn evaluate_params(actor: &Phenotype, params: &[f64], setup: &EvalSetup) -> Result<Evaluation, LearnError> {
    let mut slots = Vec::with_capacity(actor.n_slots());
    let mut failure: Option<LearnError> = None;
    let mut fitness = 0.0;
    let mut perf = 0.0;
    for &seed in setup.eval_seeds {
        let policy = |o: &gridworld::Observation| -> [f64; N_ACTIONS] {
            let res = actor
                .forward_into(params, o.values(), &mut slots)
                .map_err(LearnError::from)
                .and_then(|_| to_probs(&actor.outputs(&slots)));
            match res {
                Ok(p) => p,
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.2; N_ACTIONS]
                }
            }
        };
        let s = gridworld::run_episode(policy, setup.run_seed, seed, setup.world, setup.per_step_energy, setup.mode)?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        fitness += s.total_reward;
        perf += s.net_energy_intake as f64;
    }
    let n = setup.eval_seeds.len().max(1) as f64;
    Ok(Evaluation {
        fitness: fitness / n,
        task_performance: perf / n,
    })
}
