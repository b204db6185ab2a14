//! Seasonal grid-world foraging task.
//!
//! A 20×20 grid holds 10 edible and 10 poisonous food items. The agent sees a
//! 9×9 window of cell colours (243 values) and chooses one of five actions.
//! Each episode is split into contiguous seasons; every season has its own
//! edible and poisonous colour, drawn from a palette shuffled once per run.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, purpose};

pub const GRID_SIZE: usize = 20;
pub const VIEW: usize = 9;
pub const VIEW_RADIUS: i32 = (VIEW / 2) as i32;
pub const OBS_LEN: usize = VIEW * VIEW * 3;
pub const N_ACTIONS: usize = 5;
pub const MAX_SEASONS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("time step {t} outside episode of length {len}")]
    StepOutOfRange { t: usize, len: usize },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("policy returned an invalid action distribution: {0:?}")]
    InvalidDistribution(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl CellColor {
    pub const BLACK: CellColor = CellColor::new(0.0, 0.0, 0.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

/// Canonical base colours. Slot order here is the unshuffled order.
pub const BASE_COLORS: [(&str, CellColor); 8] = [
    ("green", CellColor::new(0.0, 0.8, 0.0)),
    ("yellow", CellColor::new(1.0, 1.0, 0.0)),
    ("orange", CellColor::new(1.0, 0.6, 0.0)),
    ("brown", CellColor::new(0.55, 0.27, 0.07)),
    ("red", CellColor::new(1.0, 0.0, 0.0)),
    ("blue", CellColor::new(0.0, 0.0, 1.0)),
    ("purple", CellColor::new(0.5, 0.0, 0.5)),
    ("pink", CellColor::new(1.0, 0.6, 0.8)),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FoodKind {
    Edible,
    Poisonous,
}

/// A permutation of [`BASE_COLORS`]. Slots 0..4 are the edible colours of
/// seasons 1..=4, slots 4..8 the poisonous ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub slots: [usize; 8],
}

impl Palette {
    pub fn identity() -> Self {
        Self {
            slots: [0, 1, 2, 3, 4, 5, 6, 7],
        }
    }

    /// Base colour index for `kind` during 1-based `season`.
    pub fn color_index(&self, kind: FoodKind, season: usize) -> usize {
        debug_assert!((1..=MAX_SEASONS).contains(&season));
        match kind {
            FoodKind::Edible => self.slots[season - 1],
            FoodKind::Poisonous => self.slots[MAX_SEASONS + season - 1],
        }
    }

    pub fn base_color(&self, kind: FoodKind, season: usize) -> CellColor {
        BASE_COLORS[self.color_index(kind, season)].1
    }

    pub fn edible_indices(&self) -> &[usize] {
        &self.slots[..MAX_SEASONS]
    }

    pub fn poisonous_indices(&self) -> &[usize] {
        &self.slots[MAX_SEASONS..]
    }
}

/// Deterministic per-run palette shuffle.
pub fn shuffle_palette(run_seed: u64) -> Palette {
    let mut rng = seeds::stream(run_seed, &[purpose::PALETTE]);
    let mut slots = Palette::identity().slots;
    slots.shuffle(&mut rng);
    Palette { slots }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub grid_size: usize,
    pub n_seasons: usize,
    pub episode_length: usize,
    pub n_edible: usize,
    pub n_poisonous: usize,
    pub jitter_halfwidth: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid_size: GRID_SIZE,
            n_seasons: 1,
            episode_length: 100,
            n_edible: 10,
            n_poisonous: 10,
            jitter_halfwidth: 0.1,
        }
    }
}

impl WorldConfig {
    pub fn with_seasons(n_seasons: usize) -> Self {
        Self {
            n_seasons,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(1..=MAX_SEASONS).contains(&self.n_seasons) {
            return Err(WorldError::InvalidConfig(format!(
                "n_seasons must be in 1..=4, got {}",
                self.n_seasons
            )));
        }
        if self.episode_length < self.n_seasons {
            return Err(WorldError::InvalidConfig(
                "episode shorter than the number of seasons".into(),
            ));
        }
        let cells = self.grid_size * self.grid_size;
        if self.n_edible + self.n_poisonous >= cells {
            return Err(WorldError::InvalidConfig("too many food items for grid".into()));
        }
        if !(0.0..=0.5).contains(&self.jitter_halfwidth) {
            return Err(WorldError::InvalidConfig("jitter half-width must be in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// 1-based season of step `t`. The first `len % n` seasons are one step
/// longer than the rest.
pub fn season_index(t: usize, config: &WorldConfig) -> Result<usize, WorldError> {
    let len = config.episode_length;
    if t >= len {
        return Err(WorldError::StepOutOfRange { t, len });
    }
    let n = config.n_seasons;
    let base = len / n;
    let long = len % n;
    let long_span = long * (base + 1);
    let season = if t < long_span {
        t / (base + 1)
    } else {
        long + (t - long_span) / base
    };
    Ok(season + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoodItem {
    pub pos: Pos,
    pub kind: FoodKind,
    pub displayed_color: CellColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveUp,
    MoveDown,
    MoveLeft,
    MoveRight,
    Eat,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::MoveUp,
        Action::MoveDown,
        Action::MoveLeft,
        Action::MoveRight,
        Action::Eat,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

/// Flattened 9×9×3 window, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Colour at window offset (dx, dy) relative to the agent.
    pub fn at(&self, dx: i32, dy: i32) -> [f64; 3] {
        let row = (dy + VIEW_RADIUS) as usize;
        let col = (dx + VIEW_RADIUS) as usize;
        let base = (row * VIEW + col) * 3;
        [self.0[base], self.0[base + 1], self.0[base + 2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub consumed: Option<FoodKind>,
    pub done: bool,
    pub next_observation: Observation,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub config: WorldConfig,
    pub palette: Palette,
    pub agent: Pos,
    pub foods: Vec<FoodItem>,
    pub t: usize,
    season: usize,
    // cell -> index into `foods`
    occupancy: Vec<Option<u16>>,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Start an episode. The palette depends on `run_seed` only; placement
    /// and colour jitter depend on both seeds.
    pub fn new_episode(
        run_seed: u64,
        episode_seed: u64,
        config: WorldConfig,
    ) -> Result<Self, WorldError> {
        Self::with_palette(shuffle_palette(run_seed), run_seed, episode_seed, config)
    }

    pub fn with_palette(
        palette: Palette,
        run_seed: u64,
        episode_seed: u64,
        config: WorldConfig,
    ) -> Result<Self, WorldError> {
        config.validate()?;
        let mut rng = seeds::stream(run_seed, &[purpose::EPISODE, episode_seed]);
        let cells = config.grid_size * config.grid_size;
        let n_food = config.n_edible + config.n_poisonous;
        let picked = rand::seq::index::sample(&mut rng, cells, n_food);
        let agent_cell = rng.random_range(0..cells);

        let mut state = WorldState {
            config,
            palette,
            agent: Self::cell_pos(&config, agent_cell),
            foods: Vec::with_capacity(n_food),
            t: 0,
            season: 1,
            occupancy: vec![None; cells],
            rng,
        };
        for (i, cell) in picked.into_iter().enumerate() {
            let kind = if i < config.n_edible {
                FoodKind::Edible
            } else {
                FoodKind::Poisonous
            };
            let color = state.jittered(kind);
            state.occupancy[cell] = Some(i as u16);
            state.foods.push(FoodItem {
                pos: Self::cell_pos(&config, cell),
                kind,
                displayed_color: color,
            });
        }
        Ok(state)
    }

    fn cell_pos(config: &WorldConfig, cell: usize) -> Pos {
        Pos {
            x: cell % config.grid_size,
            y: cell / config.grid_size,
        }
    }

    fn cell_of(&self, pos: Pos) -> usize {
        pos.y * self.config.grid_size + pos.x
    }

    fn jittered(&mut self, kind: FoodKind) -> CellColor {
        let base = self.palette.base_color(kind, self.season);
        let h = self.config.jitter_halfwidth;
        let mut ch = |v: f64| -> f64 {
            if h == 0.0 {
                v
            } else {
                (v + self.rng.random_range(-h..=h)).clamp(0.0, 1.0)
            }
        };
        CellColor::new(ch(base.r), ch(base.g), ch(base.b))
    }

    pub fn season(&self) -> usize {
        self.season
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.episode_length
    }

    pub fn food_at(&self, pos: Pos) -> Option<&FoodItem> {
        self.occupancy[self.cell_of(pos)].map(|i| &self.foods[i as usize])
    }

    pub fn count(&self, kind: FoodKind) -> usize {
        self.foods.iter().filter(|f| f.kind == kind).count()
    }

    pub fn observe(&self) -> Observation {
        let mut values = vec![0.0; OBS_LEN];
        self.observe_into(&mut values);
        Observation(values)
    }

    /// Fill `out` (length 243) with the current window. Out-of-bounds and
    /// empty cells are black.
    pub fn observe_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), OBS_LEN);
        out.fill(0.0);
        let n = self.config.grid_size as i32;
        let (ax, ay) = (self.agent.x as i32, self.agent.y as i32);
        for dy in -VIEW_RADIUS..=VIEW_RADIUS {
            let y = ay + dy;
            if y < 0 || y >= n {
                continue;
            }
            for dx in -VIEW_RADIUS..=VIEW_RADIUS {
                let x = ax + dx;
                if x < 0 || x >= n {
                    continue;
                }
                let cell = (y * n + x) as usize;
                if let Some(i) = self.occupancy[cell] {
                    let c = self.foods[i as usize].displayed_color;
                    let row = (dy + VIEW_RADIUS) as usize;
                    let col = (dx + VIEW_RADIUS) as usize;
                    let base = (row * VIEW + col) * 3;
                    out[base] = c.r;
                    out[base + 1] = c.g;
                    out[base + 2] = c.b;
                }
            }
        }
    }

    /// Advance one step without building the next observation.
    pub fn advance(
        &mut self,
        action: Action,
        per_step_energy: f64,
    ) -> Result<(f64, Option<FoodKind>, bool), WorldError> {
        if self.is_done() {
            return Err(WorldError::EpisodeFinished);
        }
        let n = self.config.grid_size;
        let mut reward = per_step_energy;
        let mut consumed = None;
        match action {
            Action::MoveUp => self.agent.y = self.agent.y.saturating_sub(1),
            Action::MoveDown => self.agent.y = (self.agent.y + 1).min(n - 1),
            Action::MoveLeft => self.agent.x = self.agent.x.saturating_sub(1),
            Action::MoveRight => self.agent.x = (self.agent.x + 1).min(n - 1),
            Action::Eat => {
                let cell = self.cell_of(self.agent);
                if let Some(i) = self.occupancy[cell].take() {
                    let kind = self.foods[i as usize].kind;
                    reward += match kind {
                        FoodKind::Edible => 1.0,
                        FoodKind::Poisonous => -1.0,
                    };
                    consumed = Some(kind);
                    self.respawn(i as usize, cell);
                }
            }
        }

        self.t += 1;
        let done = self.is_done();
        if !done {
            let season = season_index(self.t, &self.config)?;
            if season != self.season {
                self.season = season;
                for i in 0..self.foods.len() {
                    let kind = self.foods[i].kind;
                    self.foods[i].displayed_color = self.jittered(kind);
                }
            }
        }
        Ok((reward, consumed, done))
    }

    pub fn step(&mut self, action: Action, per_step_energy: f64) -> Result<StepOutcome, WorldError> {
        let (reward, consumed, done) = self.advance(action, per_step_energy)?;
        Ok(StepOutcome {
            reward,
            consumed,
            done,
            next_observation: self.observe(),
        })
    }

    // Move item `i` (just eaten at `old_cell`) to a uniformly random cell
    // without food. The agent's cell, including `old_cell`, is allowed.
    fn respawn(&mut self, i: usize, old_cell: usize) {
        let cells = self.occupancy.len();
        let free = cells - self.foods.len() + 1;
        let mut k = self.rng.random_range(0..free);
        let mut target = old_cell;
        for (cell, occ) in self.occupancy.iter().enumerate() {
            if occ.is_none() {
                if k == 0 {
                    target = cell;
                    break;
                }
                k -= 1;
            }
        }
        let kind = self.foods[i].kind;
        let color = self.jittered(kind);
        self.occupancy[target] = Some(i as u16);
        self.foods[i] = FoodItem {
            pos: Self::cell_pos(&self.config, target),
            kind,
            displayed_color: color,
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub net_energy_intake: i64,
}

/// One line of a debug trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub action: Action,
    pub reward: f64,
    pub consumed: Option<FoodKind>,
    pub season: usize,
}

fn check_distribution(p: &[f64; N_ACTIONS]) -> Result<(), WorldError> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(WorldError::InvalidDistribution(p.to_vec()));
    }
    Ok(())
}

/// Draw an action from a probability vector, or take the arg-max
/// (lowest index on ties) in greedy mode.
pub fn select_action(p: &[f64; N_ACTIONS], mode: ActionMode, rng: &mut impl Rng) -> usize {
    match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for i in 1..N_ACTIONS {
                if p[i] > p[best] {
                    best = i;
                }
            }
            best
        }
        ActionMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            // rounding left a sliver above the cumulative sum
            (0..N_ACTIONS).rev().find(|&i| p[i] > 0.0).unwrap_or(N_ACTIONS - 1)
        }
    }
}

/// Play a full episode with `policy` mapping observations to action
/// probabilities. Action sampling uses its own stream derived from both seeds.
pub fn run_episode<F>(
    mut policy: F,
    run_seed: u64,
    episode_seed: u64,
    config: WorldConfig,
    per_step_energy: f64,
    mode: ActionMode,
) -> Result<EpisodeSummary, WorldError>
where
    F: FnMut(&Observation) -> [f64; N_ACTIONS],
{
    run_episode_traced(&mut policy, run_seed, episode_seed, config, per_step_energy, mode, None)
}

pub fn run_episode_traced<F>(
    policy: &mut F,
    run_seed: u64,
    episode_seed: u64,
    config: WorldConfig,
    per_step_energy: f64,
    mode: ActionMode,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<EpisodeSummary, WorldError>
where
    F: FnMut(&Observation) -> [f64; N_ACTIONS],
{
    let mut world = WorldState::new_episode(run_seed, episode_seed, config)?;
    let mut rng = seeds::stream(run_seed, &[purpose::ACTIONS, episode_seed]);
    let mut obs = world.observe();
    let mut total_reward = 0.0;
    let mut net = 0i64;
    loop {
        let p = policy(&obs);
        check_distribution(&p)?;
        let a = select_action(&p, mode, &mut rng);
        let season = world.season();
        let step = world.t;
        let action = Action::ALL[a];
        let (reward, consumed, done) = world.advance(action, per_step_energy)?;
        total_reward += reward;
        match consumed {
            Some(FoodKind::Edible) => net += 1,
            Some(FoodKind::Poisonous) => net -= 1,
            None => {}
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceRecord {
                step,
                action,
                reward,
                consumed,
                season,
            });
        }
        if done {
            break;
        }
        world.observe_into(&mut obs.0);
    }
    Ok(EpisodeSummary {
        total_reward,
        net_energy_intake: net,
    })
}
