//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated glue
//! beyond `wasm-bindgen`'s own.

use neuroevo_core::complexity::{complexity_report, graph_report, GraphView};
use neuroevo_core::genome::{Genome, InnovationRegistry, MutationRates};
use neuroevo_core::gridworld::{select_action, Action, ActionMode, FoodKind, WorldConfig, WorldState};
use neuroevo_core::learner::policy_distribution;
use neuroevo_core::phenotype::{Phenotype, Variant};
use neuroevo_core::seeds::{self, purpose};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Food {
    x: usize,
    y: usize,
    edible: bool,
    rgb: [f64; 3],
}

#[derive(Serialize)]
struct Frame {
    t: usize,
    season: usize,
    agent: [usize; 2],
    reward: f64,
    total: f64,
    foods: Vec<Food>,
}

#[derive(Serialize)]
struct WalkPoint {
    step: usize,
    n_s: usize,
    modularity: f64,
    efficiency: f64,
    n_c: f64,
}

#[derive(Serialize)]
struct Metrics {
    nodes: usize,
    edges: usize,
    modularity: f64,
    efficiency: f64,
    n_c: f64,
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn frame(world: &WorldState, reward: f64, total: f64) -> Frame {
    Frame {
        t: world.t,
        season: world.season(),
        agent: [world.agent.x, world.agent.y],
        reward,
        total,
        foods: world
            .foods
            .iter()
            .map(|f| Food {
                x: f.pos.x,
                y: f.pos.y,
                edible: f.kind == FoodKind::Edible,
                rgb: f.displayed_color.channels(),
            })
            .collect(),
    }
}

/// One episode played by an untrained random initial genome. Returns an
/// array of frames, the first being the start state.
#[wasm_bindgen]
pub fn episode(seed: u64, n_seasons: usize, energy_cost: bool) -> Result<String, JsValue> {
    let config = WorldConfig::with_seasons(n_seasons);
    config.validate().map_err(js_err)?;
    let genome = Genome::initial(0, &mut seeds::stream(seed, &[purpose::INIT]));
    let actor = Phenotype::build(&genome, Variant::Actor).map_err(js_err)?;
    let params = actor.initial_params().to_vec();
    let cost = if energy_cost { -0.01 * genome.ann_size() as f64 / 254.0 } else { -0.01 };

    let mut world = WorldState::new_episode(seed, 0, config).map_err(js_err)?;
    let mut rng = seeds::stream(seed, &[purpose::ACTIONS, 0]);
    let mut total = 0.0;
    let mut frames = vec![frame(&world, 0.0, 0.0)];
    while !world.is_done() {
        let p = policy_distribution(&actor, &params, world.observe().values()).map_err(js_err)?;
        let a = Action::ALL[select_action(&p, ActionMode::Sample, &mut rng)];
        let out = world.step(a, cost).map_err(js_err)?;
        total += out.reward;
        frames.push(frame(&world, out.reward, total));
    }
    serde_json::to_string(&frames).map_err(js_err)
}

/// Size and segregation/integration ratio along a chain of mutations from
/// a fresh genome, with no selection at all.
#[wasm_bindgen]
pub fn mutation_walk(seed: u64, steps: usize) -> Result<String, JsValue> {
    let mut rng = seeds::stream(seed, &[purpose::REPRODUCE]);
    let mut registry = InnovationRegistry::new();
    let mut genome = Genome::initial(0, &mut seeds::stream(seed, &[purpose::INIT]));
    let rates = MutationRates::default();
    let point = |step, g: &Genome| {
        let r = complexity_report(g, seed);
        WalkPoint {
            step,
            n_s: r.n_s,
            modularity: r.modularity,
            efficiency: r.efficiency,
            n_c: r.n_c,
        }
    };
    let mut walk = vec![point(0, &genome)];
    for step in 1..=steps {
        genome.mutate(&rates, &mut rng, &mut registry);
        walk.push(point(step, &genome));
    }
    serde_json::to_string(&walk).map_err(js_err)
}

/// Modularity, global efficiency and their ratio for an edge list of
/// "u v" pairs, one per line.
#[wasm_bindgen]
pub fn edge_metrics(text: &str, seed: u64) -> Result<String, JsValue> {
    let mut edges = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ids: Vec<u32> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| js_err(format!("line {}: {e}", n + 1)))?;
        match ids[..] {
            [a, b] => edges.push((a, b)),
            _ => return Err(js_err(format!("line {}: expected two node ids", n + 1))),
        }
    }
    let g = GraphView::from_edges(edges);
    let (modularity, efficiency, n_c) = graph_report(&g, seed).map_err(js_err)?;
    serde_json::to_string(&Metrics {
        nodes: g.node_count(),
        edges: g.edge_count(),
        modularity,
        efficiency,
        n_c,
    })
    .map_err(js_err)
}
