//! Executable networks compiled from a [`Genome`].
//!
//! Structure and parameters are kept apart: a [`Phenotype`] fixes the
//! evaluation order and edge layout, while the weights and biases live in a
//! flat `Vec<f64>` so the learner can own, differentiate and update its own
//! copy without touching the genome.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Activation, Genome, NodeKind, N_INPUTS};

#[derive(Debug, Error, PartialEq)]
pub enum PhenotypeError {
    #[error("genome has a cycle among enabled connections")]
    Cycle,
    #[error("non-finite activation at node {0}")]
    NonFinite(u32),
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Actor,
    Critic,
}

/// Id given to the critic's value node; outside any genome id range.
pub const VALUE_NODE_ID: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
struct ComputeNode {
    id: u32,
    activation: Activation,
    bias_param: usize,
    edges: Range<usize>,
    /// First edge whose source is a computed node; earlier ones read inputs.
    inner: usize,
}

/// Compiled feedforward network.
///
/// Slots `0..n_inputs` hold the observation; computed node `k` (in
/// topological order) writes slot `n_inputs + k`. Edge `e` reads slot
/// `edge_src[e]` and its weight is `params[e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phenotype {
    variant: Variant,
    n_inputs: usize,
    nodes: Vec<ComputeNode>,
    edge_src: Vec<u32>,
    // input i feeds (node k, edge e) for e in fan[fan_start[i]..fan_start[i + 1]]
    fan_start: Vec<usize>,
    fan: Vec<(u32, u32)>,
    output_slots: Vec<usize>,
    initial: Vec<f64>,
}

impl Phenotype {
    pub fn build(genome: &Genome, variant: Variant) -> Result<Self, PhenotypeError> {
        let order = genome.topological_order().ok_or(PhenotypeError::Cycle)?;
        let outputs: Vec<u32> = Genome::output_ids().collect();

        // incoming enabled edges per target, merged by source
        let mut incoming: HashMap<u32, BTreeMap<u32, f64>> = HashMap::new();
        for c in genome.enabled_connections() {
            let to = match variant {
                Variant::Critic if outputs.contains(&c.to) => VALUE_NODE_ID,
                _ => c.to,
            };
            *incoming.entry(to).or_default().entry(c.from).or_insert(0.0) += c.weight;
        }

        let mut sequence: Vec<(u32, Activation, f64)> = Vec::new();
        for id in order {
            let node = genome.node(id).expect("ordered id belongs to genome");
            match node.kind {
                NodeKind::Input => {}
                NodeKind::Hidden => sequence.push((id, node.activation, node.bias)),
                NodeKind::Output => {
                    if variant == Variant::Actor {
                        sequence.push((id, node.activation, node.bias));
                    }
                }
            }
        }
        if variant == Variant::Critic {
            // all output nodes are sinks, so the value node can go last
            let bias = outputs.iter().map(|&o| genome.node(o).unwrap().bias).sum::<f64>() / outputs.len() as f64;
            sequence.push((VALUE_NODE_ID, Activation::Identity, bias));
        }

        let mut slot_of: HashMap<u32, usize> = (0..N_INPUTS as u32).map(|i| (i, i as usize)).collect();
        for (k, (id, _, _)) in sequence.iter().enumerate() {
            slot_of.insert(*id, N_INPUTS + k);
        }

        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut nodes = Vec::with_capacity(sequence.len());
        for (id, activation, _) in &sequence {
            let start = edges.len();
            if let Some(srcs) = incoming.get(id) {
                for (src, w) in srcs {
                    edges.push(slot_of[src] as u32);
                    weights.push(*w);
                }
            }
            let inner = start + edges[start..].iter().take_while(|&&s| (s as usize) < N_INPUTS).count();
            nodes.push(ComputeNode {
                id: *id,
                activation: *activation,
                bias_param: 0,
                edges: start..edges.len(),
                inner,
            });
        }
        let n_weights = weights.len();
        let mut initial = weights;
        for (k, (_, _, bias)) in sequence.iter().enumerate() {
            nodes[k].bias_param = n_weights + k;
            initial.push(*bias);
        }

        let output_slots = match variant {
            Variant::Actor => outputs.iter().map(|o| slot_of[o]).collect(),
            Variant::Critic => vec![slot_of[&VALUE_NODE_ID]],
        };
        let mut fan_lists: Vec<Vec<(u32, u32)>> = vec![Vec::new(); N_INPUTS];
        for (k, node) in nodes.iter().enumerate() {
            for e in node.edges.start..node.inner {
                fan_lists[edges[e] as usize].push((k as u32, e as u32));
            }
        }
        let mut fan_start = Vec::with_capacity(N_INPUTS + 1);
        let mut fan = Vec::with_capacity(edges.len());
        for list in fan_lists {
            fan_start.push(fan.len());
            fan.extend(list);
        }
        fan_start.push(fan.len());
        Ok(Self {
            variant,
            n_inputs: N_INPUTS,
            nodes,
            fan_start,
            fan,
            edge_src: edges,
            output_slots,
            initial,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_params(&self) -> usize {
        self.initial.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_src.len()
    }

    pub fn n_slots(&self) -> usize {
        self.n_inputs + self.nodes.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_slots.len()
    }

    /// Parameters inherited from the genome: edge weights then node biases.
    pub fn initial_params(&self) -> &[f64] {
        &self.initial
    }

    /// Non-input node ids in evaluation order.
    pub fn evaluation_order(&self) -> Vec<u32> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    /// Weight of the merged edge `src -> node`, if present.
    pub fn edge_weight(&self, params: &[f64], src: u32, node: u32) -> Option<f64> {
        let src_slot = if (src as usize) < self.n_inputs {
            src as usize
        } else {
            self.n_inputs + self.nodes.iter().position(|n| n.id == src)?
        };
        let n = self.nodes.iter().find(|n| n.id == node)?;
        n.edges
            .clone()
            .find(|&e| self.edge_src[e] as usize == src_slot)
            .map(|e| params[e])
    }

    /// Forward pass filling `slots` with every node's activation.
    pub fn forward_into(&self, params: &[f64], obs: &[f64], slots: &mut Vec<f64>) -> Result<(), PhenotypeError> {
        self.check_inputs(obs)?;
        let nz = obs.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, _)| i);
        self.forward_impl(params, obs, nz, slots)
    }

    /// Like [`forward_into`](Phenotype::forward_into), with the indices of
    /// the nonzero entries of `obs` supplied by the caller.
    pub fn forward_sparse(&self, params: &[f64], obs: &[f64], nonzero: &[u32], slots: &mut Vec<f64>) -> Result<(), PhenotypeError> {
        self.check_inputs(obs)?;
        self.forward_impl(params, obs, nonzero.iter().map(|&i| i as usize), slots)
    }

    fn check_inputs(&self, obs: &[f64]) -> Result<(), PhenotypeError> {
        if obs.len() != self.n_inputs {
            return Err(PhenotypeError::InputLength {
                expected: self.n_inputs,
                got: obs.len(),
            });
        }
        Ok(())
    }

    fn forward_impl(
        &self,
        params: &[f64],
        obs: &[f64],
        nonzero: impl Iterator<Item = usize>,
        slots: &mut Vec<f64>,
    ) -> Result<(), PhenotypeError> {
        debug_assert_eq!(params.len(), self.initial.len());
        slots.clear();
        slots.extend_from_slice(obs);
        slots.extend(self.nodes.iter().map(|n| params[n.bias_param]));
        // Observations are mostly zero: push each nonzero input along its
        // out-edges. Per node, terms still arrive in ascending source order.
        let acc = &mut slots[self.n_inputs..];
        for i in nonzero {
            let x = obs[i];
            for &(k, e) in &self.fan[self.fan_start[i]..self.fan_start[i + 1]] {
                acc[k as usize] += params[e as usize] * x;
            }
        }
        for (k, node) in self.nodes.iter().enumerate() {
            let r = node.inner..node.edges.end;
            let mut z = slots[self.n_inputs + k];
            for (w, &src) in params[r.clone()].iter().zip(&self.edge_src[r]) {
                z += w * slots[src as usize];
            }
            let a = node.activation.apply(z);
            if !a.is_finite() {
                return Err(PhenotypeError::NonFinite(node.id));
            }
            slots[self.n_inputs + k] = a;
        }
        Ok(())
    }

    /// Output values (5 logits for the actor, one value for the critic).
    pub fn forward(&self, params: &[f64], obs: &[f64]) -> Result<Vec<f64>, PhenotypeError> {
        let mut slots = Vec::with_capacity(self.n_slots());
        self.forward_into(params, obs, &mut slots)?;
        Ok(self.outputs(&slots))
    }

    pub fn outputs(&self, slots: &[f64]) -> Vec<f64> {
        self.output_slots.iter().map(|&s| slots[s]).collect()
    }

    pub fn output_slots(&self) -> &[usize] {
        &self.output_slots
    }

    /// Reverse-mode pass. `slots` must come from [`forward_into`] with the
    /// same params; `d_out[i]` is dL/d(output i). Gradients are accumulated
    /// into `grad`; `scratch` is reused between calls.
    ///
    /// [`forward_into`]: Phenotype::forward_into
    pub fn backward(&self, params: &[f64], slots: &[f64], d_out: &[f64], grad: &mut [f64], scratch: &mut Vec<f64>) {
        let inputs = &slots[..self.n_inputs];
        let nz = inputs.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, _)| i);
        self.backward_impl(params, slots, d_out, grad, scratch, nz)
    }

    /// [`backward`](Phenotype::backward) with known nonzero input indices.
    pub fn backward_sparse(
        &self,
        params: &[f64],
        slots: &[f64],
        nonzero: &[u32],
        d_out: &[f64],
        grad: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        self.backward_impl(params, slots, d_out, grad, scratch, nonzero.iter().map(|&i| i as usize))
    }

    fn backward_impl(
        &self,
        params: &[f64],
        slots: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
        scratch: &mut Vec<f64>,
        nonzero: impl Iterator<Item = usize>,
    ) {
        scratch.clear();
        scratch.resize(slots.len(), 0.0);
        for (&s, &d) in self.output_slots.iter().zip(d_out) {
            scratch[s] += d;
        }
        for (k, node) in self.nodes.iter().enumerate().rev() {
            let slot = self.n_inputs + k;
            let da = scratch[slot];
            if da == 0.0 {
                continue;
            }
            let dz = da * node.activation.derivative_from_output(slots[slot]);
            // da is final here; keep dz for the input-edge pass below
            scratch[slot] = dz;
            grad[node.bias_param] += dz;
            let r = node.inner..node.edges.end;
            for ((g, w), &src) in grad[r.clone()].iter_mut().zip(&params[r.clone()]).zip(&self.edge_src[r]) {
                let src = src as usize;
                *g += dz * slots[src];
                if src >= self.n_inputs {
                    scratch[src] += dz * w;
                }
            }
        }
        for i in nonzero {
            let x = slots[i];
            for &(k, e) in &self.fan[self.fan_start[i]..self.fan_start[i + 1]] {
                grad[e as usize] += scratch[self.n_inputs + k as usize] * x;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
