//! Structural complexity of evolved networks.
//!
//! A genome is viewed as a simple undirected, unweighted graph over its
//! enabled connections. Segregation is Newman modularity of a Louvain
//! partition, integration is global efficiency, and the complexity ratio is
//! `min(M, E) / max(M, E)` with negative modularity clamped to zero.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::Genome;
use crate::seeds;

#[derive(Debug, Error, PartialEq)]
pub enum ComplexityError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("graph needs at least two nodes")]
    TooFewNodes,
    #[error("partition does not cover the graph")]
    BadPartition,
}

/// Simple undirected graph with dense node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphView {
    ids: Vec<u32>,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl GraphView {
    /// Build from explicit node ids and edges; self-loops are dropped and
    /// parallel or antiparallel edges collapsed. Edge endpoints missing from
    /// `nodes` are added.
    pub fn new(nodes: impl IntoIterator<Item = u32>, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut ids: BTreeSet<u32> = nodes.into_iter().collect();
        let mut pairs = BTreeSet::new();
        for (a, b) in edges {
            ids.insert(a);
            ids.insert(b);
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        let ids: Vec<u32> = ids.into_iter().collect();
        let index: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        let mut edges = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let (i, j) = (index[&a], index[&b]);
            adj[i].push(j);
            adj[j].push(i);
            edges.push((i, j));
        }
        Self { ids, adj, edges }
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Self::new(std::iter::empty(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Edges as dense index pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }
}

/// Undirected view of a genome's enabled connections. Nodes without any
/// enabled connection are left out.
pub fn to_graph(genome: &Genome) -> Result<GraphView, ComplexityError> {
    let g = GraphView::from_edges(genome.enabled_connections().map(|c| (c.from, c.to)));
    if g.edge_count() == 0 {
        return Err(ComplexityError::EmptyGraph);
    }
    Ok(g)
}

/// Community label per dense node index, labels contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition(pub Vec<usize>);

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn single(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// Relabel communities by order of first appearance.
    pub fn canonical(labels: &[usize]) -> Self {
        let mut map = HashMap::new();
        let out = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self(out)
    }

    pub fn community_count(&self) -> usize {
        self.0.iter().max().map_or(0, |m| m + 1)
    }
}

/// Newman modularity `Σ_c [e_c/m − (d_c/2m)²]`.
pub fn modularity(graph: &GraphView, partition: &Partition) -> Result<f64, ComplexityError> {
    let m = graph.edge_count();
    if m == 0 {
        return Err(ComplexityError::EmptyGraph);
    }
    if partition.0.len() != graph.node_count() {
        return Err(ComplexityError::BadPartition);
    }
    let k = partition.community_count();
    let mut intra = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for &(i, j) in graph.edges() {
        if partition.0[i] == partition.0[j] {
            intra[partition.0[i]] += 1;
        }
    }
    for i in 0..graph.node_count() {
        degree[partition.0[i]] += graph.degree(i);
    }
    let m = m as f64;
    Ok((0..k)
        .map(|c| intra[c] as f64 / m - (degree[c] as f64 / (2.0 * m)).powi(2))
        .sum())
}

// Weighted multigraph used between Louvain levels. `loops[i]` is the weight
// of edges collapsed inside node i, each counted once.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn from_graph(g: &GraphView) -> Self {
        Self {
            adj: (0..g.node_count()).map(|i| g.neighbors(i).iter().map(|&j| (j, 1.0)).collect()).collect(),
            loops: vec![0.0; g.node_count()],
        }
    }

    fn degree(&self, i: usize) -> f64 {
        2.0 * self.loops[i] + self.adj[i].iter().map(|(_, w)| w).sum::<f64>()
    }

    // One round of local moves. Returns the labels and whether anything moved.
    fn local_moves(&self, m: f64, order: &[usize]) -> (Vec<usize>, bool) {
        let n = self.adj.len();
        let k: Vec<f64> = (0..n).map(|i| self.degree(i)).collect();
        let mut label: Vec<usize> = (0..n).collect();
        let mut tot = k.clone();
        let mut size = vec![1usize; n];
        let mut moved_any = false;
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            let mut moved = false;
            for &i in order {
                links.clear();
                for &(j, w) in &self.adj[i] {
                    if j != i {
                        *links.entry(label[j]).or_insert(0.0) += w;
                    }
                }
                let own = label[i];
                tot[own] -= k[i];
                let gain = |c: usize, w_in: f64| w_in - tot[c] * k[i] / (2.0 * m);
                let own_gain = gain(own, links.get(&own).copied().unwrap_or(0.0));
                let mut best = own;
                let mut best_gain = own_gain;
                // ascending community id: first strict maximum wins ties
                for (&c, &w_in) in &links {
                    let g = gain(c, w_in);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                // being alone scores zero; take the lowest empty label
                if best_gain < -1e-12 && size[own] > 1 {
                    best = size.iter().position(|&s| s == 0).expect("n labels for n nodes");
                }
                size[own] -= 1;
                size[best] += 1;
                tot[best] += k[i];
                if best != own {
                    label[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (label, moved_any)
    }

    fn aggregate(&self, labels: &[usize], count: usize) -> Level {
        let mut loops = vec![0.0; count];
        let mut weights: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        for i in 0..self.adj.len() {
            let ci = labels[i];
            loops[ci] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = labels[j];
                if ci == cj {
                    // each internal edge is seen from both ends
                    loops[ci] += w / 2.0;
                } else {
                    *weights[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
            loops,
        }
    }
}

/// Independent Louvain passes per call; the best partition is kept.
pub const LOUVAIN_RESTARTS: usize = 16;

/// Louvain community detection. Each of [`LOUVAIN_RESTARTS`] passes visits
/// nodes in ascending index order shuffled by a stream derived from `seed`;
/// the highest-modularity result wins (earliest on ties), so the output is
/// deterministic. Restarts guard against the greedy merge order locking in
/// a poor optimum on small graphs.
pub fn louvain(graph: &GraphView, seed: u64) -> Result<Partition, ComplexityError> {
    if graph.edge_count() == 0 {
        return Err(ComplexityError::EmptyGraph);
    }
    let mut rng = seeds::stream(seed, &[seeds::purpose::COMPLEXITY]);
    let mut best: Option<(f64, Partition)> = None;
    for _ in 0..LOUVAIN_RESTARTS {
        let p = louvain_pass(graph, &mut rng);
        let q = modularity(graph, &p)?;
        if best.as_ref().is_none_or(|(bq, _)| q > *bq + 1e-12) {
            best = Some((q, p));
        }
    }
    Ok(best.expect("at least one pass").1)
}

fn louvain_pass(graph: &GraphView, rng: &mut impl rand::Rng) -> Partition {
    let m = graph.edge_count() as f64;
    let mut membership: Vec<usize> = (0..graph.node_count()).collect();
    let mut level = Level::from_graph(graph);
    loop {
        let n = level.adj.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let (labels, moved) = level.local_moves(m, &order);
        if !moved {
            break;
        }
        let canon = Partition::canonical(&labels);
        let count = canon.community_count();
        for c in membership.iter_mut() {
            *c = canon.0[*c];
        }
        if count == n {
            break;
        }
        level = level.aggregate(&canon.0, count);
    }
    Partition::canonical(&membership)
}

/// Mean inverse shortest-path length over ordered node pairs; unreachable
/// pairs contribute zero.
pub fn global_efficiency(graph: &GraphView) -> Result<f64, ComplexityError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(ComplexityError::TooFewNodes);
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    // pairs per distance; exact counts keep the sum independent of labels
    let mut at_distance = vec![0u64; n];
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    at_distance[dist[v]] += 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let total: f64 = at_distance.iter().enumerate().skip(1).map(|(d, &c)| c as f64 / d as f64).sum();
    Ok(total / (n * (n - 1)) as f64)
}

/// `min/max` of clamped modularity and efficiency; zero when both vanish.
pub fn nc_ratio(modularity: f64, efficiency: f64) -> f64 {
    let m = modularity.clamp(0.0, 1.0);
    let e = efficiency.clamp(0.0, 1.0);
    let hi = m.max(e);
    if hi == 0.0 {
        0.0
    } else {
        m.min(e) / hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n_s: usize,
    pub modularity: f64,
    pub efficiency: f64,
    pub n_c: f64,
}

/// Metrics for an arbitrary graph (no size term).
pub fn graph_report(graph: &GraphView, seed: u64) -> Result<(f64, f64, f64), ComplexityError> {
    let partition = louvain(graph, seed)?;
    let q = modularity(graph, &partition)?;
    let e = global_efficiency(graph)?;
    Ok((q, e, nc_ratio(q, e)))
}

pub fn complexity_report(genome: &Genome, seed: u64) -> ComplexityReport {
    let n_s = genome.ann_size();
    match to_graph(genome).and_then(|g| graph_report(&g, seed)) {
        Ok((modularity, efficiency, n_c)) => ComplexityReport {
            n_s,
            modularity,
            efficiency,
            n_c,
        },
        Err(_) => ComplexityReport {
            n_s,
            modularity: 0.0,
            efficiency: 0.0,
            n_c: 0.0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_triangles() -> GraphView {
        GraphView::from_edges([(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
    }

    fn complete(n: u32) -> GraphView {
        GraphView::from_edges((0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
    }

    #[test]
    fn modularity_examples() {
        let g = two_triangles();
        assert_eq!(modularity(&g, &Partition::single(6)).unwrap(), 0.0);
        let q = modularity(&g, &Partition(vec![0, 0, 0, 1, 1, 1])).unwrap();
        assert!((q - 5.0 / 14.0).abs() < 1e-12);
        let singles = modularity(&g, &Partition::singletons(6)).unwrap();
        let expected: f64 = -(0..6).map(|i| (g.degree(i) as f64 / 14.0).powi(2)).sum::<f64>();
        assert!((singles - expected).abs() < 1e-15);
        assert!(singles < 0.0);
        assert_eq!(modularity(&GraphView::new([1, 2], []), &Partition::single(2)), Err(ComplexityError::EmptyGraph));
    }

    #[test]
    fn louvain_finds_two_triangles() {
        for seed in 0..20 {
            let p = louvain(&two_triangles(), seed).unwrap();
            assert_eq!(p.0[0], p.0[1]);
            assert_eq!(p.0[1], p.0[2]);
            assert_eq!(p.0[3], p.0[4]);
            assert_ne!(p.0[0], p.0[3]);
            let q = modularity(&two_triangles(), &p).unwrap();
            assert!((q - 5.0 / 14.0).abs() < 1e-12);
        }
    }

    #[test]
    fn louvain_keeps_complete_graph_whole() {
        let g = complete(5);
        let p = louvain(&g, 3).unwrap();
        assert_eq!(p.community_count(), 1);
        assert_eq!(modularity(&g, &p).unwrap(), 0.0);
        assert_eq!(louvain(&g, 3).unwrap(), p);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(global_efficiency(&complete(6)).unwrap(), 1.0);
        let path = GraphView::from_edges([(0, 1), (1, 2)]);
        assert!((global_efficiency(&path).unwrap() - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!(global_efficiency(&GraphView::new([0, 1], [])).unwrap(), 0.0);
        assert_eq!(global_efficiency(&GraphView::new([0], [])), Err(ComplexityError::TooFewNodes));
    }

    #[test]
    fn adding_an_edge_never_lowers_efficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..100 {
            let n = 8u32;
            let mut edges: Vec<(u32, u32)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
            let before = global_efficiency(&GraphView::from_edges(edges.clone())).unwrap();
            edges.push((rng.random_range(0..n), rng.random_range(0..n)));
            let after = global_efficiency(&GraphView::from_edges(edges)).unwrap();
            assert!(after >= before - 1e-15);
        }
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(nc_ratio(0.5, 0.5), 1.0);
        assert_eq!(nc_ratio(0.2, 0.8), 0.25);
        assert_eq!(nc_ratio(0.0, 0.7), 0.0);
        assert_eq!(nc_ratio(-0.3, 0.7), 0.0);
        assert_eq!(nc_ratio(0.0, 0.0), 0.0);
        assert_eq!(nc_ratio(0.3, 0.6), nc_ratio(0.6, 0.3));
    }

    #[test]
    fn initial_genome_graph_and_report() {
        let g = Genome::initial(0, &mut ChaCha8Rng::seed_from_u64(1));
        let view = to_graph(&g).unwrap();
        assert_eq!(view.node_count(), 249);
        assert_eq!(view.edge_count(), 248);
        let r = complexity_report(&g, 7);
        assert_eq!(r.n_s, 254);
        assert!(r.n_c <= 0.05, "{r:?}");
        assert_eq!(r, complexity_report(&g, 7));
    }

    #[test]
    fn minimal_and_empty_genomes() {
        let mut g = Genome::bare(0);
        g.add_connection(crate::genome::ConnGene { innovation: 0, from: 3, to: 244, weight: 1.0, enabled: true });
        let v = to_graph(&g).unwrap();
        assert_eq!(v.ids(), &[3, 244]);
        assert_eq!(v.edge_count(), 1);
        let empty = Genome::bare(1);
        assert_eq!(to_graph(&empty), Err(ComplexityError::EmptyGraph));
        let r = complexity_report(&empty, 0);
        assert_eq!((r.n_s, r.modularity, r.efficiency, r.n_c), (5, 0.0, 0.0, 0.0));
    }

    #[test]
    fn relabeling_nodes_changes_nothing() {
        let edges = [(0u32, 1u32), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3), (5, 6)];
        let a = GraphView::from_edges(edges);
        let perm = [40u32, 7, 19, 3, 88, 12, 5];
        let b = GraphView::from_edges(edges.iter().map(|&(x, y)| (perm[x as usize], perm[y as usize])));
        assert!((global_efficiency(&a).unwrap() - global_efficiency(&b).unwrap()).abs() < 1e-15);
        let qa = modularity(&a, &louvain(&a, 1).unwrap()).unwrap();
        let qb = modularity(&b, &louvain(&b, 1).unwrap()).unwrap();
        assert!((qa - qb).abs() < 1e-12);
    }
}
