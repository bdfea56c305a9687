//! Offline optimizers mapping a parameter vector to the best feasible super arm.
//!
//! Every oracle here is exact for its structure except the Problem-2
//! approximation oracle, which exists only to reproduce that counterexample.
//! Ties are broken deterministically by arm index so that runs replay
//! bit-for-bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::environment::{expected_reward, RewardKind, Sense};
use crate::error::{Error, Result};

/// Approximation rate of the Problem-2 oracle.
pub const PROBLEM2_LAMBDA: f64 = 0.8;

/// Reward gap of the Problem-1 instance; the lone arm of `S2` always pays `1 - gap`.
pub const PROBLEM1_GAP: f64 = 0.5;

/// A set of base-arm indices, kept sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct SuperArm(Vec<usize>);

impl SuperArm {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self(members)
    }

    pub fn singleton(arm: usize) -> Self {
        Self(vec![arm])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.0.binary_search(&arm).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl From<Vec<usize>> for SuperArm {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

impl From<SuperArm> for Vec<usize> {
    fn from(s: SuperArm) -> Self {
        s.0
    }
}

/// Disjoint-set forest with path halving and union by rank.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `x` and `y`; returns `false` if they were already joined.
    pub(crate) fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            Ordering::Less => self.parent[rx] = ry,
            Ordering::Greater => self.parent[ry] = rx,
            Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
        true
    }
}

/// A graph whose edges are the base arms: edge `i` is arm `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub directed: bool,
}

impl Graph {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>, directed: bool) -> Result<Self> {
        let g = Self { vertices, edges, directed };
        g.validate()?;
        Ok(g)
    }

    pub fn undirected(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(vertices, edges, false)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u == v {
                return Err(Error::InvalidParameter(format!("edge {i} is a self-loop at {u}")));
            }
            if u >= self.vertices || v >= self.vertices {
                return Err(Error::InvalidParameter(format!(
                    "edge {i} = ({u}, {v}) exceeds vertex count {}",
                    self.vertices
                )));
            }
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return true;
        }
        let mut uf = UnionFind::new(self.vertices);
        let mut components = self.vertices;
        for &(u, v) in &self.edges {
            if uf.union(u, v) {
                components -= 1;
            }
        }
        components == 1
    }

    /// `true` if the given edge subset contains no cycle (as undirected edges).
    pub fn is_forest(&self, edge_ids: &[usize]) -> bool {
        let mut uf = UnionFind::new(self.vertices);
        edge_ids.iter().all(|&e| {
            let (u, v) = self.edges[e];
            uf.union(u, v)
        })
    }

    /// Outgoing adjacency as `(neighbour, edge id)`; undirected edges appear both ways.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            adj[u].push((v, e));
            if !self.directed {
                adj[v].push((u, e));
            }
        }
        adj
    }
}

/// A matroid over the ground set `0..ground_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatroidSpec {
    /// All subsets of size at most `rank`.
    Uniform { ground_size: usize, rank: usize },
    /// Arm `i` lives in block `block_of[i]`; at most `capacities[b]` arms per block.
    Partition { block_of: Vec<usize>, capacities: Vec<usize> },
    /// Acyclic edge subsets of an undirected graph.
    Graphic { graph: Graph },
}

impl MatroidSpec {
    pub fn ground_size(&self) -> usize {
        match self {
            MatroidSpec::Uniform { ground_size, .. } => *ground_size,
            MatroidSpec::Partition { block_of, .. } => block_of.len(),
            MatroidSpec::Graphic { graph } => graph.edge_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MatroidSpec::Uniform { ground_size, rank } => {
                if rank > ground_size {
                    return Err(Error::InvalidMatroid(format!(
                        "rank {rank} exceeds ground size {ground_size}"
                    )));
                }
            }
            MatroidSpec::Partition { block_of, capacities } => {
                if let Some(&b) = block_of.iter().find(|&&b| b >= capacities.len()) {
                    return Err(Error::InvalidMatroid(format!(
                        "block {b} has no capacity entry ({} blocks)",
                        capacities.len()
                    )));
                }
            }
            MatroidSpec::Graphic { graph } => {
                if graph.directed {
                    return Err(Error::InvalidMatroid("graphic matroid needs an undirected graph".into()));
                }
                graph.validate().map_err(|e| Error::InvalidMatroid(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Independence test for an arbitrary arm set.
    pub fn is_independent(&self, arms: &[usize]) -> bool {
        if arms.iter().any(|&i| i >= self.ground_size()) {
            return false;
        }
        let set = SuperArm::new(arms.to_vec());
        if set.len() != arms.len() {
            return false;
        }
        match self {
            MatroidSpec::Uniform { rank, .. } => set.len() <= *rank,
            MatroidSpec::Partition { block_of, capacities } => {
                let mut used = vec![0usize; capacities.len()];
                set.iter().all(|i| {
                    used[block_of[i]] += 1;
                    used[block_of[i]] <= capacities[block_of[i]]
                })
            }
            MatroidSpec::Graphic { graph } => graph.is_forest(set.as_slice()),
        }
    }
}

/// Arm indices ordered by `theta` descending, lower index first on ties.
fn greedy_order(theta: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    // Stable sort keeps index order within ties.
    order.sort_by(|&i, &j| theta[j].total_cmp(&theta[i]));
    order
}

fn check_len(theta: &[f64], expected: usize) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::LengthMismatch { expected, got: theta.len() });
    }
    Ok(())
}

/// Greedy maximum-weight basis: scan arms by decreasing `theta`, keep each arm
/// that preserves independence.
pub fn greedy_matroid_max(theta: &[f64], matroid: &MatroidSpec) -> Result<SuperArm> {
    matroid.validate()?;
    check_len(theta, matroid.ground_size())?;
    let order = greedy_order(theta);
    let mut chosen = Vec::new();
    match matroid {
        MatroidSpec::Uniform { rank, .. } => {
            chosen.extend(order.into_iter().take(*rank));
        }
        MatroidSpec::Partition { block_of, capacities } => {
            let mut used = vec![0usize; capacities.len()];
            for i in order {
                let b = block_of[i];
                if used[b] < capacities[b] {
                    used[b] += 1;
                    chosen.push(i);
                }
            }
        }
        MatroidSpec::Graphic { graph } => {
            let mut uf = UnionFind::new(graph.vertices);
            for e in order {
                let (u, v) = graph.edges[e];
                if uf.union(u, v) {
                    chosen.push(e);
                }
            }
        }
    }
    Ok(SuperArm::new(chosen))
}

/// Maximum-weight spanning tree via the greedy algorithm on the graphic matroid.
pub fn max_spanning_tree(theta: &[f64], graph: &Graph) -> Result<SuperArm> {
    if graph.directed {
        return Err(Error::InvalidParameter("spanning trees need an undirected graph".into()));
    }
    let matroid = MatroidSpec::Graphic { graph: graph.clone() };
    let tree = greedy_matroid_max(theta, &matroid)?;
    if tree.len() + 1 != graph.vertices {
        return Err(Error::Disconnected);
    }
    Ok(tree)
}

/// Kruskal without the clone: used on the hot path where the graph is known valid.
pub(crate) fn max_spanning_tree_fast(theta: &[f64], graph: &Graph) -> Result<SuperArm> {
    check_len(theta, graph.edge_count())?;
    let mut uf = UnionFind::new(graph.vertices);
    let mut chosen = Vec::with_capacity(graph.vertices.saturating_sub(1));
    for e in greedy_order(theta) {
        let (u, v) = graph.edges[e];
        if uf.union(u, v) {
            chosen.push(e);
            if chosen.len() + 1 == graph.vertices {
                break;
            }
        }
    }
    if chosen.len() + 1 != graph.vertices {
        return Err(Error::Disconnected);
    }
    Ok(SuperArm::new(chosen))
}

/// Dijkstra label: a concrete path with its cost. Ordered by cost, then edge
/// count, then the edge sequence lexicographically.
#[derive(Debug, Clone)]
struct PathLabel {
    cost: f64,
    vertex: usize,
    edges: Vec<usize>,
}

impl PathLabel {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.edges.len().cmp(&other.edges.len()))
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

impl PartialEq for PathLabel {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal && self.vertex == other.vertex
    }
}
impl Eq for PathLabel {}
impl PartialOrd for PathLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PathLabel {
    // Reversed so that `BinaryHeap` pops the smallest label first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self).then(other.vertex.cmp(&self.vertex))
    }
}

/// Minimum-cost `source -> sink` path under nonnegative edge costs `theta`.
///
/// Ties prefer fewer edges, then the lexicographically smallest edge sequence.
pub fn shortest_path(theta: &[f64], graph: &Graph, source: usize, sink: usize) -> Result<SuperArm> {
    check_len(theta, graph.edge_count())?;
    if let Some(&w) = theta.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!("edge cost {w} is not a finite nonnegative number")));
    }
    if source >= graph.vertices || sink >= graph.vertices {
        return Err(Error::InvalidParameter(format!(
            "source {source} or sink {sink} outside {} vertices",
            graph.vertices
        )));
    }
    if source == sink {
        return Err(Error::InvalidParameter("source and sink coincide".into()));
    }
    let adj = graph.adjacency();
    let mut best: Vec<Option<PathLabel>> = vec![None; graph.vertices];
    let mut settled = vec![false; graph.vertices];
    let mut heap = BinaryHeap::new();
    let start = PathLabel { cost: 0.0, vertex: source, edges: Vec::new() };
    best[source] = Some(start.clone());
    heap.push(start);
    while let Some(label) = heap.pop() {
        let u = label.vertex;
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == sink {
            return Ok(SuperArm::new(label.edges));
        }
        for &(v, e) in &adj[u] {
            if settled[v] {
                continue;
            }
            let mut edges = label.edges.clone();
            edges.push(e);
            let candidate = PathLabel { cost: label.cost + theta[e], vertex: v, edges };
            let better = match &best[v] {
                None => true,
                Some(cur) => candidate.key_cmp(cur) == Ordering::Less,
            };
            if better {
                best[v] = Some(candidate.clone());
                heap.push(candidate);
            }
        }
    }
    Err(Error::Unreachable { origin: source, sink })
}

/// Exhaustive optimizer over an explicit family; the first optimum in list order wins.
pub fn brute_force_best(
    theta: &[f64],
    family: &[SuperArm],
    reward: RewardKind,
    sense: Sense,
) -> Result<SuperArm> {
    let mut best: Option<(&SuperArm, f64)> = None;
    for s in family {
        if let Some(&i) = s.as_slice().iter().find(|&&i| i >= theta.len()) {
            return Err(Error::ArmOutOfRange { index: i, arms: theta.len() });
        }
        let value = expected_reward(s, theta, reward);
        match best {
            Some((_, v)) if !sense.improves(value, v) => {}
            _ => best = Some((s, value)),
        }
    }
    best.map(|(s, _)| s.clone()).ok_or(Error::EmptyFamily)
}

/// The Problem-2 approximation oracle with rate 0.8 on three arms.
///
/// Returns a 0-based arm index: prefers arm 2 (the worst) whenever its
/// parameter reaches `0.8 * max`, then arm 1, otherwise arm 0.
pub fn problem2_approx_oracle(theta: &[f64]) -> Result<usize> {
    check_len(theta, 3)?;
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bar = PROBLEM2_LAMBDA * max;
    Ok(if theta[2] >= bar {
        2
    } else if theta[1] >= bar {
        1
    } else {
        0
    })
}

/// The Problem-1 oracle: `S1 = {0..k*}` if the product of its parameters
/// reaches `1 - gap` (ties included), else `S2 = {k*}`.
pub fn problem1_oracle(theta: &[f64], k_star: usize) -> Result<SuperArm> {
    if k_star == 0 {
        return Err(Error::InvalidParameter("k* must be at least 1".into()));
    }
    check_len(theta, k_star + 1)?;
    let product: f64 = theta[..k_star].iter().product();
    Ok(if product >= 1.0 - PROBLEM1_GAP {
        SuperArm::new((0..k_star).collect())
    } else {
        SuperArm::singleton(k_star)
    })
}

/// An oracle bound to the structure of one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Matroid(MatroidSpec),
    SpanningTree(Graph),
    ShortestPath { graph: Graph, source: usize, sink: usize },
    Enumerated { family: Vec<SuperArm>, reward: RewardKind, sense: Sense },
    Problem1 { k_star: usize },
    Problem2,
}

impl Oracle {
    /// Number of base arms the oracle expects in `theta`.
    pub fn arms(&self) -> usize {
        match self {
            Oracle::Matroid(m) => m.ground_size(),
            Oracle::SpanningTree(g) => g.edge_count(),
            Oracle::ShortestPath { graph, .. } => graph.edge_count(),
            Oracle::Enumerated { family, .. } => {
                family.iter().flat_map(|s| s.iter()).max().map_or(0, |m| m + 1)
            }
            Oracle::Problem1 { k_star } => k_star + 1,
            Oracle::Problem2 => 3,
        }
    }

    pub fn sense(&self) -> Sense {
        match self {
            Oracle::ShortestPath { .. } => Sense::Min,
            Oracle::Enumerated { sense, .. } => *sense,
            _ => Sense::Max,
        }
    }

    pub fn solve(&self, theta: &[f64]) -> Result<SuperArm> {
        match self {
            Oracle::Matroid(m) => greedy_matroid_max(theta, m),
            Oracle::SpanningTree(g) => max_spanning_tree_fast(theta, g),
            Oracle::ShortestPath { graph, source, sink } => shortest_path(theta, graph, *source, *sink),
            Oracle::Enumerated { family, reward, sense } => brute_force_best(theta, family, *reward, *sense),
            Oracle::Problem1 { k_star } => problem1_oracle(theta, *k_star),
            Oracle::Problem2 => problem2_approx_oracle(theta).map(SuperArm::singleton),
        }
    }
}

/// Exhaustive enumerators used as independent references for the exact oracles.
pub mod enumerate {
    use super::*;

    /// Every subset of `0..n` as a sorted index list, `n <= 20`.
    pub fn all_subsets(n: usize) -> Vec<Vec<usize>> {
        assert!(n <= 20, "subset enumeration limited to 20 elements");
        (0u32..1 << n)
            .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
            .collect()
    }

    pub fn independent_sets(matroid: &MatroidSpec) -> Vec<SuperArm> {
        all_subsets(matroid.ground_size())
            .into_iter()
            .filter(|s| matroid.is_independent(s))
            .map(SuperArm::new)
            .collect()
    }

    /// Maximal independent sets, in lexicographic order of their sorted members.
    pub fn bases(matroid: &MatroidSpec) -> Vec<SuperArm> {
        let sets = independent_sets(matroid);
        let rank = sets.iter().map(SuperArm::len).max().unwrap_or(0);
        let mut out: Vec<SuperArm> = sets.into_iter().filter(|s| s.len() == rank).collect();
        out.sort();
        out
    }

    pub fn spanning_trees(graph: &Graph) -> Vec<SuperArm> {
        all_subsets(graph.edge_count())
            .into_iter()
            .filter(|s| s.len() + 1 == graph.vertices && graph.is_forest(s))
            .map(SuperArm::new)
            .collect()
    }

    /// All simple `source -> sink` paths as edge sequences (depth-first, edge-id order).
    pub fn simple_paths(graph: &Graph, source: usize, sink: usize) -> Vec<Vec<usize>> {
        let adj = graph.adjacency();
        let mut out = Vec::new();
        let mut on_path = vec![false; graph.vertices];
        let mut stack = Vec::new();
        fn dfs(
            u: usize,
            sink: usize,
            adj: &[Vec<(usize, usize)>],
            on_path: &mut [bool],
            stack: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if u == sink {
                out.push(stack.clone());
                return;
            }
            on_path[u] = true;
            for &(v, e) in &adj[u] {
                if !on_path[v] {
                    stack.push(e);
                    dfs(v, sink, adj, on_path, stack, out);
                    stack.pop();
                }
            }
            on_path[u] = false;
        }
        if source != sink {
            dfs(source, sink, &adj, &mut on_path, &mut stack, &mut out);
        }
        out
    }
}
