//! Problem instances: the random spanning-tree and shortest-path benchmarks,
//! the two counterexample problems, and small synthetic matroids.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{expected_reward, EnvironmentKind, EnvironmentModel, MeanVector, RewardKind, Sense};
use crate::error::{Error, Result};
use crate::oracle::{
    brute_force_best, max_spanning_tree, problem1_oracle, Graph, MatroidSpec, Oracle, SuperArm, UnionFind,
    PROBLEM1_GAP, PROBLEM2_LAMBDA,
};

/// Current version of the instance file layout.
pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

/// Regeneration cap for the Erdős–Rényi connectivity loop.
pub const MAX_GRAPH_ATTEMPTS: u32 = 1000;

pub const DEFAULT_LAYERS: usize = 5;
pub const DEFAULT_WIDTH: usize = 4;
pub const DEFAULT_DECOY_GAP: f64 = 0.05;

/// Problem-2 means.
pub const PROBLEM2_MEANS: [f64; 3] = [0.9, 0.82, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    SpanningTree,
    ShortestPath,
    Problem1,
    Problem2,
    UniformMatroid,
}

/// How per-step regret is charged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegretMode {
    /// `r(S*, mu) - r(S(t), mu)`, sign-flipped for cost minimisation.
    Expected,
    /// `lambda * max_i mu_i - mu_played`; individual terms can be negative.
    Approximation { lambda: f64 },
}

/// A fully specified bandit problem with its precomputed optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub kind: InstanceKind,
    pub oracle: Oracle,
    pub environment: EnvironmentModel,
    pub reward_kind: RewardKind,
    pub sense: Sense,
    pub regret_mode: RegretMode,
    pub optimal_arm: SuperArm,
    pub optimal_value: f64,
    /// Seed of the generator stream that produced the instance, if any.
    pub seed: Option<u64>,
}

impl ProblemInstance {
    fn assemble(
        kind: InstanceKind,
        oracle: Oracle,
        environment: EnvironmentModel,
        reward_kind: RewardKind,
        regret_mode: RegretMode,
        optimal_arm: Option<SuperArm>,
        seed: Option<u64>,
    ) -> Result<Self> {
        if oracle.arms() != environment.arms() {
            return Err(Error::LengthMismatch { expected: oracle.arms(), got: environment.arms() });
        }
        let optimal_arm = match optimal_arm {
            Some(s) => s,
            None => oracle.solve(environment.means.as_slice())?,
        };
        let optimal_value = expected_reward(&optimal_arm, environment.means.as_slice(), reward_kind);
        let sense = oracle.sense();
        Ok(Self { kind, oracle, environment, reward_kind, sense, regret_mode, optimal_arm, optimal_value, seed })
    }

    pub fn arms(&self) -> usize {
        self.environment.arms()
    }

    pub fn means(&self) -> &[f64] {
        self.environment.means.as_slice()
    }

    pub fn expected_reward(&self, arm: &SuperArm) -> f64 {
        expected_reward(arm, self.means(), self.reward_kind)
    }

    /// Regret charged for playing `arm` for one step.
    pub fn step_regret(&self, arm: &SuperArm) -> f64 {
        let r = self.expected_reward(arm);
        match self.regret_mode {
            RegretMode::Expected => match self.sense {
                Sense::Max => self.optimal_value - r,
                Sense::Min => r - self.optimal_value,
            },
            RegretMode::Approximation { lambda } => lambda * self.optimal_value - r,
        }
    }

    /// The underlying graph for graph-based instances.
    pub fn graph(&self) -> Option<&Graph> {
        match &self.oracle {
            Oracle::SpanningTree(g) | Oracle::ShortestPath { graph: g, .. } => Some(g),
            Oracle::Matroid(MatroidSpec::Graphic { graph }) => Some(graph),
            _ => None,
        }
    }

    /// Stable 64-bit FNV-1a digest of the serialized instance.
    pub fn fingerprint(&self) -> u64 {
        let text = self.to_json().unwrap_or_default();
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }

    pub fn to_file(&self) -> InstanceFile {
        let (graph, rank) = match &self.oracle {
            Oracle::SpanningTree(g) => (Some(GraphSpec::from_graph(g, None)), None),
            Oracle::ShortestPath { graph, source, sink } => {
                (Some(GraphSpec::from_graph(graph, Some((*source, *sink)))), None)
            }
            Oracle::Matroid(MatroidSpec::Uniform { rank, .. }) => (None, Some(*rank)),
            _ => (None, None),
        };
        InstanceFile {
            schema_version: INSTANCE_SCHEMA_VERSION,
            kind: self.kind,
            m: self.arms(),
            graph,
            means: self.means().iter().map(|&x| format_decimal(x)).collect(),
            reward_kind: self.reward_kind,
            sense: self.sense,
            seed: self.seed,
            environment: Some(self.environment.kind),
            rank,
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        if file.schema_version != INSTANCE_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported instance schema_version {}",
                file.schema_version
            )));
        }
        let means = file
            .means
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("mean `{s}` is not a decimal number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if means.len() != file.m {
            return Err(Error::LengthMismatch { expected: file.m, got: means.len() });
        }
        let means = MeanVector::new(means)?;
        let env_kind = file.environment.unwrap_or(EnvironmentKind::IndependentBernoulli);
        let need_graph = || {
            file.graph
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("{:?} instance needs a graph", file.kind)))
        };
        let mut inst = match file.kind {
            InstanceKind::SpanningTree => {
                let g = need_graph()?.to_graph()?;
                from_graph_and_means(g, means, env_kind == EnvironmentKind::CorrelatedThreshold, file.seed)?
            }
            InstanceKind::ShortestPath => {
                let spec = need_graph()?;
                let (source, sink) = spec.source.zip(spec.sink).ok_or_else(|| {
                    Error::InvalidParameter("shortest_path graph needs source and sink".into())
                })?;
                let oracle = Oracle::ShortestPath { graph: spec.to_graph()?, source, sink };
                let env = EnvironmentModel::new(env_kind, means);
                ProblemInstance::assemble(
                    InstanceKind::ShortestPath,
                    oracle,
                    env,
                    RewardKind::LinearSum,
                    RegretMode::Expected,
                    None,
                    file.seed,
                )?
            }
            InstanceKind::Problem1 => {
                if file.m < 2 {
                    return Err(Error::InvalidParameter("problem1 needs m >= 2".into()));
                }
                build_problem1(file.m - 1)?
            }
            InstanceKind::Problem2 => build_problem2()?,
            InstanceKind::UniformMatroid => {
                let rank = file
                    .rank
                    .ok_or_else(|| Error::InvalidParameter("uniform_matroid instance needs `rank`".into()))?;
                let mut inst = build_uniform_matroid_instance(rank, means)?;
                inst.environment.kind = env_kind;
                inst
            }
        };
        if inst.means() != file_means_as_f64(file)?.as_slice() {
            return Err(Error::InvalidParameter(format!(
                "means in file disagree with the fixed {:?} construction",
                file.kind
            )));
        }
        inst.seed = file.seed;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }
}

fn file_means_as_f64(file: &InstanceFile) -> Result<Vec<f64>> {
    file.means
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad mean `{s}`"))))
        .collect()
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_decimal(x: f64) -> String {
    format!("{x:.16e}")
}

/// On-disk layout of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub kind: InstanceKind,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    pub means: Vec<String>,
    pub reward_kind: RewardKind,
    pub sense: Sense,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub directed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink: Option<usize>,
}

impl GraphSpec {
    fn from_graph(g: &Graph, endpoints: Option<(usize, usize)>) -> Self {
        Self {
            vertices: g.vertices,
            edges: g.edges.clone(),
            directed: g.directed,
            source: endpoints.map(|e| e.0),
            sink: endpoints.map(|e| e.1),
        }
    }

    fn to_graph(&self) -> Result<Graph> {
        Graph::new(self.vertices, self.edges.clone(), self.directed)
    }
}

/// Samples `G(vertices, p)` until it is connected. Returns the graph and the
/// number of draws it took.
pub fn sample_connected_graph<R: Rng + ?Sized>(vertices: usize, p: f64, rng: &mut R) -> Result<(Graph, u32)> {
    if vertices < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 vertices, got {vertices}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("edge probability {p} outside (0, 1]")));
    }
    for attempt in 1..=MAX_GRAPH_ATTEMPTS {
        let mut edges = Vec::new();
        let mut uf = UnionFind::new(vertices);
        let mut components = vertices;
        for u in 0..vertices {
            for v in u + 1..vertices {
                if rng.random_bool(p) {
                    edges.push((u, v));
                    if uf.union(u, v) {
                        components -= 1;
                    }
                }
            }
        }
        if components == 1 {
            return Ok((Graph::undirected(vertices, edges)?, attempt));
        }
    }
    Err(Error::RegenerationExhausted(MAX_GRAPH_ATTEMPTS))
}

fn from_graph_and_means(graph: Graph, means: MeanVector, correlated: bool, seed: Option<u64>) -> Result<ProblemInstance> {
    if means.len() != graph.edge_count() {
        return Err(Error::LengthMismatch { expected: graph.edge_count(), got: means.len() });
    }
    let kind = if correlated { EnvironmentKind::CorrelatedThreshold } else { EnvironmentKind::IndependentBernoulli };
    let optimum = max_spanning_tree(means.as_slice(), &graph)?;
    ProblemInstance::assemble(
        InstanceKind::SpanningTree,
        Oracle::SpanningTree(graph),
        EnvironmentModel::new(kind, means),
        RewardKind::LinearSum,
        RegretMode::Expected,
        Some(optimum),
        seed,
    )
}

/// Maximum-spanning-tree bandit on a random connected graph with uniform edge means.
pub fn gen_spanning_tree_instance<R: Rng + ?Sized>(
    vertices: usize,
    p: f64,
    correlated: bool,
    rng: &mut R,
) -> Result<ProblemInstance> {
    let (graph, _) = sample_connected_graph(vertices, p, rng)?;
    let means: Vec<f64> = (0..graph.edge_count()).map(|_| rng.random::<f64>()).collect();
    from_graph_and_means(graph, MeanVector::new(means)?, correlated, None)
}

/// Where the designated optimal path and its decoys sit in a layered graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLayout {
    pub optimal: SuperArm,
    pub decoys: Vec<SuperArm>,
}

/// Layered shortest-path instance with vertex-disjoint near-optimal decoys.
///
/// Vertex `0` is the source, layer `l` slot `j` is `1 + l * width + j`, and the
/// sink is `1 + layers * width`. Edges run source -> first layer, between
/// every pair of slots in consecutive layers, and last layer -> sink. Each
/// layer's slots are shuffled into `width` lanes; lane 0 is the optimal path
/// (edge means in `[0.1, 0.3]`), every other lane copies those means shifted
/// up by `g / (layers + 1)` with `g` in `[decoy_gap, 2 * decoy_gap]`, and every
/// lane-switching edge gets a mean in `[0.5, 0.9]`. Switching lanes therefore
/// costs at least `0.2` over the optimum.
pub fn gen_shortest_path_layout<R: Rng + ?Sized>(
    layers: usize,
    width: usize,
    decoy_gap: f64,
    rng: &mut R,
) -> Result<(ProblemInstance, PathLayout)> {
    if layers < 2 || width < 2 {
        return Err(Error::InvalidParameter(format!(
            "shortest-path generator needs layers >= 2 and width >= 2, got {layers} x {width}"
        )));
    }
    if !(decoy_gap > 0.0 && decoy_gap <= 0.2) {
        return Err(Error::InvalidParameter(format!("decoy_gap {decoy_gap} outside (0, 0.2]")));
    }
    let slot = |l: usize, j: usize| 1 + l * width + j;
    let source = 0;
    let sink = 1 + layers * width;

    let mut edges = Vec::new();
    for j in 0..width {
        edges.push((source, slot(0, j)));
    }
    for l in 0..layers - 1 {
        for a in 0..width {
            for b in 0..width {
                edges.push((slot(l, a), slot(l + 1, b)));
            }
        }
    }
    for j in 0..width {
        edges.push((slot(layers - 1, j), sink));
    }
    let edge_id = |u: usize, v: usize| -> usize {
        if u == source {
            v - 1
        } else if v == sink {
            width + (layers - 1) * width * width + (u - slot(layers - 1, 0))
        } else {
            let l = (u - 1) / width;
            let (a, b) = ((u - 1) % width, (v - 1) % width);
            width + l * width * width + a * width + b
        }
    };

    // lanes[l][lane] = slot index used by `lane` in layer `l`.
    let lanes: Vec<Vec<usize>> = (0..layers)
        .map(|_| {
            let mut perm: Vec<usize> = (0..width).collect();
            perm.shuffle(rng);
            perm
        })
        .collect();
    let lane_path = |lane: usize| -> Vec<usize> {
        let mut path = vec![edge_id(source, slot(0, lanes[0][lane]))];
        for l in 0..layers - 1 {
            path.push(edge_id(slot(l, lanes[l][lane]), slot(l + 1, lanes[l + 1][lane])));
        }
        path.push(edge_id(slot(layers - 1, lanes[layers - 1][lane]), sink));
        path
    };

    let hops = (layers + 1) as f64;
    let mut means = vec![f64::NAN; edges.len()];
    let optimal_path = lane_path(0);
    let base: Vec<f64> = optimal_path.iter().map(|_| rng.random_range(0.1..=0.3)).collect();
    for (&e, &mu) in optimal_path.iter().zip(&base) {
        means[e] = mu;
    }
    let mut decoys = Vec::with_capacity(width - 1);
    for lane in 1..width {
        let gap = rng.random_range(decoy_gap..=2.0 * decoy_gap);
        let path = lane_path(lane);
        for (&e, &mu) in path.iter().zip(&base) {
            means[e] = mu + gap / hops;
        }
        decoys.push(SuperArm::new(path));
    }
    for mu in means.iter_mut().filter(|m| m.is_nan()) {
        *mu = rng.random_range(0.5..=0.9);
    }

    let graph = Graph::new(sink + 1, edges, true)?;
    debug_assert!((0..graph.edge_count()).all(|e| {
        let (u, v) = graph.edges[e];
        edge_id(u, v) == e
    }));
    let instance = ProblemInstance::assemble(
        InstanceKind::ShortestPath,
        Oracle::ShortestPath { graph, source, sink },
        EnvironmentModel::new(EnvironmentKind::IndependentBernoulli, MeanVector::new(means)?),
        RewardKind::LinearSum,
        RegretMode::Expected,
        None,
        None,
    )?;
    Ok((instance, PathLayout { optimal: SuperArm::new(optimal_path), decoys }))
}

pub fn gen_shortest_path_instance<R: Rng + ?Sized>(
    layers: usize,
    width: usize,
    decoy_gap: f64,
    rng: &mut R,
) -> Result<ProblemInstance> {
    gen_shortest_path_layout(layers, width, decoy_gap, rng).map(|(inst, _)| inst)
}

/// Two super arms: `S1 = {0..k*}` whose arms always pay 1 (product reward),
/// and `S2 = {k*}`, a single deterministic arm paying `1 - gap = 0.5`.
pub fn build_problem1(k_star: usize) -> Result<ProblemInstance> {
    if k_star == 0 {
        return Err(Error::InvalidParameter("k* must be at least 1".into()));
    }
    let mut means = vec![1.0; k_star];
    means.push(1.0 - PROBLEM1_GAP);
    let env = EnvironmentModel::new(EnvironmentKind::Deterministic, MeanVector::new(means)?);
    let optimum = problem1_oracle(env.means.as_slice(), k_star)?;
    ProblemInstance::assemble(
        InstanceKind::Problem1,
        Oracle::Problem1 { k_star },
        env,
        RewardKind::Product,
        RegretMode::Expected,
        Some(optimum),
        None,
    )
}

/// Three Bernoulli arms with the 0.8-approximation oracle; regret is the
/// approximation regret against `0.8 * 0.9`.
pub fn build_problem2() -> Result<ProblemInstance> {
    let env = EnvironmentModel::new(EnvironmentKind::IndependentBernoulli, MeanVector::new(PROBLEM2_MEANS.to_vec())?);
    let singletons: Vec<SuperArm> = (0..3).map(SuperArm::singleton).collect();
    // The oracle is only approximate, so the true optimum comes from enumeration.
    let best = brute_force_best(env.means.as_slice(), &singletons, RewardKind::LinearSum, Sense::Max)?;
    ProblemInstance::assemble(
        InstanceKind::Problem2,
        Oracle::Problem2,
        env,
        RewardKind::LinearSum,
        RegretMode::Approximation { lambda: PROBLEM2_LAMBDA },
        Some(best),
        None,
    )
}

/// Top-`k` bandit: uniform matroid of rank `k` with independent Bernoulli arms.
pub fn build_uniform_matroid_instance(k: usize, means: MeanVector) -> Result<ProblemInstance> {
    if k == 0 || k > means.len() {
        return Err(Error::InvalidParameter(format!("rank {k} must be in 1..={}", means.len())));
    }
    build_matroid_instance(MatroidSpec::Uniform { ground_size: means.len(), rank: k }, means)
}

/// Linear-reward bandit over any matroid (used for synthetic checks).
pub fn build_matroid_instance(matroid: MatroidSpec, means: MeanVector) -> Result<ProblemInstance> {
    matroid.validate()?;
    ProblemInstance::assemble(
        InstanceKind::UniformMatroid,
        Oracle::Matroid(matroid),
        EnvironmentModel::new(EnvironmentKind::IndependentBernoulli, means),
        RewardKind::LinearSum,
        RegretMode::Expected,
        None,
        None,
    )
}
