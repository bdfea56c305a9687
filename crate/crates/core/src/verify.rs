//! Built-in property suites run by `cmab verify`.

use std::fmt::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::instances::sample_connected_graph;
use crate::mathutil::{beta_cdf, beta_sample, BetaParams};
use crate::oracle::enumerate::{all_subsets, bases, simple_paths, spanning_trees};
use crate::oracle::{greedy_matroid_max, max_spanning_tree, shortest_path, Graph, MatroidSpec, SuperArm};
use crate::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: u64,
    pub failures: u64,
    /// Largest observed discrepancy, for suites that measure one.
    pub max_error: Option<f64>,
    pub seconds: f64,
    /// First few failure descriptions.
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self { name, checks: 0, failures: 0, max_error: None, seconds: 0.0, notes: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }

    fn check(&mut self, ok: bool, note: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.notes.len() < 5 {
                self.notes.push(note());
            }
        }
    }

    fn record_error(&mut self, err: f64) {
        self.max_error = Some(self.max_error.map_or(err, |m| m.max(err)));
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `P(Beta(a, b) <= x)` by integrating the density. With integer shapes the
/// density is a polynomial of degree `a + b - 2`, which 64 nodes integrate
/// exactly for `a + b <= 129`.
pub fn beta_cdf_quadrature(a: u64, b: u64, x: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let ln_norm = ln_factorial(a + b - 1) - ln_factorial(a - 1) - ln_factorial(b - 1);
    let half = x / 2.0;
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&s, &w)| {
            let t = half * (s + 1.0);
            let ln_pdf = ln_norm + (a - 1) as f64 * t.ln() + (b - 1) as f64 * (1.0 - t).ln();
            w * ln_pdf.exp()
        })
        .sum::<f64>()
        * half
}

/// Beta CDF via the binomial identity against direct quadrature, every
/// integer `1 <= a, b <= 50` on the grid `x = 0.01, ..., 0.99`.
pub fn beta_binomial_suite(tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("beta-binomial identity");
    let rule = gauss_legendre(64);
    for a in 1..=50u64 {
        for b in 1..=50u64 {
            let params = BetaParams::new(a, b).expect("shapes are positive");
            for i in 1..=99 {
                let x = i as f64 / 100.0;
                let via_binomial = beta_cdf(params, x).unwrap_or(f64::NAN);
                let via_quadrature = beta_cdf_quadrature(a, b, x, &rule);
                let err = (via_binomial - via_quadrature).abs();
                report.record_error(if err.is_nan() { f64::INFINITY } else { err });
                report.check(err <= tolerance, || {
                    format!("a={a} b={b} x={x}: {via_binomial} vs {via_quadrature}")
                });
            }
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    report
}

/// Upper-tail concentration of the posterior sample around the empirical mean:
/// for every success count `s` out of `n` observations, the frequency of
/// `theta - s/n > sqrt(2 ln T / n)` over `draws` samples of `Beta(s+1, n-s+1)`
/// must not exceed `2 / T`.
pub fn concentration_suite(cases: &[(u64, u64)], draws: u64, seed: u64) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("posterior concentration");
    let mut rng = Stream::seed_from_u64(seed);
    for &(n, horizon) in cases {
        let radius = (2.0 * (horizon as f64).ln() / n as f64).sqrt();
        let limit = 2.0 / horizon as f64;
        for s in 0..=n {
            let params = BetaParams::new(s + 1, n - s + 1).expect("shapes are positive");
            let mean = s as f64 / n as f64;
            let exceed = (0..draws).filter(|_| beta_sample(params, &mut rng) - mean > radius).count();
            let freq = exceed as f64 / draws as f64;
            report.record_error(freq);
            report.check(freq <= limit, || format!("N={n} T={horizon} s={s}: frequency {freq} > {limit}"));
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    report
}

type GreedyFn = fn(&[f64], &MatroidSpec) -> Result<SuperArm>;
type TreeFn = fn(&[f64], &Graph) -> Result<SuperArm>;
type PathFn = fn(&[f64], &Graph, usize, usize) -> Result<SuperArm>;

/// The oracles under test. Swapping in a faulty implementation lets the suite
/// demonstrate that it catches it.
#[derive(Clone, Copy)]
pub struct OracleSet {
    pub greedy: GreedyFn,
    pub spanning_tree: TreeFn,
    pub shortest_path: PathFn,
}

impl Default for OracleSet {
    fn default() -> Self {
        Self { greedy: greedy_matroid_max, spanning_tree: max_spanning_tree, shortest_path }
    }
}

fn weight(theta: &[f64], s: &SuperArm) -> f64 {
    s.iter().map(|i| theta[i]).sum()
}

/// The basis the greedy rule must return: compare bases by their members in
/// greedy scan order (`theta` descending, lower index first) and keep the
/// lexicographically earliest.
fn greedy_reference(theta: &[f64], candidates: &[SuperArm]) -> SuperArm {
    let rank = |i: usize| (std::cmp::Reverse(ordered_float(theta[i])), i);
    candidates
        .iter()
        .min_by_key(|s| {
            let mut keys: Vec<_> = s.iter().map(rank).collect();
            keys.sort();
            keys
        })
        .cloned()
        .unwrap_or_else(|| SuperArm::new(Vec::new()))
}

/// Total-order key for finite floats.
fn ordered_float(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}

/// Random matroids on at most `max_ground` elements: uniform, partition and graphic.
pub fn random_matroids<R: Rng + ?Sized>(max_ground: usize, per_kind: usize, rng: &mut R) -> Vec<MatroidSpec> {
    let mut out = Vec::new();
    for _ in 0..per_kind {
        let m = rng.random_range(1..=max_ground);
        out.push(MatroidSpec::Uniform { ground_size: m, rank: rng.random_range(1..=m) });

        let blocks = rng.random_range(1..=m.min(4));
        let block_of: Vec<usize> = (0..m).map(|i| if i < blocks { i } else { rng.random_range(0..blocks) }).collect();
        let capacities: Vec<usize> = (0..blocks)
            .map(|b| rng.random_range(1..=block_of.iter().filter(|&&x| x == b).count()))
            .collect();
        out.push(MatroidSpec::Partition { block_of, capacities });

        loop {
            let vertices = rng.random_range(2..=6);
            let mut edges = Vec::new();
            for u in 0..vertices {
                for v in u + 1..vertices {
                    if rng.random_bool(0.6) && edges.len() < max_ground {
                        edges.push((u, v));
                    }
                }
            }
            if !edges.is_empty() {
                let graph = Graph::undirected(vertices, edges).expect("valid edges");
                out.push(MatroidSpec::Graphic { graph });
                break;
            }
        }
    }
    out
}

/// Random graph for path checks; `vertices` in `2..=max_vertices`, source 0,
/// sink `vertices - 1`. May be disconnected.
fn random_path_graph<R: Rng + ?Sized>(max_vertices: usize, rng: &mut R) -> Graph {
    let vertices = rng.random_range(2..=max_vertices);
    let directed = rng.random_bool(0.5);
    let p = rng.random_range(0.3..0.8);
    let mut edges = Vec::new();
    for u in 0..vertices {
        for v in 0..vertices {
            if u != v && (directed || u < v) && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(vertices, edges, directed).expect("valid edges")
}

/// Exact oracles against exhaustive enumeration on small structures.
///
/// Matroid greedy on ground sets up to `10`, spanning trees on graphs up to 6
/// vertices and shortest paths on graphs up to 8 vertices, `trials` random
/// parameter vectors each. Matroid structures also get tie-heavy vectors that
/// must reproduce the greedy tie rule exactly.
pub fn oracle_equivalence_suite(oracles: &OracleSet, structures: usize, trials: usize, seed: u64) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("oracle equivalence");
    let mut rng = Stream::seed_from_u64(seed);

    for matroid in random_matroids(10, structures, &mut rng) {
        let family = bases(&matroid);
        let m = matroid.ground_size();
        for trial in 0..trials {
            let tied = trial % 4 == 3;
            let theta: Vec<f64> = (0..m)
                .map(|_| if tied { [0.25, 0.5, 0.75][rng.random_range(0..3)] } else { rng.random() })
                .collect();
            let got = (oracles.greedy)(&theta, &matroid);
            let expected = greedy_reference(&theta, &family);
            report.check(got.as_ref().ok() == Some(&expected), || {
                format!("greedy on {matroid:?} theta={theta:?}: got {got:?}, expected {expected:?}")
            });
        }
    }

    let mut graphs = 0;
    while graphs < structures {
        let vertices = rng.random_range(2..=6);
        let p = rng.random_range(0.4..=1.0);
        let Ok((graph, _)) = sample_connected_graph(vertices, p, &mut rng) else { continue };
        graphs += 1;
        let trees = spanning_trees(&graph);
        for _ in 0..trials {
            let theta: Vec<f64> = (0..graph.edge_count()).map(|_| rng.random()).collect();
            let best = trees.iter().map(|t| weight(&theta, t)).fold(f64::NEG_INFINITY, f64::max);
            let got = (oracles.spanning_tree)(&theta, &graph);
            let ok = matches!(&got, Ok(t) if trees.contains(t) && (weight(&theta, t) - best).abs() <= 1e-12);
            report.check(ok, || format!("spanning tree on {graph:?}: got {got:?}, best weight {best}"));
        }
    }

    for _ in 0..structures {
        let graph = random_path_graph(8, &mut rng);
        let sink = graph.vertices - 1;
        let paths: Vec<SuperArm> = simple_paths(&graph, 0, sink).into_iter().map(SuperArm::new).collect();
        for _ in 0..trials {
            let theta: Vec<f64> = (0..graph.edge_count()).map(|_| rng.random()).collect();
            let got = (oracles.shortest_path)(&theta, &graph, 0, sink);
            let ok = if paths.is_empty() {
                matches!(got, Err(Error::Unreachable { .. }))
            } else {
                let best = paths.iter().map(|p| weight(&theta, p)).fold(f64::INFINITY, f64::min);
                matches!(&got, Ok(p) if paths.contains(p) && (weight(&theta, p) - best).abs() <= 1e-12)
            };
            report.check(ok, || format!("shortest path on {graph:?}: got {got:?}"));
        }
    }

    report.seconds = started.elapsed().as_secs_f64();
    report
}

/// Independence axioms for every subset of random matroids up to 8 elements:
/// the empty set is independent, subsets of independent sets are independent,
/// and a smaller independent set can always be extended from a larger one.
pub fn matroid_axiom_suite(structures: usize, seed: u64) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("matroid axioms");
    let mut rng = Stream::seed_from_u64(seed);
    for matroid in random_matroids(8, structures, &mut rng) {
        let n = matroid.ground_size();
        let independent: Vec<bool> = all_subsets(n).iter().map(|s| matroid.is_independent(s)).collect();
        let members = |mask: usize| (0..n).filter(move |i| mask >> i & 1 == 1);
        report.check(independent[0], || format!("{matroid:?}: empty set dependent"));
        for mask in 0..1usize << n {
            if !independent[mask] {
                continue;
            }
            for i in members(mask) {
                let sub = mask & !(1 << i);
                report.check(independent[sub], || format!("{matroid:?}: not hereditary at {mask:b}"));
            }
        }
        for small in 0..1usize << n {
            if !independent[small] {
                continue;
            }
            for large in 0..1usize << n {
                if !independent[large] || large.count_ones() <= small.count_ones() {
                    continue;
                }
                let extends = members(large & !small).any(|i| independent[small | 1 << i]);
                report.check(extends, || format!("{matroid:?}: no exchange from {small:b} via {large:b}"));
            }
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    report
}

/// Every suite with its default size.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        beta_binomial_suite(1e-9),
        concentration_suite(&[(10, 100), (50, 1000)], 1_000_000, seed),
        oracle_equivalence_suite(&OracleSet::default(), 20, 200, seed ^ 1),
        matroid_axiom_suite(20, seed ^ 2),
    ]
}

/// Plain-text report: one line per suite plus any failure notes.
pub fn format_report(reports: &[SuiteReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = write!(
            out,
            "{} {}: {} checks, {} failures, {:.2}s",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.checks,
            r.failures,
            r.seconds
        );
        if let Some(e) = r.max_error {
            let _ = write!(out, ", max error {e:.3e}");
        }
        out.push('\n');
        for note in &r.notes {
            let _ = writeln!(out, "    {note}");
        }
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    let _ = writeln!(out, "{passed}/{} suites passed", reports.len());
    out
}
