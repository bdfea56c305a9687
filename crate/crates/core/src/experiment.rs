//! Experiment configs and the file-producing commands behind the CLI.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::engine::{hitting_time_batch, mix64, run_batch, AggregateStats, Execution, HittingStats, RunConfig};
use crate::environment::MeanVector;
use crate::error::{Error, Result};
use crate::instances::{
    build_problem1, build_problem2, build_uniform_matroid_instance, gen_shortest_path_instance,
    gen_spanning_tree_instance, ProblemInstance, DEFAULT_DECOY_GAP, DEFAULT_LAYERS, DEFAULT_WIDTH,
};
use crate::policy::PolicyKind;
use crate::verify::{format_report, run_all, SuiteReport};
use crate::Stream;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RUNS: usize = 20;
pub const TRACE_HEADER: &str = "run_id,t,cum_regret";
pub const HITTING_HEADER: &str = "k_star,mean_t1,std_t1,runs,timeouts,cap,flagged";

/// Timeout fraction above which a hitting-time row is flagged.
pub const TIMEOUT_FLAG_FRACTION: f64 = 0.1;

/// Run index reserved for the instance generator stream.
const INSTANCE_STREAM_INDEX: u64 = u64::MAX;

fn default_runs() -> usize {
    DEFAULT_RUNS
}
fn default_layers() -> usize {
    DEFAULT_LAYERS
}
fn default_width() -> usize {
    DEFAULT_WIDTH
}
fn default_gap() -> f64 {
    DEFAULT_DECOY_GAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    SpanningTree {
        vertices: usize,
        p: f64,
        #[serde(default)]
        correlated: bool,
    },
    ShortestPath {
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_gap")]
        decoy_gap: f64,
    },
    Problem1 {
        k_star: usize,
    },
    Problem2,
    UniformMatroid {
        k: usize,
        means: Vec<f64>,
    },
    CustomInstanceFile {
        path: PathBuf,
    },
}

impl InstanceSpec {
    /// Builds the instance; generators draw from `rng`.
    pub fn build(&self, rng: &mut Stream) -> Result<ProblemInstance> {
        match self {
            InstanceSpec::SpanningTree { vertices, p, correlated } => {
                gen_spanning_tree_instance(*vertices, *p, *correlated, rng)
            }
            InstanceSpec::ShortestPath { layers, width, decoy_gap } => {
                gen_shortest_path_instance(*layers, *width, *decoy_gap, rng)
            }
            InstanceSpec::Problem1 { k_star } => build_problem1(*k_star),
            InstanceSpec::Problem2 => build_problem2(),
            InstanceSpec::UniformMatroid { k, means } => {
                build_uniform_matroid_instance(*k, MeanVector::new(means.clone())?)
            }
            InstanceSpec::CustomInstanceFile { path } => ProblemInstance::from_json(&fs::read_to_string(path)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub instance: InstanceSpec,
    pub policies: Vec<PolicyKind>,
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outdir: Option<PathBuf>,
}

/// 1-based line of the first occurrence of `"key"` in `text`, or 1.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config { line: e.line().max(1), message: e.to_string() })?;
        config.validate().map_err(|(key, message)| Error::Config { line: line_of(text, key), message })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Returns the offending key and a message on failure.
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(("schema_version", format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.policies.is_empty() {
            return Err(("policies", "policy list is empty".into()));
        }
        let mut seen = self.policies.clone();
        seen.sort_by_key(|p| p.name());
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(("policies", "policy list has duplicates".into()));
        }
        if self.horizon == 0 {
            return Err(("horizon", "horizon must be at least 1".into()));
        }
        if self.n_runs == 0 {
            return Err(("n_runs", "n_runs must be at least 1".into()));
        }
        match &self.instance {
            InstanceSpec::SpanningTree { vertices, p, .. } => {
                if *vertices < 2 {
                    return Err(("vertices", "spanning_tree needs at least 2 vertices".into()));
                }
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(("p", format!("edge probability {p} outside (0, 1]")));
                }
            }
            InstanceSpec::ShortestPath { layers, width, decoy_gap } => {
                if *layers < 2 {
                    return Err(("layers", "layers must be at least 2".into()));
                }
                if *width < 2 {
                    return Err(("width", "width must be at least 2".into()));
                }
                if !(*decoy_gap > 0.0 && *decoy_gap <= 0.2) {
                    return Err(("decoy_gap", format!("decoy_gap {decoy_gap} outside (0, 0.2]")));
                }
            }
            InstanceSpec::Problem1 { k_star } if *k_star == 0 => {
                return Err(("k_star", "k_star must be at least 1".into()));
            }
            InstanceSpec::UniformMatroid { k, means } => {
                if means.is_empty() || means.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(("means", "means must be a nonempty list of values in [0, 1]".into()));
                }
                if *k == 0 || *k > means.len() {
                    return Err(("k", format!("k must be in 1..={}", means.len())));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The instance shared by every policy in this experiment.
    pub fn build_instance(&self) -> Result<ProblemInstance> {
        let seed = mix64(self.master_seed, INSTANCE_STREAM_INDEX);
        let mut rng = Stream::seed_from_u64(seed);
        let mut instance = self.instance.build(&mut rng)?;
        if instance.seed.is_none() && !matches!(self.instance, InstanceSpec::CustomInstanceFile { .. }) {
            instance.seed = Some(seed);
        }
        Ok(instance)
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidParameter(format!("bad output path {path:?}")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub csv: PathBuf,
    #[serde(flatten)]
    pub stats: AggregateStats,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub instance_fingerprint: u64,
    pub optimal_value: f64,
    pub policies: Vec<PolicySummary>,
    pub wall_time_seconds: f64,
}

/// Trace CSV for a batch: header then one row per run per checkpoint.
pub fn traces_csv(traces: &[crate::engine::RegretTrace]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in traces {
        t.write_csv_rows(&mut out);
    }
    out
}

/// Runs every policy on one shared instance; writes `<policy>.csv`,
/// `instance.json` and `summary.json` into `outdir`.
pub fn cmd_run(config: &ExperimentConfig, outdir: &Path, execution: Execution) -> Result<RunSummary> {
    let started = Instant::now();
    fs::create_dir_all(outdir)?;
    let instance = config.build_instance()?;
    write_atomic(&outdir.join("instance.json"), instance.to_json()?.as_bytes())?;
    let mut policies = Vec::with_capacity(config.policies.len());
    for &policy in &config.policies {
        let t0 = Instant::now();
        let base = RunConfig::new(policy, config.horizon, config.master_seed);
        let batch = run_batch(&instance, &base, config.n_runs, config.master_seed, execution)?;
        let csv = outdir.join(format!("{}.csv", policy.name()));
        write_atomic(&csv, traces_csv(&batch.traces).as_bytes())?;
        policies.push(PolicySummary { policy, csv, stats: batch.stats, wall_time_seconds: t0.elapsed().as_secs_f64() });
    }
    let summary = RunSummary {
        config: config.clone(),
        instance_fingerprint: instance.fingerprint(),
        optimal_value: instance.optimal_value,
        policies,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write_atomic(&outdir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingRow {
    pub k_star: usize,
    pub stats: HittingStats,
    pub flagged: bool,
}

/// First-hitting times of the optimal super arm for CTS on Problem 1, one
/// row per `k*`, written to `hitting_time.csv`.
pub fn cmd_hitting_time(
    k_stars: &[usize],
    n_runs: usize,
    cap: u64,
    master_seed: u64,
    outdir: &Path,
    execution: Execution,
) -> Result<Vec<HittingRow>> {
    if k_stars.is_empty() || n_runs == 0 || cap == 0 {
        return Err(Error::InvalidParameter("need at least one k*, one run and a positive cap".into()));
    }
    fs::create_dir_all(outdir)?;
    let mut rows = Vec::with_capacity(k_stars.len());
    for &k in k_stars {
        let instance = build_problem1(k)?;
        let seed = mix64(master_seed, k as u64);
        let times =
            hitting_time_batch(PolicyKind::Cts, &instance, &instance.optimal_arm, n_runs, cap, seed, execution)?;
        let stats = HittingStats::from_times(&times, cap);
        let flagged = stats.timeout_fraction() > TIMEOUT_FLAG_FRACTION;
        rows.push(HittingRow { k_star: k, stats, flagged });
    }
    let mut csv = String::from(HITTING_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k_star, r.stats.mean, r.stats.std, r.stats.runs, r.stats.timeouts, r.stats.cap, r.flagged
        ));
    }
    write_atomic(&outdir.join("hitting_time.csv"), csv.as_bytes())?;
    Ok(rows)
}

/// Runs every verification suite and writes `report.txt`.
pub fn cmd_verify(outdir: &Path, seed: u64) -> Result<(Vec<SuiteReport>, String)> {
    fs::create_dir_all(outdir)?;
    let reports = run_all(seed);
    let text = format_report(&reports);
    write_atomic(&outdir.join("report.txt"), text.as_bytes())?;
    Ok((reports, text))
}
