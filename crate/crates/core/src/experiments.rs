//! Batch studies over random geometric instances and their summaries.
//!
//! Rows come out in (instance, policy) order whatever the thread count, and
//! `wall_time` stays 0 unless timing is switched on, so a rerun with the
//! same configuration writes byte-identical CSV.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::{child_seed, generate_instance, InstanceParams, RadiusSpec};
use crate::optimal::exhaustive_optimal_until;
use crate::targeted::{targeted_control, TargetingPolicy, DEFAULT_EPSILON};
use crate::uniform::solve_uniform;

/// Environment variable that sets the worker count.
pub const THREADS_ENV: &str = "IMITANET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    UniformVsTargeted,
    SizeSweep,
    Connectivity,
    Variance,
    /// The size, connectivity and variance studies together.
    Table1,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::UniformVsTargeted,
        ExperimentId::SizeSweep,
        ExperimentId::Connectivity,
        ExperimentId::Variance,
        ExperimentId::Table1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::UniformVsTargeted => "uniform_vs_targeted",
            ExperimentId::SizeSweep => "size_sweep",
            ExperimentId::Connectivity => "connectivity",
            ExperimentId::Variance => "variance",
            ExperimentId::Table1 => "table1",
        }
    }

    fn salt(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}'")))
    }
}

/// A targeting heuristic, the exhaustive baseline, or the uniform reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Policy {
    Targeted(TargetingPolicy),
    Opt,
    Uniform,
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Targeted(p) => p.label(),
            Policy::Opt => "opt",
            Policy::Uniform => "uniform",
        }
    }

    /// `rand`, `deg`, `iro`, `ipo`, `ime`, `ipro`.
    pub fn heuristics() -> Vec<Policy> {
        use TargetingPolicy::*;
        [Rand(0), Deg, Iro, Ipo, Ime, TargetingPolicy::ipro()]
            .into_iter()
            .map(Policy::Targeted)
            .collect()
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opt" => Ok(Policy::Opt),
            "uniform" => Ok(Policy::Uniform),
            other => other.parse().map(Policy::Targeted),
        }
    }
}

impl TryFrom<String> for Policy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Policy> for String {
    fn from(p: Policy) -> String {
        p.label().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub n_values: Vec<usize>,
    /// Expected mean degrees; ignored when `radius_values` is nonempty.
    pub deg_exp_values: Vec<f64>,
    pub radius_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub v_values: Vec<f64>,
    /// Instances per parameter combination.
    pub instances: usize,
    pub policies: Vec<Policy>,
    pub seed: u64,
    pub epsilon: f64,
    pub require_connected: bool,
    /// Per-instance limit for the exhaustive baseline, in seconds.
    pub timeout_secs: f64,
    /// Record wall-clock times (makes the CSV non-reproducible).
    pub timing: bool,
}

impl ExperimentConfig {
    /// Defaults for each study; desk-scale instance counts.
    pub fn preset(id: ExperimentId) -> Self {
        let base = ExperimentConfig {
            experiment: id,
            n_values: vec![20],
            deg_exp_values: vec![4.0],
            radius_values: Vec::new(),
            p_values: vec![1.0],
            v_values: vec![0.5],
            instances: 100,
            policies: Policy::heuristics(),
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            require_connected: false,
            timeout_secs: 60.0,
            timing: false,
        };
        let with_opt = || {
            let mut p = Policy::heuristics();
            p.push(Policy::Opt);
            p
        };
        match id {
            ExperimentId::UniformVsTargeted => ExperimentConfig {
                n_values: vec![10, 20, 30, 40, 50],
                policies: vec![Policy::Uniform, Policy::Targeted(TargetingPolicy::ipro())],
                ..base
            },
            ExperimentId::SizeSweep | ExperimentId::Table1 => ExperimentConfig {
                n_values: vec![10, 20, 30, 40, 50],
                ..base
            },
            ExperimentId::Connectivity => ExperimentConfig {
                deg_exp_values: (2..=10).map(f64::from).collect(),
                instances: 56,
                policies: with_opt(),
                ..base
            },
            ExperimentId::Variance => ExperimentConfig {
                v_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
                policies: with_opt(),
                ..base
            },
        }
    }

    /// Reads a JSON object naming `experiment`; missing fields take the
    /// preset's values.
    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::InvalidArgument(format!("bad experiment config: {e}"));
        let user: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        let id: ExperimentId = match user.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).map_err(bad)?,
            None => return Err(Error::InvalidArgument("config must name an experiment".into())),
        };
        let mut merged = serde_json::to_value(ExperimentConfig::preset(id)).map_err(bad)?;
        if let (Some(m), Some(u)) = (merged.as_object_mut(), user.as_object()) {
            for (k, v) in u {
                m.insert(k.clone(), v.clone());
            }
        }
        let config: ExperimentConfig = serde_json::from_value(merged).map_err(bad)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let radii_empty = self.radius_values.is_empty() && self.deg_exp_values.is_empty();
        if self.instances == 0
            || self.n_values.is_empty()
            || radii_empty
            || self.p_values.is_empty()
            || self.v_values.is_empty()
            || self.policies.is_empty()
        {
            return Err(Error::InvalidArgument(
                "experiment needs at least one instance and nonempty parameter lists".into(),
            ));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidArgument("network sizes must be positive".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::InvalidArgument("epsilon and timeout must be positive".into()));
        }
        Ok(())
    }

    fn radius_specs(&self) -> Vec<RadiusSpec> {
        if self.radius_values.is_empty() {
            self.deg_exp_values.iter().map(|&d| RadiusSpec::MeanDegree(d)).collect()
        } else {
            self.radius_values.iter().map(|&r| RadiusSpec::Radius(r)).collect()
        }
    }

    /// The studies actually run: `table1` becomes its three parts, sharing
    /// this configuration's seed, instance count and run settings.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        if self.experiment != ExperimentId::Table1 {
            return vec![self.clone()];
        }
        [ExperimentId::SizeSweep, ExperimentId::Connectivity, ExperimentId::Variance]
            .into_iter()
            .map(|id| ExperimentConfig {
                instances: self.instances,
                seed: self.seed,
                epsilon: self.epsilon,
                require_connected: self.require_connected,
                timeout_secs: self.timeout_secs,
                timing: self.timing,
                ..ExperimentConfig::preset(id)
            })
            .collect()
    }
}

/// One CSV line: one policy on one instance. Failed runs leave the numeric
/// fields empty and fill `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub instance_seed: u64,
    pub n: usize,
    pub radius: f64,
    pub p: f64,
    pub v: f64,
    pub policy: String,
    pub total_cost: Option<f64>,
    pub mean_incentive: Option<f64>,
    #[serde(rename = "num_A")]
    pub num_a: Option<usize>,
    pub iterations: Option<usize>,
    pub wall_time: f64,
    pub error: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

/// Per-instance facts for the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceMeta {
    pub experiment: String,
    pub instance_seed: u64,
    pub n: usize,
    pub radius: f64,
    pub p: f64,
    pub v: f64,
    pub components: Option<usize>,
    pub edges: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    pub config: ExperimentConfig,
    pub instances: Vec<InstanceMeta>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    experiment: ExperimentId,
    n: usize,
    radius: RadiusSpec,
    p: f64,
    v: f64,
    seed: u64,
}

fn jobs(config: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for sub in config.expand() {
        let stream = child_seed(sub.seed, sub.experiment.salt());
        for &n in &sub.n_values {
            for radius in sub.radius_specs() {
                for &p in &sub.p_values {
                    for &v in &sub.v_values {
                        for _ in 0..sub.instances {
                            let seed = child_seed(stream, out.len() as u64);
                            out.push(Job {
                                experiment: sub.experiment,
                                n,
                                radius,
                                p,
                                v,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn policies_for(config: &ExperimentConfig, id: ExperimentId) -> Vec<Policy> {
    if config.experiment == ExperimentId::Table1 {
        ExperimentConfig::preset(id).policies
    } else {
        config.policies.clone()
    }
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool sized by [`THREADS_ENV`], or on rayon's global pool.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_count()? {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Generates every instance and runs every policy on it. Generation and
/// control failures become error rows; an exhaustive optimum costlier
/// than some heuristic on the same instance aborts the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let jobs = jobs(config);
    let results: Vec<(InstanceMeta, Vec<ResultRow>)> =
        with_pool(|| jobs.par_iter().map(|job| run_job(config, job)).collect::<Result<Vec<_>>>())??;
    let mut rows = Vec::new();
    let mut instances = Vec::with_capacity(results.len());
    for (meta, r) in results {
        instances.push(meta);
        rows.extend(r);
    }
    Ok(ExperimentOutput {
        rows,
        config: config.clone(),
        instances,
    })
}

fn run_job(config: &ExperimentConfig, job: &Job) -> Result<(InstanceMeta, Vec<ResultRow>)> {
    let params = InstanceParams {
        n: job.n,
        radius: job.radius,
        p: job.p,
        v: job.v,
        require_connected: config.require_connected,
    };
    let radius = job.radius.radius(job.n);
    let policies = policies_for(config, job.experiment);
    let row = |policy: &str| ResultRow {
        experiment: job.experiment.name().to_string(),
        instance_seed: job.seed,
        n: job.n,
        radius,
        p: job.p,
        v: job.v,
        policy: policy.to_string(),
        total_cost: None,
        mean_incentive: None,
        num_a: None,
        iterations: None,
        wall_time: 0.0,
        error: String::new(),
    };
    let mut meta = InstanceMeta {
        experiment: job.experiment.name().to_string(),
        instance_seed: job.seed,
        n: job.n,
        radius,
        p: job.p,
        v: job.v,
        components: None,
        edges: None,
        error: None,
    };
    let inst = match generate_instance(&params, job.seed) {
        Ok(inst) => inst,
        Err(e) => {
            let msg = format!("generation: {e}");
            meta.error = Some(msg.clone());
            let rows = policies
                .iter()
                .map(|p| ResultRow {
                    error: msg.clone(),
                    ..row(p.label())
                })
                .collect();
            return Ok((meta, rows));
        }
    };
    meta.components = Some(inst.components);
    meta.edges = Some(inst.game.graph().num_edges());

    let mut rows = Vec::with_capacity(policies.len());
    for policy in &policies {
        let started = Instant::now();
        let outcome: Result<(f64, usize, usize)> = match policy {
            Policy::Targeted(p) => {
                let p = match p {
                    TargetingPolicy::Rand(_) => TargetingPolicy::Rand(child_seed(job.seed, 1)),
                    other => *other,
                };
                targeted_control(&inst.game, &inst.x0, &p, config.epsilon)
                    .map(|o| (o.total_cost, o.num_a, o.iterations))
            }
            Policy::Opt => {
                let deadline = started + Duration::from_secs_f64(config.timeout_secs);
                exhaustive_optimal_until(&inst.game, &inst.x0, config.epsilon, Some(deadline))
                    .map(|o| (o.total_cost, o.num_a, o.iterations))
            }
            Policy::Uniform => solve_uniform(&inst.game, &inst.x0).map(|s| (s.r0_star * job.n as f64, job.n, s.simulations)),
        };
        let wall_time = if config.timing { started.elapsed().as_secs_f64() } else { 0.0 };
        rows.push(match outcome {
            Ok((cost, num_a, iterations)) => ResultRow {
                total_cost: Some(cost),
                mean_incentive: Some(cost / job.n as f64),
                num_a: Some(num_a),
                iterations: Some(iterations),
                wall_time,
                ..row(policy.label())
            },
            Err(e) => ResultRow {
                wall_time,
                error: e.to_string(),
                ..row(policy.label())
            },
        });
    }
    check_dominance(&rows)?;
    Ok((meta, rows))
}

/// The exhaustive optimum may not cost more than any targeting heuristic.
fn check_dominance(rows: &[ResultRow]) -> Result<()> {
    let Some(opt) = rows.iter().find(|r| r.policy == "opt").and_then(|r| r.total_cost) else {
        return Ok(());
    };
    for r in rows {
        if r.policy == "opt" || r.policy == "uniform" {
            continue;
        }
        if let Some(c) = r.total_cost {
            if opt > c {
                return Err(Error::Internal(format!(
                    "instance {}: optimum {opt} exceeds {} cost {c}",
                    r.instance_seed, r.policy
                )));
            }
        }
    }
    Ok(())
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    if rows.is_empty() {
        w.write_record([
            "experiment",
            "instance_seed",
            "n",
            "radius",
            "p",
            "v",
            "policy",
            "total_cost",
            "mean_incentive",
            "num_A",
            "iterations",
            "wall_time",
            "error",
        ])
        .map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Internal(format!("csv: {e}")))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::InvalidArgument(format!("bad result CSV: {e}"))))
        .collect()
}

/// Mean incentive of one policy in one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub policy: String,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
    /// Rows of this group skipped because they carry an error.
    pub excluded: usize,
}

/// Groups rows by (experiment, policy) in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("nothing to summarize".into()));
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), (Vec<f64>, usize)> = HashMap::new();
    for r in rows {
        let key = (r.experiment.clone(), r.policy.clone());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match r.mean_incentive {
            Some(m) if r.is_ok() => entry.0.push(m),
            _ => entry.1 += 1,
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let (values, excluded) = &groups[&key];
            let (mean, std_err) = mean_and_std_err(values);
            SummaryRow {
                experiment: key.0,
                policy: key.1,
                mean,
                std_err,
                count: values.len(),
                excluded: *excluded,
            }
        })
        .collect())
}

/// Sample mean and standard error; NaN mean for no values, zero error for
/// fewer than two.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

pub fn write_summary<W: Write>(summary: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in summary {
        w.serialize(r).map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Internal(format!("csv: {e}")))
}

/// Policies down, studies across, each cell `mean ± se (count)`.
pub fn render_summary_text(summary: &[SummaryRow]) -> String {
    let mut experiments: Vec<&str> = Vec::new();
    let mut policies: Vec<&str> = Vec::new();
    for r in summary {
        if !experiments.contains(&r.experiment.as_str()) {
            experiments.push(&r.experiment);
        }
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let cell = |p: &str, e: &str| -> String {
        summary
            .iter()
            .find(|r| r.policy == p && r.experiment == e)
            .map_or_else(
                || "--".to_string(),
                |r| {
                    let mut s = format!("{:.4} ± {:.4} ({})", r.mean, r.std_err, r.count);
                    if r.excluded > 0 {
                        s.push_str(&format!(" [{} excluded]", r.excluded));
                    }
                    s
                },
            )
    };
    let mut table: Vec<Vec<String>> = vec![std::iter::once("policy".to_string())
        .chain(experiments.iter().map(|e| e.to_string()))
        .collect()];
    for p in &policies {
        table.push(
            std::iter::once(p.to_string())
                .chain(experiments.iter().map(|e| cell(p, e)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
