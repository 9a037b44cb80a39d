//! The online scheduling pipeline: stage one, empty-container elimination,
//! stage two, commit; plus repetition/averaging experiments and parameter
//! sweeps with paired workloads.
//!
//! Placement failures become request rejections: the cluster state is left
//! untouched and rejected requests stay out of the cost aggregates. Wall
//! clock and accepted-sample counters cover every request, including
//! rejected ones.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{best_fit_csmp, ffd_icmp, r_heron_icmp, t_heron_icmp};
use crate::error::{Error, Result};
use crate::mcts::{mips_csmp, mips_icmp, MctsConfig, SearchStats};
use crate::model::{
    commit, validate_csmp, validate_icmp, AppRequest, ClusterState, CsmpAssignment,
    IcmpAssignment,
};
use crate::objectives::{csmp_objective, icmp_objective, ObjectiveConfig};
use crate::topology::{generate_cluster, ClusterConfig};
use crate::workload::{derive_seed, generate_stream, WorkloadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1Scheme {
    Mips,
    Ffd,
    RHeron,
    THeron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage2Scheme {
    Mips,
    BestFit,
}

impl std::str::FromStr for Stage1Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mips" => Ok(Self::Mips),
            "ffd" => Ok(Self::Ffd),
            "r-heron" => Ok(Self::RHeron),
            "t-heron" => Ok(Self::THeron),
            other => Err(Error::InvalidConfig(format!(
                "unknown stage-one scheme '{other}' (expected mips, ffd, r-heron, t-heron)"
            ))),
        }
    }
}

impl std::str::FromStr for Stage2Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mips" => Ok(Self::Mips),
            "best-fit" => Ok(Self::BestFit),
            other => Err(Error::InvalidConfig(format!(
                "unknown stage-two scheme '{other}' (expected mips, best-fit)"
            ))),
        }
    }
}

impl std::fmt::Display for Stage1Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Mips => "mips",
            Self::Ffd => "ffd",
            Self::RHeron => "r-heron",
            Self::THeron => "t-heron",
        };
        write!(f, "{name}")
    }
}

impl std::fmt::Display for Stage2Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Mips => "mips",
            Self::BestFit => "best-fit",
        };
        write!(f, "{name}")
    }
}

/// A scheme for each stage plus the search settings the MIPS sides use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemePair {
    pub stage1: Stage1Scheme,
    pub stage2: Stage2Scheme,
    /// Stage-one objective weight; also used when reporting objectives for
    /// baseline schemes.
    pub alpha: f64,
    pub stage1_mcts: MctsConfig,
    pub stage2_mcts: MctsConfig,
}

impl Default for SchemePair {
    fn default() -> Self {
        Self {
            stage1: Stage1Scheme::Mips,
            stage2: Stage2Scheme::Mips,
            alpha: 0.5,
            stage1_mcts: MctsConfig::default(),
            stage2_mcts: MctsConfig::default(),
        }
    }
}

/// Per-request outcome: costs, timings, sample counts, and the assignments
/// themselves (absent on rejection).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    pub request: usize,
    pub rejected: Option<String>,
    pub cross_container_traffic: f64,
    pub container_utilization: usize,
    pub icmp_objective: f64,
    pub cross_server_cost: f64,
    pub ms_stage1: f64,
    pub ms_stage2: f64,
    pub samples_stage1: u64,
    pub samples_stage2: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub icmp: Option<IcmpAssignment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csmp: Option<CsmpAssignment>,
}

impl RequestMetrics {
    fn rejection(request: usize, reason: String) -> Self {
        Self {
            request,
            rejected: Some(reason),
            cross_container_traffic: 0.0,
            container_utilization: 0,
            icmp_objective: 0.0,
            cross_server_cost: 0.0,
            ms_stage1: 0.0,
            ms_stage2: 0.0,
            samples_stage1: 0,
            samples_stage2: 0,
            icmp: None,
            csmp: None,
        }
    }
}

/// Sums and accepted-request means over one processed stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub requests: usize,
    pub rejections: usize,
    pub total_cross_container_traffic: f64,
    pub total_container_utilization: f64,
    pub total_icmp_objective: f64,
    pub total_cross_server_cost: f64,
    pub mean_cross_container_traffic: f64,
    pub mean_container_utilization: f64,
    pub mean_icmp_objective: f64,
    pub mean_cross_server_cost: f64,
    pub total_ms_stage1: f64,
    pub total_ms_stage2: f64,
    pub samples_stage1: u64,
    pub samples_stage2: u64,
}

/// Metrics for one repetition: the per-request table plus its aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub per_request: Vec<RequestMetrics>,
    pub aggregate: AggregateMetrics,
}

impl RunMetrics {
    pub fn from_requests(per_request: Vec<RequestMetrics>) -> Self {
        let mut agg = AggregateMetrics {
            requests: per_request.len(),
            ..AggregateMetrics::default()
        };
        let mut accepted = 0usize;
        for r in &per_request {
            agg.total_ms_stage1 += r.ms_stage1;
            agg.total_ms_stage2 += r.ms_stage2;
            agg.samples_stage1 += r.samples_stage1;
            agg.samples_stage2 += r.samples_stage2;
            if r.rejected.is_some() {
                agg.rejections += 1;
                continue;
            }
            accepted += 1;
            agg.total_cross_container_traffic += r.cross_container_traffic;
            agg.total_container_utilization += r.container_utilization as f64;
            agg.total_icmp_objective += r.icmp_objective;
            agg.total_cross_server_cost += r.cross_server_cost;
        }
        if accepted > 0 {
            let n = accepted as f64;
            agg.mean_cross_container_traffic = agg.total_cross_container_traffic / n;
            agg.mean_container_utilization = agg.total_container_utilization / n;
            agg.mean_icmp_objective = agg.total_icmp_objective / n;
            agg.mean_cross_server_cost = agg.total_cross_server_cost / n;
        }
        Self {
            per_request,
            aggregate: agg,
        }
    }
}

fn run_stage1(
    req: &AppRequest,
    pair: &SchemePair,
    seed: u64,
) -> Result<(IcmpAssignment, SearchStats)> {
    let objective = ObjectiveConfig::new(pair.alpha)?;
    match pair.stage1 {
        Stage1Scheme::Mips => mips_icmp(req, &objective, &pair.stage1_mcts, seed),
        Stage1Scheme::Ffd => Ok((ffd_icmp(req)?, SearchStats::default())),
        Stage1Scheme::RHeron => Ok((r_heron_icmp(req)?, SearchStats::default())),
        Stage1Scheme::THeron => Ok((t_heron_icmp(req)?, SearchStats::default())),
    }
}

fn run_stage2(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    pair: &SchemePair,
    seed: u64,
) -> Result<(CsmpAssignment, SearchStats)> {
    match pair.stage2 {
        Stage2Scheme::Mips => mips_csmp(state, req, icmp, &pair.stage2_mcts, seed),
        Stage2Scheme::BestFit => Ok((best_fit_csmp(state, req, icmp)?, SearchStats::default())),
    }
}

/// Runs the two-stage pipeline for one request and commits on success. A
/// failing request leaves the state untouched and comes back as a recorded
/// rejection.
pub fn process_request(
    state: ClusterState,
    req: &AppRequest,
    pair: &SchemePair,
    seeds: (u64, u64),
) -> (ClusterState, RequestMetrics) {
    if let Err(e) = req.validate() {
        return (state, RequestMetrics::rejection(req.id, e.to_string()));
    }

    let t1 = Instant::now();
    let stage1 = run_stage1(req, pair, seeds.0);
    let ms_stage1 = t1.elapsed().as_secs_f64() * 1e3;
    let (icmp, stats1) = match stage1 {
        Ok(v) => v,
        Err(e) => {
            let mut m = RequestMetrics::rejection(req.id, e.to_string());
            m.ms_stage1 = ms_stage1;
            return (state, m);
        }
    };

    // containers without instances are eliminated here: stage two and the
    // commit only ever see the used ones
    let t2 = Instant::now();
    let stage2 = run_stage2(&state, req, &icmp, pair, seeds.1);
    let ms_stage2 = t2.elapsed().as_secs_f64() * 1e3;
    let (csmp, stats2) = match stage2 {
        Ok(v) => v,
        Err(e) => {
            let mut m = RequestMetrics::rejection(req.id, e.to_string());
            m.ms_stage1 = ms_stage1;
            m.ms_stage2 = ms_stage2;
            m.samples_stage1 = stats1.accepted_samples;
            return (state, m);
        }
    };

    debug_assert!(validate_icmp(req, &icmp, false).is_feasible());
    debug_assert!(validate_csmp(&state, req, Some(&icmp), &csmp, false).is_feasible());
    let objective = ObjectiveConfig::new(pair.alpha).expect("validated in stage one");
    let metrics = RequestMetrics {
        request: req.id,
        rejected: None,
        cross_container_traffic: crate::objectives::cross_container_traffic(req, &icmp),
        container_utilization: crate::objectives::container_utilization(req, &icmp),
        icmp_objective: icmp_objective(req, &icmp, &objective),
        cross_server_cost: csmp_objective(&state, req, &icmp, &csmp),
        ms_stage1,
        ms_stage2,
        samples_stage1: stats1.accepted_samples,
        samples_stage2: stats2.accepted_samples,
        icmp: Some(icmp.clone()),
        csmp: Some(csmp.clone()),
    };
    match commit(&state, req, &icmp, &csmp) {
        Ok(next) => (next, metrics),
        Err(e) => (state, RequestMetrics::rejection(req.id, e.to_string())),
    }
}

/// Feeds a whole stream through one cluster in arrival order.
pub fn process_stream(
    mut state: ClusterState,
    stream: &[AppRequest],
    pair: &SchemePair,
    run_seed: u64,
) -> (ClusterState, RunMetrics) {
    let mut per_request = Vec::with_capacity(stream.len());
    for (i, req) in stream.iter().enumerate() {
        let seeds = (
            derive_seed(run_seed, 2 * i as u64),
            derive_seed(run_seed, 2 * i as u64 + 1),
        );
        let (next, metrics) = process_request(state, req, pair, seeds);
        state = next;
        per_request.push(metrics);
    }
    (state, RunMetrics::from_requests(per_request))
}

/// Mean and sample variance of one metric across repetitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub variance: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        };
        Self { mean, variance }
    }
}

/// Repetition-level summary over the per-repetition totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub repetitions: usize,
    pub requests: MetricSummary,
    pub rejections: MetricSummary,
    pub cross_container_traffic: MetricSummary,
    pub container_utilization: MetricSummary,
    pub icmp_objective: MetricSummary,
    pub cross_server_cost: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub per_rep: Vec<RunMetrics>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    fn from_reps(per_rep: Vec<RunMetrics>) -> Self {
        let col = |f: fn(&AggregateMetrics) -> f64| {
            MetricSummary::from_values(
                &per_rep.iter().map(|r| f(&r.aggregate)).collect::<Vec<_>>(),
            )
        };
        let summary = ExperimentSummary {
            repetitions: per_rep.len(),
            requests: col(|a| a.requests as f64),
            rejections: col(|a| a.rejections as f64),
            cross_container_traffic: col(|a| a.total_cross_container_traffic),
            container_utilization: col(|a| a.total_container_utilization),
            icmp_objective: col(|a| a.total_icmp_objective),
            cross_server_cost: col(|a| a.total_cross_server_cost),
        };
        Self { per_rep, summary }
    }
}

/// Everything one experiment needs; also the on-disk config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cluster: ClusterConfig,
    pub workload: WorkloadConfig,
    pub pair: SchemePair,
    pub repetitions: usize,
    pub seed: u64,
    /// Redraw the workload per repetition (default) or re-seed only the
    /// search, keeping one fixed workload.
    pub redraw_workloads: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterConfig::default(),
            workload: WorkloadConfig::default(),
            pair: SchemePair::default(),
            repetitions: 1,
            seed: 0,
            redraw_workloads: true,
        }
    }
}

/// The workload of repetition `rep` under the experiment's pairing rules.
pub fn repetition_workload(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<AppRequest>> {
    let mut wl = cfg.workload.clone();
    if cfg.redraw_workloads {
        wl.seed = derive_seed(cfg.workload.seed, rep as u64);
    }
    generate_stream(&wl)
}

fn run_repetitions<F>(cfg: &ExperimentConfig, stream_for_rep: F) -> Result<ExperimentResult>
where
    F: Fn(usize) -> Result<Vec<AppRequest>> + Sync,
{
    if cfg.repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be positive".into()));
    }
    let (_, base_state) = generate_cluster(&cfg.cluster)?;
    let per_rep: Vec<RunMetrics> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let stream = stream_for_rep(rep)?;
            let run_seed = derive_seed(cfg.seed, rep as u64);
            let (_, metrics) = process_stream(base_state.clone(), &stream, &cfg.pair, run_seed);
            Ok(metrics)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult::from_reps(per_rep))
}

/// Runs `repetitions` independent repetitions (in parallel), each on a fresh
/// cluster, and aggregates mean and sample variance per metric.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.workload.validate()?;
    run_repetitions(cfg, |rep| repetition_workload(cfg, rep))
}

/// Like [`run_experiment`], but replays one externally supplied request
/// stream in every repetition; only the search seeds vary.
pub fn run_experiment_on(cfg: &ExperimentConfig, stream: &[AppRequest]) -> Result<ExperimentResult> {
    run_repetitions(cfg, |_| Ok(stream.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Alpha,
    Samples,
    Omega,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Self::Alpha),
            "samples" => Ok(Self::Samples),
            "omega" => Ok(Self::Omega),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter '{other}' (expected alpha, samples, omega)"
            ))),
        }
    }
}

/// Applies one grid value onto a copy of the base config. Alpha touches the
/// stage-one objective; samples and omega touch both stages' search.
pub fn apply_sweep_value(base: &ExperimentConfig, param: SweepParameter, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParameter::Alpha => {
            ObjectiveConfig::new(value)?;
            cfg.pair.alpha = value;
        }
        SweepParameter::Samples => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "sample count must be a nonnegative integer, got {value}"
                )));
            }
            cfg.pair.stage1_mcts.max_samples_per_step = value as usize;
            cfg.pair.stage2_mcts.max_samples_per_step = value as usize;
        }
        SweepParameter::Omega => {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "omega must be finite and nonnegative, got {value}"
                )));
            }
            cfg.pair.stage1_mcts.exploration_weight = value;
            cfg.pair.stage2_mcts.exploration_weight = value;
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParameter,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub grid_value: f64,
    pub result: ExperimentResult,
}

/// Runs one experiment per grid value. Workload seeds and search seeds stay
/// identical across grid points, so comparisons are paired. A fixed stream,
/// when given, replaces the generated workloads at every grid point.
pub fn sweep_on(
    base: &ExperimentConfig,
    param: SweepParameter,
    grid: &[f64],
    stream: Option<&[AppRequest]>,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid must be nonempty".into()));
    }
    let points = grid
        .iter()
        .map(|&value| {
            let cfg = apply_sweep_value(base, param, value)?;
            let result = match stream {
                Some(s) => run_experiment_on(&cfg, s)?,
                None => run_experiment(&cfg)?,
            };
            Ok(SweepPoint {
                grid_value: value,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { param, points })
}

pub fn sweep(base: &ExperimentConfig, param: SweepParameter, grid: &[f64]) -> Result<SweepResult> {
    sweep_on(base, param, grid, None)
}

/// Stable CSV header shared by the experiment and sweep outputs.
pub const CSV_HEADER: &str = "grid_value,rep,requests,rejections,T,U,icmp_obj,W,ms_stage1,ms_stage2";

/// One row per repetition (per grid value for sweeps). `grid_value` stays
/// empty for plain experiments. With `zero_timing`, the wall-clock columns
/// are written as zero so repeated runs produce bit-identical files.
pub fn results_csv(points: &[(Option<f64>, &ExperimentResult)], zero_timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (grid_value, result) in points {
        for (rep, run) in result.per_rep.iter().enumerate() {
            let a = &run.aggregate;
            let grid = grid_value.map(|v| v.to_string()).unwrap_or_default();
            let (ms1, ms2) = if zero_timing {
                (0.0, 0.0)
            } else {
                (a.total_ms_stage1, a.total_ms_stage2)
            };
            out.push_str(&format!(
                "{grid},{rep},{},{},{},{},{},{},{ms1},{ms2}\n",
                a.requests,
                a.rejections,
                a.total_cross_container_traffic,
                a.total_container_utilization,
                a.total_icmp_objective,
                a.total_cross_server_cost,
            ));
        }
    }
    out
}
