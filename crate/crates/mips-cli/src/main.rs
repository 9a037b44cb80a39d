//! Command line for the placement engine: workload and cluster generation,
//! single placements, repetition experiments, parameter sweeps, and the
//! brute-force oracle.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 placement
//! failure in `place`. Identical arguments, input files, and seeds produce
//! bit-identical output files; pass `--no-timing` to zero the wall-clock
//! CSV columns, which would otherwise jitter between runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mips::files::{
    csmp_entries, icmp_entries, save_json, ClusterFile, GraphFile, GridSummary, OracleFile,
    PlacementFile, RequestFile, SummaryFile, WorkloadFile, SCHEMA_VERSION,
};
use mips::harness::{
    apply_sweep_value, process_request, results_csv, run_experiment, run_experiment_on, sweep_on,
    ExperimentConfig, ExperimentResult, SchemePair, SweepParameter,
};
use mips::objectives::{brute_force_csmp, brute_force_icmp, ObjectiveConfig};
use mips::topology::{generate_cluster, ClusterConfig, TopologyParams};
use mips::workload::{generate_stream, WorkloadConfig};

#[derive(Parser)]
#[command(
    name = "mips",
    version,
    about = "Two-stage instance placement engine and cluster simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded request stream and write it as JSON.
    GenWorkload(GenWorkloadArgs),
    /// Generate a cluster (topology, hop costs, server capacities).
    GenCluster(GenClusterArgs),
    /// Place one request onto a cluster and report both mappings.
    Place(PlaceArgs),
    /// Run repeated simulations of one scheme pair and emit CSV/JSON.
    Experiment(ExperimentArgs),
    /// Run an experiment per grid value of alpha, samples, or omega.
    Sweep(SweepArgs),
    /// Exhaustively solve a small request, optionally through stage two.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenWorkloadArgs {
    /// Workload config JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of requests.
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenClusterArgs {
    /// Cluster config JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fat-tree or jellyfish (defaults: k=4 / 24 switches, 4 ports,
    /// 16 servers).
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also export the network adjacency for inspection.
    #[arg(long)]
    graph_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlaceArgs {
    /// Request JSON file.
    request: PathBuf,
    /// Cluster JSON file.
    cluster: PathBuf,
    #[arg(long, default_value = "mips")]
    stage1: String,
    #[arg(long, default_value = "mips")]
    stage2: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    omega: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Experiment config JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stage1: Option<String>,
    #[arg(long)]
    stage2: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    topology: Option<String>,
    /// Requests per repetition.
    #[arg(long)]
    requests: Option<usize>,
    /// Replay this workload file in every repetition instead of generating
    /// seeded streams.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep one fixed workload across repetitions instead of redrawing.
    #[arg(long)]
    fixed_workload: bool,
    /// Zero the ms_stage1/ms_stage2 CSV columns for reproducible files.
    #[arg(long)]
    no_timing: bool,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON summary path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// alpha, samples, or omega.
    #[arg(long)]
    param: String,
    /// Comma-separated grid values, e.g. 0,0.25,0.5,0.75,1.
    #[arg(long)]
    grid: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Request JSON file (small: the search space is enumerated).
    request: PathBuf,
    /// Optional cluster JSON file; with it the stage-two optimum is
    /// computed on top of the stage-one optimum.
    cluster: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors carrying the process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<mips::Error> for CliError {
    fn from(e: mips::Error) -> Self {
        let code = match e {
            mips::Error::PlacementFailed { .. }
            | mips::Error::Infeasible
            | mips::Error::OversizedInstance { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenWorkload(args) => gen_workload(args),
        Command::GenCluster(args) => gen_cluster(args),
        Command::Place(args) => place(args),
        Command::Experiment(args) => experiment(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Oracle(args) => oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    mips::files::load_json(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn parse_topology(name: &str, seed: u64) -> CliResult<TopologyParams> {
    match name {
        "fat-tree" => Ok(TopologyParams::FatTree { k: 4 }),
        "jellyfish" => Ok(TopologyParams::Jellyfish {
            switches: 24,
            ports: 4,
            servers: 16,
            seed,
        }),
        other => Err(CliError::config(format!(
            "unknown topology '{other}' (expected fat-tree or jellyfish)"
        ))),
    }
}

fn gen_workload(args: GenWorkloadArgs) -> CliResult<()> {
    let mut cfg: WorkloadConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => WorkloadConfig::default(),
    };
    if let Some(n) = args.requests {
        cfg.n_requests = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let stream = generate_stream(&cfg)?;
    save_json(&args.out, &WorkloadFile::from_requests(&stream)?)?;
    eprintln!(
        "wrote {} requests to {}",
        stream.len(),
        args.out.display()
    );
    Ok(())
}

fn gen_cluster(args: GenClusterArgs) -> CliResult<()> {
    let mut cfg: ClusterConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => ClusterConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &args.topology {
        cfg.topology = parse_topology(name, cfg.seed)?;
    }
    let (graph, state) = generate_cluster(&cfg)?;
    save_json(&args.out, &ClusterFile::from_state(cfg.topology.clone(), &state))?;
    if let Some(path) = &args.graph_out {
        save_json(path, &GraphFile::from_graph(&graph))?;
    }
    eprintln!(
        "wrote {} servers, {} switches to {}",
        graph.server_count,
        graph.switch_count,
        args.out.display()
    );
    Ok(())
}

fn write_or_print<T: serde::Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    match out {
        Some(path) => save_json(path, value).map_err(CliError::from),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(value).map_err(mips::Error::from)?
            );
            Ok(())
        }
    }
}

fn place(args: PlaceArgs) -> CliResult<()> {
    let request = load_config::<RequestFile>(&args.request)?
        .into_request()
        .map_err(CliError::from)?;
    let cluster = load_config::<ClusterFile>(&args.cluster)?
        .into_state()
        .map_err(CliError::from)?;
    ObjectiveConfig::new(args.alpha)?;

    let mut pair = SchemePair {
        stage1: args.stage1.parse()?,
        stage2: args.stage2.parse()?,
        alpha: args.alpha,
        ..SchemePair::default()
    };
    for mcts in [&mut pair.stage1_mcts, &mut pair.stage2_mcts] {
        mcts.max_samples_per_step = args.samples;
        mcts.exploration_weight = args.omega;
    }

    let seeds = (
        mips::workload::derive_seed(args.seed, 0),
        mips::workload::derive_seed(args.seed, 1),
    );
    let (_, metrics) = process_request(cluster, &request, &pair, seeds);
    if let Some(reason) = &metrics.rejected {
        return Err(CliError {
            code: 2,
            message: format!("placement failed: {reason}"),
        });
    }
    let file = PlacementFile::new(args.stage1, args.stage2, args.alpha, args.seed, &metrics)?;
    write_or_print(args.out.as_deref(), &file)
}

fn merged_experiment_config(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig {
            repetitions: 100,
            ..ExperimentConfig::default()
        },
    };
    if let Some(s) = &args.stage1 {
        cfg.pair.stage1 = s.parse()?;
    }
    if let Some(s) = &args.stage2 {
        cfg.pair.stage2 = s.parse()?;
    }
    if let Some(alpha) = args.alpha {
        ObjectiveConfig::new(alpha)?;
        cfg.pair.alpha = alpha;
    }
    if let Some(samples) = args.samples {
        cfg.pair.stage1_mcts.max_samples_per_step = samples;
        cfg.pair.stage2_mcts.max_samples_per_step = samples;
    }
    if let Some(omega) = args.omega {
        cfg.pair.stage1_mcts.exploration_weight = omega;
        cfg.pair.stage2_mcts.exploration_weight = omega;
    }
    if let Some(name) = &args.topology {
        cfg.cluster.topology = parse_topology(name, cfg.cluster.seed)?;
    }
    if let Some(n) = args.requests {
        cfg.workload.n_requests = n;
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.fixed_workload {
        cfg.redraw_workloads = false;
    }
    Ok(cfg)
}

fn write_results(
    args: &ExperimentArgs,
    param: Option<SweepParameter>,
    points: &[(Option<f64>, ExperimentResult)],
) -> CliResult<()> {
    let rows: Vec<(Option<f64>, &ExperimentResult)> =
        points.iter().map(|(v, r)| (*v, r)).collect();
    let csv = results_csv(&rows, args.no_timing);
    std::fs::write(&args.out, csv).map_err(mips::Error::from)?;
    if let Some(path) = &args.summary {
        let summary = SummaryFile {
            schema_version: SCHEMA_VERSION,
            sweep_parameter: param.map(|p| format!("{p:?}").to_lowercase()),
            points: points
                .iter()
                .map(|(v, r)| GridSummary::from_result(*v, r))
                .collect(),
        };
        save_json(path, &summary)?;
    }
    Ok(())
}

fn load_fixed_stream(args: &ExperimentArgs) -> CliResult<Option<Vec<mips::AppRequest>>> {
    match &args.workload {
        Some(path) => {
            let file: WorkloadFile = load_config(path)?;
            Ok(Some(file.into_requests().map_err(CliError::from)?))
        }
        None => Ok(None),
    }
}

fn experiment(args: ExperimentArgs) -> CliResult<()> {
    let cfg = merged_experiment_config(&args)?;
    let result = match load_fixed_stream(&args)? {
        Some(stream) => run_experiment_on(&cfg, &stream)?,
        None => run_experiment(&cfg)?,
    };
    eprintln!(
        "{} reps: T {:.3}, U {:.3}, W {:.3}, rejections {:.2}",
        result.summary.repetitions,
        result.summary.cross_container_traffic.mean,
        result.summary.container_utilization.mean,
        result.summary.cross_server_cost.mean,
        result.summary.rejections.mean,
    );
    write_results(&args, None, &[(None, result)])
}

fn run_sweep(args: SweepArgs) -> CliResult<()> {
    let param: SweepParameter = args.param.parse()?;
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad grid value '{v}'")))
        })
        .collect::<CliResult<_>>()?;
    let base = merged_experiment_config(&args.experiment)?;
    // validate the whole grid before burning compute on the first point
    for &v in &grid {
        apply_sweep_value(&base, param, v)?;
    }
    let stream = load_fixed_stream(&args.experiment)?;
    let result = sweep_on(&base, param, &grid, stream.as_deref())?;
    let points: Vec<(Option<f64>, ExperimentResult)> = result
        .points
        .into_iter()
        .map(|p| (Some(p.grid_value), p.result))
        .collect();
    write_results(&args.experiment, Some(param), &points)
}

fn oracle(args: OracleArgs) -> CliResult<()> {
    let request = load_config::<RequestFile>(&args.request)?
        .into_request()
        .map_err(CliError::from)?;
    let objective = ObjectiveConfig::new(args.alpha)?;
    let (icmp, icmp_value) = brute_force_icmp(&request, &objective)?;
    let (csmp, csmp_value) = match &args.cluster {
        Some(path) => {
            let cluster = load_config::<ClusterFile>(path)?
                .into_state()
                .map_err(CliError::from)?;
            let (a, v) = brute_force_csmp(&cluster, &request, &icmp)?;
            (Some(csmp_entries(&a)), Some(v))
        }
        None => (None, None),
    };
    let file = OracleFile {
        schema_version: SCHEMA_VERSION,
        request: request.id,
        alpha: args.alpha,
        icmp: icmp_entries(&icmp),
        icmp_value,
        csmp,
        csmp_value,
    };
    write_or_print(args.out.as_deref(), &file)
}
