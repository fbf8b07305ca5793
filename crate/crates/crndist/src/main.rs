//! Command-line front end: synthesis, analysis, simulation, verification,
//! and mixing-time bounds as reproducible runs over stable file formats.
//!
//! Exit codes: 0 success, 1 validation error (flags, JSON, preconditions),
//! 2 numerical failure (cap/box/threshold). Errors print one line
//! `ERROR <code>: <message>` on stderr.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crndist::analysis::{
    bound_mixing_birth, bound_mixing_decay, db_stationary, invalid_bound_json, oracle_stationary,
    solve_detailed_balance, AnalysisError, BoundKind,
};
use crndist::dist::{DistError, DistributionSpec};
use crndist::network::{validate_network, ReactionNetwork, State};
use crndist::sim::{simulate, verify, Perturbation, SimConfig, SimError, VerifyMode};
use crndist::synth::{synthesize, Method, SynthError, SynthesisResult};

#[derive(Parser)]
#[command(
    name = "crndist",
    about = "Synthesize reaction networks with prescribed stationary distributions and verify them",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a target distribution into a reaction network
    Synth(SynthArgs),
    /// Certify detailed balance and compute stationary tables
    Analyze(AnalyzeArgs),
    /// Simulate trajectories and estimate the limit distribution
    Simulate(SimulateArgs),
    /// Measure the distance between a network's stationary marginal and a target
    Verify(VerifyArgs),
    /// Mixing-time bounds for the decay and birth building blocks
    Bound(BoundArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Target distribution JSON file
    #[arg(long)]
    dist: PathBuf,
    /// Construction: full|bimol|spantree|pointmass|pmmix|unif|poisson|mix|auto
    #[arg(long)]
    method: String,
    /// Target accuracy (pointmass and auto)
    #[arg(long)]
    eps: Option<f64>,
    /// Mixing/uniform rate parameter (pmmix, unif, mix)
    #[arg(long)]
    delta: Option<f64>,
    /// Route for --method auto: db|robust
    #[arg(long, default_value = "robust")]
    route: String,
    /// Output network JSON file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Network JSON file
    #[arg(long)]
    net: PathBuf,
    /// Solve for a detailed-balance certificate and report it
    #[arg(long, default_value_t = false)]
    check_db: bool,
    /// Compute the product-form stationary law over the reachability class
    #[arg(long, default_value_t = false)]
    stationary: bool,
    /// Initial condition "c1,c2,..." (defaults to the network's init)
    #[arg(long)]
    x0: Option<String>,
    /// Reachability cap for --stationary
    #[arg(long, default_value_t = 100_000)]
    cap: usize,
    /// Solve the truncated-generator system over a box instead
    #[arg(long, default_value_t = false)]
    oracle: bool,
    /// Box upper bounds "b1,b2,..." (one per species), for --oracle
    #[arg(long = "box", value_name = "BOUNDS")]
    box_bounds: Option<String>,
    /// Output stationary table JSON file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Network JSON file
    #[arg(long)]
    net: PathBuf,
    /// Initial condition "c1,c2,..." (defaults to the network's init)
    #[arg(long)]
    x0: Option<String>,
    /// Simulated time horizon
    #[arg(long)]
    t: f64,
    /// RNG seed; replicate k uses seed+k
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of t discarded before occupancy accumulation
    #[arg(long, default_value_t = 0.1)]
    burn_in: f64,
    /// Number of pooled replicates
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Event cap per trajectory
    #[arg(long, default_value_t = u64::MAX)]
    max_events: u64,
    /// Perturbation "time:d1,d2,..."; repeatable
    #[arg(long)]
    perturb: Vec<String>,
    /// Optional trajectory TSV (first replicate only)
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Output occupancy TSV file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Network JSON file
    #[arg(long)]
    net: PathBuf,
    /// Target distribution JSON file
    #[arg(long)]
    dist: PathBuf,
    /// Backend: exact|oracle|sim
    #[arg(long)]
    mode: String,
    /// Initial condition "c1,c2,..." (exact and sim modes)
    #[arg(long)]
    x0: Option<String>,
    /// Reachability cap (exact mode)
    #[arg(long, default_value_t = 100_000)]
    cap: usize,
    /// Box upper bounds "b1,b2,..." (oracle mode)
    #[arg(long = "box", value_name = "BOUNDS")]
    box_bounds: Option<String>,
    /// Simulated time horizon (sim mode)
    #[arg(long)]
    t: Option<f64>,
    /// RNG seed (sim mode)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Burn-in fraction (sim mode)
    #[arg(long, default_value_t = 0.1)]
    burn_in: f64,
    /// Replicates (sim mode)
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    /// Output report JSON file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Bound family: decay|birth
    #[arg(long)]
    kind: String,
    /// First rate constant
    #[arg(long)]
    k1: f64,
    /// Second rate constant
    #[arg(long)]
    k2: f64,
    /// Target point (birth bound)
    #[arg(long)]
    x: Option<u64>,
    /// Distance level
    #[arg(long)]
    eps: f64,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

fn classify_analysis(e: AnalysisError) -> CliError {
    match &e {
        AnalysisError::CapExceeded { .. }
        | AnalysisError::BoxTooLarge { .. }
        | AnalysisError::BandTooLarge { .. }
        | AnalysisError::Reducible { .. }
        | AnalysisError::NumericalFailure(_)
        | AnalysisError::BelowThreshold { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn classify_sim(e: SimError) -> CliError {
    match e {
        SimError::Analysis(inner) => classify_analysis(inner),
        other => CliError::Validation(other.to_string()),
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn parse_counts(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Validation(format!("bad count '{p}'")))
        })
        .collect()
}

fn parse_state_flag(s: &Option<String>) -> Result<Option<State>, CliError> {
    Ok(match s {
        Some(text) => Some(State(parse_counts(text)?)),
        None => None,
    })
}

fn load_spec(path: &PathBuf) -> Result<DistributionSpec, CliError> {
    DistributionSpec::from_json_str(&read_file(path)?).map_err(CliError::from)
}

fn load_network(path: &PathBuf) -> Result<ReactionNetwork, CliError> {
    let net = ReactionNetwork::from_json_str(&read_file(path)?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let report = validate_network(&net);
    if !report.is_ok() {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| match v.reaction {
                Some(i) => format!("reaction {i}: {}", v.message),
                None => v.message.clone(),
            })
            .collect();
        return Err(CliError::Validation(format!(
            "invalid network: {}",
            lines.join("; ")
        )));
    }
    Ok(net)
}

fn summarize(result: &SynthesisResult) {
    println!(
        "method={} species={} reactions={} max_molecularity={}",
        result.method.as_str(),
        result.net.species.len(),
        result.net.reactions.len(),
        result.net.max_molecularity()
    );
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.dist)?;
    let method = match args.method.as_str() {
        "auto" => match args.route.as_str() {
            "db" => Method::AutoDb,
            "robust" => Method::AutoRobust,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown route '{other}' (expected db|robust)"
                )))
            }
        },
        tag => Method::from_str_tag(tag)
            .ok_or_else(|| CliError::Validation(format!("unknown method '{tag}'")))?,
    };
    let result = synthesize(&spec, method, args.eps, args.delta)?;
    write_file(&args.out, &result.to_json_string())?;
    summarize(&result);
    Ok(())
}

fn run_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let net = load_network(&args.net)?;
    if !(args.check_db || args.stationary || args.oracle) {
        return Err(CliError::Validation(
            "nothing to do: pass --check-db, --stationary, or --oracle".into(),
        ));
    }
    if args.stationary && args.oracle {
        return Err(CliError::Validation(
            "--stationary and --oracle are mutually exclusive".into(),
        ));
    }
    let mut cert = None;
    if args.check_db || args.stationary {
        cert = solve_detailed_balance(&net);
        match &cert {
            Some(c) => println!(
                "detailed_balanced=true max_residual={:.3e} c=[{}]",
                c.max_residual,
                c.c.iter()
                    .map(|v| format!("{v:.6}"))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            None => println!("detailed_balanced=false"),
        }
    }
    let table = if args.stationary {
        let cert = cert
            .as_ref()
            .ok_or_else(|| CliError::Validation("network is not detailed balanced".into()))?;
        let x0 = parse_state_flag(&args.x0)?
            .or_else(|| net.init.clone())
            .ok_or_else(|| CliError::Validation("--x0 required (network has no init)".into()))?;
        Some(db_stationary(&net, cert, &x0, args.cap).map_err(classify_analysis)?)
    } else if args.oracle {
        let bounds = args
            .box_bounds
            .as_ref()
            .ok_or_else(|| CliError::Validation("--oracle requires --box".into()))?;
        Some(oracle_stationary(&net, &parse_counts(bounds)?).map_err(classify_analysis)?)
    } else {
        None
    };
    if let Some(table) = &table {
        println!(
            "states={} M={:.6e} outflow={}",
            table.dist.support_size(),
            table.normalization,
            table
                .boundary_outflow
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "n/a".into())
        );
        if let Some(out) = &args.out {
            write_file(out, &table.to_json_string())?;
        }
    }
    Ok(())
}

fn parse_perturbations(specs: &[String]) -> Result<Vec<Perturbation>, CliError> {
    specs
        .iter()
        .map(|s| {
            let (time, deltas) = s
                .split_once(':')
                .ok_or_else(|| CliError::Validation(format!("bad perturbation '{s}'")))?;
            let at_time = time
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("bad perturbation time '{time}'")))?;
            let delta = deltas
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<i64>()
                        .map_err(|_| CliError::Validation(format!("bad delta '{p}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Perturbation { at_time, delta })
        })
        .collect()
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let net = load_network(&args.net)?;
    let x0 = parse_state_flag(&args.x0)?
        .or_else(|| net.init.clone())
        .ok_or_else(|| CliError::Validation("--x0 required (network has no init)".into()))?;
    let cfg = SimConfig {
        t_end: args.t,
        seed: args.seed,
        burn_in_fraction: args.burn_in,
        max_events: args.max_events,
    };
    let perts = parse_perturbations(&args.perturb)?;

    if args.replicates == 1 || !perts.is_empty() {
        // perturbation runs are single-trajectory experiments
        if args.replicates != 1 && !perts.is_empty() {
            return Err(CliError::Validation(
                "--perturb runs are single-replicate; drop --replicates".into(),
            ));
        }
        let mut out = simulate(&net, &x0, &cfg, &perts).map_err(classify_sim)?;
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(traj_path) = &args.traj {
            write_file(
                traj_path,
                &crndist::sim::trajectory_tsv(&out.trajectory, &net.species.names),
            )?;
        }
        // occupancy files carry the visible coordinates only
        let visible: Vec<usize> = (0..net.visible_count.max(1)).collect();
        out.occupancy.dist = crndist::dist::marginalize(&out.occupancy.dist, &visible)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let names: Vec<String> = visible
            .iter()
            .map(|&i| net.species.names[i].clone())
            .collect();
        write_file(&args.out, &crndist::sim::occupancy_tsv(&out.occupancy, &names))?;
        println!(
            "events={} total_time={} truncated={}",
            out.occupancy.events, out.occupancy.total_time, out.occupancy.truncated_by_cap
        );
    } else {
        let visible: Vec<usize> = (0..net.visible_count.max(1)).collect();
        if let Some(traj_path) = &args.traj {
            let single = simulate(&net, &x0, &cfg, &[]).map_err(classify_sim)?;
            write_file(
                traj_path,
                &crndist::sim::trajectory_tsv(&single.trajectory, &net.species.names),
            )?;
        }
        let est = crndist::sim::estimate_limit(&net, &x0, &cfg, &visible, args.replicates)
            .map_err(classify_sim)?;
        let names: Vec<String> = visible
            .iter()
            .map(|&i| net.species.names[i].clone())
            .collect();
        write_file(&args.out, &crndist::sim::occupancy_tsv(&est.occupancy, &names))?;
        println!(
            "events={} total_time={} spread={:.6e} truncated={}",
            est.occupancy.events,
            est.occupancy.total_time,
            est.spread,
            est.occupancy.truncated_by_cap
        );
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let net = load_network(&args.net)?;
    let spec = load_spec(&args.dist)?;
    let visible: Vec<usize> = (0..net.visible_count.max(1)).collect();
    let x0 = parse_state_flag(&args.x0)?;
    let mode = match args.mode.as_str() {
        "exact" => VerifyMode::Exact { x0, cap: args.cap },
        "oracle" => {
            let bounds = args
                .box_bounds
                .as_ref()
                .ok_or_else(|| CliError::Validation("oracle mode requires --box".into()))?;
            VerifyMode::Oracle {
                bounds: parse_counts(bounds)?,
            }
        }
        "sim" => {
            let t = args
                .t
                .ok_or_else(|| CliError::Validation("sim mode requires --t".into()))?;
            // robust networks carry no init and tolerate any start
            let x0 = x0.or_else(|| net.init.clone()).or_else(|| {
                println!("note: starting from the zero state (no --x0, no recorded init)");
                Some(State(vec![0; net.species.len()]))
            });
            VerifyMode::Sim {
                x0,
                cfg: SimConfig {
                    t_end: t,
                    seed: args.seed,
                    burn_in_fraction: args.burn_in,
                    max_events: u64::MAX,
                },
                replicates: args.replicates,
            }
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown mode '{other}' (expected exact|oracle|sim)"
            )))
        }
    };
    let report = verify(&net, &spec, &visible, &mode).map_err(classify_sim)?;
    println!("mode={} distance={:.6e}", report.mode, report.distance);
    if let Some(out) = &args.out {
        write_file(out, &report.to_json_string())?;
    }
    Ok(())
}

fn run_bound(args: &BoundArgs) -> Result<(), CliError> {
    let result = match args.kind.as_str() {
        "decay" => bound_mixing_decay(args.k1, args.k2, args.eps),
        "birth" => {
            let x = args
                .x
                .ok_or_else(|| CliError::Validation("birth bound requires --x".into()))?;
            bound_mixing_birth(x, args.k1, args.k2, args.eps)
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown kind '{other}' (expected decay|birth)"
            )))
        }
    };
    match result {
        Ok(bound) => {
            println!("{}", serde_json::to_string_pretty(&bound.to_json()).unwrap());
            Ok(())
        }
        Err(AnalysisError::BelowThreshold { threshold, case }) => {
            let kind = if args.kind == "decay" { BoundKind::Decay } else { BoundKind::Birth };
            println!(
                "{}",
                serde_json::to_string_pretty(&invalid_bound_json(kind, threshold)).unwrap()
            );
            Err(CliError::Numerical(format!(
                "eps {} below validity threshold {threshold} ({case} case)",
                args.eps
            )))
        }
        Err(e) => Err(classify_analysis(e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("ERROR 1: {}", e.kind());
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Verify(args) => run_verify(args),
        Command::Bound(args) => run_bound(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e.message());
            ExitCode::from(e.code())
        }
    }
}
