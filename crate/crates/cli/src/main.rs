use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use valnet::approx::{build_approx_unreduced, MergePolicy};
use valnet::bench::{budget_schedule, summarize, sweep, SweepConfig};
use valnet::follower::FollowerOracle;
use valnet::generator::{generate, GeneratorConfig};
use valnet::instance::BilevelInstance;
use valnet::io::{parse_mps_aux, read_native, write_mps_aux, write_native};
use valnet::network::{build_state_network, NetworkError, NetworkOptions, VariableOrder, DEFAULT_NODE_CAP};
use valnet::oracle::{brute_force_bilevel, OracleError, DEFAULT_WORK_CAP};
use valnet::solver::{solve_exact, solve_relaxation, Relaxation, SolveError, SolveStatus, SolverOptions};
use valnet::strengthen::{strengthen_network, RegionMode, SampleSet};
use valnet::{Rational, Scalar};

#[derive(Parser)]
#[command(name = "valnet", version, about = "Value-function networks for binary bilevel programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as native JSON.
    Generate(GenerateArgs),
    /// Convert between native JSON and MPS+AUX (chosen by extension).
    Convert(ConvertArgs),
    /// Build a value network and print its statistics.
    Network(NetworkArgs),
    /// Solve one relaxation and print its lower bound.
    Bound(BoundArgs),
    /// Solve the bilevel program exactly and print a JSON report.
    Solve(SolveArgs),
    /// Solve by enumerating every leader and follower decision.
    Oracle(OracleArgs),
    /// Run the relaxations over a grid of generated instances.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file: `.json` (native) or `.mps` (with an AUX file).
    instance: PathBuf,
    /// AUX file for MPS input; defaults to the MPS path with `.aux`.
    #[arg(long)]
    aux: Option<PathBuf>,
    /// Use exact rational arithmetic.
    #[arg(long)]
    rational: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n_l: usize,
    /// Follower variables; defaults to `n_l`.
    #[arg(long)]
    n_f: Option<usize>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Leader rows; defaults to `m`.
    #[arg(long)]
    leader_rows: Option<usize>,
    #[arg(long, default_value_t = 1)]
    alpha: u32,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    #[arg(long)]
    aux: Option<PathBuf>,
    output: PathBuf,
    /// AUX output for MPS; defaults to the output path with `.aux`.
    #[arg(long)]
    aux_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Native,
    ColumnSum,
}

impl From<OrderArg> for VariableOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Native => VariableOrder::Native,
            OrderArg::ColumnSum => VariableOrder::ColumnSum,
        }
    }
}

#[derive(Args)]
struct NetworkSpec {
    /// Build the exact network (the default unless a budget is given).
    #[arg(long, conflicts_with = "budget")]
    exact: bool,
    /// Maximum layer width of the relaxed network.
    #[arg(long)]
    budget: Option<usize>,
    /// Use the budget schedule for the instance size.
    #[arg(long, conflicts_with_all = ["budget", "exact"])]
    scheduled: bool,
    #[arg(long, value_enum, default_value = "native")]
    order: OrderArg,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: usize,
}

impl NetworkSpec {
    fn policy(&self, n_l: usize) -> MergePolicy {
        let budget = if self.scheduled { Some(budget_schedule(n_l)) } else { self.budget };
        let mut p = match budget {
            Some(b) if !self.exact => MergePolicy::with_budget(b),
            _ => MergePolicy::unlimited(),
        };
        p.order = self.order.into();
        p
    }
}

#[derive(Args)]
struct NetworkArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[command(flatten)]
    spec: NetworkSpec,
    /// Tighten terminal values before reducing.
    #[arg(long)]
    strengthen: bool,
    /// Write the reduced network in DOT format.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Hpr,
    Dd,
    DdMaxmin,
}

#[derive(Args)]
struct Tuning {
    #[arg(long, default_value_t = 5)]
    max_strengthen_iters: usize,
    /// Max-min regions: the terminal's box or its exact paths.
    #[arg(long)]
    exact_regions: bool,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[command(flatten)]
    spec: NetworkSpec,
    #[command(flatten)]
    tuning: Tuning,
    /// Reference optimum for the gap.
    #[arg(long, allow_hyphen_values = true)]
    known_optimum: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[command(flatten)]
    spec: NetworkSpec,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    strengthen: bool,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Per-iteration log as TSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InstanceArgs,
    /// Also print the value function for every leader decision.
    #[arg(long)]
    table: bool,
    #[arg(long, default_value_t = DEFAULT_WORK_CAP)]
    cap: u128,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "25")]
    n_l: Vec<usize>,
    #[arg(long)]
    n_f: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20")]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    alpha: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5")]
    beta: Vec<f64>,
    /// Seeds 0..seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 5)]
    max_strengthen_iters: usize,
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
    /// TSV summary path; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-instance records as JSON.
    #[arg(long)]
    records: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Limit(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Limit(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn network_failure(e: NetworkError) -> Failure {
    match e {
        NetworkError::TooLarge { .. } => Failure::Limit(e.to_string()),
        other => input(other),
    }
}

fn solve_failure(e: SolveError) -> Failure {
    match e {
        SolveError::Network(n) => network_failure(n),
        other => input(other),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            emit(text);
            Ok(())
        }
    }
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn is_mps(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mps"))
}

fn load<T: Scalar>(path: &Path, aux: Option<&Path>) -> Result<BilevelInstance<T>, Failure> {
    let text = read(path)?;
    let inst = if is_mps(path) {
        let aux_path = aux.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension("aux"));
        let aux_text = read(&aux_path)?;
        parse_mps_aux(&text, &aux_text)
    } else {
        read_native(&text)
    }
    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    if let Some(v) = inst.validate().into_iter().find(|v| !matches!(v, valnet::instance::Violation::NonInteger { .. })) {
        return Err(Failure::Input(format!("{}: {v}", path.display())));
    }
    inst.scale_to_integer().map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn secs(s: Option<f64>) -> Option<Duration> {
    s.map(|v| Duration::from_secs_f64(v.max(0.0)))
}

fn options<T: Scalar>(spec: &NetworkSpec, tuning: &Tuning, n_l: usize) -> SolverOptions<T> {
    let mut opts = SolverOptions::<T> {
        policy: spec.policy(n_l),
        node_cap: spec.node_cap,
        time_limit: secs(tuning.time_limit),
        ..SolverOptions::default()
    };
    opts.robust.max_iterations = tuning.max_strengthen_iters;
    if tuning.exact_regions {
        opts.robust.mode = RegionMode::ExactPaths;
    }
    opts
}

fn cmd_generate(a: &GenerateArgs) -> Outcome {
    let mut cfg = GeneratorConfig::new(a.n_l, a.m, a.alpha, a.beta, a.seed).with_follower(a.n_f.unwrap_or(a.n_l));
    if let Some(k) = a.leader_rows {
        cfg = cfg.with_leader_rows(k);
    }
    let inst = generate::<f64>(&cfg).map_err(input)?;
    write_or_print(a.output.as_deref(), &write_native(&inst))
}

fn cmd_convert(a: &ConvertArgs) -> Outcome {
    let inst: BilevelInstance<Rational> = load(&a.input, a.aux.as_deref())?;
    if is_mps(&a.output) {
        let (mps, aux) = write_mps_aux(&inst);
        let aux_path = a.aux_out.clone().unwrap_or_else(|| a.output.with_extension("aux"));
        write_or_print(Some(&a.output), &mps)?;
        write_or_print(Some(&aux_path), &aux)
    } else {
        write_or_print(Some(&a.output), &write_native(&inst))
    }
}

fn cmd_network<T: Scalar>(a: &NetworkArgs) -> Outcome {
    let inst: BilevelInstance<T> = load(&a.input.instance, a.input.aux.as_deref())?;
    let oracle = FollowerOracle::new(&inst).map_err(input)?;
    let policy = a.spec.policy(inst.n_l);
    let mut raw = match policy.budget {
        None => build_state_network(&oracle, &NetworkOptions { order: policy.order, node_cap: a.spec.node_cap }),
        Some(_) => build_approx_unreduced(&oracle, &policy),
    }
    .map_err(network_failure)?;
    let mut strengthened = None;
    if a.strengthen {
        let opts = SolverOptions::<T>::default();
        let rep = strengthen_network(&oracle, &mut raw, &mut SampleSet::new(), &opts.robust, None).map_err(network_failure)?;
        strengthened = Some(rep);
    }
    let net = raw.reduce();
    let values: Vec<String> = net.terminal_values().iter().map(|v| v.decimal_text().unwrap_or_else(|| format!("{v:?}"))).collect();
    let ratio = if raw.num_nodes() == 0 { 1.0 } else { net.num_nodes() as f64 / raw.num_nodes() as f64 };
    let stats = json!({
        "instance": inst.name,
        "budget": policy.budget,
        "unreduced_nodes": raw.num_nodes(),
        "nodes": net.num_nodes(),
        "edges": net.num_edges(),
        "widths": net.widths(),
        "terminals": net.terminal_values().len(),
        "terminal_values": values,
        "reduction_ratio": ratio,
        "strengthen": strengthened,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&stats).expect("JSON values serialize")));
    if let Some(p) = &a.dot {
        write_or_print(Some(p), &net.to_dot())?;
    }
    Ok(())
}

fn report_exit(status: SolveStatus) -> Outcome {
    match status {
        SolveStatus::LimitReached => Err(Failure::Limit("limit reached".into())),
        SolveStatus::Failed => Err(Failure::Limit("the MILP engine gave no usable answer".into())),
        _ => Ok(()),
    }
}

fn cmd_bound<T: Scalar>(a: &BoundArgs) -> Outcome {
    let inst: BilevelInstance<T> = load(&a.input.instance, a.input.aux.as_deref())?;
    let oracle = FollowerOracle::new(&inst).map_err(input)?;
    let mut opts = options::<T>(&a.spec, &a.tuning, inst.n_l);
    if let Some(k) = &a.known_optimum {
        opts.known_optimum = Some(T::parse_text(k).ok_or_else(|| Failure::Input(format!("bad number {k:?}")))?);
    }
    let variant = match a.variant {
        VariantArg::Hpr => Relaxation::Hpr,
        VariantArg::Dd => Relaxation::Dd,
        VariantArg::DdMaxmin => Relaxation::DdMaxMin,
    };
    let rep = solve_relaxation(&oracle, variant, &opts).map_err(solve_failure)?;
    let lb = rep.lower_bound.as_ref().and_then(|v| v.decimal_text()).unwrap_or_else(|| "-".into());
    let gap = rep.gap.map_or_else(|| "-".to_string(), |g| format!("{g:.6}"));
    emit(&format!("{}\t{}\tlower_bound={lb}\tgap={gap}\tstatus={:?}\n", inst.name, variant.name(), rep.status));
    report_exit(rep.status)
}

fn cmd_solve<T: Scalar>(a: &SolveArgs) -> Outcome {
    let inst: BilevelInstance<T> = load(&a.input.instance, a.input.aux.as_deref())?;
    let oracle = FollowerOracle::new(&inst).map_err(input)?;
    let mut opts = options::<T>(&a.spec, &a.tuning, inst.n_l);
    opts.strengthen = a.strengthen;
    opts.max_iterations = a.max_iterations;
    let rep = solve_exact(&oracle, &opts).map_err(solve_failure)?;
    if let Some(p) = &a.log {
        write_or_print(Some(p), &rep.log_tsv())?;
    }
    let text = serde_json::to_string_pretty(&rep.to_json()).expect("JSON values serialize") + "\n";
    write_or_print(a.output.as_deref(), &text)?;
    report_exit(rep.status)
}

fn cmd_oracle<T: Scalar>(a: &OracleArgs) -> Outcome {
    let inst: BilevelInstance<T> = load(&a.input.instance, a.input.aux.as_deref())?;
    let res = brute_force_bilevel(&inst, a.cap, a.table).map_err(|e| match e {
        OracleError::TooLarge { .. } => Failure::Limit(e.to_string()),
        other => input(other),
    })?;
    let num = |v: &T| v.to_exact_i64().map_or_else(|| json!(v.to_f64_lossy()), |i| json!(i));
    let mut out = json!({
        "instance": inst.name,
        "status": if res.value.is_some() { "Optimal" } else { "Infeasible" },
        "objective": res.value.as_ref().map(num),
        "x": res.x,
        "y": res.y,
        "states": res.states,
    });
    if let Some(table) = &res.table {
        out["table"] = table.iter().map(|v| v.finite().map(num).unwrap_or(json!("inf"))).collect();
    }
    emit(&format!("{}\n", serde_json::to_string_pretty(&out).expect("JSON values serialize")));
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let cfg = SweepConfig {
        n_l: a.n_l.clone(),
        n_f: a.n_f,
        m: a.m.clone(),
        alpha: a.alpha.clone(),
        beta: a.beta.clone(),
        seeds: (0..a.seeds).collect(),
        budget: a.budget,
        strengthen_iterations: a.max_strengthen_iters,
        time_limit: secs(a.time_limit),
        oracle_cap: DEFAULT_WORK_CAP,
    };
    let records = sweep(&cfg).map_err(input)?;
    if let Some(p) = &a.records {
        let text = serde_json::to_string_pretty(&records).expect("JSON values serialize");
        write_or_print(Some(p), &text)?;
    }
    write_or_print(a.output.as_deref(), &summarize(&records))
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Network(a) if a.input.rational => cmd_network::<Rational>(a),
        Command::Network(a) => cmd_network::<f64>(a),
        Command::Bound(a) if a.input.rational => cmd_bound::<Rational>(a),
        Command::Bound(a) => cmd_bound::<f64>(a),
        Command::Solve(a) if a.input.rational => cmd_solve::<Rational>(a),
        Command::Solve(a) => cmd_solve::<f64>(a),
        Command::Oracle(a) if a.input.rational => cmd_oracle::<Rational>(a),
        Command::Oracle(a) => cmd_oracle::<f64>(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Limit(msg)) = &f;
            eprintln!("valnet: {msg}");
            ExitCode::from(f.code())
        }
    }
}
