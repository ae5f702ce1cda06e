//! Lower bounds from single-level relaxations and the exact
//! cutting-plane loop.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};
use valnet_milp::{solve_milp, Limits, MilpModel, MilpSolution, Scalar, Sense, Status, VarId};

use crate::approx::{build_approx_unreduced, MergePolicy};
use crate::follower::FollowerOracle;
use crate::instance::InstanceError;
use crate::network::{build_state_network, NetworkError, NetworkOptions, ValueNetwork, DEFAULT_NODE_CAP};
use crate::numerics::{at_most, dot};
use crate::reform::{add_blocking_cut, build_hpr, build_strengthened, BilevelModel, BlockingCutState};
use crate::strengthen::{
    compute_big_m, compute_big_m_from, strengthen_network, BigM, RobustModelParams, SampleSet, StrengthenReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relaxation {
    /// Drop optimality of the follower.
    Hpr,
    /// Flow over the (budgeted) network.
    Dd,
    /// Flow over the budgeted network after max-min tightening.
    DdMaxMin,
}

impl Relaxation {
    pub fn name(self) -> &'static str {
        match self {
            Relaxation::Hpr => "hpr",
            Relaxation::Dd => "dd",
            Relaxation::DdMaxMin => "dd-maxmin",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions<T> {
    /// Network used by the flow model; an unlimited budget builds the
    /// exact reduced network.
    pub policy: MergePolicy,
    /// Run max-min tightening on the network before reducing it.
    pub strengthen: bool,
    /// Max-min settings; a preset `big_m` skips the big-M computation.
    pub robust: RobustModelParams<T>,
    pub big_m_iterations: usize,
    /// Cap on blocking cuts added by the exact loop.
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    pub node_cap: usize,
    /// Reference optimum for gap reporting.
    pub known_optimum: Option<T>,
}

impl<T> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            policy: MergePolicy::unlimited(),
            strengthen: false,
            robust: RobustModelParams::default(),
            big_m_iterations: 50,
            max_iterations: 500,
            time_limit: None,
            node_cap: DEFAULT_NODE_CAP,
            known_optimum: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    LimitReached,
    /// The MILP engine gave no usable answer.
    Failed,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NetworkStats {
    pub nodes: usize,
    pub edges: usize,
    pub terminals: usize,
    pub max_width: usize,
    pub widths: Vec<usize>,
}

impl NetworkStats {
    pub fn of<T: Scalar>(net: &ValueNetwork<T>) -> Self {
        NetworkStats {
            nodes: net.num_nodes(),
            edges: net.num_edges(),
            terminals: net.terminal_values().len(),
            max_width: net.max_width(),
            widths: net.widths(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub big_m: f64,
    pub network: f64,
    pub strengthen: f64,
    pub milp: f64,
    pub separation: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    /// `d·y - φ(x)` at the relaxation optimum.
    pub follower_excess: f64,
    pub cuts: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub instance: String,
    pub method: String,
    pub status: SolveStatus,
    /// Best bilevel feasible value found.
    pub objective: Option<T>,
    pub x: Option<Vec<u8>>,
    pub y: Option<Vec<u8>>,
    pub lower_bound: Option<T>,
    /// Relative gap of `lower_bound` to the known optimum, else to the
    /// incumbent.
    pub gap: Option<f64>,
    pub iterations: usize,
    pub big_m: Option<T>,
    pub network: Option<NetworkStats>,
    pub strengthen: Option<StrengthenReport>,
    pub timings: Timings,
    pub log: Vec<IterationLog>,
}

fn num<T: Scalar>(v: &T) -> Value {
    match v.to_exact_i64() {
        Some(i) => json!(i),
        None => json!(v.to_f64_lossy()),
    }
}

impl<T: Scalar> SolveReport<T> {
    fn new(instance: &str, method: &str) -> Self {
        SolveReport {
            instance: instance.to_string(),
            method: method.to_string(),
            status: SolveStatus::Failed,
            objective: None,
            x: None,
            y: None,
            lower_bound: None,
            gap: None,
            iterations: 0,
            big_m: None,
            network: None,
            strengthen: None,
            timings: Timings::default(),
            log: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "instance": self.instance,
            "method": self.method,
            "status": self.status,
            "objective": self.objective.as_ref().map(num),
            "x": self.x,
            "y": self.y,
            "lower_bound": self.lower_bound.as_ref().map(num),
            "gap": self.gap,
            "iterations": self.iterations,
            "big_m": self.big_m.as_ref().map(num),
            "network": self.network,
            "strengthen": self.strengthen,
            "timings": self.timings,
            "log": self.log,
        })
    }

    /// Per-iteration log as tab-separated text with a header line.
    pub fn log_tsv(&self) -> String {
        let mut out = String::from("iteration\tlower_bound\tupper_bound\tfollower_excess\tcuts\tseconds\n");
        for l in &self.log {
            let ub = l.upper_bound.map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}\t{:.3}", l.iteration, l.lower_bound, ub, l.follower_excess, l.cuts, l.seconds);
        }
        out
    }

    fn set_gap(&mut self, known: Option<&T>) {
        let reference = known.or(self.objective.as_ref());
        self.gap = match (reference, &self.lower_bound) {
            (Some(ub), Some(lb)) => relative_gap(ub, lb),
            _ => None,
        };
    }
}

/// `(ub - lb) / |ub|`, or `None` when `ub` is zero and `lb` is not.
pub fn relative_gap<T: Scalar>(ub: &T, lb: &T) -> Option<f64> {
    let (u, l) = (ub.to_f64_lossy(), lb.to_f64_lossy());
    if u == 0.0 {
        return (l == 0.0).then_some(0.0);
    }
    let g = (u - l) / u.abs();
    Some(if g.abs() < 1e-12 { 0.0 } else { g })
}

/// True when `y` is feasible for the follower at `x`, optimal for it, and
/// the leader rows hold.
pub fn check_bilevel_feasible<T: Scalar>(oracle: &FollowerOracle<'_, T>, x: &[u8], y: &[u8]) -> bool {
    let inst = oracle.instance();
    let ia = oracle.interaction();
    let state = ia.state_of(x);
    let act = ia.follower_activity(y);
    if (0..ia.m).any(|i| state.0[i] + act[i] < ia.rhs[i]) || !inst.leader_rows_hold(x, y) {
        return false;
    }
    match oracle.phi(x).value.into_finite() {
        Some(phi) => at_most(&dot(&inst.d, y), &phi),
        None => false,
    }
}

/// Best follower-optimal response at `x` for the leader (satisfying the
/// leader rows), with the leader objective.
pub fn optimistic_response<T: Scalar>(oracle: &FollowerOracle<'_, T>, x: &[u8]) -> Option<(Vec<u8>, T)> {
    let inst = oracle.instance();
    let ia = oracle.interaction();
    let phi = oracle.phi(x).value.into_finite()?;
    let state = ia.state_of(x);
    let mut model: MilpModel<T> = MilpModel::new("response");
    let y: Vec<VarId> = (0..inst.n_f).map(|k| model.add_binary(format!("y{k}"))).collect();
    let terms = |row: &[T]| -> Vec<(VarId, T)> {
        y.iter().zip(row).filter(|(_, c)| !c.is_zero()).map(|(v, c)| (*v, c.clone())).collect()
    };
    for (k, v) in y.iter().enumerate() {
        model.set_obj(*v, inst.p[k].clone());
    }
    for i in 0..ia.m {
        let row: Vec<T> = ia.b_rows[i].iter().map(|b| T::from_int(*b)).collect();
        model.add_row(format!("link{i}"), terms(&row), Sense::Ge, T::from_int(ia.rhs[i] - state.0[i]));
    }
    for i in 0..inst.m_l() {
        let gx = dot(&inst.gx[i], x);
        model.add_row(format!("lead{i}"), terms(&inst.gy[i]), Sense::Ge, inst.h[i].clone() - gx);
    }
    let tol = if T::EXACT { T::zero() } else { T::feas_tol() };
    model.add_row("optimal", terms(&inst.d), Sense::Le, phi + tol);
    let sol = solve_milp(&model, &Limits::none()).ok()?;
    if !sol.is_optimal() {
        return None;
    }
    let yb: Vec<u8> = y.iter().map(|v| sol.bit(*v)).collect();
    let value = inst.leader_objective(x, &yb);
    Some((yb, value))
}

/// Network behind a decision-diagram relaxation.
#[derive(Clone, Debug)]
pub struct RelaxationNetwork<T> {
    /// After strengthening and clipping at the big-M, before reduction.
    pub unreduced: ValueNetwork<T>,
    pub net: ValueNetwork<T>,
    pub big_m: Option<BigM<T>>,
    pub strengthen: Option<StrengthenReport>,
}

/// An exact network's largest value is the maximum of `φ`; a relaxed
/// network's largest value is a valid start for the cutting-plane loop.
fn network_big_m<T: Scalar>(oracle: &FollowerOracle<'_, T>, raw: &ValueNetwork<T>, exact: bool, iterations: usize) -> BigM<T> {
    match raw.terminal_values().iter().cloned().reduce(T::max_of) {
        Some(top) if exact => BigM { value: top, samples: SampleSet::new(), iterations: 0, converged: true },
        Some(top) => compute_big_m_from(oracle, iterations, top),
        None => compute_big_m(oracle, iterations),
    }
}

/// Builds the unreduced network, computes the big-M when asked, tightens
/// terminals when asked, clips at the big-M and reduces.
fn prepare_network<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    opts: &SolverOptions<T>,
    with_big_m: bool,
    strengthen: bool,
    samples: &mut SampleSet,
    timings: &mut Timings,
    deadline: Option<Instant>,
) -> Result<RelaxationNetwork<T>, SolveError> {
    let t = Instant::now();
    let mut raw = match opts.policy.budget {
        None => build_state_network(oracle, &NetworkOptions { order: opts.policy.order, node_cap: opts.node_cap })?,
        Some(_) => build_approx_unreduced(oracle, &opts.policy)?,
    };
    timings.network += t.elapsed().as_secs_f64();
    let mut robust = opts.robust.clone();
    let mut big_m = None;
    if with_big_m {
        let t = Instant::now();
        let big = match &opts.robust.big_m {
            Some(m) => BigM { value: m.clone(), samples: SampleSet::new(), iterations: 0, converged: false },
            None => network_big_m(oracle, &raw, opts.policy.budget.is_none(), opts.big_m_iterations),
        };
        timings.big_m += t.elapsed().as_secs_f64();
        samples.extend(&big.samples);
        robust.big_m = Some(big.value.clone());
        big_m = Some(big);
    }
    let mut report = None;
    if strengthen {
        let t = Instant::now();
        report = Some(strengthen_network(oracle, &mut raw, samples, &robust, deadline)?);
        timings.strengthen += t.elapsed().as_secs_f64();
    }
    if let Some(big) = &big_m {
        clip_terminals(&mut raw, &big.value);
    }
    let t = Instant::now();
    let net = raw.reduce();
    timings.network += t.elapsed().as_secs_f64();
    Ok(RelaxationNetwork { unreduced: raw, net, big_m, strengthen: report })
}

fn clip_terminals<T: Scalar>(net: &mut ValueNetwork<T>, cap: &T) {
    for t in 0..net.terminal_values().len() {
        if net.terminal_values()[t] > *cap {
            net.set_terminal_value(t, cap.clone());
        }
    }
}

fn limits_until(deadline: Option<Instant>) -> Limits {
    Limits { max_nodes: None, time_limit: deadline.map(|d| d.saturating_duration_since(Instant::now())) }
}

fn run_milp<T: Scalar>(model: &MilpModel<T>, deadline: Option<Instant>, timings: &mut Timings) -> Option<MilpSolution<T>> {
    let t = Instant::now();
    let sol = solve_milp(model, &limits_until(deadline)).ok();
    timings.milp += t.elapsed().as_secs_f64();
    sol
}

/// Builds and solves one relaxation. The lower bound is the MILP optimum,
/// or its proven bound when a limit stops the solve.
pub fn solve_relaxation<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    relaxation: Relaxation,
    opts: &SolverOptions<T>,
) -> Result<SolveReport<T>, SolveError> {
    let started = Instant::now();
    let mut timings = Timings::default();
    let prep = relaxation_network(oracle, relaxation, opts, &mut timings)?;
    let rest = opts.time_limit.map(|d| d.saturating_sub(started.elapsed()));
    let mut report = solve_relaxation_on(oracle, relaxation, prep.as_ref(), &SolverOptions { time_limit: rest, ..opts.clone() });
    let milp = report.timings.milp;
    report.timings = Timings { milp, total: started.elapsed().as_secs_f64(), ..timings };
    Ok(report)
}

/// The network a relaxation optimizes over; `None` for the high-point
/// relaxation. Time spent is added to `timings`.
pub fn relaxation_network<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    relaxation: Relaxation,
    opts: &SolverOptions<T>,
    timings: &mut Timings,
) -> Result<Option<RelaxationNetwork<T>>, SolveError> {
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let maxmin = match relaxation {
        Relaxation::Hpr => return Ok(None),
        Relaxation::Dd => false,
        Relaxation::DdMaxMin => true,
    };
    let mut samples = SampleSet::new();
    prepare_network(oracle, opts, maxmin, maxmin, &mut samples, timings, deadline).map(Some)
}

/// Solves a relaxation over a network from [`relaxation_network`].
pub fn solve_relaxation_on<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    relaxation: Relaxation,
    prepared: Option<&RelaxationNetwork<T>>,
    opts: &SolverOptions<T>,
) -> SolveReport<T> {
    let started = Instant::now();
    let deadline = opts.time_limit.map(|d| started + d);
    let inst = oracle.instance();
    let mut report = SolveReport::new(&inst.name, relaxation.name());
    let bm: BilevelModel<T> = match prepared {
        None => build_hpr(inst),
        Some(prep) => {
            report.big_m = prep.big_m.as_ref().map(|b| b.value.clone());
            report.network = Some(NetworkStats::of(&prep.net));
            report.strengthen = prep.strengthen.clone();
            build_strengthened(inst, &prep.net).0
        }
    };
    match run_milp(&bm.model, deadline, &mut report.timings) {
        Some(sol) => match sol.status {
            Status::Optimal => {
                report.status = SolveStatus::Optimal;
                report.lower_bound = sol.objective.clone();
                let (x, y) = (bm.leader_bits(&sol.values), bm.follower_bits(&sol.values));
                if check_bilevel_feasible(oracle, &x, &y) {
                    report.objective = Some(inst.leader_objective(&x, &y));
                }
                report.x = Some(x);
                report.y = Some(y);
            }
            Status::Infeasible => report.status = SolveStatus::Infeasible,
            Status::LimitReached => {
                report.status = SolveStatus::LimitReached;
                report.lower_bound = sol.best_bound.clone();
            }
            Status::Unbounded | Status::NumericalError => report.status = SolveStatus::Failed,
        },
        None => report.status = SolveStatus::Failed,
    }
    report.set_gap(opts.known_optimum.as_ref());
    report.timings.total = started.elapsed().as_secs_f64();
    report
}

/// Exact solve: flow reformulation over the value network plus blocking
/// cuts for follower responses that beat the relaxation's follower.
pub fn solve_exact<T: Scalar>(oracle: &FollowerOracle<'_, T>, opts: &SolverOptions<T>) -> Result<SolveReport<T>, SolveError> {
    let started = Instant::now();
    let deadline = opts.time_limit.map(|d| started + d);
    let inst = oracle.instance();
    let ia = oracle.interaction();
    let mut report = SolveReport::new(&inst.name, "exact");

    let mut samples = SampleSet::new();
    let prep = prepare_network(oracle, opts, true, opts.strengthen, &mut samples, &mut report.timings, deadline)?;
    report.big_m = prep.big_m.map(|b| b.value);
    report.network = Some(NetworkStats::of(&prep.net));
    report.strengthen = prep.strengthen;

    let (mut bm, _) = build_strengthened(inst, &prep.net);
    let z_upper =
        prep.net.terminal_values().iter().cloned().reduce(T::max_of).unwrap_or_else(|| oracle.value_upper());
    let mut cuts = BlockingCutState::new(ia, z_upper);
    for y in samples.iter() {
        add_blocking_cut(&mut bm, inst, ia, &mut cuts, y);
    }

    let mut incumbent: Option<(Vec<u8>, Vec<u8>, T)> = None;
    let mut lower: Option<T> = None;
    let mut status = SolveStatus::Failed;
    let mut iteration = 0;
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            status = SolveStatus::LimitReached;
            break;
        }
        let Some(sol) = run_milp(&bm.model, deadline, &mut report.timings) else { break };
        match sol.status {
            Status::Optimal => {}
            Status::Infeasible => {
                status = if incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
                break;
            }
            Status::LimitReached => {
                lower = sol.best_bound.clone().or(lower);
                status = SolveStatus::LimitReached;
                break;
            }
            Status::Unbounded | Status::NumericalError => break,
        }
        let Some(lb) = sol.objective.clone() else { break };
        lower = Some(lb.clone());
        let (x, y) = (bm.leader_bits(&sol.values), bm.follower_bits(&sol.values));

        let t = Instant::now();
        let phi = oracle.phi(&x);
        let Some(phi_value) = phi.value.clone().into_finite() else { break };
        let follower = dot(&inst.d, &y);
        let excess = (follower.clone() - phi_value.clone()).to_f64_lossy();
        if let Some((yo, v)) = optimistic_response(oracle, &x) {
            if incumbent.as_ref().map_or(true, |(_, _, best)| v < *best) {
                incumbent = Some((x.clone(), yo, v));
            }
        }
        report.timings.separation += t.elapsed().as_secs_f64();
        report.log.push(IterationLog {
            iteration,
            lower_bound: lb.to_f64_lossy(),
            upper_bound: incumbent.as_ref().map(|(_, _, v)| v.to_f64_lossy()),
            follower_excess: excess,
            cuts: cuts.samples.len(),
            seconds: started.elapsed().as_secs_f64(),
        });

        let closed = incumbent.as_ref().is_some_and(|(_, _, v)| at_most(v, &lb));
        if at_most(&follower, &phi_value) || closed {
            status = SolveStatus::Optimal;
            break;
        }
        if iteration >= opts.max_iterations {
            status = SolveStatus::LimitReached;
            break;
        }
        let y_hat = phi.y.expect("finite value has a response");
        if !add_blocking_cut(&mut bm, inst, ia, &mut cuts, &y_hat) {
            log::error!("separation repeated a registered response; stopping");
            break;
        }
        iteration += 1;
    }

    report.status = status;
    report.iterations = iteration;
    report.lower_bound = match (&status, &incumbent) {
        (SolveStatus::Optimal, Some((_, _, v))) => Some(v.clone()),
        _ => lower,
    };
    if let Some((x, y, v)) = incumbent {
        report.x = Some(x);
        report.y = Some(y);
        report.objective = Some(v);
    }
    report.set_gap(opts.known_optimum.as_ref());
    report.timings.total = started.elapsed().as_secs_f64();
    Ok(report)
}
