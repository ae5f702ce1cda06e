//! Tightening terminal values of a relaxed network with sampled max-min
//! problems.
//!
//! For a terminal `u` with leader region `X(u)`, the model
//! `max δ` s.t. `x ∈ X(u)`, `δ <= d·y_k` unless sample `y_k` is blocked
//! at `x`, bounds `max { φ(x) : x ∈ X(u), φ(x) < ∞ }` from above.
//! Each solve contributes the follower optimum at its maximizer as a new
//! sample until the maximizer's response repeats.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use valnet_milp::{solve_milp, Limits, MilpModel, Scalar, Sense, Status, VarId};

use crate::approx::Hyperrectangle;
use crate::follower::FollowerOracle;
use crate::network::{NetworkError, ValueNetwork};
use crate::numerics::{at_most, dot};
use crate::reform::{blockable_rows, build_flow_polytope, row_slack_bounds};

/// Follower responses used as candidate certificates, without duplicates.
#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    ys: Vec<Vec<u8>>,
    seen: HashSet<Vec<u8>>,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when `y` was already present.
    pub fn insert(&mut self, y: Vec<u8>) -> bool {
        if self.seen.contains(&y) {
            return false;
        }
        self.seen.insert(y.clone());
        self.ys.push(y);
        true
    }

    pub fn contains(&self, y: &[u8]) -> bool {
        self.seen.contains(y)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u8>> {
        self.ys.iter()
    }

    pub fn extend(&mut self, other: &SampleSet) {
        for y in other.iter() {
            self.insert(y.clone());
        }
    }
}

impl FromIterator<Vec<u8>> for SampleSet {
    fn from_iter<I: IntoIterator<Item = Vec<u8>>>(iter: I) -> Self {
        let mut s = SampleSet::new();
        for y in iter {
            s.insert(y);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum RegionMode {
    /// Leader decisions on root-to-terminal paths of the network.
    ExactPaths,
    /// Leader decisions whose state lies in the terminal's box.
    #[default]
    HyperrectangleRelax,
}

#[derive(Clone, Debug)]
pub struct RobustModelParams<T> {
    /// Minimum violation that counts as blocking; data are integral so 1.
    pub epsilon: i64,
    /// Optional global cap on every strengthened value.
    pub big_m: Option<T>,
    pub max_iterations: usize,
    pub mode: RegionMode,
    /// Also require the leader rows to admit some follower decision.
    pub leader_rows: bool,
    pub parallel: bool,
    /// Per-MILP limits. A limited solve keeps its proven bound, so the
    /// result stays valid but may be weaker.
    pub limits: Limits,
}

impl<T> Default for RobustModelParams<T> {
    fn default() -> Self {
        RobustModelParams {
            epsilon: 1,
            big_m: None,
            max_iterations: 5,
            mode: RegionMode::default(),
            leader_rows: false,
            parallel: true,
            limits: Limits::nodes(5_000),
        }
    }
}

/// Leader decisions considered by one max-min solve.
pub enum Region<'n, T> {
    All,
    Box(&'n Hyperrectangle),
    Paths(&'n ValueNetwork<T>),
}

#[derive(Clone, Debug)]
pub struct MaxMinSolution<T> {
    /// Upper bound on `φ` over the region (or the cap if every sample is
    /// blocked everywhere).
    pub value: T,
    pub x: Vec<u8>,
    /// The solve hit its limits; `value` is then the proven bound.
    pub limited: bool,
}

/// Solves the sampled max-min over `region`, with `δ <= cap`. `None` when
/// no leader decision in the region admits a feasible follower response.
pub fn solve_sampled_maxmin<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    region: Region<'_, T>,
    samples: &SampleSet,
    cap: &T,
    params: &RobustModelParams<T>,
) -> Option<MaxMinSolution<T>> {
    let inst = oracle.instance();
    let ia = oracle.interaction();
    let mut model: MilpModel<T> = MilpModel::new("maxmin");
    let x: Vec<VarId> = (0..inst.n_l).map(|j| model.add_binary(format!("x{j}"))).collect();
    let yf: Vec<VarId> = (0..inst.n_f).map(|k| model.add_binary(format!("v{k}"))).collect();

    let delta = model.add_var("delta", Some(oracle.value_lower()), Some(cap.clone()));
    model.set_obj(delta, -T::one());

    // Some follower response must exist for x.
    for i in 0..ia.m {
        let mut terms: Vec<(VarId, T)> = Vec::new();
        terms.extend(x.iter().zip(&ia.a_rows[i]).filter(|(_, a)| **a != 0).map(|(v, a)| (*v, T::from_int(*a))));
        terms.extend(yf.iter().zip(&ia.b_rows[i]).filter(|(_, b)| **b != 0).map(|(v, b)| (*v, T::from_int(*b))));
        model.add_row(format!("resp{i}"), terms, Sense::Ge, T::from_int(ia.rhs[i]));
    }
    if params.leader_rows {
        for i in 0..inst.m_l() {
            let mut terms: Vec<(VarId, T)> = Vec::new();
            terms.extend(x.iter().zip(&inst.gx[i]).filter(|(_, a)| !a.is_zero()).map(|(v, a)| (*v, a.clone())));
            terms.extend(yf.iter().zip(&inst.gy[i]).filter(|(_, b)| !b.is_zero()).map(|(v, b)| (*v, b.clone())));
            model.add_row(format!("lead{i}"), terms, Sense::Ge, inst.h[i].clone());
        }
    }

    match region {
        Region::All => {}
        Region::Box(r) => {
            for i in 0..ia.m {
                let terms: Vec<(VarId, T)> =
                    x.iter().zip(&ia.a_rows[i]).filter(|(_, a)| **a != 0).map(|(v, a)| (*v, T::from_int(*a))).collect();
                model.add_row(format!("lo{i}"), terms.clone(), Sense::Ge, T::from_int(r.lo.0[i]));
                model.add_row(format!("hi{i}"), terms, Sense::Le, T::from_int(r.hi.0[i]));
            }
        }
        Region::Paths(net) => {
            build_flow_polytope(&mut model, net, &x, None);
        }
    }

    let a_bar = row_slack_bounds(ia);
    for (k, y) in samples.iter().enumerate() {
        let value = dot(&inst.d, y);
        let mut bound = vec![(delta, T::one())];
        let coef = T::max_of(T::zero(), cap.clone() - value.clone());
        for (i, w_coef, rhs) in blockable_rows(ia, &a_bar, params.epsilon, y) {
            let w = model.add_binary(format!("g{k}_{i}"));
            let mut row: Vec<(VarId, T)> =
                x.iter().zip(&ia.a_rows[i]).filter(|(_, a)| **a != 0).map(|(v, a)| (*v, T::from_int(*a))).collect();
            row.push((w, T::from_int(w_coef)));
            model.add_row(format!("blk{k}_{i}"), row, Sense::Le, T::from_int(rhs));
            if !coef.is_zero() {
                bound.push((w, -coef.clone()));
            }
        }
        model.add_row(format!("smp{k}"), bound, Sense::Le, value);
    }

    // Branch in creation order: x, then the response, then the switches.
    // Once x is fixed few switches stay fractional.
    for j in 0..model.num_vars() {
        model.set_priority(VarId(j), -(j as i32));
    }

    let keep_cap = || Some(MaxMinSolution { value: cap.clone(), x: Vec::new(), limited: true });
    let Ok(sol) = solve_milp(&model, &params.limits) else { return keep_cap() };
    match sol.status {
        Status::Optimal if sol.objective.is_some() => Some(MaxMinSolution {
            value: -sol.objective.clone().unwrap_or_else(T::zero),
            x: x.iter().map(|v| sol.bit(*v)).collect(),
            limited: false,
        }),
        Status::LimitReached => {
            let Some(bound) = sol.best_bound.clone().map(|b| -b) else { return keep_cap() };
            let x = if sol.values.is_empty() { Vec::new() } else { x.iter().map(|v| sol.bit(*v)).collect() };
            Some(MaxMinSolution { value: T::min_of(bound, cap.clone()), x, limited: true })
        }
        Status::Infeasible => None,
        // No trustworthy answer: keep the cap, which is valid.
        Status::Optimal | Status::Unbounded | Status::NumericalError => keep_cap(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StrengthenOutcome<T> {
    /// New value, never above the old one.
    Value(T),
    /// No leader decision reaching the terminal has a feasible follower.
    Unreachable,
}

fn strengthen_with<'n, T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    region: impl Fn(()) -> Region<'n, T>,
    start: T,
    samples: &mut SampleSet,
    params: &RobustModelParams<T>,
) -> (StrengthenOutcome<T>, usize) {
    let mut best = match &params.big_m {
        Some(m) => T::min_of(start, m.clone()),
        None => start,
    };
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let Some(sol) = solve_sampled_maxmin(oracle, region(()), samples, &best, params) else {
            return (StrengthenOutcome::Unreachable, iterations);
        };
        if at_most(&sol.value, &best) {
            best = T::min_of(best, sol.value.clone());
        }
        if sol.limited || sol.x.is_empty() {
            break;
        }
        let Some(y) = oracle.phi(&sol.x).y else { break };
        if !samples.insert(y) {
            break;
        }
    }
    (StrengthenOutcome::Value(best), iterations)
}

/// Tightens terminal `t` of `net` (which must still carry its boxes when
/// `params.mode` is the box relaxation).
pub fn strengthen_terminal<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    net: &ValueNetwork<T>,
    t: usize,
    samples: &mut SampleSet,
    params: &RobustModelParams<T>,
) -> (StrengthenOutcome<T>, usize) {
    let start = net.terminal_values()[t].clone();
    match params.mode {
        RegionMode::HyperrectangleRelax => {
            let n = net.n_vars();
            let rect = net.layer(n)[t].rect.clone().expect("terminal box");
            strengthen_with(oracle, |_| Region::Box(&rect), start, samples, params)
        }
        RegionMode::ExactPaths => {
            let mut sub = net.clone();
            sub.retain_terminals(|u, _| u == t);
            strengthen_with(oracle, |_| Region::Paths(&sub), start, samples, params)
        }
    }
}

/// Upper bound on `φ` over all leader decisions with a feasible follower,
/// together with the follower responses collected on the way.
#[derive(Clone, Debug)]
pub struct BigM<T> {
    pub value: T,
    pub samples: SampleSet,
    pub iterations: usize,
    /// The last max-min reproduced a known response, so `value` is the
    /// exact maximum of `φ`.
    pub converged: bool,
}

pub fn compute_big_m<T: Scalar>(oracle: &FollowerOracle<'_, T>, max_iterations: usize) -> BigM<T> {
    compute_big_m_from(oracle, max_iterations, oracle.value_upper())
}

/// As [`compute_big_m`], starting from a known upper bound on `φ`, such
/// as the largest terminal value of a relaxed network.
pub fn compute_big_m_from<T: Scalar>(oracle: &FollowerOracle<'_, T>, max_iterations: usize, start: T) -> BigM<T> {
    let params = RobustModelParams { max_iterations, ..RobustModelParams::default() };
    let mut samples = SampleSet::new();
    let mut value = T::min_of(start, oracle.value_upper());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let Some(sol) = solve_sampled_maxmin(oracle, Region::All, &samples, &value, &params) else {
            converged = true;
            break;
        };
        value = T::min_of(value, sol.value);
        if sol.limited || sol.x.is_empty() {
            break;
        }
        let Some(y) = oracle.phi(&sol.x).y else { break };
        if !samples.insert(y) {
            converged = true;
            break;
        }
    }
    BigM { value, samples, iterations, converged }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StrengthenReport {
    pub terminals: usize,
    pub tightened: usize,
    pub dropped: usize,
    pub iterations: usize,
    pub samples: usize,
    pub seconds: f64,
}

/// Tightens every terminal, largest value first, and drops terminals
/// that no feasible leader decision reaches. Works on the unreduced
/// network; reduce afterwards.
pub fn strengthen_network<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    net: &mut ValueNetwork<T>,
    samples: &mut SampleSet,
    params: &RobustModelParams<T>,
    deadline: Option<Instant>,
) -> Result<StrengthenReport, NetworkError> {
    let started = Instant::now();
    let n_terms = net.terminal_values().len();
    let mut todo: Vec<usize> = (0..n_terms).collect();
    todo.sort_by(|a, b| {
        let (va, vb) = (&net.terminal_values()[*a], &net.terminal_values()[*b]);
        vb.partial_cmp(va).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
    });
    let base = samples.clone();
    let run = |t: &usize| {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return (*t, None, SampleSet::new(), 0);
        }
        let mut local = base.clone();
        let (out, it) = strengthen_terminal(oracle, net, *t, &mut local, params);
        (*t, Some(out), local, it)
    };
    let results: Vec<_> = if params.parallel { todo.par_iter().map(run).collect() } else { todo.iter().map(run).collect() };

    let mut report = StrengthenReport { terminals: n_terms, ..StrengthenReport::default() };
    let mut keep = vec![true; n_terms];
    for (t, out, local, it) in results {
        report.iterations += it;
        samples.extend(&local);
        match out {
            Some(StrengthenOutcome::Value(v)) => {
                if v < net.terminal_values()[t] {
                    report.tightened += 1;
                    net.set_terminal_value(t, v);
                }
            }
            Some(StrengthenOutcome::Unreachable) => {
                keep[t] = false;
                report.dropped += 1;
            }
            None => {}
        }
    }
    net.retain_terminals(|t, _| keep[t]);
    report.samples = samples.len();
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

