//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use valnet::approx::{build_approx, build_approx_unreduced, MergePolicy, MergeStrategy};
use valnet::follower::FollowerOracle;
use valnet::generator::{generate, GeneratorConfig};
use valnet::instance::BilevelInstance;
use valnet::io::{parse_mps_aux, read_native, write_mps_aux, write_native};
use valnet::network::{build_state_network, find_symmetric_pair, NetworkOptions, ValueNetwork};
use valnet::numerics::{at_most, Extended, StateVector};
use valnet::oracle::{brute_force_bilevel, DEFAULT_WORK_CAP};
use valnet::reform::{build_flow_polytope, build_indicator_reformulation, build_strengthened};
use valnet::solver::{
    relative_gap, relaxation_network, solve_exact, solve_relaxation, solve_relaxation_on, Relaxation, SolveReport, SolveStatus,
    SolverOptions, Timings,
};
use valnet::strengthen::{compute_big_m, strengthen_network, RegionMode, RobustModelParams, SampleSet};
use valnet::Instance;
use valnet_milp::{solve_lp, solve_milp, Limits, MilpModel};

const TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn close(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() <= TOL)
}

/// Reduced networks gathered for the minimality audit.
#[derive(Default)]
struct Reduced(Vec<(String, ValueNetwork<f64>)>);

fn indicator_example() -> Outcome {
    let inst = binarized_gap::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let (ind, _) = build_indicator_reformulation(&o, &NetworkOptions::default()).map_err(|e| e.to_string())?;
    let lp = solve_lp(&ind.model.relaxed()).map_err(|e| e.to_string())?.objective;
    check(close(lp, 0.5), || format!("indicator LP {lp:?}"))?;
    let net = build_state_network(&o, &NetworkOptions::default()).unwrap().reduce();
    let flow = solve_milp(&build_strengthened(&inst, &net).0.model, &Limits::none()).map_err(|e| e.to_string())?.objective;
    check(close(flow, 100.0), || format!("flow MILP {flow:?}"))?;
    let exact = solve_exact(&o, &SolverOptions::default()).map_err(|e| e.to_string())?.objective;
    check(close(exact, 100.0), || format!("exact solve {exact:?}"))?;
    let brute = brute_force_bilevel(&inst, DEFAULT_WORK_CAP, false).unwrap().value;
    check(close(brute, 100.0), || format!("oracle {brute:?}"))?;
    Ok(format!("indicator LP {:.6}, flow MILP {:.6}, optimum {:.6}", lp.unwrap(), flow.unwrap(), exact.unwrap()))
}

fn two_row_network(keep: &mut Reduced) -> Outcome {
    let inst = two_row::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let net = build_state_network(&o, &NetworkOptions::default()).unwrap();
    check(net.widths() == [1, 2, 3, 6], || format!("widths {:?}", net.widths()))?;
    let states: Vec<StateVector> = net.layer(3).iter().map(|n| n.rect.clone().unwrap().lo).collect();
    let want: Vec<StateVector> =
        [[0, 0], [-1, -2], [-1, 0], [-2, -2], [-2, 0], [-3, -2]].iter().map(|s| StateVector(s.to_vec())).collect();
    check(states == want, || format!("terminal states {states:?}"))?;
    check(net.terminal_values() == [-5.0, -2.0, -5.0, 0.0, -5.0, 0.0], || format!("values {:?}", net.terminal_values()))?;
    let red = net.reduce();
    check(red.num_nodes() == 8, || format!("{} nodes after reduce", red.num_nodes()))?;
    let mut values = red.terminal_values().to_vec();
    values.sort_by(f64::total_cmp);
    check(values == [-5.0, -2.0, 0.0], || format!("reduced values {values:?}"))?;
    let v = red.lookup(&[1, 1, 0]);
    check(v == Extended::Finite(-5.0), || format!("lookup(1,1,0) = {v:?}"))?;
    let s = format!("widths {:?} -> {:?}, {} nodes, terminals {:?}", net.widths(), red.widths(), red.num_nodes(), values);
    keep.0.push(("two_row".into(), red));
    Ok(s)
}

fn twin_knapsack_strengthening() -> Outcome {
    let inst = twin_knapsack::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let parts = BTreeMap::from([(2, vec![vec![0, 1, 2], vec![3]]), (3, vec![vec![0, 1], vec![2, 3]])]);
    let policy = MergePolicy { strategy: MergeStrategy::Explicit(parts), ..MergePolicy::with_budget(2) };
    let mut net = build_approx_unreduced(&o, &policy).map_err(|e| e.to_string())?;
    let lo = |net: &ValueNetwork<f64>, j: usize, i: usize| net.layer(j)[i].rect.clone().unwrap().lo.0;
    check(lo(&net, 2, 0) == [-2, -3], || format!("merged node lo {:?}", lo(&net, 2, 0)))?;
    check(lo(&net, 3, 0) == [-5, -4], || format!("terminal lo {:?}", lo(&net, 3, 0)))?;
    check(net.terminal_values()[0] == 0.0, || format!("terminal value {}", net.terminal_values()[0]))?;
    check(net.terminal_of(&[1, 0, 1]) == Some(0), || "(1,0,1) does not reach the merged terminal".into())?;
    let params = RobustModelParams { mode: RegionMode::ExactPaths, ..RobustModelParams::default() };
    let report = strengthen_network(&o, &mut net, &mut SampleSet::new(), &params, None).map_err(|e| e.to_string())?;
    let after = net.lookup(&[1, 0, 1]);
    check(after == Extended::Finite(-100.0), || format!("strengthened value at (1,0,1) {after:?}"))?;
    check(o.phi(&[1, 0, 1]).value == Extended::Finite(-100.0), || "phi(1,0,1) is not -100".into())?;

    // Default merge order for comparison; not part of the criterion.
    let mut heuristic = build_approx_unreduced(&o, &MergePolicy::with_budget(2)).map_err(|e| e.to_string())?;
    strengthen_network(&o, &mut heuristic, &mut SampleSet::new(), &RobustModelParams::default(), None)
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "lo (-2,-3) and (-5,-4), value 0 -> {:?} after {} max-min solves; default merge order gives {:?}",
        net.terminal_values()[0],
        report.iterations,
        heuristic.terminal_values()
    ))
}

/// Generator instances scaled down, alternating with mixed-sign ones.
fn seeded_instances() -> Vec<Instance> {
    (0..50u64)
        .map(|s| {
            let n_l = 8 + (s % 5) as usize;
            let n_f = 5 + (s % 4) as usize;
            let m = 1 + (s % 3) as usize;
            if s % 2 == 0 {
                let alpha = [1, 3, 5][(s / 2 % 3) as usize];
                let beta = [0.1, 0.3, 0.5][(s / 6 % 3) as usize];
                generate(&GeneratorConfig::new(n_l, m, alpha, beta, s).with_follower(n_f)).unwrap()
            } else {
                dense(s, n_l, n_f, m, (s % 3 == 1) as usize)
            }
        })
        .collect()
}

fn oracle_equivalence(instances: &[Instance], keep: &mut Reduced) -> Outcome {
    let results: Vec<Result<(bool, ValueNetwork<f64>), String>> = instances
        .par_iter()
        .map(|inst| {
            let o = FollowerOracle::new(inst).map_err(|e| e.to_string())?;
            let brute = brute_force_bilevel(inst, DEFAULT_WORK_CAP, false).map_err(|e| e.to_string())?;
            let rep = solve_exact(&o, &SolverOptions::default()).map_err(|e| e.to_string())?;
            let expected = if brute.value.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
            if rep.objective != brute.value || rep.status != expected {
                return Err(format!("{}: exact {:?} {:?}, oracle {:?}", inst.name, rep.status, rep.objective, brute.value));
            }
            let net = build_state_network(&o, &NetworkOptions::default()).map_err(|e| e.to_string())?.reduce();
            Ok((brute.value.is_some(), net))
        })
        .collect();
    let mut feasible = 0;
    for (inst, r) in instances.iter().zip(results) {
        let (f, net) = r?;
        feasible += f as usize;
        keep.0.push((inst.name.clone(), net));
    }
    Ok(format!("{} instances agree ({feasible} feasible)", instances.len()))
}

struct ChainRun {
    /// Networks for the cover-and-bound audit, before and after reduction.
    audited: Vec<(String, ValueNetwork<f64>)>,
    reduced: Vec<(String, ValueNetwork<f64>)>,
    violations: Vec<String>,
    comparisons: usize,
}

fn budgets() -> [Option<usize>; 4] {
    [Some(1), Some(2), Some(4), None]
}

fn chain_one(inst: &Instance) -> Result<ChainRun, String> {
    let o = FollowerOracle::new(inst).map_err(|e| e.to_string())?;
    let optimum = brute_force_bilevel(inst, DEFAULT_WORK_CAP, false).map_err(|e| e.to_string())?.value;
    let mut run = ChainRun { audited: Vec::new(), reduced: Vec::new(), violations: Vec::new(), comparisons: 0 };
    // One big-M per instance, shared by every budget.
    let big = compute_big_m(&o, 50);
    let mut robust = RobustModelParams { parallel: false, ..RobustModelParams::default() };
    robust.big_m = Some(big.value);
    // An infeasible relaxation is +inf.
    let level = |rep: &SolveReport<f64>| match rep.status {
        SolveStatus::Infeasible => Some(f64::INFINITY),
        SolveStatus::Optimal => rep.lower_bound,
        _ => None,
    };
    let hpr = level(&solve_relaxation(&o, Relaxation::Hpr, &SolverOptions::default()).map_err(|e| e.to_string())?);
    for budget in budgets() {
        let policy = match budget {
            Some(b) => MergePolicy::with_budget(b),
            None => MergePolicy::unlimited(),
        };
        let tag = format!("{} B={}", inst.name, budget.map_or("inf".into(), |b| b.to_string()));
        let opts = SolverOptions { policy: policy.clone(), robust: robust.clone(), ..SolverOptions::default() };
        let mut bounds = Vec::new();
        for rel in [Relaxation::Dd, Relaxation::DdMaxMin] {
            let prep = relaxation_network(&o, rel, &opts, &mut Timings::default())
                .map_err(|e| e.to_string())?
                .expect("network relaxation");
            bounds.push(level(&solve_relaxation_on(&o, rel, Some(&prep), &opts)));
            let name = rel.name();
            run.audited.push((format!("{tag} {name} unreduced"), prep.unreduced));
            run.audited.push((format!("{tag} {name}"), prep.net.clone()));
            run.reduced.push((format!("{tag} {name}"), prep.net));
        }
        if let Some(b) = budget {
            let direct = build_approx(&o, &MergePolicy::with_budget(b)).map_err(|e| e.to_string())?;
            if !direct.isomorphic(&run.reduced[run.reduced.len() - 2].1) {
                run.violations.push(format!("{tag}: build_approx differs from reduce of the unreduced build"));
            }
        }
        match (hpr, bounds[0], bounds[1]) {
            (Some(h), Some(d), Some(x)) => {
                run.comparisons += 2;
                if h > d + TOL || d > x + TOL {
                    run.violations.push(format!("{tag}: hpr {h} dd {d} maxmin {x}"));
                }
                if x > optimum.unwrap_or(f64::INFINITY) + TOL {
                    run.violations.push(format!("{tag}: maxmin {x} above optimum {optimum:?}"));
                }
                if budget.is_none() && !(d == optimum.unwrap_or(f64::INFINITY) || optimum.is_some_and(|v| (d - v).abs() <= TOL)) {
                    run.violations.push(format!("{tag}: exact network bound {d}, optimum {optimum:?}"));
                }
            }
            _ => run.violations.push(format!("{tag}: unresolved bound {hpr:?} {bounds:?}")),
        }
    }
    Ok(run)
}

fn relaxation_chain(instances: &[Instance], runs: &mut Vec<ChainRun>) -> Outcome {
    let results: Vec<Result<ChainRun, String>> = instances.par_iter().map(chain_one).collect();
    for r in results {
        runs.push(r?);
    }
    let violations: Vec<&String> = runs.iter().flat_map(|r| &r.violations).collect();
    let comparisons: usize = runs.iter().map(|r| r.comparisons).sum();
    check(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    Ok(format!("{comparisons} comparisons over budgets 1, 2, 4, inf; exact network bound equals the optimum"))
}

fn cover_and_bound(instances: &[Instance], runs: &[ChainRun]) -> Outcome {
    let mut violations = Vec::new();
    let mut networks = 0;
    for (inst, run) in instances.iter().zip(runs) {
        let o = FollowerOracle::new(inst).unwrap();
        let phis: Vec<(Vec<u8>, Extended<f64>)> = all_bits(inst.n_l).map(|x| (x.clone(), o.phi(&x).value)).collect();
        for (tag, net) in &run.audited {
            networks += 1;
            for (x, phi) in &phis {
                let Extended::Finite(p) = phi else { continue };
                match net.lookup(x) {
                    Extended::Infinite => violations.push(format!("{tag}: no path for {x:?}")),
                    Extended::Finite(nu) if !at_most(p, &nu) => violations.push(format!("{tag}: {x:?} value {nu} below {p}")),
                    _ => {}
                }
            }
        }
    }
    check(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    Ok(format!("{networks} networks enumerated, zero violations"))
}

fn minimality(keep: &Reduced, runs: &[ChainRun]) -> Outcome {
    let all = keep.0.iter().chain(runs.iter().flat_map(|r| &r.reduced));
    let mut count = 0;
    for (tag, net) in all {
        count += 1;
        check(find_symmetric_pair(net).is_none(), || format!("{tag}: symmetric pair left"))?;
        check(net.reduce().isomorphic(net), || format!("{tag}: reduce is not idempotent"))?;
    }
    Ok(format!("{count} reduced networks minimal and stable"))
}

fn single_row_exactness() -> Outcome {
    let configs: Vec<GeneratorConfig> = (0..15u64)
        .map(|s| {
            let alpha = [1, 3, 5][(s % 3) as usize];
            let beta = [0.1, 0.3, 0.5][(s / 3 % 3) as usize];
            GeneratorConfig::new(25, 1, alpha, beta, s).with_follower(10)
        })
        .collect();
    let results: Vec<Result<(), String>> = configs
        .par_iter()
        .map(|cfg| {
            let inst: Instance = generate(cfg).unwrap();
            let o = FollowerOracle::new(&inst).map_err(|e| e.to_string())?;
            let opt = brute_force_bilevel(&inst, DEFAULT_WORK_CAP, false).map_err(|e| e.to_string())?.value;
            let opts = SolverOptions { policy: MergePolicy::with_budget(50), ..SolverOptions::default() };
            let dd = solve_relaxation(&o, Relaxation::Dd, &opts).map_err(|e| e.to_string())?;
            let zero = match (opt, dd.status, dd.lower_bound) {
                (None, SolveStatus::Infeasible, _) => true,
                (Some(v), SolveStatus::Optimal, Some(lb)) => relative_gap(&v, &lb).is_some_and(|g| g.abs() <= 1e-9),
                _ => false,
            };
            check(zero, || format!("{}: optimum {opt:?}, dd {:?} {:?}", inst.name, dd.status, dd.lower_bound))
        })
        .collect();
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    check(failures.is_empty(), || format!("{} nonzero gaps, first: {}", failures.len(), failures[0]))?;
    Ok(format!("{} instances, gap 0 at budget 50", configs.len()))
}

fn fuzzed_instance(r: &mut ChaCha8Rng, k: usize) -> Instance {
    let (n_l, n_f, m, m_l) = (r.gen_range(1..8), r.gen_range(1..6), r.gen_range(1..4), r.gen_range(0..3));
    // Quarter steps and the odd large or tiny value.
    let mut num = || match r.gen_range(0..10) {
        0 => r.gen_range(-1e9..1e9),
        1 => r.gen_range(-1e-6..1e-6),
        _ => r.gen_range(-400i32..400) as f64 / 4.0,
    };
    let mut vec = |n: usize| (0..n).map(|_| num()).collect::<Vec<f64>>();
    let (c, p, d) = (vec(n_l), vec(n_f), vec(n_f));
    let a = (0..m).map(|_| vec(n_l)).collect();
    let b = (0..m).map(|_| vec(n_f)).collect();
    let rhs = vec(m);
    let gx = (0..m_l).map(|_| vec(n_l)).collect();
    let gy = (0..m_l).map(|_| vec(n_f)).collect();
    let h = vec(m_l);
    BilevelInstance::new(format!("fuzz{k}"), c, p, d, a, b, rhs).with_leader_rows(gx, gy, h)
}

fn round_trips() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..100 {
        let inst = fuzzed_instance(&mut r, k);
        let text = write_native(&inst);
        let back: Instance = read_native(&text).map_err(|e| format!("fuzz{k} native: {e}"))?;
        let same = |x: &Instance| write_native(x) == text && *x == inst;
        check(same(&back), || format!("fuzz{k}: native round trip changed the instance"))?;
        let (mps, aux) = write_mps_aux(&inst);
        let back: Instance = parse_mps_aux(&mps, &aux).map_err(|e| format!("fuzz{k} mps: {e}"))?;
        check(same(&back), || format!("fuzz{k}: MPS round trip changed the instance"))?;
        check(write_mps_aux(&back) == (mps, aux), || format!("fuzz{k}: MPS text not stable"))?;
    }
    let cfg = GeneratorConfig::new(40, 5, 5, 0.3, 99);
    let first = write_native(&generate::<f64>(&cfg).unwrap());
    for _ in 0..3 {
        check(write_native(&generate::<f64>(&cfg).unwrap()) == first, || "generator output differs between runs".into())?;
    }
    Ok("100 fuzzed instances through JSON and MPS/AUX; generator bytes stable".into())
}

fn model_size() -> Outcome {
    let mut sizes = Vec::new();
    for s in 0..20u64 {
        let n_l = 5 + (s % 6) as usize;
        let inst = dense::<f64>(100 + s, n_l, 4, 1 + (s % 3) as usize, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let net = build_state_network(&o, &NetworkOptions::default()).unwrap().reduce();
        let mut model: MilpModel<f64> = MilpModel::new("flow");
        let x: Vec<_> = (0..n_l).map(|j| model.add_binary(format!("x{j}"))).collect();
        let z = model.add_var("z", None, None);
        let before = model.num_vars();
        build_flow_polytope(&mut model, &net, &x, Some(z));
        let (vars, rows) = (model.num_vars() - before, model.num_rows());
        check(vars == net.num_edges(), || format!("{}: {vars} flow variables for {} edges", inst.name, net.num_edges()))?;
        check(rows == net.num_nodes() + n_l + 1, || {
            format!("{}: {rows} rows for {} nodes and {n_l} leader bits", inst.name, net.num_nodes())
        })?;
        sizes.push(net.num_edges());
    }
    Ok(format!("20 networks, {} to {} edges", sizes.iter().min().unwrap(), sizes.iter().max().unwrap()))
}

fn main() -> ExitCode {
    let mut keep = Reduced::default();
    let mut runs = Vec::new();
    let instances = seeded_instances();
    let mut failed = 0;
    let mut report = |id: usize, limit: Option<u64>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        let late = limit.is_some_and(|l| t.elapsed() > Duration::from_secs(l));
        let (tag, detail) = match (&out, late) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {}s limit", limit.unwrap())),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {id:>2} ({secs:.2}s): {detail}");
    };
    report(1, Some(1), &mut indicator_example);
    report(2, Some(1), &mut || two_row_network(&mut keep));
    report(3, Some(5), &mut twin_knapsack_strengthening);
    report(4, Some(300), &mut || oracle_equivalence(&instances, &mut keep));
    report(5, None, &mut || relaxation_chain(&instances, &mut runs));
    report(6, None, &mut || cover_and_bound(&instances, &runs));
    report(7, None, &mut || minimality(&keep, &runs));
    report(8, Some(600), &mut single_row_exactness);
    report(9, None, &mut round_trips);
    report(10, None, &mut model_size);
    if failed == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria fail");
        ExitCode::FAILURE
    }
}
