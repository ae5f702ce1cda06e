//! Budget schedule and parameter sweeps over generated instances.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::MergePolicy;
use crate::follower::FollowerOracle;
use crate::generator::{generate, GeneratorConfig, GeneratorError};
use crate::oracle::{brute_force_bilevel, DEFAULT_WORK_CAP};
use crate::solver::{relative_gap, solve_exact, solve_relaxation, Relaxation, SolveStatus, SolverOptions};

/// Network width budget by number of leader variables.
pub fn budget_schedule(n_l: usize) -> usize {
    match n_l {
        0..=150 => 50,
        151..=300 => 25,
        301..=500 => 16,
        501..=1000 => 8,
        _ => 4,
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub n_l: Vec<usize>,
    /// Follower size; `None` uses `n_l`.
    pub n_f: Option<usize>,
    pub m: Vec<usize>,
    pub alpha: Vec<u32>,
    pub beta: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Fixed budget; `None` uses [`budget_schedule`].
    pub budget: Option<usize>,
    pub strengthen_iterations: usize,
    pub time_limit: Option<Duration>,
    /// Cap handed to the brute-force reference.
    pub oracle_cap: u128,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_l: vec![25],
            n_f: None,
            m: vec![1, 10, 20],
            alpha: vec![1, 3, 5],
            beta: vec![0.1, 0.3, 0.5],
            seeds: (0..10).collect(),
            budget: None,
            strengthen_iterations: 5,
            time_limit: None,
            oracle_cap: DEFAULT_WORK_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Reference {
    Oracle,
    Exact,
    Incumbent,
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub n_l: usize,
    pub n_f: usize,
    pub m: usize,
    pub alpha: u32,
    pub beta: f64,
    pub seed: u64,
    pub budget: usize,
    pub reference: Reference,
    pub best_known: Option<f64>,
    pub hpr_gap: Option<f64>,
    pub dd_gap: Option<f64>,
    pub maxmin_gap: Option<f64>,
    pub dd_nodes: usize,
    pub dd_seconds: f64,
    pub maxmin_seconds: f64,
    pub error: Option<String>,
}

fn run_one(cfg: &SweepConfig, g: &GeneratorConfig) -> SweepRecord {
    let budget = cfg.budget.unwrap_or_else(|| budget_schedule(g.n_l));
    let mut rec = SweepRecord {
        n_l: g.n_l,
        n_f: g.n_f,
        m: g.m,
        alpha: g.alpha,
        beta: g.beta,
        seed: g.seed,
        budget,
        reference: Reference::None,
        best_known: None,
        hpr_gap: None,
        dd_gap: None,
        maxmin_gap: None,
        dd_nodes: 0,
        dd_seconds: 0.0,
        maxmin_seconds: 0.0,
        error: None,
    };
    let inst = match generate::<f64>(g) {
        Ok(i) => i,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let oracle = match FollowerOracle::new(&inst) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let mut opts = SolverOptions::<f64> { policy: MergePolicy::with_budget(budget), time_limit: cfg.time_limit, ..SolverOptions::default() };
    opts.robust.max_iterations = cfg.strengthen_iterations;

    match brute_force_bilevel(&inst, cfg.oracle_cap, false) {
        Ok(res) => {
            rec.reference = Reference::Oracle;
            rec.best_known = res.value;
        }
        Err(_) => {
            if let Ok(rep) = solve_exact(&oracle, &opts) {
                if rep.status == SolveStatus::Optimal {
                    rec.reference = Reference::Exact;
                    rec.best_known = rep.objective;
                } else if rep.objective.is_some() {
                    rec.reference = Reference::Incumbent;
                    rec.best_known = rep.objective;
                }
            }
        }
    }
    let mut run = |rel: Relaxation| match solve_relaxation(&oracle, rel, &opts) {
        Ok(rep) => Some(rep),
        Err(e) => {
            rec.error = Some(e.to_string());
            None
        }
    };
    let hpr = run(Relaxation::Hpr);
    let dd = run(Relaxation::Dd);
    let mm = run(Relaxation::DdMaxMin);
    let gap = |lb: Option<f64>| match (rec.best_known, lb) {
        (Some(ub), Some(lb)) => relative_gap(&ub, &lb),
        _ => None,
    };
    rec.hpr_gap = gap(hpr.and_then(|r| r.lower_bound));
    if let Some(dd) = dd {
        rec.dd_nodes = dd.network.as_ref().map_or(0, |n| n.nodes);
        rec.dd_seconds = dd.timings.total;
        rec.dd_gap = gap(dd.lower_bound);
    }
    if let Some(mm) = mm {
        rec.maxmin_seconds = mm.timings.total;
        rec.maxmin_gap = gap(mm.lower_bound);
    }
    rec
}

/// Generates every configuration of the grid and runs the three
/// relaxations on it, in parallel over instances.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>, GeneratorError> {
    let mut grid = Vec::new();
    for &n_l in &cfg.n_l {
        for &m in &cfg.m {
            for &alpha in &cfg.alpha {
                for &beta in &cfg.beta {
                    for &seed in &cfg.seeds {
                        let g = GeneratorConfig::new(n_l, m, alpha, beta, seed).with_follower(cfg.n_f.unwrap_or(n_l));
                        generate::<f64>(&g)?;
                        grid.push(g);
                    }
                }
            }
        }
    }
    Ok(grid.par_iter().map(|g| run_one(cfg, g)).collect())
}

/// `mean [std]` with population standard deviation.
pub fn mean_std(values: &[f64]) -> String {
    if values.is_empty() {
        return "-".to_string();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    format!("{mean:.4} [{:.4}]", var.sqrt())
}

/// One TSV line per `(n_l, m, alpha, beta)` group.
pub fn summarize(records: &[SweepRecord]) -> String {
    let mut groups: BTreeMap<(usize, usize, u32, String), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.n_l, r.m, r.alpha, r.beta.to_string())).or_default().push(r);
    }
    let mut out = String::from("n_l\tm\talpha\tbeta\tinstances\tbudget\thpr_gap\tdd_gap\tmaxmin_gap\tdd_nodes\tdd_seconds\tmaxmin_seconds\tzero_dd_gap\n");
    for ((n_l, m, alpha, beta), rs) in groups {
        let col = |f: &dyn Fn(&SweepRecord) -> Option<f64>| mean_std(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let zero = rs.iter().filter(|r| r.dd_gap.is_some_and(|g| g.abs() < 1e-9)).count();
        let _ = writeln!(
            out,
            "{n_l}\t{m}\t{alpha}\t{beta}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{zero}",
            rs.len(),
            rs[0].budget,
            col(&|r| r.hpr_gap),
            col(&|r| r.dd_gap),
            col(&|r| r.maxmin_gap),
            col(&|r| Some(r.dd_nodes as f64)),
            col(&|r| Some(r.dd_seconds)),
            col(&|r| Some(r.maxmin_seconds)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_edges() {
        assert_eq!(budget_schedule(100), 50);
        assert_eq!(budget_schedule(150), 50);
        assert_eq!(budget_schedule(151), 25);
        assert_eq!(budget_schedule(300), 25);
        assert_eq!(budget_schedule(500), 16);
        assert_eq!(budget_schedule(1000), 8);
        assert_eq!(budget_schedule(2481), 4);
    }

    #[test]
    fn mean_std_format() {
        assert_eq!(mean_std(&[1.0, 3.0]), "2.0000 [1.0000]");
        assert_eq!(mean_std(&[]), "-");
    }
}
