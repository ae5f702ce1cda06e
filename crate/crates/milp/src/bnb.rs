//! Best-bound branch-and-bound over binary variables.
//!
//! Children are warm-started from their parent's optimal tableau with the
//! dual simplex. When retained tableaux would exceed a memory budget, new
//! children fall back to re-deriving their tableau from the root.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use crate::model::{Limits, MilpError, MilpModel, MilpSolution, Status};
use crate::scalar::Scalar;
use crate::simplex::{LpStatus, Tableau};

/// Retained-tableau budget in scalar entries (about 256 MB of `f64`).
const TABLEAU_BUDGET: usize = 32_000_000;

/// Solves the LP relaxation of `model` (binary marks ignored).
pub fn solve_lp<T: Scalar>(model: &MilpModel<T>) -> Result<MilpSolution<T>, MilpError> {
    model.check()?;
    let mut tab = Tableau::new(model);
    let st = tab.solve();
    Ok(finish_lp(model, &tab, st))
}

fn finish_lp<T: Scalar>(model: &MilpModel<T>, tab: &Tableau<T>, st: LpStatus) -> MilpSolution<T> {
    let status = match st {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
        LpStatus::IterationLimit | LpStatus::Numerical => Status::NumericalError,
    };
    let mut sol = MilpSolution::without_solution(status);
    sol.lp_iterations = tab.iterations;
    if status == Status::Optimal {
        let values = tab.values();
        let obj = model.evaluate(&values);
        sol.best_bound = Some(obj.clone());
        sol.objective = Some(obj);
        sol.values = values;
    }
    sol
}

struct Node<T> {
    bound: T,
    depth: usize,
    seq: usize,
    fixes: Vec<(usize, bool)>,
    parent: Option<Arc<Tableau<T>>>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Node<T> {}
impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Node<T> {
    // Max-heap order: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Normalizes binary bounds to `{0,1}` integers. Returns false if some
/// variable has an empty domain.
fn normalized<T: Scalar>(model: &MilpModel<T>) -> Option<MilpModel<T>> {
    let mut out = model.clone();
    for (j, v) in model.vars().iter().enumerate() {
        let (mut lo, mut hi) = (v.lower.clone(), v.upper.clone());
        if v.binary {
            let l = T::max_of(lo.unwrap_or_else(T::zero), T::zero());
            let u = T::min_of(hi.unwrap_or_else(T::one), T::one());
            lo = Some((l - T::feas_tol()).ceil_val());
            hi = Some((u + T::feas_tol()).floor_val());
        }
        if let (Some(l), Some(u)) = (&lo, &hi) {
            if l > u {
                return None;
            }
        }
        out.set_bounds(crate::model::VarId(j), lo, hi);
    }
    Some(out)
}

fn gap_tol<T: Scalar>(incumbent: &T) -> T {
    if T::EXACT {
        T::zero()
    } else {
        T::from_f64(1e-9).unwrap_or_else(T::zero) * T::max_of(T::one(), incumbent.abs())
    }
}

/// Most fractional binary in `values` among the highest priority class,
/// ties to the lowest index.
fn branching_var<T: Scalar>(model: &MilpModel<T>, values: &[T]) -> Option<usize> {
    let half = T::one() / T::from_int(2);
    let tol = T::feas_tol();
    let mut best: Option<(usize, i32, T)> = None;
    for (j, v) in model.vars().iter().enumerate() {
        if !v.binary {
            continue;
        }
        let x = &values[j];
        let frac = x.clone() - x.floor_val();
        if frac <= tol || frac >= T::one() - tol.clone() {
            continue;
        }
        let dist = (frac - half.clone()).abs();
        let better = match &best {
            None => true,
            Some((_, p, d)) => v.priority > *p || (v.priority == *p && dist < *d),
        };
        if better {
            best = Some((j, v.priority, dist));
        }
    }
    best.map(|b| b.0)
}

struct Search<'a, T: Scalar> {
    model: &'a MilpModel<T>,
    root: Arc<Tableau<T>>,
    incumbent: Option<(T, Vec<T>)>,
    iterations: usize,
}

impl<T: Scalar> Search<'_, T> {
    fn prunable(&self, bound: &T) -> bool {
        match &self.incumbent {
            Some((inc, _)) => bound.clone() >= inc.clone() - gap_tol(inc),
            None => false,
        }
    }

    /// Tableau for `fixes`, warm-started from `parent` (or the root).
    fn node_tableau(&mut self, parent: Option<&Arc<Tableau<T>>>, fixes: &[(usize, bool)]) -> Option<Tableau<T>> {
        let (mut tab, todo) = match parent {
            Some(p) => ((**p).clone(), &fixes[fixes.len() - 1..]),
            None => ((*self.root).clone(), fixes),
        };
        tab.iterations = 0;
        for &(j, up) in todo {
            let v = if up { T::one() } else { T::zero() };
            tab.set_bounds(j, Some(v.clone()), Some(v));
        }
        let st = tab.reoptimize();
        self.iterations += tab.iterations;
        match st {
            LpStatus::Optimal => Some(tab),
            LpStatus::Infeasible => None,
            _ => self.cold(fixes),
        }
    }

    /// Cold two-phase solve with `fixes` applied, used when the warm start
    /// ran into numerical trouble.
    fn cold(&mut self, fixes: &[(usize, bool)]) -> Option<Tableau<T>> {
        let mut m = self.model.clone();
        for &(j, up) in fixes {
            let v = if up { T::one() } else { T::zero() };
            m.fix(crate::model::VarId(j), v);
        }
        let mut tab = Tableau::new(&m);
        let st = tab.solve();
        self.iterations += tab.iterations;
        (st == LpStatus::Optimal).then_some(tab)
    }

    /// Offers an integral LP point as incumbent.
    fn offer(&mut self, tab: &Tableau<T>, fixes: &[(usize, bool)]) {
        let mut values = tab.values();
        for (j, v) in self.model.vars().iter().enumerate() {
            if v.binary {
                values[j] = values[j].round_val();
            }
        }
        if self.model.max_violation(&values) > T::feas_tol() {
            // Rounding drifted: re-solve the continuous part exactly at
            // these binaries.
            let mut all: Vec<(usize, bool)> = fixes.to_vec();
            for (j, v) in self.model.vars().iter().enumerate() {
                if v.binary && !fixes.iter().any(|f| f.0 == j) {
                    all.push((j, values[j] > T::one() / T::from_int(2)));
                }
            }
            let Some(t) = self.cold(&all) else { return };
            values = t.values();
            for (j, v) in self.model.vars().iter().enumerate() {
                if v.binary {
                    values[j] = values[j].round_val();
                }
            }
            if self.model.max_violation(&values) > T::feas_tol() {
                return;
            }
        }
        let obj = self.model.evaluate(&values);
        if self.incumbent.as_ref().map_or(true, |(inc, _)| obj < *inc) {
            self.incumbent = Some((obj, values));
        }
    }
}

/// Solves `model` to optimality (or until `limits` trigger) by best-bound
/// branch-and-bound with most-fractional branching.
pub fn solve_milp<T: Scalar>(model: &MilpModel<T>, limits: &Limits) -> Result<MilpSolution<T>, MilpError> {
    model.check()?;
    let start = Instant::now();
    let Some(model) = normalized(model) else {
        return Ok(MilpSolution::without_solution(Status::Infeasible));
    };
    let mut root = Tableau::new(&model);
    let st = root.solve();
    match st {
        LpStatus::Optimal => {}
        LpStatus::Infeasible | LpStatus::Unbounded => {
            let mut sol = finish_lp(&model, &root, st);
            sol.nodes = 1;
            return Ok(sol);
        }
        _ => return Ok(MilpSolution::without_solution(Status::NumericalError)),
    }
    let mut search = Search { model: &model, root: Arc::new(root), incumbent: None, iterations: 0 };
    search.iterations = search.root.iterations;
    if let Some(ws) = model.warm_start() {
        if model.is_feasible(ws, &T::feas_tol()) {
            search.incumbent = Some((model.evaluate(ws), ws.to_vec()));
        }
    }

    let footprint = search.root.footprint().max(1);
    let mut heap: BinaryHeap<Node<T>> = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut hit_limit = false;
    let root_bound = search.root.objective();
    heap.push(Node { bound: root_bound, depth: 0, seq, fixes: Vec::new(), parent: None });
    let mut first = true;

    while let Some(node) = heap.pop() {
        if search.prunable(&node.bound) {
            // Best-first: every remaining node is at least as bad.
            heap.clear();
            break;
        }
        if limits.max_nodes.is_some_and(|cap| nodes >= cap)
            || limits.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            heap.push(node);
            hit_limit = true;
            break;
        }
        nodes += 1;
        let tab = if first {
            first = false;
            Some((*search.root).clone())
        } else {
            search.node_tableau(node.parent.as_ref(), &node.fixes)
        };
        let Some(tab) = tab else { continue };
        let bound = tab.objective();
        if search.prunable(&bound) {
            continue;
        }
        let values = tab.values();
        match branching_var(&model, &values) {
            None => search.offer(&tab, &node.fixes),
            Some(j) => {
                let keep = footprint.saturating_mul(heap.len() + 2) <= TABLEAU_BUDGET;
                let parent = keep.then(|| Arc::new(tab));
                for up in [false, true] {
                    seq += 1;
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, up));
                    heap.push(Node {
                        bound: bound.clone(),
                        depth: node.depth + 1,
                        seq,
                        fixes,
                        parent: parent.clone(),
                    });
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound.clone()).reduce(T::min_of);
    let mut sol = match search.incumbent.take() {
        Some((obj, values)) => {
            let status = if hit_limit { Status::LimitReached } else { Status::Optimal };
            let bound = match open_bound {
                Some(b) if hit_limit => T::min_of(b, obj.clone()),
                _ => obj.clone(),
            };
            MilpSolution {
                status,
                objective: Some(obj),
                values,
                best_bound: Some(bound),
                nodes,
                lp_iterations: 0,
            }
        }
        None => {
            let status = if hit_limit { Status::LimitReached } else { Status::Infeasible };
            let mut s = MilpSolution::without_solution(status);
            s.best_bound = open_bound;
            s.nodes = nodes;
            s
        }
    };
    sol.lp_iterations = search.iterations;
    Ok(sol)
}
