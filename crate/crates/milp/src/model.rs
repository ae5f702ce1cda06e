use std::fmt;
use std::time::Duration;

use crate::scalar::Scalar;

/// Handle to a variable of a [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Handle to a constraint row of a [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// A variable; `None` bounds are infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub binary: bool,
    /// Fractional binaries with higher priority are branched on first.
    pub priority: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub terms: Vec<(VarId, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn activity(&self, values: &[T]) -> T {
        let mut acc = T::zero();
        for (v, a) in &self.terms {
            acc += a.clone() * values[v.0].clone();
        }
        acc
    }

    /// Amount by which `values` violate this row (zero when satisfied).
    pub fn violation(&self, values: &[T]) -> T {
        let lhs = self.activity(values);
        let gap = lhs - self.rhs.clone();
        match self.sense {
            Sense::Le => T::max_of(gap, T::zero()),
            Sense::Ge => T::max_of(-gap, T::zero()),
            Sense::Eq => gap.abs(),
        }
    }
}

/// Linear model `min c·x + offset` over rows and bounds, with optional
/// binary marks.
#[derive(Clone, Debug)]
pub struct MilpModel<T> {
    pub name: String,
    vars: Vec<Variable<T>>,
    rows: Vec<Constraint<T>>,
    objective: Vec<T>,
    offset: T,
    warm_start: Option<Vec<T>>,
}

impl<T: Scalar> Default for MilpModel<T> {
    fn default() -> Self {
        Self::new("model")
    }
}

impl<T: Scalar> MilpModel<T> {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            offset: T::zero(),
            warm_start: None,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: Option<T>, upper: Option<T>) -> VarId {
        self.vars.push(Variable { name: name.into(), lower, upper, binary: false, priority: 0 });
        self.objective.push(T::zero());
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        let v = self.add_var(name, Some(T::zero()), Some(T::one()));
        self.vars[v.0].binary = true;
        v
    }

    /// Continuous variable with lower bound 0 and no upper bound.
    pub fn add_nonneg(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, Some(T::zero()), None)
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, T)>, sense: Sense, rhs: T) -> RowId {
        self.rows.push(Constraint { name: name.into(), terms, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn set_obj(&mut self, v: VarId, c: T) {
        self.objective[v.0] = c;
    }

    pub fn add_obj(&mut self, v: VarId, c: T) {
        self.objective[v.0] += c;
    }

    pub fn set_offset(&mut self, offset: T) {
        self.offset = offset;
    }

    pub fn set_bounds(&mut self, v: VarId, lower: Option<T>, upper: Option<T>) {
        self.vars[v.0].lower = lower;
        self.vars[v.0].upper = upper;
    }

    pub fn fix(&mut self, v: VarId, value: T) {
        self.set_bounds(v, Some(value.clone()), Some(value));
    }

    pub fn set_binary(&mut self, v: VarId, binary: bool) {
        self.vars[v.0].binary = binary;
    }

    pub fn set_priority(&mut self, v: VarId, priority: i32) {
        self.vars[v.0].priority = priority;
    }

    pub fn set_warm_start(&mut self, values: Vec<T>) {
        self.warm_start = Some(values);
    }

    pub fn warm_start(&self) -> Option<&[T]> {
        self.warm_start.as_deref()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn vars(&self) -> &[Variable<T>] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Variable<T> {
        &self.vars[v.0]
    }

    pub fn rows(&self) -> &[Constraint<T>] {
        &self.rows
    }

    pub fn row(&self, r: RowId) -> &Constraint<T> {
        &self.rows[r.0]
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn offset(&self) -> &T {
        &self.offset
    }

    /// Copy with every binary mark dropped (bounds stay `[0, 1]`).
    pub fn relaxed(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.vars {
            v.binary = false;
        }
        out
    }

    /// Copy with rows emitted in the given order.
    pub fn with_row_order(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.rows = order.iter().map(|&i| self.rows[i].clone()).collect();
        out
    }

    pub fn evaluate(&self, values: &[T]) -> T {
        let mut acc = self.offset.clone();
        for (c, x) in self.objective.iter().zip(values) {
            acc += c.clone() * x.clone();
        }
        acc
    }

    /// Largest row, bound, or integrality violation of `values`.
    pub fn max_violation(&self, values: &[T]) -> T {
        let mut worst = T::zero();
        for row in &self.rows {
            worst = T::max_of(worst, row.violation(values));
        }
        for (var, x) in self.vars.iter().zip(values) {
            if let Some(l) = &var.lower {
                worst = T::max_of(worst, l.clone() - x.clone());
            }
            if let Some(u) = &var.upper {
                worst = T::max_of(worst, x.clone() - u.clone());
            }
            if var.binary {
                worst = T::max_of(worst, (x.clone() - x.round_val()).abs());
            }
        }
        worst
    }

    pub fn is_feasible(&self, values: &[T], tol: &T) -> bool {
        values.len() == self.vars.len() && self.max_violation(values) <= tol.clone()
    }

    pub(crate) fn check(&self) -> Result<(), MilpError> {
        let n = self.vars.len();
        for (i, row) in self.rows.iter().enumerate() {
            for (v, a) in &row.terms {
                if v.0 >= n {
                    return Err(MilpError::UnknownVariable { row: i, var: v.0 });
                }
                if !a.to_f64_lossy().is_finite() {
                    return Err(MilpError::NonFinite(format!("row {i}")));
                }
            }
            if !row.rhs.to_f64_lossy().is_finite() {
                return Err(MilpError::NonFinite(format!("rhs of row {i}")));
            }
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.to_f64_lossy().is_finite() {
                return Err(MilpError::NonFinite(format!("objective of variable {j}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
    /// The simplex could not certify its answer; no solution is reported.
    NumericalError,
}

#[derive(Clone, Debug)]
pub struct MilpSolution<T> {
    pub status: Status,
    /// Objective of `values`, when a solution is available.
    pub objective: Option<T>,
    pub values: Vec<T>,
    /// Proven lower bound (minimization).
    pub best_bound: Option<T>,
    pub nodes: usize,
    pub lp_iterations: usize,
}

impl<T: Scalar> MilpSolution<T> {
    pub(crate) fn without_solution(status: Status) -> Self {
        MilpSolution { status, objective: None, values: Vec::new(), best_bound: None, nodes: 0, lp_iterations: 0 }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, v: VarId) -> &T {
        &self.values[v.0]
    }

    /// Value of `v` rounded to 0/1.
    pub fn bit(&self, v: VarId) -> u8 {
        u8::from(self.values[v.0] > T::one() / T::from_int(2))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Limits {
    pub max_nodes: Option<usize>,
    pub time_limit: Option<Duration>,
}

impl Limits {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn nodes(n: usize) -> Self {
        Limits { max_nodes: Some(n), time_limit: None }
    }

    pub fn time(t: Duration) -> Self {
        Limits { max_nodes: None, time_limit: Some(t) }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error("row {row} references undeclared variable {var}")]
    UnknownVariable { row: usize, var: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
}
