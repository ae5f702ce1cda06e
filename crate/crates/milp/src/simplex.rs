//! Dense bounded-variable tableau simplex.
//!
//! Every row `i` becomes `a_i·x + s_i = rhs_i` with a bounded slack
//! (`s ≥ 0` for `≤`, `s ≤ 0` for `≥`, `s = 0` for `=`). Rows whose residual
//! the slack cannot absorb start on an artificial column, which phase 1
//! drives to zero. Artificial columns are never stored: once one leaves the
//! basis it can never re-enter.

use std::sync::Arc;

use crate::model::{MilpModel, Sense};
use crate::scalar::Scalar;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const BLAND_AFTER: usize = 1000;
/// Pivots between drift checks on inexact scalars.
const CHECK_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable resting at zero.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    Numerical,
}

#[derive(Clone)]
pub(crate) struct Tableau<T> {
    m: usize,
    /// Structural plus slack columns.
    n: usize,
    ns: usize,
    tab: Vec<T>,
    beta: Vec<T>,
    /// Column basic in each row; `n + i` is the artificial of row `i`.
    basis: Vec<usize>,
    pos: Vec<Pos>,
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
    cost: Vec<T>,
    offset: T,
    dj: Vec<T>,
    phase1: bool,
    art_sign: Vec<T>,
    cols: Arc<Vec<Vec<(usize, T)>>>,
    rhs: Arc<Vec<T>>,
    pub iterations: usize,
    since_check: usize,
}

fn tiny<T: Scalar>() -> T {
    T::pivot_tol() / T::from_int(1000)
}

impl<T: Scalar> Tableau<T> {
    /// Builds the starting tableau. Binary marks are ignored; bounds are
    /// taken as given (callers clamp binaries beforehand).
    pub fn new(model: &MilpModel<T>) -> Self {
        let ns = model.num_vars();
        let m = model.num_rows();
        let n = ns + m;
        let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); ns];
        for (i, row) in model.rows().iter().enumerate() {
            for (v, a) in &row.terms {
                if !a.is_zero() {
                    cols[v.0].push((i, a.clone()));
                }
            }
        }
        // Merge duplicate entries of the same (row, column).
        for col in &mut cols {
            col.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(col.len());
            for (i, a) in col.drain(..) {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += a,
                    _ => merged.push((i, a)),
                }
            }
            merged.retain(|e| !e.1.is_zero());
            *col = merged;
        }
        let rhs: Vec<T> = model.rows().iter().map(|r| r.rhs.clone()).collect();

        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for v in model.vars() {
            lower.push(v.lower.clone());
            upper.push(v.upper.clone());
        }
        for row in model.rows() {
            let (l, u) = match row.sense {
                Sense::Le => (Some(T::zero()), None),
                Sense::Ge => (None, Some(T::zero())),
                Sense::Eq => (Some(T::zero()), Some(T::zero())),
            };
            lower.push(l);
            upper.push(u);
        }
        let mut cost: Vec<T> = model.objective().to_vec();
        cost.resize(n, T::zero());

        let mut pos = vec![Pos::Zero; n];
        for j in 0..n {
            pos[j] = if lower[j].is_some() {
                Pos::Lower
            } else if upper[j].is_some() {
                Pos::Upper
            } else {
                Pos::Zero
            };
        }

        let mut t = Tableau {
            m,
            n,
            ns,
            tab: vec![T::zero(); m * n],
            beta: vec![T::zero(); m],
            basis: vec![0; m],
            pos,
            lower,
            upper,
            cost,
            offset: model.offset().clone(),
            dj: vec![T::zero(); n],
            phase1: false,
            art_sign: vec![T::one(); m],
            cols: Arc::new(cols),
            rhs: Arc::new(rhs),
            iterations: 0,
            since_check: 0,
        };

        // Residual each row must absorb with structural columns at rest.
        let mut resid = (*t.rhs).clone();
        for j in 0..ns {
            let x = t.nb_value(j);
            if x.is_zero() {
                continue;
            }
            for (i, a) in &t.cols[j] {
                resid[*i] -= a.clone() * x.clone();
            }
        }
        for i in 0..m {
            let s = ns + i;
            let fits = t.lower[s].as_ref().map_or(true, |l| resid[i] >= *l)
                && t.upper[s].as_ref().map_or(true, |u| resid[i] <= *u);
            let sign = if fits || resid[i] >= T::zero() { T::one() } else { -T::one() };
            if fits {
                t.basis[i] = s;
                t.pos[s] = Pos::Basic;
                t.beta[i] = resid[i].clone();
            } else {
                t.basis[i] = n + i;
                t.beta[i] = resid[i].abs();
            }
            t.art_sign[i] = sign.clone();
            t.tab[i * n + s] = sign;
        }
        for j in 0..ns {
            for (i, a) in t.cols[j].iter() {
                let i = *i;
                t.tab[i * n + j] = a.clone() * t.art_sign[i].clone();
            }
        }
        t
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> &T {
        &self.tab[i * self.n + j]
    }

    fn lb(&self, col: usize) -> Option<T> {
        if col < self.n {
            self.lower[col].clone()
        } else {
            Some(T::zero())
        }
    }

    fn ub(&self, col: usize) -> Option<T> {
        if col < self.n {
            self.upper[col].clone()
        } else if self.phase1 {
            None
        } else {
            Some(T::zero())
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        matches!((&self.lower[j], &self.upper[j]), (Some(l), Some(u)) if l == u)
    }

    fn nb_value(&self, j: usize) -> T {
        match self.pos[j] {
            Pos::Lower => self.lower[j].clone().expect("at-lower variable has a lower bound"),
            Pos::Upper => self.upper[j].clone().expect("at-upper variable has an upper bound"),
            Pos::Zero => T::zero(),
            Pos::Basic => unreachable!("basic variable has no resting value"),
        }
    }

    fn has_artificial(&self) -> bool {
        self.basis.iter().any(|&b| b >= self.n)
    }

    /// Values of the structural and slack columns.
    fn column_values(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.n];
        for j in 0..self.n {
            if self.pos[j] != Pos::Basic {
                x[j] = self.nb_value(j);
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.beta[i].clone();
            }
        }
        x
    }

    pub fn values(&self) -> Vec<T> {
        let mut x = self.column_values();
        x.truncate(self.ns);
        x
    }

    pub fn objective(&self) -> T {
        let x = self.column_values();
        let mut acc = self.offset.clone();
        for j in 0..self.ns {
            if !self.cost[j].is_zero() {
                acc += self.cost[j].clone() * x[j].clone();
            }
        }
        acc
    }

    fn basic_cost(&self, i: usize) -> T {
        let b = self.basis[i];
        if self.phase1 {
            if b >= self.n {
                T::one()
            } else {
                T::zero()
            }
        } else if b >= self.n {
            T::zero()
        } else {
            self.cost[b].clone()
        }
    }

    fn reset_reduced_costs(&mut self) {
        let n = self.n;
        for j in 0..n {
            self.dj[j] = if self.phase1 { T::zero() } else { self.cost[j].clone() };
        }
        for i in 0..self.m {
            let cb = self.basic_cost(i);
            if cb.is_zero() {
                continue;
            }
            for j in 0..n {
                let a = &self.tab[i * n + j];
                if !a.is_zero() {
                    self.dj[j] -= cb.clone() * a.clone();
                }
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            let _ = i;
            if b < n {
                self.dj[b] = T::zero();
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let inv = T::one() / self.tab[r * n + q].clone();
        let nz: Vec<usize> = (0..n).filter(|&j| !self.tab[r * n + j].is_zero()).collect();
        for &j in &nz {
            let v = self.tab[r * n + j].clone() * inv.clone();
            self.tab[r * n + j] = v;
        }
        self.tab[r * n + q] = T::one();
        let prow: Vec<T> = nz.iter().map(|&j| self.tab[r * n + j].clone()).collect();
        let flush = tiny::<T>();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * n + q].clone();
            if f.is_zero() {
                continue;
            }
            let row = &mut self.tab[i * n..(i + 1) * n];
            for (k, &j) in nz.iter().enumerate() {
                row[j] -= f.clone() * prow[k].clone();
                if !T::EXACT && row[j].abs() < flush {
                    row[j] = T::zero();
                }
            }
            row[q] = T::zero();
        }
        let f = self.dj[q].clone();
        if !f.is_zero() {
            for (k, &j) in nz.iter().enumerate() {
                self.dj[j] -= f.clone() * prow[k].clone();
            }
        }
        self.dj[q] = T::zero();
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, bool)> {
        let tol = T::dual_tol();
        let mut best: Option<(usize, bool, T)> = None;
        for j in 0..self.n {
            let p = self.pos[j];
            if p == Pos::Basic || self.is_fixed(j) {
                continue;
            }
            let d = &self.dj[j];
            let inc = matches!(p, Pos::Lower | Pos::Zero) && *d < -tol.clone();
            let dec = !inc && matches!(p, Pos::Upper | Pos::Zero) && *d > tol;
            if !(inc || dec) {
                continue;
            }
            if bland {
                return Some((j, inc));
            }
            let score = d.abs();
            if best.as_ref().map_or(true, |b| score > b.2) {
                best = Some((j, inc, score));
            }
        }
        best.map(|(j, inc, _)| (j, inc))
    }

    /// Step length and leaving row (`None` means a bound flip of `q`).
    /// Returns `None` when the ray is unbounded.
    #[allow(clippy::type_complexity)]
    fn ratio_test(&self, q: usize, inc: bool, bland: bool) -> Option<(T, Option<(usize, bool)>)> {
        let ptol = T::pivot_tol();
        let mut best_t: Option<T> = None;
        let mut best_row: Option<(usize, bool)> = None;
        let mut best_alpha = T::zero();
        if let (Some(l), Some(u)) = (&self.lower[q], &self.upper[q]) {
            best_t = Some(u.clone() - l.clone());
        }
        for i in 0..self.m {
            let raw = self.at(i, q);
            if raw.abs() <= ptol {
                continue;
            }
            let a = if inc { raw.clone() } else { -raw.clone() };
            let col = self.basis[i];
            let (limit, to_upper) = if a > T::zero() {
                match self.lb(col) {
                    Some(l) => (T::max_of(self.beta[i].clone() - l, T::zero()) / a.clone(), false),
                    None => continue,
                }
            } else {
                match self.ub(col) {
                    Some(u) => (T::max_of(u - self.beta[i].clone(), T::zero()) / (-a.clone()), true),
                    None => continue,
                }
            };
            let better = match &best_t {
                None => true,
                Some(bt) => {
                    if limit < bt.clone() - ptol.clone() {
                        true
                    } else if limit <= bt.clone() + ptol.clone() {
                        match best_row {
                            None => false,
                            Some((r, _)) => {
                                if bland {
                                    col < self.basis[r]
                                } else {
                                    a.abs() > best_alpha
                                }
                            }
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best_t = Some(limit);
                best_row = Some((i, to_upper));
                best_alpha = a.abs();
            }
        }
        best_t.map(|t| (t, best_row))
    }

    fn step(&mut self, q: usize, inc: bool, t: T, leave: Option<(usize, bool)>) {
        let signed = if inc { t } else { -t };
        if !signed.is_zero() {
            for i in 0..self.m {
                let a = self.tab[i * self.n + q].clone();
                if !a.is_zero() {
                    self.beta[i] -= a * signed.clone();
                }
            }
        }
        match leave {
            None => {
                self.pos[q] = match self.pos[q] {
                    Pos::Lower => Pos::Upper,
                    Pos::Upper => Pos::Lower,
                    p => p,
                };
            }
            Some((r, to_upper)) => {
                let entering_value = self.nb_value(q) + signed;
                let leaving = self.basis[r];
                if leaving < self.n {
                    self.pos[leaving] = if to_upper { Pos::Upper } else { Pos::Lower };
                }
                self.beta[r] = entering_value;
                self.pivot(r, q);
                self.basis[r] = q;
                self.pos[q] = Pos::Basic;
            }
        }
    }

    fn primal(&mut self, max_iter: usize) -> LpStatus {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate >= BLAND_AFTER;
            let Some((q, inc)) = self.choose_entering(bland) else {
                return LpStatus::Optimal;
            };
            let Some((t, leave)) = self.ratio_test(q, inc, bland) else {
                return LpStatus::Unbounded;
            };
            self.iterations += 1;
            if t <= T::feas_tol() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.step(q, inc, t, leave);
            if !T::EXACT && self.tick_check() && !self.rebuild() {
                return LpStatus::Numerical;
            }
        }
    }

    /// Periodic drift probe; true when a rebuild is due.
    fn tick_check(&mut self) -> bool {
        self.since_check += 1;
        if self.since_check < CHECK_EVERY {
            return false;
        }
        self.since_check = 0;
        self.residual() > T::feas_tol() / T::from_int(100)
    }

    /// Largest scaled residual of `A x + s = rhs` at the current point.
    fn residual(&self) -> T {
        let x = self.column_values();
        let mut act: Vec<T> = (0..self.m).map(|i| x[self.ns + i].clone()).collect();
        for (j, col) in self.cols.iter().enumerate() {
            if x[j].is_zero() {
                continue;
            }
            for (i, a) in col {
                act[*i] += a.clone() * x[j].clone();
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b >= self.n {
                act[b - self.n] += self.art_sign[b - self.n].clone() * self.beta[i].clone();
            }
        }
        let mut worst = T::zero();
        for i in 0..self.m {
            let r = (act[i].clone() - self.rhs[i].clone()).abs() / (T::one() + self.rhs[i].abs());
            worst = T::max_of(worst, r);
        }
        worst
    }

    /// Recomputes the tableau, basic values and reduced costs from the
    /// original data for the current basis. Returns false if the basis
    /// matrix is numerically singular.
    fn rebuild(&mut self) -> bool {
        let (m, n) = (self.m, self.n);
        if m == 0 {
            self.reset_reduced_costs();
            return true;
        }
        // Basis matrix in row-major, augmented with identity.
        let w = 2 * m;
        let mut aug = vec![T::zero(); m * w];
        for (k, &b) in self.basis.iter().enumerate() {
            if b < self.ns {
                for (i, a) in &self.cols[b] {
                    aug[i * w + k] = a.clone();
                }
            } else if b < n {
                aug[(b - self.ns) * w + k] = T::one();
            } else {
                aug[(b - n) * w + k] = self.art_sign[b - n].clone();
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = T::one();
        }
        for c in 0..m {
            let mut p = c;
            for i in c + 1..m {
                if aug[i * w + c].abs() > aug[p * w + c].abs() {
                    p = i;
                }
            }
            if aug[p * w + c].abs() <= tiny::<T>() || aug[p * w + c].is_zero() {
                return false;
            }
            if p != c {
                for j in 0..w {
                    aug.swap(p * w + j, c * w + j);
                }
            }
            let inv = T::one() / aug[c * w + c].clone();
            for j in 0..w {
                let v = aug[c * w + j].clone() * inv.clone();
                aug[c * w + j] = v;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = aug[i * w + c].clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..w {
                    let v = aug[c * w + j].clone();
                    if !v.is_zero() {
                        aug[i * w + j] -= f.clone() * v;
                    }
                }
            }
        }
        // Row k of B^-1 is aug[k, m..2m] and belongs to basis[k].
        let binv = |k: usize, i: usize| -> &T { &aug[k * w + m + i] };
        let mut tab = vec![T::zero(); m * n];
        for (j, col) in self.cols.iter().enumerate() {
            for k in 0..m {
                let mut acc = T::zero();
                for (i, a) in col {
                    let b = binv(k, *i);
                    if !b.is_zero() {
                        acc += b.clone() * a.clone();
                    }
                }
                tab[k * n + j] = acc;
            }
        }
        for i in 0..m {
            for k in 0..m {
                tab[k * n + self.ns + i] = binv(k, i).clone();
            }
        }
        let mut r = (*self.rhs).clone();
        for j in 0..n {
            if self.pos[j] == Pos::Basic {
                continue;
            }
            let x = self.nb_value(j);
            if x.is_zero() {
                continue;
            }
            if j < self.ns {
                for (i, a) in &self.cols[j] {
                    r[*i] -= a.clone() * x.clone();
                }
            } else {
                r[j - self.ns] -= x;
            }
        }
        for k in 0..m {
            let mut acc = T::zero();
            for (i, ri) in r.iter().enumerate() {
                let b = binv(k, i);
                if !b.is_zero() {
                    acc += b.clone() * ri.clone();
                }
            }
            self.beta[k] = acc;
        }
        self.tab = tab;
        self.reset_reduced_costs();
        true
    }

    fn drive_out_artificials(&mut self) {
        let ptol = T::pivot_tol();
        for r in 0..self.m {
            if self.basis[r] < self.n {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.n {
                if self.pos[j] == Pos::Basic {
                    continue;
                }
                let a = self.at(r, j).abs();
                if a > ptol && best.as_ref().map_or(true, |b| a > b.1) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((j, _)) => {
                    let v = self.nb_value(j);
                    self.pivot(r, j);
                    self.basis[r] = j;
                    self.pos[j] = Pos::Basic;
                    self.beta[r] = v;
                }
                None => self.beta[r] = T::zero(),
            }
        }
    }

    fn phase1_infeasibility(&self) -> T {
        let mut s = T::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            if b >= self.n {
                s += self.beta[i].abs();
            }
        }
        s
    }

    fn iteration_cap(&self) -> usize {
        self.iterations + 20_000 + 50 * (self.m + self.n)
    }

    /// Two-phase primal solve from the starting basis.
    pub fn solve(&mut self) -> LpStatus {
        let cap = self.iteration_cap();
        if self.lower.iter().zip(&self.upper).any(|(l, u)| matches!((l, u), (Some(l), Some(u)) if l > u)) {
            return LpStatus::Infeasible;
        }
        if self.has_artificial() {
            self.phase1 = true;
            self.reset_reduced_costs();
            match self.primal(cap) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => return LpStatus::Numerical,
                other => return other,
            }
            let scale = self.rhs.iter().fold(T::one(), |acc, r| T::max_of(acc, r.abs()));
            if self.phase1_infeasibility() > T::feas_tol() * scale {
                return LpStatus::Infeasible;
            }
            self.drive_out_artificials();
            self.phase1 = false;
        }
        self.reset_reduced_costs();
        let st = self.primal(cap);
        if st == LpStatus::Optimal {
            self.polish(cap)
        } else {
            st
        }
    }

    /// Changes the bounds of structural column `j`, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lo: Option<T>, hi: Option<T>) {
        if self.pos[j] == Pos::Basic {
            self.lower[j] = lo;
            self.upper[j] = hi;
            return;
        }
        let old = self.nb_value(j);
        let keep_upper = self.pos[j] == Pos::Upper && hi.is_some();
        self.lower[j] = lo;
        self.upper[j] = hi;
        self.pos[j] = if keep_upper {
            Pos::Upper
        } else if self.lower[j].is_some() {
            Pos::Lower
        } else if self.upper[j].is_some() {
            Pos::Upper
        } else {
            Pos::Zero
        };
        let delta = self.nb_value(j) - old;
        if !delta.is_zero() {
            for i in 0..self.m {
                let a = self.tab[i * self.n + j].clone();
                if !a.is_zero() {
                    self.beta[i] -= a * delta.clone();
                }
            }
        }
    }

    fn dual_simplex(&mut self, max_iter: usize) -> LpStatus {
        let ftol = T::feas_tol();
        let ptol = T::pivot_tol();
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            let mut leave: Option<(usize, T, T)> = None;
            for i in 0..self.m {
                let col = self.basis[i];
                let b = &self.beta[i];
                let (viol, target) = match (self.lb(col), self.ub(col)) {
                    (Some(l), _) if *b < l.clone() - ftol.clone() => (l.clone() - b.clone(), l),
                    (_, Some(u)) if *b > u.clone() + ftol.clone() => (b.clone() - u.clone(), u),
                    _ => continue,
                };
                if leave.as_ref().map_or(true, |l| viol > l.1) {
                    leave = Some((i, viol, target));
                }
            }
            let Some((r, _, target)) = leave else {
                return LpStatus::Optimal;
            };
            let increase = self.beta[r] < target;
            let bland = degenerate >= BLAND_AFTER;
            let mut best: Option<(usize, T, T)> = None;
            for j in 0..self.n {
                let p = self.pos[j];
                if p == Pos::Basic || self.is_fixed(j) {
                    continue;
                }
                let a = self.at(r, j);
                if a.abs() <= ptol {
                    continue;
                }
                let pos_a = *a > T::zero();
                let ok = match p {
                    Pos::Lower => pos_a != increase,
                    Pos::Upper => pos_a == increase,
                    Pos::Zero => true,
                    Pos::Basic => false,
                };
                if !ok {
                    continue;
                }
                let ratio = self.dj[j].abs() / a.abs();
                let better = match &best {
                    None => true,
                    Some((bj, br, ba)) => {
                        if bland {
                            ratio < br.clone() || (ratio == *br && j < *bj)
                        } else {
                            ratio < br.clone() - ptol.clone()
                                || (ratio <= br.clone() + ptol.clone() && a.abs() > *ba)
                        }
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, ratio, _)) = best else {
                return LpStatus::Infeasible;
            };
            self.iterations += 1;
            if ratio <= T::dual_tol() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let delta = (self.beta[r].clone() - target.clone()) / self.at(r, q).clone();
            for i in 0..self.m {
                let a = self.tab[i * self.n + q].clone();
                if !a.is_zero() {
                    self.beta[i] -= a * delta.clone();
                }
            }
            let entering_value = self.nb_value(q) + delta;
            let leaving = self.basis[r];
            if leaving < self.n {
                self.pos[leaving] = if increase { Pos::Lower } else { Pos::Upper };
                if self.is_fixed(leaving) {
                    self.pos[leaving] = Pos::Lower;
                }
            }
            self.beta[r] = entering_value;
            self.pivot(r, q);
            self.basis[r] = q;
            self.pos[q] = Pos::Basic;
            if !T::EXACT && self.tick_check() && !self.rebuild() {
                return LpStatus::Numerical;
            }
        }
    }

    /// Restores optimality after bound changes on an optimal tableau.
    pub fn reoptimize(&mut self) -> LpStatus {
        let cap = self.iteration_cap();
        match self.dual_simplex(cap) {
            LpStatus::Optimal => {}
            other => return other,
        }
        match self.primal(cap) {
            LpStatus::Optimal => self.polish(cap),
            other => other,
        }
    }

    /// Final accuracy check for inexact scalars: rebuild from the original
    /// data, repair any drift, and certify primal and dual feasibility.
    fn polish(&mut self, cap: usize) -> LpStatus {
        if T::EXACT {
            return LpStatus::Optimal;
        }
        for _ in 0..3 {
            if !self.rebuild() {
                return LpStatus::Numerical;
            }
            if self.primal_feasible() && self.dual_feasible() {
                return LpStatus::Optimal;
            }
            if !self.primal_feasible() {
                match self.dual_simplex(cap) {
                    LpStatus::Optimal => {}
                    other => return other,
                }
            }
            match self.primal(cap) {
                LpStatus::Optimal => {}
                other => return other,
            }
        }
        LpStatus::Numerical
    }

    fn primal_feasible(&self) -> bool {
        let tol = T::feas_tol();
        self.basis.iter().zip(&self.beta).all(|(&col, b)| {
            self.lb(col).map_or(true, |l| *b >= l - tol.clone()) && self.ub(col).map_or(true, |u| *b <= u + tol.clone())
        })
    }

    fn dual_feasible(&self) -> bool {
        let tol = T::dual_tol();
        (0..self.n).all(|j| {
            if self.pos[j] == Pos::Basic || self.is_fixed(j) {
                return true;
            }
            let d = &self.dj[j];
            match self.pos[j] {
                Pos::Lower => *d >= -tol.clone(),
                Pos::Upper => *d <= tol.clone(),
                Pos::Zero => d.abs() <= tol,
                Pos::Basic => true,
            }
        })
    }

    pub fn footprint(&self) -> usize {
        self.m * self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MilpModel;
    use crate::scalar::Rational;

    fn small() -> MilpModel<f64> {
        // min -x - 2y  s.t. x + y <= 4, x - y >= -2, 0 <= x <= 3, y >= 0
        let mut m = MilpModel::new("t");
        let x = m.add_var("x", Some(0.0), Some(3.0));
        let y = m.add_nonneg("y");
        m.set_obj(x, -1.0);
        m.set_obj(y, -2.0);
        m.add_row("a", vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        m.add_row("b", vec![(x, 1.0), (y, -1.0)], Sense::Ge, -2.0);
        m
    }

    #[test]
    fn solves_small_lp() {
        let mut t = Tableau::new(&small());
        assert_eq!(t.solve(), LpStatus::Optimal);
        // optimum at x = 1, y = 3
        assert!((t.objective() + 7.0).abs() < 1e-9);
        let v = t.values();
        assert!((v[0] - 1.0).abs() < 1e-9 && (v[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rebuild_reproduces_tableau() {
        let mut t = Tableau::new(&small());
        assert_eq!(t.solve(), LpStatus::Optimal);
        let before = t.tab.clone();
        assert!(t.rebuild());
        for (a, b) in before.iter().zip(&t.tab) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_reoptimize_after_bound_change() {
        let mut t = Tableau::new(&small());
        assert_eq!(t.solve(), LpStatus::Optimal);
        t.set_bounds(0, Some(2.0), Some(3.0));
        assert_eq!(t.reoptimize(), LpStatus::Optimal);
        // x = 2 forces y <= 2 from the first row: objective -6
        assert!((t.objective() + 6.0).abs() < 1e-9);
    }

    #[test]
    fn exact_arithmetic_matches() {
        let m = small();
        let mut q: MilpModel<Rational> = MilpModel::new("q");
        for v in m.vars() {
            q.add_var(
                v.name.clone(),
                v.lower.map(|x| Rational::from_int(x as i64)),
                v.upper.map(|x| Rational::from_int(x as i64)),
            );
        }
        for (j, c) in m.objective().iter().enumerate() {
            q.set_obj(crate::model::VarId(j), Rational::from_int(*c as i64));
        }
        for r in m.rows() {
            let terms = r.terms.iter().map(|(v, a)| (*v, Rational::from_int(*a as i64))).collect();
            q.add_row(r.name.clone(), terms, r.sense, Rational::from_int(r.rhs as i64));
        }
        let mut t = Tableau::new(&q);
        assert_eq!(t.solve(), LpStatus::Optimal);
        assert_eq!(t.objective(), Rational::from_int(-7));
    }
}
