//! Budgeted relaxed networks whose nodes hold boxes of states.
//!
//! Each layer is generated from the previous one, boxes that cannot hold a
//! feasible state are dropped, and if the layer is wider than the budget
//! its nodes are merged into bounding boxes. A terminal box `[lo, hi]` is
//! valued `φ̄(lo)`, an upper bound for every state it contains.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use valnet_milp::Scalar;

use crate::follower::FollowerOracle;
use crate::instance::Interaction;
use crate::network::{variable_order, NetworkError, Node, ValueNetwork, VariableOrder};
use crate::numerics::{Overflow, StateVector};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Hyperrectangle {
    pub lo: StateVector,
    pub hi: StateVector,
}

impl Hyperrectangle {
    pub fn new(lo: StateVector, hi: StateVector) -> Self {
        debug_assert!(lo.dominated_by(&hi), "box with lo > hi");
        Hyperrectangle { lo, hi }
    }

    pub fn point(s: StateVector) -> Self {
        Hyperrectangle { lo: s.clone(), hi: s }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, s: &StateVector) -> bool {
        self.lo.dominated_by(s) && s.dominated_by(&self.hi)
    }
}

pub fn shift_rect(r: &Hyperrectangle, col: &[i64], label: u8) -> Result<Hyperrectangle, Overflow> {
    Ok(Hyperrectangle { lo: r.lo.step(col, label)?, hi: r.hi.step(col, label)? })
}

pub fn merge_rects(a: &Hyperrectangle, b: &Hyperrectangle) -> Hyperrectangle {
    Hyperrectangle { lo: a.lo.component_min(&b.lo), hi: a.hi.component_max(&b.hi) }
}

/// True when no state in `r` leaves the follower feasible: some component
/// of `hi` is below the smallest feasible value.
pub fn prune_infeasible_rect(ia: &Interaction, r: &Hyperrectangle) -> bool {
    r.hi.0.iter().zip(ia.min_feasible_state()).any(|(h, v)| *h < v)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum MergeStrategy {
    /// Sort by longest root path (label-1 arcs weighted by `c`), largest
    /// first, and merge consecutive pairs until the layer fits.
    #[default]
    LongestPathOrder,
    /// Repeatedly merge the first two nodes in generation order.
    FirstPair,
    /// Caller-supplied partitions, keyed by layer, of that layer's nodes in
    /// generation order. Layers without an entry use `LongestPathOrder`.
    Explicit(BTreeMap<usize, Vec<Vec<usize>>>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergePolicy {
    pub strategy: MergeStrategy,
    /// Maximum layer width; `None` never merges.
    pub budget: Option<usize>,
    pub order: VariableOrder,
}

impl MergePolicy {
    pub fn with_budget(budget: usize) -> Self {
        MergePolicy { budget: Some(budget.max(1)), ..Self::default() }
    }

    pub fn unlimited() -> Self {
        MergePolicy::default()
    }
}

#[derive(Clone)]
struct Group {
    members: Vec<usize>,
    rect: Hyperrectangle,
    longest: f64,
}

fn merge_groups(a: &Group, b: &Group) -> Group {
    let mut members = a.members.clone();
    members.extend_from_slice(&b.members);
    members.sort_unstable();
    Group { members, rect: merge_rects(&a.rect, &b.rect), longest: a.longest.max(b.longest) }
}

fn longest_path_merge(mut groups: Vec<Group>, budget: usize) -> Vec<Group> {
    while groups.len() > budget {
        let mut ranked: Vec<usize> = (0..groups.len()).collect();
        ranked.sort_by(|&a, &b| {
            groups[b]
                .longest
                .partial_cmp(&groups[a].longest)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| groups[a].rect.lo.cmp(&groups[b].rect.lo))
                .then(a.cmp(&b))
        });
        let mut needed = groups.len() - budget;
        let mut absorbed = vec![None; groups.len()];
        for pair in ranked.chunks(2) {
            if needed == 0 || pair.len() < 2 {
                break;
            }
            let (keep, gone) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            absorbed[gone] = Some(keep);
            groups[keep] = merge_groups(&groups[keep], &groups[gone]);
            needed -= 1;
        }
        groups = groups.into_iter().enumerate().filter(|(i, _)| absorbed[*i].is_none()).map(|(_, g)| g).collect();
    }
    groups
}

fn partition_groups(groups: &[Group], parts: &[Vec<usize>], layer: usize) -> Result<Vec<Group>, NetworkError> {
    let mut used = vec![false; groups.len()];
    let mut out = Vec::with_capacity(parts.len());
    for part in parts {
        let mut acc: Option<Group> = None;
        for &i in part {
            if i >= groups.len() || std::mem::replace(&mut used[i], true) {
                return Err(NetworkError::Malformed(format!("bad merge partition for layer {layer}")));
            }
            acc = Some(match acc {
                None => groups[i].clone(),
                Some(g) => merge_groups(&g, &groups[i]),
            });
        }
        out.extend(acc);
    }
    if used.iter().any(|u| !u) {
        return Err(NetworkError::Malformed(format!("merge partition for layer {layer} misses nodes")));
    }
    Ok(out)
}

/// Relaxed network before the final reduction. Every layer respects the
/// budget unless an explicit partition says otherwise.
pub fn build_approx_unreduced<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    policy: &MergePolicy,
) -> Result<ValueNetwork<T>, NetworkError> {
    let ia = oracle.interaction();
    let inst = oracle.instance();
    let order = variable_order(ia, policy.order);
    let n = order.len();
    let floor = ia.min_feasible_state();
    let future = ia.future_max(&order);
    let hopeless = |r: &Hyperrectangle, j: usize| r.hi.0.iter().zip(&future[j]).zip(&floor).any(|((h, f), v)| h + f < *v);

    let root = Hyperrectangle::point(StateVector::zeros(ia.m));
    if hopeless(&root, 0) {
        return Ok(ValueNetwork::empty(order));
    }
    let mut rects = vec![root];
    let mut longest = vec![0.0f64];
    let mut children: Vec<Vec<[Option<usize>; 2]>> = Vec::with_capacity(n + 1);
    let mut all_rects: Vec<Vec<Hyperrectangle>> = Vec::with_capacity(n + 1);

    for j in 0..n {
        let var = order[j];
        let col = &ia.cols[var];
        let gain = inst.c[var].to_f64_lossy();
        let mut index: HashMap<Hyperrectangle, usize> = HashMap::new();
        let mut next: Vec<Group> = Vec::new();
        let mut kids = vec![[None, None]; rects.len()];
        for (u, r) in rects.iter().enumerate() {
            for label in 0..2u8 {
                let t = shift_rect(r, col, label)?;
                if hopeless(&t, j + 1) {
                    continue;
                }
                let lp = longest[u] + if label == 1 { gain } else { 0.0 };
                let id = *index.entry(t.clone()).or_insert_with(|| {
                    next.push(Group { members: vec![next.len()], rect: t, longest: lp });
                    next.len() - 1
                });
                next[id].longest = next[id].longest.max(lp);
                kids[u][label as usize] = Some(id);
            }
        }

        let explicit = match &policy.strategy {
            MergeStrategy::Explicit(map) => map.get(&(j + 1)),
            _ => None,
        };
        let merged = match (explicit, policy.budget) {
            (Some(parts), _) => partition_groups(&next, parts, j + 1)?,
            (None, Some(b)) if next.len() > b => match policy.strategy {
                MergeStrategy::FirstPair => {
                    let mut g = next.clone();
                    while g.len() > b {
                        let second = g.remove(1);
                        g[0] = merge_groups(&g[0], &second);
                    }
                    g
                }
                _ => longest_path_merge(next.clone(), b),
            },
            _ => next.clone(),
        };
        // Groups that ended up with the same box share one node.
        let mut by_rect: HashMap<Hyperrectangle, usize> = HashMap::new();
        let mut map = vec![0usize; next.len()];
        let mut new_rects = Vec::new();
        let mut new_longest: Vec<f64> = Vec::new();
        for g in merged {
            let id = *by_rect.entry(g.rect.clone()).or_insert_with(|| {
                new_rects.push(g.rect.clone());
                new_longest.push(f64::NEG_INFINITY);
                new_rects.len() - 1
            });
            new_longest[id] = new_longest[id].max(g.longest);
            for m in g.members {
                map[m] = id;
            }
        }
        for pair in &mut kids {
            for c in pair.iter_mut() {
                *c = c.map(|t| map[t]);
            }
        }
        children.push(kids);
        all_rects.push(std::mem::replace(&mut rects, new_rects));
        longest = new_longest;
    }
    children.push(vec![[None, None]; rects.len()]);
    all_rects.push(rects);

    // Terminal values; boxes whose best state is infeasible are dropped.
    let upper = oracle.value_upper();
    let mut values = Vec::with_capacity(all_rects[n].len());
    let mut keep = Vec::with_capacity(all_rects[n].len());
    for r in &all_rects[n] {
        match oracle.phibar(&r.lo).value.into_finite() {
            Some(v) => {
                values.push(v);
                keep.push(true);
            }
            None => {
                let some_feasible = oracle.phibar(&r.hi).is_feasible();
                values.push(upper.clone());
                keep.push(some_feasible);
            }
        }
    }
    if n > 0 {
        for pair in &mut children[n - 1] {
            for c in pair.iter_mut() {
                if c.is_some_and(|t| !keep[t]) {
                    *c = None;
                }
            }
        }
    } else if !keep[0] {
        return Ok(ValueNetwork::empty(order));
    }
    let layers = all_rects
        .into_iter()
        .zip(children)
        .map(|(rs, ch)| rs.into_iter().zip(ch).map(|(r, c)| Node { children: c, rect: Some(r) }).collect())
        .collect();
    ValueNetwork::from_layers(order, layers, values)
}

/// Relaxed value network: valid upper bounds on every feasible path.
pub fn build_approx<T: Scalar>(oracle: &FollowerOracle<'_, T>, policy: &MergePolicy) -> Result<ValueNetwork<T>, NetworkError> {
    Ok(build_approx_unreduced(oracle, policy)?.reduce())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(lo: &[i64], hi: &[i64]) -> Hyperrectangle {
        Hyperrectangle::new(StateVector(lo.to_vec()), StateVector(hi.to_vec()))
    }

    #[test]
    fn shift_and_merge() {
        let r = Hyperrectangle::point(StateVector::zeros(2));
        assert_eq!(shift_rect(&r, &[-1, -3], 1).unwrap(), rect(&[-1, -3], &[-1, -3]));
        assert_eq!(shift_rect(&r, &[-1, -3], 0).unwrap(), r);
        let m = merge_rects(&merge_rects(&rect(&[0, 0], &[0, 0]), &rect(&[-2, -2], &[-2, -2])), &rect(&[-1, -3], &[-1, -3]));
        assert_eq!(m, rect(&[-2, -3], &[0, 0]));
        assert_eq!(merge_rects(&m, &m), m);
        assert!(m.contains(&StateVector(vec![-1, -1])));
    }

    #[test]
    fn pairing_order() {
        let g = |i: usize, lp: f64| Group { members: vec![i], rect: rect(&[i as i64], &[i as i64]), longest: lp };
        let out = longest_path_merge(vec![g(0, 1.0), g(1, 5.0), g(2, 3.0), g(3, 4.0), g(4, 0.0)], 2);
        let members: Vec<Vec<usize>> = out.iter().map(|g| g.members.clone()).collect();
        // First pass pairs (1,3) and (0,2); second pass merges the two
        // largest of the remaining three.
        assert_eq!(members.len(), 2);
        assert!(members.contains(&vec![4]));
        assert!(members.contains(&vec![0, 1, 2, 3]));
    }
}
