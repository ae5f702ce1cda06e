//! Exact construction from reachable states.

use std::collections::HashMap;

use rayon::prelude::*;
use valnet_milp::Scalar;

use super::{NetworkError, Node, ValueNetwork, DEFAULT_NODE_CAP};
use crate::approx::Hyperrectangle;
use crate::follower::FollowerOracle;
use crate::instance::Interaction;
use crate::numerics::StateVector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VariableOrder {
    /// Instance order.
    #[default]
    Native,
    /// Ascending column sums of `A`, ties by index.
    ColumnSum,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkOptions {
    pub order: VariableOrder,
    pub node_cap: usize,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions { order: VariableOrder::Native, node_cap: DEFAULT_NODE_CAP }
    }
}

pub fn variable_order(ia: &Interaction, kind: VariableOrder) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ia.n_l).collect();
    if kind == VariableOrder::ColumnSum {
        order.sort_by_key(|&j| (ia.cols[j].iter().sum::<i64>(), j));
    }
    order
}

struct StateLayers {
    states: Vec<Vec<StateVector>>,
    children: Vec<Vec<[Option<usize>; 2]>>,
}

/// Forward reachability with a necessary-feasibility filter, followed by
/// one backward sweep keeping states that reach a feasible terminal.
fn state_layers<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    order: &[usize],
    cap: usize,
) -> Result<(StateLayers, Vec<T>), NetworkError> {
    let ia = oracle.interaction();
    let n = order.len();
    let floor = ia.min_feasible_state();
    let future = ia.future_max(order);
    let hopeless = |s: &StateVector, j: usize| s.0.iter().zip(&future[j]).zip(&floor).any(|((v, f), lo)| v + f < *lo);

    let root = StateVector::zeros(ia.m);
    let mut states = vec![if hopeless(&root, 0) { vec![] } else { vec![root] }];
    let mut children: Vec<Vec<[Option<usize>; 2]>> = Vec::with_capacity(n + 1);
    let mut total = states[0].len();
    for j in 0..n {
        let col = &ia.cols[order[j]];
        let mut index: HashMap<StateVector, usize> = HashMap::new();
        let mut next: Vec<StateVector> = Vec::new();
        let mut kids = Vec::with_capacity(states[j].len());
        for s in &states[j] {
            let mut pair = [None, None];
            for label in 0..2u8 {
                let t = s.step(col, label)?;
                if hopeless(&t, j + 1) {
                    continue;
                }
                let id = match index.get(&t) {
                    Some(id) => *id,
                    None => {
                        next.push(t.clone());
                        index.insert(t, next.len() - 1);
                        next.len() - 1
                    }
                };
                pair[label as usize] = Some(id);
            }
            kids.push(pair);
        }
        total += next.len();
        if total > cap {
            return Err(NetworkError::TooLarge { nodes: total, cap });
        }
        children.push(kids);
        states.push(next);
    }
    children.push(vec![[None, None]; states[n].len()]);

    let results: Vec<_> = states[n].par_iter().map(|s| oracle.phibar(s).value.into_finite()).collect();
    let mut live: Vec<Vec<bool>> = states.iter().map(|l| vec![false; l.len()]).collect();
    let mut values = vec![T::zero(); states[n].len()];
    for (t, r) in results.into_iter().enumerate() {
        if let Some(v) = r {
            live[n][t] = true;
            values[t] = v;
        }
    }
    for j in (0..n).rev() {
        for (u, pair) in children[j].iter_mut().enumerate() {
            for c in pair.iter_mut() {
                if c.is_some_and(|t| !live[j + 1][t]) {
                    *c = None;
                }
            }
            live[j][u] = pair.iter().any(Option::is_some);
        }
    }
    Ok((StateLayers { states, children }, values))
}

/// Reachable states per layer whose completions include a feasible
/// terminal. Layer 0 is the root state.
pub fn enumerate_state_layers<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    opts: &NetworkOptions,
) -> Result<Vec<Vec<StateVector>>, NetworkError> {
    let net = build_state_network(oracle, opts)?;
    Ok(net
        .layers()
        .iter()
        .map(|l| l.iter().map(|n| n.rect.as_ref().expect("state annotation").lo.clone()).collect())
        .collect())
}

/// Exact state-based value network: one node per reachable state.
pub fn build_state_network<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    opts: &NetworkOptions,
) -> Result<ValueNetwork<T>, NetworkError> {
    let order = variable_order(oracle.interaction(), opts.order);
    let (sl, values) = state_layers(oracle, &order, opts.node_cap)?;
    let layers = sl
        .states
        .into_iter()
        .zip(sl.children)
        .map(|(st, ch)| {
            st.into_iter().zip(ch).map(|(s, c)| Node { children: c, rect: Some(Hyperrectangle::point(s)) }).collect()
        })
        .collect();
    ValueNetwork::from_layers(order, layers, values)
}
