//! Symmetry reduction: merge equal-valued terminals, then, bottom-up,
//! nodes whose outgoing edges agree.

use std::collections::HashMap;

use valnet_milp::{Rational, Scalar};

use super::{Node, NodeRef, ValueNetwork};
use crate::approx::{merge_rects, Hyperrectangle};

fn merged_rect(a: &Option<Hyperrectangle>, b: &Option<Hyperrectangle>) -> Option<Hyperrectangle> {
    match (a, b) {
        (Some(a), Some(b)) => Some(merge_rects(a, b)),
        _ => None,
    }
}

impl<T: Scalar> ValueNetwork<T> {
    /// Merges terminals with identical values only.
    pub fn merge_equal_terminals(&self) -> Self {
        let mut net = self.clone();
        net.prune();
        let n = net.order.len();
        let (map, layer, values) = group_terminals(&net.layers[n], &net.values);
        net.layers[n] = layer;
        net.values = values;
        if n > 0 {
            for node in &mut net.layers[n - 1] {
                for c in &mut node.children {
                    *c = c.map(|t| map[t]);
                }
            }
        }
        net
    }

    /// Unique symmetry-free network with the same path values.
    pub fn reduce(&self) -> Self {
        let mut net = self.merge_equal_terminals();
        let n = net.order.len();
        for j in (0..n).rev() {
            let mut index: HashMap<[Option<usize>; 2], usize> = HashMap::new();
            let mut map = Vec::with_capacity(net.layers[j].len());
            let mut layer: Vec<Node> = Vec::new();
            for node in std::mem::take(&mut net.layers[j]) {
                match index.get(&node.children) {
                    Some(&id) => {
                        layer[id].rect = merged_rect(&layer[id].rect, &node.rect);
                        map.push(id);
                    }
                    None => {
                        index.insert(node.children, layer.len());
                        map.push(layer.len());
                        layer.push(node);
                    }
                }
            }
            net.layers[j] = layer;
            if j > 0 {
                for node in &mut net.layers[j - 1] {
                    for c in &mut node.children {
                        *c = c.map(|t| map[t]);
                    }
                }
            }
        }
        net
    }
}

fn group_terminals<T: Scalar>(layer: &[Node], values: &[T]) -> (Vec<usize>, Vec<Node>, Vec<T>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b)));
    // Group id per terminal, keyed by the group's first member.
    let mut leader = vec![0usize; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e < idx.len() && values[idx[e]] == values[idx[k]] {
            leader[idx[e]] = idx[k];
            e += 1;
        }
        k = e;
    }
    let mut map = vec![usize::MAX; values.len()];
    let mut out_layer: Vec<Node> = Vec::new();
    let mut out_values = Vec::new();
    for t in 0..values.len() {
        let l = leader[t];
        if map[l] == usize::MAX {
            map[l] = out_layer.len();
            out_layer.push(layer[t].clone());
            out_values.push(values[t].clone());
        } else {
            let id = map[l];
            out_layer[id].rect = merged_rect(&out_layer[id].rect, &layer[t].rect);
        }
        map[t] = map[l];
    }
    (map, out_layer, out_values)
}

pub fn reduce<T: Scalar>(net: &ValueNetwork<T>) -> ValueNetwork<T> {
    net.reduce()
}

type Completions = Vec<(Vec<u8>, Rational)>;

/// Two same-layer nodes with identical completion sets, found by
/// exhaustive comparison. Exponential in the number of layers below the
/// pair; meant for tests on small networks.
pub fn find_symmetric_pair<T: Scalar>(net: &ValueNetwork<T>) -> Option<(NodeRef, NodeRef)> {
    let n = net.n_vars();
    let mut below: Vec<Completions> =
        net.values.iter().map(|v| vec![(Vec::new(), v.to_rational().unwrap_or_default())]).collect();
    if let Some(p) = pair_in(&below, n) {
        return Some(p);
    }
    for j in (0..n).rev() {
        let here: Vec<Completions> = net.layers[j]
            .iter()
            .map(|node| {
                let mut out = Vec::new();
                for (label, c) in node.children.iter().enumerate() {
                    if let Some(c) = c {
                        for (path, v) in &below[*c] {
                            let mut p = Vec::with_capacity(path.len() + 1);
                            p.push(label as u8);
                            p.extend_from_slice(path);
                            out.push((p, v.clone()));
                        }
                    }
                }
                out
            })
            .collect();
        if let Some(p) = pair_in(&here, j) {
            return Some(p);
        }
        below = here;
    }
    None
}

fn pair_in(sets: &[Completions], layer: usize) -> Option<(NodeRef, NodeRef)> {
    let mut seen: HashMap<&Completions, usize> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        if let Some(&first) = seen.get(s) {
            return Some((NodeRef { layer, index: first }, NodeRef { layer, index: i }));
        }
        seen.insert(s, i);
    }
    None
}
