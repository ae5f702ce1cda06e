//! Layered multi-terminal decision diagrams encoding follower values.
//!
//! Layer `j` holds the nodes reached after deciding the first `j`
//! variables of `order`; the last layer holds the terminals, each with a
//! value. A leader decision with no path is infeasible for the follower.

mod build;
mod reduce;

use std::collections::HashMap;
use std::fmt::Write;

use valnet_milp::{Rational, Scalar};

use crate::approx::Hyperrectangle;
use crate::numerics::Extended;

pub use build::{build_state_network, enumerate_state_layers, variable_order, NetworkOptions, VariableOrder};
pub use reduce::{find_symmetric_pair, reduce};

/// Default node cap for exact construction.
pub const DEFAULT_NODE_CAP: usize = 5_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    /// Target index in the next layer for labels 0 and 1.
    pub children: [Option<usize>; 2],
    /// State box; a single point for exact networks.
    pub rect: Option<Hyperrectangle>,
}

impl Node {
    pub fn new(children: [Option<usize>; 2]) -> Self {
        Node { children, rect: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub layer: usize,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub layer: usize,
    pub from: usize,
    pub label: u8,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("exact network too large ({nodes} nodes over the cap of {cap}); use the approximate builder")]
    TooLarge { nodes: usize, cap: usize },
    #[error("malformed network: {0}")]
    Malformed(String),
    #[error(transparent)]
    Instance(#[from] crate::instance::InstanceError),
    #[error(transparent)]
    Overflow(#[from] crate::numerics::Overflow),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueNetwork<T> {
    order: Vec<usize>,
    layers: Vec<Vec<Node>>,
    values: Vec<T>,
}

/// Structure-only fingerprint; equal iff the networks are isomorphic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CanonicalForm {
    pub order: Vec<usize>,
    pub layers: Vec<Vec<[Option<usize>; 2]>>,
    pub values: Vec<Rational>,
}

impl<T: Scalar> ValueNetwork<T> {
    /// Assembles a network from raw layers and drops nodes that are not
    /// on a root-to-terminal path.
    pub fn from_layers(order: Vec<usize>, layers: Vec<Vec<Node>>, values: Vec<T>) -> Result<Self, NetworkError> {
        let n = order.len();
        if layers.len() != n + 1 {
            return Err(NetworkError::Malformed(format!("{} layers for {} variables", layers.len(), n)));
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(NetworkError::Malformed("order is not a permutation".into()));
            }
        }
        if layers[0].len() > 1 {
            return Err(NetworkError::Malformed("more than one root".into()));
        }
        if layers[n].len() != values.len() {
            return Err(NetworkError::Malformed("terminal count differs from value count".into()));
        }
        for (j, layer) in layers.iter().enumerate() {
            for node in layer {
                for c in node.children.iter().flatten() {
                    if j == n || *c >= layers[j + 1].len() {
                        return Err(NetworkError::Malformed(format!("edge out of range in layer {j}")));
                    }
                }
            }
        }
        let mut net = ValueNetwork { order, layers, values };
        net.prune();
        Ok(net)
    }

    /// Network with no paths (every leader decision infeasible).
    pub fn empty(order: Vec<usize>) -> Self {
        let layers = vec![Vec::new(); order.len() + 1];
        ValueNetwork { order, layers, values: Vec::new() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n_vars(&self) -> usize {
        self.order.len()
    }

    pub fn layers(&self) -> &[Vec<Node>] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &[Node] {
        &self.layers[j]
    }

    pub fn node(&self, r: NodeRef) -> &Node {
        &self.layers[r.layer][r.index]
    }

    pub fn terminal_values(&self) -> &[T] {
        &self.values
    }

    pub fn terminal_layer(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers[0].is_empty()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn max_width(&self) -> usize {
        self.layers.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn num_nodes(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.layers.iter().flatten().map(|n| n.children.iter().flatten().count()).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (layer, nodes) in self.layers.iter().enumerate() {
            for (from, node) in nodes.iter().enumerate() {
                for label in 0..2u8 {
                    if let Some(to) = node.children[label as usize] {
                        out.push(Edge { layer, from, label, to });
                    }
                }
            }
        }
        out
    }

    /// Terminal index reached by `x`, if the path exists.
    pub fn terminal_of(&self, x: &[u8]) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let mut at = 0usize;
        for (j, &var) in self.order.iter().enumerate() {
            at = self.layers[j][at].children[usize::from(x[var] != 0)]?;
        }
        Some(at)
    }

    /// Terminal value on the path of `x`, `+∞` when there is none.
    pub fn lookup(&self, x: &[u8]) -> Extended<T> {
        match self.terminal_of(x) {
            Some(t) => Extended::Finite(self.values[t].clone()),
            None => Extended::Infinite,
        }
    }

    pub fn set_terminal_value(&mut self, t: usize, value: T) {
        self.values[t] = value;
    }

    /// Deletes terminals for which `keep` is false, then prunes.
    pub fn retain_terminals(&mut self, mut keep: impl FnMut(usize, &T) -> bool) {
        let last = self.order.len();
        let flags: Vec<bool> = self.values.iter().enumerate().map(|(t, v)| keep(t, v)).collect();
        if flags.iter().all(|f| *f) {
            return;
        }
        if last == 0 {
            let kept = flags[0];
            if !kept {
                self.layers[0].clear();
                self.values.clear();
            }
            return;
        }
        for node in &mut self.layers[last - 1] {
            for c in &mut node.children {
                if c.is_some_and(|t| !flags[t]) {
                    *c = None;
                }
            }
        }
        self.prune();
    }

    /// Removes nodes that are unreachable from the root or cannot reach a
    /// terminal, renumbering the survivors in their current order.
    pub(crate) fn prune(&mut self) {
        let n = self.order.len();
        let mut live: Vec<Vec<bool>> = self.layers.iter().map(|l| vec![false; l.len()]).collect();
        live[n].iter_mut().for_each(|f| *f = true);
        for j in (0..n).rev() {
            for (u, node) in self.layers[j].iter_mut().enumerate() {
                for c in &mut node.children {
                    if c.is_some_and(|t| !live[j + 1][t]) {
                        *c = None;
                    }
                }
                live[j][u] = node.children.iter().any(Option::is_some);
            }
        }
        let mut reach: Vec<Vec<bool>> = self.layers.iter().map(|l| vec![false; l.len()]).collect();
        if let Some(r) = reach[0].first_mut() {
            *r = live[0][0];
        }
        for j in 0..n {
            for (u, node) in self.layers[j].iter().enumerate() {
                if reach[j][u] {
                    for c in node.children.iter().flatten() {
                        reach[j + 1][*c] = true;
                    }
                }
            }
        }
        let mut remap: Vec<Vec<Option<usize>>> = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let mut next = 0usize;
            remap.push(
                reach[j]
                    .iter()
                    .map(|&k| {
                        k.then(|| {
                            next += 1;
                            next - 1
                        })
                    })
                    .collect(),
            );
        }
        let old = std::mem::take(&mut self.layers);
        for (j, layer) in old.into_iter().enumerate() {
            let mut kept = Vec::new();
            for (u, mut node) in layer.into_iter().enumerate() {
                if remap[j][u].is_none() {
                    continue;
                }
                for c in &mut node.children {
                    *c = c.and_then(|t| remap[j + 1][t]);
                }
                kept.push(node);
            }
            self.layers.push(kept);
        }
        let values = std::mem::take(&mut self.values);
        self.values = values.into_iter().enumerate().filter(|(t, _)| remap[n][*t].is_some()).map(|(_, v)| v).collect();
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        let n = self.order.len();
        let mut layers = vec![Vec::new(); n + 1];
        let mut values = Vec::new();
        if self.is_empty() {
            return CanonicalForm { order: self.order.clone(), layers, values };
        }
        let mut current = vec![0usize];
        for j in 0..=n {
            let mut ids: HashMap<usize, usize> = HashMap::new();
            let mut next = Vec::new();
            for &u in &current {
                if j == n {
                    values.push(self.values[u].to_rational().unwrap_or_default());
                    layers[j].push([None, None]);
                    continue;
                }
                let mut row = [None, None];
                for (label, c) in self.layers[j][u].children.iter().enumerate() {
                    if let Some(c) = c {
                        let id = *ids.entry(*c).or_insert_with(|| {
                            next.push(*c);
                            next.len() - 1
                        });
                        row[label] = Some(id);
                    }
                }
                layers[j].push(row);
            }
            current = next;
        }
        CanonicalForm { order: self.order.clone(), layers, values }
    }

    pub fn isomorphic(&self, other: &Self) -> bool {
        self.canonical_form() == other.canonical_form()
    }

    /// Graphviz rendering: dashed edges for label 0, solid for label 1.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph value_network {\n  rankdir=TB;\n  node [shape=circle, fontsize=10];\n");
        let last = self.order.len();
        for (j, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "  {{ rank=same;");
            for (u, node) in layer.iter().enumerate() {
                let mut label = match &node.rect {
                    Some(r) if r.is_point() => r.lo.to_string(),
                    Some(r) => format!("{},{}", r.lo, r.hi),
                    None => String::new(),
                };
                if j == last {
                    if !label.is_empty() {
                        label.push_str("\\n");
                    }
                    let _ = write!(label, "{}", self.values[u]);
                }
                let shape = if j == last { ", shape=box" } else { "" };
                let _ = writeln!(out, "    n{j}_{u} [label=\"{label}\"{shape}];");
            }
            let _ = writeln!(out, "  }}");
        }
        for e in self.edges() {
            let style = if e.label == 0 { "dashed" } else { "solid" };
            let _ = writeln!(out, "  n{}_{} -> n{}_{} [style={style}];", e.layer, e.from, e.layer + 1, e.to);
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ValueNetwork<f64> {
        // Two variables; x = (1, *) is infeasible, (0,0) -> 3, (0,1) -> 7.
        let layers = vec![
            vec![Node::new([Some(0), Some(1)])],
            vec![Node::new([Some(0), Some(1)]), Node::new([None, None])],
            vec![Node::new([None, None]), Node::new([None, None])],
        ];
        ValueNetwork::from_layers(vec![0, 1], layers, vec![3.0, 7.0]).unwrap()
    }

    #[test]
    fn dangling_nodes_are_dropped() {
        let net = chain();
        assert_eq!(net.widths(), vec![1, 1, 2]);
        assert_eq!(net.lookup(&[0, 1]), Extended::Finite(7.0));
        assert_eq!(net.lookup(&[1, 0]), Extended::Infinite);
        assert_eq!(net.num_edges(), 3);
    }

    #[test]
    fn retain_prunes_upward() {
        let mut net = chain();
        net.retain_terminals(|_, v| *v < 5.0);
        assert_eq!(net.widths(), vec![1, 1, 1]);
        assert_eq!(net.lookup(&[0, 1]), Extended::Infinite);
        net.retain_terminals(|_, _| false);
        assert!(net.is_empty());
        assert_eq!(net.lookup(&[0, 0]), Extended::Infinite);
    }

    #[test]
    fn dot_styles() {
        let dot = chain().to_dot();
        assert!(dot.contains("n0_0 -> n1_0 [style=dashed]"));
        assert!(dot.contains("n1_0 -> n2_1 [style=solid]"));
        assert!(dot.contains("label=\"7\""));
    }

    #[test]
    fn malformed_rejected() {
        let layers = vec![vec![Node::new([Some(3), None])], vec![Node::new([None, None])]];
        assert!(ValueNetwork::from_layers(vec![0], layers, vec![1.0]).is_err());
    }
}
