//! Single-level MILP models: high-point relaxation, network flow
//! reformulation, indicator reformulation and blocking cuts.

use std::collections::HashSet;

use valnet_milp::{MilpModel, RowId, Scalar, Sense, VarId};

use crate::follower::FollowerOracle;
use crate::instance::{BilevelInstance, Interaction};
use crate::network::{enumerate_state_layers, Edge, NetworkError, NetworkOptions, ValueNetwork};

/// Model with handles to the leader and follower variables.
#[derive(Clone, Debug)]
pub struct BilevelModel<T> {
    pub model: MilpModel<T>,
    pub x: Vec<VarId>,
    pub y: Vec<VarId>,
    /// Value-function variable, absent in the high-point relaxation.
    pub z: Option<VarId>,
}

impl<T: Scalar> BilevelModel<T> {
    pub fn leader_bits(&self, values: &[T]) -> Vec<u8> {
        bits(&self.x, values)
    }

    pub fn follower_bits(&self, values: &[T]) -> Vec<u8> {
        bits(&self.y, values)
    }
}

fn bits<T: Scalar>(vars: &[VarId], values: &[T]) -> Vec<u8> {
    let half = T::one() / T::from_int(2);
    vars.iter().map(|v| u8::from(values[v.0] > half)).collect()
}

fn nonzero<T: Scalar>(vars: &[VarId], coefs: impl IntoIterator<Item = T>) -> Vec<(VarId, T)> {
    vars.iter().copied().zip(coefs).filter(|(_, c)| !c.is_zero()).collect()
}

/// `min c·x + p·y` over leader rows and interaction rows, binary x and y.
pub fn build_hpr<T: Scalar>(inst: &BilevelInstance<T>) -> BilevelModel<T> {
    let mut model = MilpModel::new(format!("{}_hpr", inst.name));
    let x: Vec<VarId> = (0..inst.n_l).map(|j| model.add_binary(format!("x{j}"))).collect();
    let y: Vec<VarId> = (0..inst.n_f).map(|k| model.add_binary(format!("y{k}"))).collect();
    for (j, v) in x.iter().enumerate() {
        model.set_obj(*v, inst.c[j].clone());
    }
    for (k, v) in y.iter().enumerate() {
        model.set_obj(*v, inst.p[k].clone());
    }
    for i in 0..inst.m_l() {
        let mut terms = nonzero(&x, inst.gx[i].iter().cloned());
        terms.extend(nonzero(&y, inst.gy[i].iter().cloned()));
        model.add_row(format!("lead{i}"), terms, Sense::Ge, inst.h[i].clone());
    }
    for i in 0..inst.m {
        let mut terms = nonzero(&x, inst.a[i].iter().cloned());
        terms.extend(nonzero(&y, inst.b[i].iter().cloned()));
        model.add_row(format!("link{i}"), terms, Sense::Ge, inst.rhs[i].clone());
    }
    BilevelModel { model, x, y, z: None }
}

/// Flow variables and rows appended to a model for a value network.
#[derive(Clone, Debug)]
pub struct FlowPolytope {
    pub edges: Vec<Edge>,
    /// One flow variable per entry of `edges`.
    pub omega: Vec<VarId>,
    /// Node rows, layer by layer (root first, terminals last).
    pub node_rows: Vec<RowId>,
    /// One row per layer tying label-1 flow to that layer's variable.
    pub coupling_rows: Vec<RowId>,
    pub value_row: Option<RowId>,
    /// The network had no paths; an infeasible row was emitted instead.
    pub infeasible: bool,
}

impl FlowPolytope {
    pub fn num_rows(&self) -> usize {
        self.node_rows.len() + self.coupling_rows.len() + usize::from(self.value_row.is_some())
    }
}

/// Appends the flow system of `net` to `model`: unit flow out of the root,
/// conservation at inner nodes, at most one unit into each terminal,
/// label-1 flow of layer `j` equal to its leader variable, and (when `z` is
/// given) `z` equal to the terminal value collected.
pub fn build_flow_polytope<T: Scalar>(
    model: &mut MilpModel<T>,
    net: &ValueNetwork<T>,
    x: &[VarId],
    z: Option<VarId>,
) -> FlowPolytope {
    let edges = net.edges();
    if net.is_empty() {
        let row = model.add_row("no_path", Vec::new(), Sense::Ge, T::one());
        return FlowPolytope {
            edges,
            omega: Vec::new(),
            node_rows: vec![row],
            coupling_rows: Vec::new(),
            value_row: None,
            infeasible: true,
        };
    }
    let n = net.n_vars();
    let omega: Vec<VarId> =
        edges.iter().map(|e| model.add_nonneg(format!("w{}_{}_{}", e.layer, e.from, e.label))).collect();
    let mut out_terms: Vec<Vec<Vec<(VarId, T)>>> = net.layers().iter().map(|l| vec![Vec::new(); l.len()]).collect();
    let mut in_terms = out_terms.clone();
    let mut ones: Vec<Vec<(VarId, T)>> = vec![Vec::new(); n];
    let mut value_terms = Vec::new();
    for (e, w) in edges.iter().zip(&omega) {
        out_terms[e.layer][e.from].push((*w, T::one()));
        in_terms[e.layer + 1][e.to].push((*w, T::one()));
        if e.label == 1 {
            ones[e.layer].push((*w, T::one()));
        }
        if e.layer + 1 == n {
            value_terms.push((*w, -net.terminal_values()[e.to].clone()));
        }
    }
    let mut node_rows = Vec::with_capacity(net.num_nodes());
    for (j, layer) in net.layers().iter().enumerate() {
        for u in 0..layer.len() {
            let row = if j == 0 {
                model.add_row("root", std::mem::take(&mut out_terms[0][u]), Sense::Eq, T::one())
            } else if j == n {
                model.add_row(format!("t{u}"), std::mem::take(&mut in_terms[j][u]), Sense::Le, T::one())
            } else {
                let mut terms = std::mem::take(&mut out_terms[j][u]);
                terms.extend(in_terms[j][u].drain(..).map(|(v, c)| (v, -c)));
                model.add_row(format!("f{j}_{u}"), terms, Sense::Eq, T::zero())
            };
            node_rows.push(row);
        }
    }
    let coupling_rows = (0..n)
        .map(|j| {
            let mut terms = std::mem::take(&mut ones[j]);
            terms.push((x[net.order()[j]], -T::one()));
            model.add_row(format!("lay{j}"), terms, Sense::Eq, T::zero())
        })
        .collect();
    let value_row = z.map(|z| {
        value_terms.push((z, T::one()));
        model.add_row("value", value_terms, Sense::Eq, T::zero())
    });
    FlowPolytope { edges, omega, node_rows, coupling_rows, value_row, infeasible: false }
}

fn add_value_variable<T: Scalar>(bm: &mut BilevelModel<T>, inst: &BilevelInstance<T>, lo: T, hi: T) -> VarId {
    let z = bm.model.add_var("z", Some(lo), Some(hi));
    // d·y <= z: the follower response may not be worse than the value.
    let mut terms = nonzero(&bm.y, inst.d.iter().cloned());
    terms.push((z, -T::one()));
    bm.model.add_row("follower_value", terms, Sense::Le, T::zero());
    bm.z = Some(z);
    z
}

fn value_bounds<T: Scalar>(values: &[T]) -> (T, T) {
    let lo = values.iter().cloned().reduce(T::min_of).unwrap_or_else(T::zero);
    let hi = values.iter().cloned().reduce(T::max_of).unwrap_or_else(T::zero);
    (lo, hi)
}

/// High-point relaxation plus `d·y <= z` with `(x, z)` in the flow
/// polytope of `net`.
pub fn build_strengthened<T: Scalar>(inst: &BilevelInstance<T>, net: &ValueNetwork<T>) -> (BilevelModel<T>, FlowPolytope) {
    let mut bm = build_hpr(inst);
    bm.model.name = format!("{}_network", inst.name);
    let (lo, hi) = value_bounds(net.terminal_values());
    let z = add_value_variable(&mut bm, inst, lo, hi);
    let x = bm.x.clone();
    let flow = build_flow_polytope(&mut bm.model, net, &x, Some(z));
    (bm, flow)
}

/// Indicator variables, one per reachable state with a feasible follower.
#[derive(Clone, Debug)]
pub struct IndicatorFragment {
    pub gamma: Vec<VarId>,
    pub states: Vec<crate::numerics::StateVector>,
}

/// Appends `A·x = Σ s·γ_s`, `Σ γ_s = 1`, `z = Σ φ̄(s)·γ_s`.
pub fn build_indicator_model<T: Scalar>(
    model: &mut MilpModel<T>,
    oracle: &FollowerOracle<'_, T>,
    x: &[VarId],
    z: VarId,
    opts: &NetworkOptions,
) -> Result<IndicatorFragment, NetworkError> {
    let layers = enumerate_state_layers(oracle, opts)?;
    let states = layers.last().cloned().unwrap_or_default();
    let ia = oracle.interaction();
    let gamma: Vec<VarId> = (0..states.len()).map(|k| model.add_binary(format!("g{k}"))).collect();
    for i in 0..ia.m {
        let mut terms = nonzero(x, ia.a_rows[i].iter().map(|v| T::from_int(*v)));
        terms.extend(gamma.iter().zip(&states).filter(|(_, s)| s.0[i] != 0).map(|(g, s)| (*g, T::from_int(-s.0[i]))));
        model.add_row(format!("state{i}"), terms, Sense::Eq, T::zero());
    }
    model.add_row("one_state", gamma.iter().map(|g| (*g, T::one())).collect(), Sense::Eq, T::one());
    let mut terms = vec![(z, T::one())];
    for (g, s) in gamma.iter().zip(&states) {
        let v = oracle.phibar(s).value.into_finite().expect("enumerated states are feasible");
        if !v.is_zero() {
            terms.push((*g, -v));
        }
    }
    model.add_row("state_value", terms, Sense::Eq, T::zero());
    Ok(IndicatorFragment { gamma, states })
}

/// High-point relaxation plus `d·y <= z` with `(x, z)` given by state
/// indicators.
pub fn build_indicator_reformulation<T: Scalar>(
    oracle: &FollowerOracle<'_, T>,
    opts: &NetworkOptions,
) -> Result<(BilevelModel<T>, IndicatorFragment), NetworkError> {
    let inst = oracle.instance();
    let mut bm = build_hpr(inst);
    bm.model.name = format!("{}_indicator", inst.name);
    let z = add_value_variable(&mut bm, inst, oracle.value_lower(), oracle.value_upper());
    let x = bm.x.clone();
    let frag = build_indicator_model(&mut bm.model, oracle, &x, z, opts)?;
    Ok((bm, frag))
}

/// Per-row bound on `a_j·x + b_j·y - rhs_j` over all binary x and y.
pub fn row_slack_bounds(ia: &Interaction) -> Vec<i64> {
    (0..ia.m)
        .map(|i| {
            let pos = |r: &[i64]| r.iter().filter(|v| **v > 0).sum::<i64>();
            pos(&ia.a_rows[i]) + pos(&ia.b_rows[i]) - ia.rhs[i]
        })
        .collect()
}

/// Rows `j` on which some leader decision makes `ŷ` violate row `j` by
/// at least `epsilon`, with the coefficients of the switch constraint
/// `a_j·x + (ε + ā_j)·w <= rhs_j - b_j·ŷ + ā_j`.
pub(crate) fn blockable_rows(ia: &Interaction, a_bar: &[i64], epsilon: i64, y_hat: &[u8]) -> Vec<(usize, i64, i64)> {
    let act = ia.follower_activity(y_hat);
    (0..ia.m)
        .filter_map(|i| {
            let min_ax: i64 = ia.a_rows[i].iter().filter(|v| **v < 0).sum();
            (min_ax + act[i] <= ia.rhs[i] - epsilon).then(|| (i, epsilon + a_bar[i], ia.rhs[i] - act[i] + a_bar[i]))
        })
        .collect()
}

/// Registered follower responses and their switch variables.
#[derive(Clone, Debug)]
pub struct BlockingCutState<T> {
    pub samples: Vec<Vec<u8>>,
    registered: HashSet<Vec<u8>>,
    pub w: Vec<Vec<VarId>>,
    /// Upper bound on `d·y` anywhere in the model.
    pub big_m: T,
    pub a_bar: Vec<i64>,
    pub epsilon: i64,
}

impl<T: Scalar> BlockingCutState<T> {
    pub fn new(ia: &Interaction, big_m: T) -> Self {
        BlockingCutState {
            samples: Vec::new(),
            registered: HashSet::new(),
            w: Vec::new(),
            big_m,
            a_bar: row_slack_bounds(ia),
            epsilon: 1,
        }
    }

    pub fn contains(&self, y: &[u8]) -> bool {
        self.registered.contains(y)
    }
}

/// Adds the cut "if `ŷ` stays feasible for x then `d·y <= d·ŷ`".
/// Returns false (and changes nothing) when `ŷ` was already registered.
pub fn add_blocking_cut<T: Scalar>(
    bm: &mut BilevelModel<T>,
    inst: &BilevelInstance<T>,
    ia: &Interaction,
    state: &mut BlockingCutState<T>,
    y_hat: &[u8],
) -> bool {
    if state.registered.contains(y_hat) {
        log::warn!("blocking cut for {y_hat:?} already present");
        return false;
    }
    let k = state.samples.len();
    let value = crate::numerics::dot(&inst.d, y_hat);
    let slack = T::max_of(T::zero(), state.big_m.clone() - value.clone());
    let mut terms = nonzero(&bm.y, inst.d.iter().cloned());
    let mut ws = Vec::new();
    for (i, w_coef, rhs) in blockable_rows(ia, &state.a_bar, state.epsilon, y_hat) {
        let w = bm.model.add_binary(format!("wb{k}_{i}"));
        let mut row = nonzero(&bm.x, ia.a_rows[i].iter().map(|v| T::from_int(*v)));
        row.push((w, T::from_int(w_coef)));
        bm.model.add_row(format!("block{k}_{i}"), row, Sense::Le, T::from_int(rhs));
        if !slack.is_zero() {
            terms.push((w, -slack.clone()));
        }
        ws.push(w);
    }
    bm.model.add_row(format!("bound{k}"), terms, Sense::Le, value);
    state.registered.insert(y_hat.to_vec());
    state.samples.push(y_hat.to_vec());
    state.w.push(ws);
    true
}
