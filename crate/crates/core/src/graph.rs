//! The factor graph over behavior nodes and the model it defines.
//!
//! Each node carries a binary label y ∈ {−1, +1}. The unnormalized
//! log-weight of a full labeling is `φᵀS(Y)` with
//!
//! ```text
//! S_f    = Σ_n −y_n · d_U(n)        S_g = Σ_n −y_n · d_TP(n)
//! S_h    = Σ_n −y_n · d_KW(n)       S_edge = Σ_(a,b) −(y_a − y_b)²
//! ```
//!
//! and φ = (α, β, γ, λ). Known labels (Y^K) are clamps. The
//! semi-supervised log-likelihood is the clamped log-partition minus the
//! free one; its gradient is the difference of expected statistics.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Sub};

use crate::corpus::{Corpus, ItemIdx, Label, UserIdx};
use crate::features::{FeatureTable, NodeDistances};
use crate::inference::{self, Engine, InferenceError, Mode};
use crate::influence::EdgeSet;

/// φ = {α, β, γ, λ}.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Params {
    pub const fn new(alpha: f64, beta: f64, gamma: f64, lambda: f64) -> Self {
        Params { alpha, beta, gamma, lambda }
    }

    pub const fn splat(v: f64) -> Self {
        Params::new(v, v, v, v)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.lambda]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Params::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm_sq(self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum()
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn dot(self, s: &SufficientStats) -> f64 {
        self.alpha * s.f + self.beta * s.g + self.gamma * s.h + self.lambda * s.edge
    }

    /// `self + step · dir`.
    pub fn stepped(self, dir: &SufficientStats, step: f64) -> Params {
        Params::new(
            self.alpha + step * dir.f,
            self.beta + step * dir.g,
            self.gamma + step * dir.h,
            self.lambda + step * dir.edge,
        )
    }
}

/// S = {Graph, f, g, h}, or an expectation / gradient in the same basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SufficientStats {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub edge: f64,
}

impl SufficientStats {
    pub fn to_array(self) -> [f64; 4] {
        [self.f, self.g, self.h, self.edge]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        SufficientStats { f: a[0], g: a[1], h: a[2], edge: a[3] }
    }

    pub fn scale(self, c: f64) -> Self {
        Self::from_array(self.to_array().map(|x| x * c))
    }

    pub fn norm(self) -> f64 {
        crate::math::sqrt(self.to_array().iter().map(|x| x * x).sum())
    }

    pub(crate) fn add_node(&mut self, d: &NodeDistances, y: f64) {
        self.f -= y * d.d_u;
        self.g -= y * d.d_tp;
        self.h -= y * d.d_kw;
    }
}

impl Add for SufficientStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        SufficientStats { f: self.f + o.f, g: self.g + o.g, h: self.h + o.h, edge: self.edge + o.edge }
    }
}

impl AddAssign for SufficientStats {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for SufficientStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        SufficientStats { f: self.f - o.f, g: self.g - o.g, h: self.h - o.h, edge: self.edge - o.edge }
    }
}

/// One candidate recommendation.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorNode {
    pub id: usize,
    pub user: UserIdx,
    pub item: ItemIdx,
    pub distances: NodeDistances,
    /// Clamp from Y^K, or `None` for Y^U.
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("node at position {position} has id {id}; ids must be dense 0..N")]
    NodeId { position: usize, id: usize },
    #[error("edge ({a}, {b}) is invalid: endpoints must be distinct ids below {n_nodes} with a < b")]
    EdgeEndpoints { a: usize, b: usize, n_nodes: usize },
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: usize, b: usize },
    #[error("labeling covers {given} of {expected} nodes")]
    IncompleteLabeling { given: usize, expected: usize },
    #[error("parameters must be finite")]
    NonFiniteParams,
}

/// Behavior nodes, indirect-influence edges, and the current φ.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    pub nodes: Vec<BehaviorNode>,
    pub edges: EdgeSet,
    pub params: Params,
    adjacency: Vec<Vec<(usize, usize)>>,
    components: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn new(nodes: Vec<BehaviorNode>, edges: EdgeSet, params: Params) -> Result<FactorGraph, GraphError> {
        if !params.is_finite() {
            return Err(GraphError::NonFiniteParams);
        }
        for (position, n) in nodes.iter().enumerate() {
            if n.id != position {
                return Err(GraphError::NodeId { position, id: n.id });
            }
        }
        let n_nodes = nodes.len();
        let mut adjacency = vec![Vec::new(); n_nodes];
        let mut seen = alloc::collections::BTreeSet::new();
        for (ei, e) in edges.iter().enumerate() {
            if e.a >= e.b || e.b >= n_nodes {
                return Err(GraphError::EdgeEndpoints { a: e.a, b: e.b, n_nodes });
            }
            if !seen.insert((e.a, e.b)) {
                return Err(GraphError::DuplicateEdge { a: e.a, b: e.b });
            }
            adjacency[e.a].push((e.b, ei));
            adjacency[e.b].push((e.a, ei));
        }
        let components = connected_components(&adjacency);
        Ok(FactorGraph { nodes, edges, params, adjacency, components })
    }

    /// One node per feature-table pair, in table order, clamped from the corpus labels.
    pub fn from_features(
        corpus: &Corpus,
        features: &FeatureTable,
        edges: EdgeSet,
        params: Params,
    ) -> Result<FactorGraph, GraphError> {
        let nodes = features
            .pairs
            .iter()
            .zip(&features.distances)
            .enumerate()
            .map(|(id, (&(user, item), &distances))| BehaviorNode {
                id,
                user,
                item,
                distances,
                label: corpus.labels.known.get(&(user, item)).copied(),
            })
            .collect();
        FactorGraph::new(nodes, edges, params)
    }

    pub fn with_params(&self, params: Params) -> FactorGraph {
        FactorGraph { params, ..self.clone() }
    }

    /// `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Connected components, each sorted, ordered by smallest node id.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn n_known(&self) -> usize {
        self.nodes.iter().filter(|n| n.label.is_some()).count()
    }

    pub fn n_unknown(&self) -> usize {
        self.nodes.len() - self.n_known()
    }

    /// Drops every edge (the ablation with no indirect influence).
    pub fn without_edges(&self) -> FactorGraph {
        FactorGraph::new(self.nodes.clone(), EdgeSet::default(), self.params).expect("valid nodes")
    }
}

fn connected_components(adjacency: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut comp_of = vec![usize::MAX; n];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp_of[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = Vec::new();
        comp_of[start] = id;
        stack.push(start);
        while let Some(v) = stack.pop() {
            members.push(v);
            for &(w, _) in &adjacency[v] {
                if comp_of[w] == usize::MAX {
                    comp_of[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// `α·(−y·d_U) + β·(−y·d_TP) + γ·(−y·d_KW)`.
pub fn node_log_potential(d: &NodeDistances, y: f64, params: &Params) -> f64 {
    -y * (params.alpha * d.d_u + params.beta * d.d_tp + params.gamma * d.d_kw)
}

/// `λ·(−(y_a − y_b)²)`.
pub fn edge_log_potential(y_a: f64, y_b: f64, params: &Params) -> f64 {
    let diff = y_a - y_b;
    -params.lambda * diff * diff
}

/// S(Y) for a complete labeling.
pub fn sufficient_stats(graph: &FactorGraph, labeling: &[Option<Label>]) -> Result<SufficientStats, GraphError> {
    let expected = graph.nodes.len();
    let given = labeling.iter().filter(|l| l.is_some()).count();
    if labeling.len() != expected || given != expected {
        return Err(GraphError::IncompleteLabeling { given, expected });
    }
    let y: Vec<f64> = labeling.iter().map(|l| l.expect("checked").value()).collect();
    let mut s = SufficientStats::default();
    for n in &graph.nodes {
        s.add_node(&n.distances, y[n.id]);
    }
    for e in graph.edges.iter() {
        let diff = y[e.a] - y[e.b];
        s.edge -= diff * diff;
    }
    Ok(s)
}

/// Ω and ∂Ω/∂φ at the graph's current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub omega: f64,
    pub gradient: SufficientStats,
    /// False if any approximate inference run hit its iteration cap.
    pub converged: bool,
}

/// Computes Ω = log Z(Y^K clamped) − log Z(free) and its gradient
/// E[S | Y^K] − E[S], component by component. Components without a clamped
/// node contribute exactly zero and are skipped.
pub fn objective(graph: &FactorGraph, engine: &Engine) -> Result<Objective, InferenceError> {
    let mut omega = 0.0;
    let mut gradient = SufficientStats::default();
    let mut converged = true;
    for comp in graph.components() {
        if comp.iter().all(|&n| graph.nodes[n].label.is_none()) {
            continue;
        }
        let clamped = inference::evaluate_component(graph, comp, Mode::Clamped, engine, false)?;
        let free = inference::evaluate_component(graph, comp, Mode::Free, engine, false)?;
        omega += clamped.log_z - free.log_z;
        gradient += clamped.expected - free.expected;
        converged &= clamped.converged && free.converged;
    }
    Ok(Objective { omega, gradient, converged })
}

pub fn log_likelihood(graph: &FactorGraph, engine: &Engine) -> Result<f64, InferenceError> {
    objective(graph, engine).map(|o| o.omega)
}

pub fn gradient(graph: &FactorGraph, engine: &Engine) -> Result<SufficientStats, InferenceError> {
    objective(graph, engine).map(|o| o.gradient)
}

/// `log Σ_Y exp(φᵀS(Y))` over every labeling, ignoring clamps.
pub fn free_log_partition(graph: &FactorGraph, engine: &Engine) -> Result<f64, InferenceError> {
    let mut total = 0.0;
    for comp in graph.components() {
        total += inference::evaluate_component(graph, comp, Mode::Free, engine, false)?.log_z;
    }
    Ok(total)
}
