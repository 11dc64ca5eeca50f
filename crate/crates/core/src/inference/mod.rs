//! Marginal inference over Y^U, parameter training, and prediction.
//!
//! Every quantity the model needs (log-partition, expected sufficient
//! statistics, per-node marginals) is computed one connected component at
//! a time, either by exhaustive enumeration or by loopy belief
//! propagation with the Bethe free energy standing in for the
//! log-partition.

mod exact;
mod lbp;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{FactorGraph, SufficientStats};

pub use lbp::LbpOptions;
pub use train::{predict, train, Prediction, PredictionRow, TraceRecord, TrainError, TrainOptions, TrainTrace};

/// Largest number of free variables the exact engine will enumerate.
pub const EXACT_CAP: usize = 20;

/// Which distribution to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Y^K fixed to its labels.
    Clamped,
    /// Every node free.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    /// Enumeration; errors on components above [`EXACT_CAP`] free nodes.
    Exact,
    /// Loopy belief propagation everywhere.
    Lbp(LbpOptions),
    /// Enumeration for components of at most `exact_max` nodes, LBP above.
    Auto { exact_max: usize, lbp: LbpOptions },
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Auto { exact_max: 12, lbp: LbpOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InferenceError {
    #[error(
        "exact enumeration over {free} free nodes exceeds the cap of {cap}; use the lbp or auto engine"
    )]
    ExactCapExceeded { free: usize, cap: usize },
}

/// Result of evaluating one component.
#[derive(Debug, Clone)]
pub(crate) struct ComponentEval {
    pub log_z: f64,
    pub expected: SufficientStats,
    /// Aligned with the component's node list; only when requested.
    pub p_pos: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

pub(crate) fn evaluate_component(
    graph: &FactorGraph,
    comp: &[usize],
    mode: Mode,
    engine: &Engine,
    want_marginals: bool,
) -> Result<ComponentEval, InferenceError> {
    match engine {
        Engine::Exact => {
            let free = match mode {
                Mode::Free => comp.len(),
                Mode::Clamped => comp.iter().filter(|&&n| graph.nodes[n].label.is_none()).count(),
            };
            if free > EXACT_CAP {
                return Err(InferenceError::ExactCapExceeded { free, cap: EXACT_CAP });
            }
            Ok(exact::evaluate(graph, comp, mode, want_marginals))
        }
        Engine::Lbp(opts) => Ok(lbp::evaluate(graph, comp, mode, opts, want_marginals)),
        Engine::Auto { exact_max, lbp: opts } => {
            if comp.len() <= (*exact_max).min(EXACT_CAP) {
                Ok(exact::evaluate(graph, comp, mode, want_marginals))
            } else {
                Ok(lbp::evaluate(graph, comp, mode, opts, want_marginals))
            }
        }
    }
}

/// Per-node P(y = +1 | Y^K, φ) with convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// Indexed by node id; clamped nodes report exactly 0 or 1.
    pub p_pos: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

pub fn marginals(graph: &FactorGraph, engine: &Engine) -> Result<Marginals, InferenceError> {
    let mut out = Marginals { p_pos: vec![0.0; graph.nodes.len()], converged: true, iterations: 0, max_residual: 0.0 };
    for comp in graph.components() {
        let eval = evaluate_component(graph, comp, Mode::Clamped, engine, true)?;
        for (&n, &p) in comp.iter().zip(&eval.p_pos) {
            out.p_pos[n] = p;
        }
        out.converged &= eval.converged;
        out.iterations = out.iterations.max(eval.iterations);
        out.max_residual = out.max_residual.max(eval.max_residual);
    }
    if graph.nodes.is_empty() {
        out.iterations = 1;
    }
    Ok(out)
}

/// Marginals by exhaustive enumeration of every component.
pub fn exact_marginals(graph: &FactorGraph) -> Result<Marginals, InferenceError> {
    let mut m = marginals(graph, &Engine::Exact)?;
    m.iterations = 1;
    m.converged = true;
    Ok(m)
}

/// Marginals by damped synchronous sum-product message passing.
pub fn lbp_marginals(graph: &FactorGraph, opts: &LbpOptions) -> Marginals {
    let mut m = marginals(graph, &Engine::Lbp(*opts)).expect("lbp never fails");
    m.iterations = m.iterations.max(1);
    m
}
