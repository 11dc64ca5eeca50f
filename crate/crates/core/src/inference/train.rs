//! Gradient ascent on the regularized semi-supervised log-likelihood, and
//! thresholded prediction from marginals.

use alloc::vec::Vec;

use super::{marginals, Engine, InferenceError};
use crate::graph::{objective, FactorGraph, Params, SufficientStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub engine: Engine,
    pub max_iters: usize,
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    /// L2 penalty weight: the objective is Ω − μ‖φ‖².
    pub mu: f64,
    pub init: Params,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { engine: Engine::default(), max_iters: 200, tol: 1e-6, mu: 0.01, init: Params::splat(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training needs at least one clamped node")]
    NoClampedNodes,
    #[error("inference failed at iteration {iteration}: {source}")]
    Inference { iteration: usize, source: InferenceError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Ω at `params`.
    pub omega: f64,
    /// Ω − μ‖φ‖² at `params`.
    pub objective: f64,
    /// Norm of the objective's gradient at `params`.
    pub grad_norm: f64,
    /// Step that produced `params` (0 for the initial point).
    pub step: f64,
    pub params: Params,
    /// Whether every approximate inference run behind this point converged.
    pub inference_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// |Y^U| / |Y^K|.
    pub unknown_ratio: f64,
    /// Stopped on the tolerance (or a stationary point) rather than the cap.
    pub converged: bool,
}

struct Point {
    params: Params,
    omega: f64,
    objective: f64,
    grad: SufficientStats,
    converged: bool,
}

fn evaluate(graph: &mut FactorGraph, params: Params, opts: &TrainOptions, iteration: usize) -> Result<Point, TrainError> {
    graph.params = params;
    let o = objective(graph, &opts.engine).map_err(|source| TrainError::Inference { iteration, source })?;
    let penalty = SufficientStats::from_array(params.to_array()).scale(2.0 * opts.mu);
    Ok(Point {
        params,
        omega: o.omega,
        objective: o.omega - opts.mu * params.norm_sq(),
        grad: o.gradient - penalty,
        converged: o.converged,
    })
}

const MIN_STEP: f64 = 1e-12;

/// Fits φ by gradient ascent with backtracking. The first trial step is
/// 1.0; each later iteration starts from twice the last accepted step and
/// halves until the objective strictly improves.
pub fn train(graph: &FactorGraph, opts: &TrainOptions) -> Result<(Params, TrainTrace), TrainError> {
    let n_known = graph.n_known();
    if n_known == 0 {
        return Err(TrainError::NoClampedNodes);
    }
    let mut work = graph.clone();
    let mut current = evaluate(&mut work, opts.init, opts, 0)?;
    let record = |p: &Point, iteration: usize, step: f64| TraceRecord {
        iteration,
        omega: p.omega,
        objective: p.objective,
        grad_norm: p.grad.norm(),
        step,
        params: p.params,
        inference_converged: p.converged,
    };
    let mut records = alloc::vec![record(&current, 0, 0.0)];
    let mut converged = false;
    let mut step = 1.0;

    for iteration in 1..=opts.max_iters {
        if current.grad.norm() == 0.0 {
            converged = true;
            break;
        }
        let accepted = loop {
            let candidate = evaluate(&mut work, current.params.stepped(&current.grad, step), opts, iteration)?;
            // a non-converged Bethe value is not a trustworthy objective
            let trusted = candidate.converged || !current.converged;
            if trusted && candidate.objective > current.objective {
                break Some(candidate);
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(next) = accepted else {
            converged = true;
            break;
        };
        let delta = next.objective - current.objective;
        records.push(record(&next, iteration, step));
        current = next;
        if delta.abs() < opts.tol {
            converged = true;
            break;
        }
        step *= 2.0;
    }

    let trace = TrainTrace { records, unknown_ratio: graph.n_unknown() as f64 / n_known as f64, converged };
    Ok((current.params, trace))
}

/// A thresholded decision for one unknown node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Like,
    Dislike,
    Abstain,
}

impl Prediction {
    /// `+1` above `0.5 + band`, `−1` below `0.5 − band`, abstain inside the
    /// band. With a zero band the tie at exactly 0.5 goes to `−1`.
    pub fn decide(p_pos: f64, band: f64) -> Prediction {
        if p_pos > 0.5 + band {
            Prediction::Like
        } else if p_pos < 0.5 - band || band == 0.0 {
            Prediction::Dislike
        } else {
            Prediction::Abstain
        }
    }

    pub fn sign(self) -> Option<i8> {
        match self {
            Prediction::Like => Some(1),
            Prediction::Dislike => Some(-1),
            Prediction::Abstain => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub node: usize,
    pub p_pos: f64,
    pub decision: Prediction,
}

/// Decisions for every unknown node under `params`.
pub fn predict(graph: &FactorGraph, params: Params, engine: &Engine, band: f64) -> Result<Vec<PredictionRow>, InferenceError> {
    let g = graph.with_params(params);
    let m = marginals(&g, engine)?;
    Ok(g.nodes
        .iter()
        .filter(|n| n.label.is_none())
        .map(|n| PredictionRow { node: n.id, p_pos: m.p_pos[n.id], decision: Prediction::decide(m.p_pos[n.id], band) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_examples() {
        assert_eq!(Prediction::decide(0.9, 0.0), Prediction::Like);
        assert_eq!(Prediction::decide(0.5, 0.0), Prediction::Dislike);
        assert_eq!(Prediction::decide(0.52, 0.05), Prediction::Abstain);
        assert_eq!(Prediction::decide(0.3, 0.05), Prediction::Dislike);
    }
}
