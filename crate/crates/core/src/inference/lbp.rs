//! Damped synchronous sum-product on the binary pairwise model.
//!
//! Clamped nodes are folded into their free neighbors' unary terms, so
//! messages only run between free nodes. Messages are scalar log-ratios
//! ("fields"): for an edge with coupling J = 2λ, the message from i to j is
//! `½[ln cosh(H + J) − ln cosh(H − J)]` where H is i's cavity field.

use alloc::vec;
use alloc::vec::Vec;

use super::{ComponentEval, Mode};
use crate::graph::{edge_log_potential, node_log_potential, FactorGraph, SufficientStats};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpOptions {
    pub max_iters: usize,
    /// Weight kept on the previous message in each update.
    pub damping: f64,
    /// Convergence threshold on the largest message change.
    pub tol: f64,
}

impl Default for LbpOptions {
    fn default() -> Self {
        LbpOptions { max_iters: 100, damping: 0.5, tol: 1e-6 }
    }
}

fn message(cavity: f64, coupling: f64) -> f64 {
    0.5 * (math::ln_cosh(cavity + coupling) - math::ln_cosh(cavity - coupling))
}

pub(super) fn evaluate(
    graph: &FactorGraph,
    comp: &[usize],
    mode: Mode,
    opts: &LbpOptions,
    want_marginals: bool,
) -> ComponentEval {
    let params = graph.params;
    let clamp = |n: usize| match mode {
        Mode::Clamped => graph.nodes[n].label.map(|l| l.value()),
        Mode::Free => None,
    };

    // Free nodes get local ids; clamped ones fold into constants.
    let mut free_id = alloc::collections::BTreeMap::new();
    let mut free_nodes = Vec::new();
    for &n in comp {
        if clamp(n).is_none() {
            free_id.insert(n, free_nodes.len());
            free_nodes.push(n);
        }
    }
    let nf = free_nodes.len();

    let mut log_const = 0.0;
    let mut stats = SufficientStats::default();
    let mut theta = vec![[0.0f64; 2]; nf]; // [θ(+1), θ(−1)]
    // (free id, clamp value) for every free–clamped edge
    let mut boundary: Vec<(usize, f64)> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();

    for &n in comp {
        let d = &graph.nodes[n].distances;
        match clamp(n) {
            Some(y) => {
                log_const += node_log_potential(d, y, &params);
                stats.add_node(d, y);
            }
            None => {
                let f = free_id[&n];
                theta[f][0] += node_log_potential(d, 1.0, &params);
                theta[f][1] += node_log_potential(d, -1.0, &params);
            }
        }
        for &(m, _) in graph.neighbors(n) {
            if m <= n {
                continue;
            }
            match (clamp(n), clamp(m)) {
                (Some(a), Some(b)) => {
                    log_const += edge_log_potential(a, b, &params);
                    stats.edge -= (a - b) * (a - b);
                }
                (None, Some(c)) | (Some(c), None) => {
                    let f = if clamp(n).is_none() { free_id[&n] } else { free_id[&m] };
                    theta[f][0] += edge_log_potential(1.0, c, &params);
                    theta[f][1] += edge_log_potential(-1.0, c, &params);
                    boundary.push((f, c));
                }
                (None, None) => edges.push((free_id[&n], free_id[&m])),
            }
        }
    }

    let coupling = 2.0 * params.lambda;
    let field: Vec<f64> = theta.iter().map(|t| 0.5 * (t[0] - t[1])).collect();
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf]; // (edge, slot of message *into* this node)
    for (e, &(a, b)) in edges.iter().enumerate() {
        incident[a].push((e, 2 * e + 1)); // b → a
        incident[b].push((e, 2 * e)); // a → b
    }

    let mut msg = vec![0.0f64; 2 * edges.len()];
    let total_field = |msg: &[f64]| -> Vec<f64> {
        (0..nf).map(|f| field[f] + incident[f].iter().map(|&(_, slot)| msg[slot]).sum::<f64>()).collect()
    };

    let mut iterations = 1;
    let mut max_residual = 0.0;
    let mut converged = true;
    if !edges.is_empty() {
        converged = false;
        let mut next = vec![0.0f64; msg.len()];
        for it in 1..=opts.max_iters.max(1) {
            iterations = it;
            let h = total_field(&msg);
            max_residual = 0.0f64;
            for (e, &(a, b)) in edges.iter().enumerate() {
                let to_b = message(h[a] - msg[2 * e + 1], coupling);
                let to_a = message(h[b] - msg[2 * e], coupling);
                next[2 * e] = opts.damping * msg[2 * e] + (1.0 - opts.damping) * to_b;
                next[2 * e + 1] = opts.damping * msg[2 * e + 1] + (1.0 - opts.damping) * to_a;
                max_residual = max_residual.max((next[2 * e] - msg[2 * e]).abs());
                max_residual = max_residual.max((next[2 * e + 1] - msg[2 * e + 1]).abs());
            }
            core::mem::swap(&mut msg, &mut next);
            if max_residual < opts.tol {
                converged = true;
                break;
            }
        }
    }

    let h = total_field(&msg);
    let mut log_z = log_const;
    let mut p_free = vec![0.0; nf];
    for f in 0..nf {
        let log_norm = core::f64::consts::LN_2 + math::ln_cosh(h[f]);
        let lp = [h[f] - log_norm, -h[f] - log_norm];
        let p = math::sigmoid(2.0 * h[f]);
        p_free[f] = p;
        let degree = incident[f].len() as f64;
        log_z += p * theta[f][0] + (1.0 - p) * theta[f][1];
        log_z -= (degree - 1.0) * math::entropy_from_logs(&lp);
        stats.add_node(&graph.nodes[free_nodes[f]].distances, 2.0 * p - 1.0);
    }
    for &(f, c) in &boundary {
        let p_disagree = if c > 0.0 { 1.0 - p_free[f] } else { p_free[f] };
        stats.edge -= 4.0 * p_disagree;
    }
    for (e, &(a, b)) in edges.iter().enumerate() {
        let ca = h[a] - msg[2 * e + 1];
        let cb = h[b] - msg[2 * e];
        // order: (+,+), (+,−), (−,+), (−,−)
        let mut logits = [0.0f64; 4];
        let mut k = 0;
        for ya in [1.0, -1.0] {
            for yb in [1.0, -1.0] {
                logits[k] = ca * ya + cb * yb + coupling * ya * yb;
                k += 1;
            }
        }
        let lse = logits.iter().fold(f64::NEG_INFINITY, |acc, &l| math::log_add_exp(acc, l));
        let logs = logits.map(|l| l - lse);
        let p_disagree = math::exp(logs[1]) + math::exp(logs[2]);
        log_z += -4.0 * params.lambda * p_disagree;
        log_z += math::entropy_from_logs(&logs);
        stats.edge -= 4.0 * p_disagree;
    }

    let p_pos = if want_marginals {
        comp.iter()
            .map(|&n| match clamp(n) {
                Some(y) => {
                    if y > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => p_free[free_id[&n]],
            })
            .collect()
    } else {
        Vec::new()
    };

    ComponentEval { log_z, expected: stats, p_pos, converged, iterations, max_residual }
}
