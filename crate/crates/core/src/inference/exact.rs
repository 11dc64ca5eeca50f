//! Exhaustive enumeration over a component's free nodes (Gray-code order,
//! so each step flips one label and updates S incrementally).

use alloc::vec;
use alloc::vec::Vec;

use super::{ComponentEval, Mode};
use crate::graph::{FactorGraph, SufficientStats};
use crate::math;

pub(super) fn evaluate(graph: &FactorGraph, comp: &[usize], mode: Mode, want_marginals: bool) -> ComponentEval {
    let params = graph.params;
    let mut y: Vec<f64> = vec![0.0; comp.len()];
    let mut local = alloc::collections::BTreeMap::new();
    let mut free: Vec<usize> = Vec::new();
    for (li, &n) in comp.iter().enumerate() {
        local.insert(n, li);
        match (mode, graph.nodes[n].label) {
            (Mode::Clamped, Some(l)) => y[li] = l.value(),
            _ => {
                y[li] = -1.0;
                free.push(li);
            }
        }
    }

    // Neighbor lists in local ids.
    let nbrs: Vec<Vec<usize>> = comp.iter().map(|&n| graph.neighbors(n).iter().map(|&(m, _)| local[&m]).collect()).collect();

    let mut s = SufficientStats::default();
    for (li, &n) in comp.iter().enumerate() {
        s.add_node(&graph.nodes[n].distances, y[li]);
        for &lj in &nbrs[li] {
            if lj > li {
                let diff = y[li] - y[lj];
                s.edge -= diff * diff;
            }
        }
    }

    let mut max_w = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut acc = SufficientStats::default();
    let mut acc_pos = vec![0.0; if want_marginals { free.len() } else { 0 }];

    let n_configs: u64 = 1u64 << free.len();
    for k in 0..n_configs {
        if k > 0 {
            let li = free[k.trailing_zeros() as usize];
            let old = y[li];
            let d = &graph.nodes[comp[li]].distances;
            s.f += 2.0 * old * d.d_u;
            s.g += 2.0 * old * d.d_tp;
            s.h += 2.0 * old * d.d_kw;
            for &lj in &nbrs[li] {
                s.edge -= 4.0 * old * y[lj];
            }
            y[li] = -old;
        }
        let w = params.dot(&s);
        if w > max_w {
            if max_w > f64::NEG_INFINITY {
                let r = math::exp(max_w - w);
                total *= r;
                acc = acc.scale(r);
                for a in &mut acc_pos {
                    *a *= r;
                }
            }
            max_w = w;
        }
        let e = math::exp(w - max_w);
        total += e;
        acc += s.scale(e);
        if want_marginals {
            for (a, &li) in acc_pos.iter_mut().zip(&free) {
                if y[li] > 0.0 {
                    *a += e;
                }
            }
        }
    }

    let mut p_pos = Vec::new();
    if want_marginals {
        p_pos = y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        for (a, &li) in acc_pos.iter().zip(&free) {
            p_pos[li] = a / total;
        }
    }
    ComponentEval {
        log_z: max_w + math::ln(total),
        expected: acc.scale(1.0 / total),
        p_pos,
        converged: true,
        iterations: 1,
        max_residual: 0.0,
    }
}
