#![allow(dead_code)]

use microrec_core::corpus::{ItemIdx, Label, UserIdx};
use microrec_core::features::NodeDistances;
use microrec_core::graph::{BehaviorNode, FactorGraph, Params};
use microrec_core::influence::{Edge, EdgeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn node(id: usize, d: (f64, f64, f64), label: Option<Label>) -> BehaviorNode {
    BehaviorNode {
        id,
        user: UserIdx(id as u32),
        item: ItemIdx(id as u32),
        distances: NodeDistances { d_u: d.0, d_tp: d.1, d_kw: d.2 },
        label,
    }
}

pub fn edges(pairs: &[(usize, usize)]) -> EdgeSet {
    let mut v: Vec<Edge> = pairs
        .iter()
        .map(|&(a, b)| Edge { a: a.min(b), b: a.max(b), topic: 0, basis: 1.0 })
        .collect();
    v.sort_by_key(|e| (e.a, e.b));
    EdgeSet(v)
}

pub fn random_params(r: &mut impl Rng, bound: f64) -> Params {
    Params::from_array(std::array::from_fn(|_| r.random_range(-bound..=bound)))
}

fn random_nodes(r: &mut impl Rng, n: usize, clamp_prob: f64) -> Vec<BehaviorNode> {
    (0..n)
        .map(|id| {
            let d = (r.random_range(0.0..2.0), r.random_range(0.0..2.0), r.random_range(0.0..2.0));
            let label = if r.random_bool(clamp_prob) {
                Some(if r.random_bool(0.5) { Label::Like } else { Label::Dislike })
            } else {
                None
            };
            node(id, d, label)
        })
        .collect()
}

/// Up to `max_edges` distinct random edges over `n` nodes.
pub fn random_graph(r: &mut impl Rng, n: usize, max_edges: usize, clamp_prob: f64, params: Params) -> FactorGraph {
    let nodes = random_nodes(r, n, clamp_prob);
    let mut pairs = Vec::new();
    if n >= 2 {
        for _ in 0..max_edges {
            let a = r.random_range(0..n);
            let b = r.random_range(0..n);
            let key = (a.min(b), a.max(b));
            if a != b && !pairs.contains(&key) {
                pairs.push(key);
            }
        }
    }
    FactorGraph::new(nodes, edges(&pairs), params).unwrap()
}

/// A random forest: each node after the first attaches to an earlier one
/// with probability `attach`.
pub fn random_tree(r: &mut impl Rng, n: usize, attach: f64, clamp_prob: f64, params: Params) -> FactorGraph {
    let nodes = random_nodes(r, n, clamp_prob);
    let mut pairs = Vec::new();
    for v in 1..n {
        if r.random_bool(attach) {
            pairs.push((r.random_range(0..v), v));
        }
    }
    FactorGraph::new(nodes, edges(&pairs), params).unwrap()
}

/// φᵀS(Y) evaluated term by term from the model definition.
pub fn log_weight(g: &FactorGraph, y: &[f64]) -> f64 {
    let p = g.params;
    let mut w = 0.0;
    for n in &g.nodes {
        let d = &n.distances;
        w += -y[n.id] * p.alpha * d.d_u;
        w += -y[n.id] * p.beta * d.d_tp;
        w += -y[n.id] * p.gamma * d.d_kw;
    }
    for e in g.edges.iter() {
        w += -p.lambda * (y[e.a] - y[e.b]).powi(2);
    }
    w
}

/// Every labeling as a ±1 vector, with a flag for consistency with the clamps.
pub fn labelings(g: &FactorGraph) -> Vec<(Vec<f64>, bool)> {
    let n = g.nodes.len();
    (0..1u64 << n)
        .map(|mask| {
            let y: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let ok = g.nodes.iter().all(|nd| nd.label.is_none_or(|l| l.value() == y[nd.id]));
            (y, ok)
        })
        .collect()
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn brute_log_z(g: &FactorGraph, clamped: bool) -> f64 {
    let w: Vec<f64> =
        labelings(g).iter().filter(|(_, ok)| !clamped || *ok).map(|(y, _)| log_weight(g, y)).collect();
    logsumexp(&w)
}

/// Ω by double enumeration over the whole graph.
pub fn brute_omega(g: &FactorGraph) -> f64 {
    brute_log_z(g, true) - brute_log_z(g, false)
}

/// P(y_i = +1 | clamps) for every node.
pub fn brute_marginals(g: &FactorGraph) -> Vec<f64> {
    let all = labelings(g);
    let w: Vec<(Vec<f64>, f64)> =
        all.into_iter().filter(|(_, ok)| *ok).map(|(y, _)| { let lw = log_weight(g, &y); (y, lw) }).collect();
    let z = logsumexp(&w.iter().map(|(_, lw)| *lw).collect::<Vec<_>>());
    (0..g.nodes.len())
        .map(|i| w.iter().filter(|(y, _)| y[i] > 0.0).map(|(_, lw)| (lw - z).exp()).sum())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

use microrec_core::corpus::{Corpus, InteractionKind, InteractionRecord, ItemRecord, LabelRecord, UserRecord};

pub struct ItemSpec<'a> {
    pub author: usize,
    pub topics: &'a [f64],
    pub keywords: &'a [(&'a str, f64)],
}

pub fn uid(u: usize) -> String {
    format!("u{u:03}")
}

pub fn iid(i: usize) -> String {
    format!("i{i:03}")
}

/// Users `u000..`, items `i000..` in the given order; interactions target the item's author.
pub fn mini_corpus(
    n_users: usize,
    items: &[ItemSpec],
    interactions: &[(InteractionKind, usize, usize)],
    labels: &[(usize, usize, Option<Label>)],
) -> Corpus {
    let users = (0..n_users).map(|u| UserRecord { id: uid(u), followees: vec![] }).collect();
    let item_records = items
        .iter()
        .enumerate()
        .map(|(i, s)| ItemRecord {
            id: iid(i),
            author: uid(s.author),
            keywords: s.keywords.iter().map(|(t, w)| (t.to_string(), *w)).collect(),
            topics: s.topics.to_vec(),
            timestamp: i as i64,
        })
        .collect();
    let ixs = interactions
        .iter()
        .enumerate()
        .map(|(t, &(kind, actor, item))| InteractionRecord {
            kind,
            actor: uid(actor),
            target_author: uid(items[item].author),
            item: iid(item),
            timestamp: t as i64,
        })
        .collect();
    let labels = labels.iter().map(|&(u, i, label)| LabelRecord { user: uid(u), item: iid(i), label }).collect();
    Corpus::from_records(users, item_records, ixs, labels).unwrap()
}
