//! Topic-level direct influence between users and the indirect-influence
//! edges it induces between behavior nodes.
//!
//! Direct influence of A on B for topic k is `tanh(s / σ)` where `s` sums
//! kind weights over the interactions between A and B on items whose
//! dominant topic is k, each signed by B's known label on that item (+1
//! when B has no known label for it).
//!
//! Two behavior nodes are joined when their items share a topic (same
//! dominant topic, or topic-vector cosine ≥ τ) and a social-balance link
//! exists between them: both items come from the same author, or the two
//! users influence each other on the shared topic with magnitude ≥ δ.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{Corpus, InteractionKind, Pair, UserIdx};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceParams {
    pub sigma: f64,
    /// Indexed by [`InteractionKind`] (reply, comment, forward, mention).
    pub weights: [f64; 4],
}

impl Default for InfluenceParams {
    fn default() -> Self {
        InfluenceParams { sigma: 5.0, weights: [0.5, 0.5, 1.0, 0.25] }
    }
}

impl InfluenceParams {
    pub fn weight(&self, kind: InteractionKind) -> f64 {
        self.weights[kind.slot()]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InfluenceError {
    #[error("topic index {topic} out of range (corpus has {n_topics} topics)")]
    InvalidTopic { topic: usize, n_topics: usize },
    #[error("influence needs two distinct users (got {0:?} twice)")]
    SameUser(UserIdx),
}

/// Signed influence of `source` on `target` for `topic`, in (−1, 1).
pub fn direct_influence(
    corpus: &Corpus,
    params: &InfluenceParams,
    source: UserIdx,
    target: UserIdx,
    topic: usize,
) -> Result<f64, InfluenceError> {
    let n_topics = corpus.n_topics();
    if topic >= n_topics {
        return Err(InfluenceError::InvalidTopic { topic, n_topics });
    }
    if source == target {
        return Err(InfluenceError::SameUser(source));
    }
    let mut s = 0.0;
    for ix in &corpus.interactions {
        let between = (ix.actor == source && ix.target_author == target)
            || (ix.actor == target && ix.target_author == source);
        if !between || corpus.item(ix.item).dominant_topic() != topic {
            continue;
        }
        let sign = corpus.labels.get(&(target, ix.item)).map_or(1.0, |l| l.value());
        s += sign * params.weight(ix.kind);
    }
    Ok(math::tanh(s / params.sigma))
}

/// Direct influence for every ordered user pair that has interactions.
#[derive(Debug, Clone, Default)]
pub struct InfluenceTable {
    n_topics: usize,
    /// (source, target) → per-topic score.
    scores: BTreeMap<(UserIdx, UserIdx), Vec<f64>>,
}

impl InfluenceTable {
    pub fn build(corpus: &Corpus, params: &InfluenceParams) -> InfluenceTable {
        let n_topics = corpus.n_topics();
        let mut sums: BTreeMap<(UserIdx, UserIdx), Vec<f64>> = BTreeMap::new();
        for ix in &corpus.interactions {
            if ix.actor == ix.target_author {
                continue;
            }
            let topic = corpus.item(ix.item).dominant_topic();
            let w = params.weight(ix.kind);
            for (source, target) in [(ix.actor, ix.target_author), (ix.target_author, ix.actor)] {
                let sign = corpus.labels.get(&(target, ix.item)).map_or(1.0, |l| l.value());
                sums.entry((source, target)).or_insert_with(|| vec![0.0; n_topics])[topic] += sign * w;
            }
        }
        for v in sums.values_mut() {
            for s in v.iter_mut() {
                *s = math::tanh(*s / params.sigma);
            }
        }
        InfluenceTable { n_topics, scores: sums }
    }

    pub fn score(&self, source: UserIdx, target: UserIdx, topic: usize) -> f64 {
        self.scores.get(&(source, target)).map_or(0.0, |v| v[topic])
    }

    /// The larger-magnitude direction between two users (signed).
    pub fn between(&self, a: UserIdx, b: UserIdx, topic: usize) -> f64 {
        let ab = self.score(a, b, topic);
        let ba = self.score(b, a, topic);
        if ba.abs() > ab.abs() {
            ba
        } else {
            ab
        }
    }

    /// Unordered user pairs with any recorded interaction.
    pub fn linked_pairs(&self) -> BTreeSet<(UserIdx, UserIdx)> {
        self.scores.keys().map(|&(a, b)| if a < b { (a, b) } else { (b, a) }).collect()
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeParams {
    /// Cosine threshold for "related" topic vectors.
    pub tau: f64,
    /// Minimum |direct influence| for a cross-author link.
    pub delta: f64,
    pub d_max: usize,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams { tau: 0.7, delta: 0.3, d_max: 10 }
    }
}

/// Undirected edge between behavior nodes, `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub topic: usize,
    /// 1.0 for same-author closure, otherwise the influence score.
    pub basis: f64,
}

/// Basis recorded for same-author closure edges.
pub const SAME_AUTHOR_BASIS: f64 = 1.0;

/// Edges sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet(pub Vec<Edge>);

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Edge> {
        self.0.iter()
    }

    pub fn degrees(&self, n_nodes: usize) -> Vec<usize> {
        let mut deg = vec![0; n_nodes];
        for e in &self.0 {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = math::l2_norm(a);
    let nb = math::l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Topic both items weight most (argmax of the elementwise product).
pub fn shared_topic(a: &[f64], b: &[f64]) -> usize {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    math::argmax(&prod)
}

/// Rule (a): same dominant topic, or cosine ≥ τ.
pub fn topics_related(a: &[f64], b: &[f64], tau: f64) -> bool {
    math::argmax(a) == math::argmax(b) || cosine(a, b) >= tau
}

/// Builds the edge set over behavior nodes `pairs` (node id = position).
pub fn build_edges(corpus: &Corpus, pairs: &[Pair], table: &InfluenceTable, params: &EdgeParams) -> EdgeSet {
    let topics = |n: usize| corpus.item(pairs[n].1).topics.as_slice();
    let author = |n: usize| corpus.item(pairs[n].1).author;

    // (a, b) → (topic, basis); same-author closure wins over influence.
    let mut candidates: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();

    let mut by_author: BTreeMap<UserIdx, Vec<usize>> = BTreeMap::new();
    let mut by_user: BTreeMap<UserIdx, Vec<usize>> = BTreeMap::new();
    for n in 0..pairs.len() {
        by_author.entry(author(n)).or_default().push(n);
        by_user.entry(pairs[n].0).or_default().push(n);
    }

    for group in by_author.values() {
        for (x, &n) in group.iter().enumerate() {
            for &m in &group[x + 1..] {
                if topics_related(topics(n), topics(m), params.tau) {
                    candidates.insert((n, m), (shared_topic(topics(n), topics(m)), SAME_AUTHOR_BASIS));
                }
            }
        }
    }

    for (ua, ub) in table.linked_pairs() {
        let (Some(nodes_a), Some(nodes_b)) = (by_user.get(&ua), by_user.get(&ub)) else {
            continue;
        };
        for &n in nodes_a {
            for &m in nodes_b {
                let key = if n < m { (n, m) } else { (m, n) };
                if candidates.contains_key(&key) || !topics_related(topics(n), topics(m), params.tau) {
                    continue;
                }
                let k = shared_topic(topics(n), topics(m));
                let basis = table.between(ua, ub, k);
                if basis.abs() >= params.delta {
                    candidates.insert(key, (k, basis));
                }
            }
        }
    }

    EdgeSet(cap_degrees(candidates, pairs.len(), params.d_max))
}

/// Greedy degree cap: strongest |basis| first, then lexicographic ids.
pub(crate) fn cap_degrees(
    candidates: BTreeMap<(usize, usize), (usize, f64)>,
    n_nodes: usize,
    d_max: usize,
) -> Vec<Edge> {
    let mut order: Vec<Edge> =
        candidates.into_iter().map(|((a, b), (topic, basis))| Edge { a, b, topic, basis }).collect();
    order.sort_by(|x, y| match y.basis.abs().total_cmp(&x.basis.abs()) {
        Ordering::Equal => (x.a, x.b).cmp(&(y.a, y.b)),
        o => o,
    });
    let mut deg = vec![0usize; n_nodes];
    let mut kept = Vec::new();
    for e in order {
        if deg[e.a] < d_max && deg[e.b] < d_max {
            deg[e.a] += 1;
            deg[e.b] += 1;
            kept.push(e);
        }
    }
    kept.sort_by_key(|e| (e.a, e.b));
    kept
}
