//! Seeded synthetic corpora with heavy-tailed forwarding activity and
//! labels sampled from a planted factor-graph model.
//!
//! Each user has a favorite topic and a Zipf-distributed forward count.
//! Items carry 0.8 of their topic mass on a dominant topic. Every user gets
//! a candidate list (half from the favorite topic) that excludes their own
//! items and anything they interacted with, so direct influence and edges
//! do not depend on which labels are later revealed. True profiles are the
//! profile estimator applied to each user's favorite-topic candidates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Zipf};

use crate::corpus::{
    Corpus, CorpusError, InteractionKind, InteractionRecord, ItemRecord, Label, LabelRecord, Pair, UserRecord,
};
use crate::features::{FeatureError, FeatureMask, FeatureTable};
use crate::graph::{edge_log_potential, node_log_potential, BehaviorNode, FactorGraph, GraphError, Params};
use crate::influence::{build_edges, EdgeParams, InfluenceParams, InfluenceTable};
use crate::math;

/// Components up to this size are sampled exactly.
pub const EXACT_SAMPLE_MAX: usize = 16;
pub const GIBBS_SWEEPS: usize = 1000;

const DOMINANT_MASS: f64 = 0.8;
const KEYWORDS_PER_ITEM: usize = 3;
const FOLLOWEES_PER_USER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_topics: usize,
    pub vocab_size: usize,
    /// Tail exponent of per-user forward counts.
    pub powerlaw_exponent: f64,
    /// Largest forward count a user can draw.
    pub max_activity: usize,
    pub candidates_per_user: usize,
    pub planted_params: Params,
    pub known_fraction: f64,
    pub seed: u64,
    pub influence: InfluenceParams,
    pub edges: EdgeParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            n_items: 5000,
            n_topics: 10,
            vocab_size: 1000,
            powerlaw_exponent: 2.0,
            max_activity: 10_000,
            candidates_per_user: 20,
            planted_params: Params { alpha: 1.0, beta: 0.5, gamma: 0.5, lambda: 0.8 },
            known_fraction: 0.64,
            seed: 0,
            influence: InfluenceParams::default(),
            edges: EdgeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("{field} must be at least {min} (got {value})")]
    TooSmall { field: &'static str, value: usize, min: usize },
    #[error("known_fraction must lie strictly inside (0, 1) (got {0})")]
    KnownFraction(f64),
    #[error("powerlaw_exponent must be finite and > 1 (got {0})")]
    Exponent(f64),
    #[error("planted parameters must be finite")]
    NonFiniteParams,
    #[error("vocab_size {vocab_size} leaves fewer than {KEYWORDS_PER_ITEM} terms for each of {n_topics} topics")]
    VocabTooSmall { vocab_size: usize, n_topics: usize },
    #[error("{n_items} items cannot fill {per_user} candidates per user")]
    TooFewItems { n_items: usize, per_user: usize },
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (field, value, min) in [
            ("n_users", self.n_users, 2),
            ("n_items", self.n_items, 1),
            ("n_topics", self.n_topics, 1),
            ("vocab_size", self.vocab_size, 1),
            ("max_activity", self.max_activity, 1),
            ("candidates_per_user", self.candidates_per_user, 1),
        ] {
            if value < min {
                return Err(SynthError::TooSmall { field, value, min });
            }
        }
        if !(self.known_fraction > 0.0 && self.known_fraction < 1.0) {
            return Err(SynthError::KnownFraction(self.known_fraction));
        }
        if !(self.powerlaw_exponent.is_finite() && self.powerlaw_exponent > 1.0) {
            return Err(SynthError::Exponent(self.powerlaw_exponent));
        }
        if !self.planted_params.is_finite() {
            return Err(SynthError::NonFiniteParams);
        }
        if self.vocab_size / self.n_topics < KEYWORDS_PER_ITEM {
            return Err(SynthError::VocabTooSmall { vocab_size: self.vocab_size, n_topics: self.n_topics });
        }
        // Worst case a user authored or touched half the catalogue.
        if self.n_items < 2 * self.candidates_per_user {
            return Err(SynthError::TooFewItems { n_items: self.n_items, per_user: self.candidates_per_user });
        }
        Ok(())
    }
}

/// A generated corpus and the withheld labels of its Y^U pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub truth: BTreeMap<Pair, Label>,
}

#[derive(Clone, Copy)]
enum Stream {
    Users = 1,
    Items,
    Interactions,
    Candidates,
    Labels,
    Reveal,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

fn user_id(u: usize) -> String {
    format!("u{u:06}")
}

fn item_id(i: usize) -> String {
    format!("i{i:07}")
}

fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// One Zipf draw per user, truncated at `max_activity`.
pub fn sample_activity<R: Rng + ?Sized>(rng: &mut R, n_users: usize, exponent: f64, max_activity: usize) -> Vec<u64> {
    let zipf = Zipf::new(max_activity as f64, exponent).expect("validated exponent and cap");
    (0..n_users).map(|_| zipf.sample(rng) as u64).collect()
}

pub fn generate_corpus(config: &SynthConfig) -> Result<Synthetic, SynthError> {
    config.validate()?;
    let k = config.n_topics;

    // Users: favorite topic, activity, a few followees.
    let mut r = rng(config.seed, Stream::Users);
    let favorite: Vec<usize> = (0..config.n_users).map(|_| r.random_range(0..k)).collect();
    let activity = sample_activity(&mut r, config.n_users, config.powerlaw_exponent, config.max_activity);
    let users: Vec<UserRecord> = (0..config.n_users)
        .map(|u| {
            let mut followees = Vec::new();
            for _ in 0..FOLLOWEES_PER_USER.min(config.n_users - 1) {
                let mut f = r.random_range(0..config.n_users - 1);
                if f >= u {
                    f += 1;
                }
                followees.push(user_id(f));
            }
            UserRecord { id: user_id(u), followees }
        })
        .collect();

    // Items: author, dominant topic, topic mix, keywords from the topic's vocabulary slice.
    let mut r = rng(config.seed, Stream::Items);
    let slice = config.vocab_size / k;
    let term_zipf = Zipf::new(slice as f64, 1.0).expect("slice ≥ 3");
    let mut author = Vec::with_capacity(config.n_items);
    let mut dominant = Vec::with_capacity(config.n_items);
    let mut items = Vec::with_capacity(config.n_items);
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..config.n_items {
        let a = r.random_range(0..config.n_users);
        let t = r.random_range(0..k);
        let spread = dirichlet_ones(&mut r, k);
        let mut topics: Vec<f64> = spread.iter().map(|s| (1.0 - DOMINANT_MASS) * s).collect();
        topics[t] += DOMINANT_MASS;
        let mut ranks: Vec<usize> = Vec::with_capacity(KEYWORDS_PER_ITEM);
        while ranks.len() < KEYWORDS_PER_ITEM {
            let rank = term_zipf.sample(&mut r) as usize - 1;
            if !ranks.contains(&rank) {
                ranks.push(rank);
            }
        }
        let weights = dirichlet_ones(&mut r, KEYWORDS_PER_ITEM);
        let keywords = ranks.iter().zip(weights).map(|(&rank, w)| (format!("t{:05}", t * slice + rank), w)).collect();
        items.push(ItemRecord { id: item_id(i), author: user_id(a), keywords, topics, timestamp: i as i64 });
        author.push(a);
        dominant.push(t);
        by_topic[t].push(i);
    }

    // Interactions: each forward may bring a comment, reply or mention on the same item.
    let mut r = rng(config.seed, Stream::Interactions);
    let mut touched: Vec<Vec<usize>> = vec![Vec::new(); config.n_users];
    let mut interactions = Vec::new();
    let mut clock = 0i64;
    for u in 0..config.n_users {
        for _ in 0..activity[u] {
            let i = loop {
                let pool = &by_topic[favorite[u]];
                let i = if !pool.is_empty() && r.random_bool(0.7) {
                    pool[r.random_range(0..pool.len())]
                } else {
                    r.random_range(0..config.n_items)
                };
                if author[i] != u {
                    break i;
                }
            };
            touched[u].push(i);
            let mut push = |kind| {
                clock += 1;
                interactions.push(InteractionRecord {
                    kind,
                    actor: user_id(u),
                    target_author: user_id(author[i]),
                    item: item_id(i),
                    timestamp: clock,
                });
            };
            push(InteractionKind::Forward);
            for (kind, p) in [(InteractionKind::Comment, 0.3), (InteractionKind::Reply, 0.3), (InteractionKind::Mention, 0.1)] {
                if r.random_bool(p) {
                    push(kind);
                }
            }
        }
    }

    // Candidates: half from the favorite topic, excluding own and touched items.
    let mut r = rng(config.seed, Stream::Candidates);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut on_favorite: Vec<bool> = Vec::new();
    for u in 0..config.n_users {
        touched[u].sort_unstable();
        touched[u].dedup();
        let blocked = |i: usize, chosen: &[usize]| author[i] == u || touched[u].binary_search(&i).is_ok() || chosen.contains(&i);
        let mut chosen: Vec<usize> = Vec::with_capacity(config.candidates_per_user);
        let fav = &by_topic[favorite[u]];
        let want_fav = config.candidates_per_user / 2;
        let mut fav_pool: Vec<usize> = fav.iter().copied().filter(|&i| !blocked(i, &[])).collect();
        fav_pool.shuffle(&mut r);
        chosen.extend(fav_pool.into_iter().take(want_fav));
        let mut rest: Vec<usize> = (0..config.n_items).filter(|&i| !blocked(i, &chosen)).collect();
        rest.shuffle(&mut r);
        let missing = config.candidates_per_user - chosen.len();
        if rest.len() < missing {
            return Err(SynthError::TooFewItems { n_items: config.n_items, per_user: config.candidates_per_user });
        }
        chosen.extend(rest.into_iter().take(missing));
        chosen.sort_unstable();
        for i in chosen {
            pairs.push((u, i));
            on_favorite.push(dominant[i] == favorite[u]);
        }
    }

    // Planted graph: profiles from favorite-topic candidates, no clamps.
    let planted_labels: Vec<LabelRecord> = pairs
        .iter()
        .zip(&on_favorite)
        .map(|(&(u, i), &fav)| LabelRecord {
            user: user_id(u),
            item: item_id(i),
            label: if fav { Some(Label::Like) } else { None },
        })
        .collect();
    let planted_corpus = Corpus::from_records(users.clone(), items.clone(), interactions.clone(), planted_labels)?;
    let unlabeled = planted_corpus.clone().with_labels(Default::default());
    let features = FeatureTable::build(&planted_corpus, &FeatureMask::default())?;
    let table = InfluenceTable::build(&unlabeled, &config.influence);
    let edges = build_edges(&unlabeled, &features.pairs, &table, &config.edges);
    let nodes = features
        .pairs
        .iter()
        .zip(&features.distances)
        .enumerate()
        .map(|(id, (&(user, item), &distances))| BehaviorNode { id, user, item, distances, label: None })
        .collect();
    let graph = FactorGraph::new(nodes, edges, config.planted_params)?;

    let mut r = rng(config.seed, Stream::Labels);
    let labels = sample_labels(&graph, &mut r);

    // Reveal a fixed-size random subset.
    let mut r = rng(config.seed, Stream::Reveal);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut r);
    let n_known = math::round(config.known_fraction * labels.len() as f64) as usize;
    let mut revealed = vec![false; labels.len()];
    for &n in &order[..n_known] {
        revealed[n] = true;
    }

    let mut label_records = Vec::with_capacity(labels.len());
    let mut truth = BTreeMap::new();
    for (n, node) in graph.nodes.iter().enumerate() {
        let u = &planted_corpus.user(node.user).id;
        let i = &planted_corpus.item(node.item).id;
        label_records.push(LabelRecord {
            user: u.clone(),
            item: i.clone(),
            label: if revealed[n] { Some(labels[n]) } else { None },
        });
        if !revealed[n] {
            truth.insert((node.user, node.item), labels[n]);
        }
    }
    let corpus = Corpus::from_records(users, items, interactions, label_records)?;
    Ok(Synthetic { corpus, truth })
}

/// Draws one full labeling from the graph's model (clamps are ignored).
pub fn sample_labels<R: Rng + ?Sized>(graph: &FactorGraph, rng: &mut R) -> Vec<Label> {
    let mut y = vec![-1.0f64; graph.nodes.len()];
    for comp in graph.components() {
        if comp.len() <= EXACT_SAMPLE_MAX {
            sample_exact(graph, comp, &mut y, rng);
        } else {
            sample_gibbs(graph, comp, &mut y, rng, GIBBS_SWEEPS);
        }
    }
    y.into_iter().map(|v| if v > 0.0 { Label::Like } else { Label::Dislike }).collect()
}

fn sample_exact<R: Rng + ?Sized>(graph: &FactorGraph, comp: &[usize], y: &mut [f64], rng: &mut R) {
    let params = graph.params;
    let n = comp.len();
    let mut local = BTreeMap::new();
    for (x, &v) in comp.iter().enumerate() {
        local.insert(v, x);
    }
    let mut logw = Vec::with_capacity(1 << n);
    for mask in 0u32..(1u32 << n) {
        let val = |x: usize| if mask >> x & 1 == 1 { 1.0 } else { -1.0 };
        let mut w = 0.0;
        for (x, &v) in comp.iter().enumerate() {
            w += node_log_potential(&graph.nodes[v].distances, val(x), &params);
            for &(nb, _) in graph.neighbors(v) {
                if nb > v {
                    w += edge_log_potential(val(x), val(local[&nb]), &params);
                }
            }
        }
        logw.push(w);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|w| math::exp(w - max)).sum();
    let mut target = rng.random::<f64>() * total;
    let mut pick = logw.len() - 1;
    for (m, w) in logw.iter().enumerate() {
        target -= math::exp(w - max);
        if target < 0.0 {
            pick = m;
            break;
        }
    }
    for (x, &v) in comp.iter().enumerate() {
        y[v] = if pick >> x & 1 == 1 { 1.0 } else { -1.0 };
    }
}

fn sample_gibbs<R: Rng + ?Sized>(graph: &FactorGraph, comp: &[usize], y: &mut [f64], rng: &mut R, sweeps: usize) {
    let params = graph.params;
    for &v in comp {
        y[v] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    for _ in 0..sweeps {
        for &v in comp {
            let d = &graph.nodes[v].distances;
            let mut log_odds = node_log_potential(d, 1.0, &params) - node_log_potential(d, -1.0, &params);
            for &(nb, _) in graph.neighbors(v) {
                log_odds += edge_log_potential(1.0, y[nb], &params) - edge_log_potential(-1.0, y[nb], &params);
            }
            y[v] = if rng.random::<f64>() < math::sigmoid(log_odds) { 1.0 } else { -1.0 };
        }
    }
}

/// Forward interactions per user, users with none included as 0.
pub fn forward_counts(corpus: &Corpus) -> Vec<u64> {
    let mut counts = vec![0u64; corpus.users.len()];
    for ix in &corpus.interactions {
        if ix.kind == InteractionKind::Forward {
            counts[ix.actor.index()] += 1;
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Power-law fit

pub const MIN_FIT_COUNTS: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {MIN_FIT_COUNTS} counts at or above x_min (got {0})")]
    TooFewCounts(usize),
    #[error("counts must be positive integers")]
    NonPositive,
    #[error("x_min must be at least 1")]
    BadXmin,
    #[error("all counts are equal; the exponent is not identifiable")]
    Degenerate,
}

/// Discrete maximum-likelihood exponent over all counts (x_min = 1).
pub fn fit_power_law(counts: &[u64]) -> Result<f64, FitError> {
    fit_power_law_above(counts, 1)
}

/// Discrete maximum-likelihood exponent of the tail `counts ≥ x_min`.
pub fn fit_power_law_above(counts: &[u64], x_min: u64) -> Result<f64, FitError> {
    if x_min == 0 {
        return Err(FitError::BadXmin);
    }
    if counts.contains(&0) {
        return Err(FitError::NonPositive);
    }
    let tail: Vec<u64> = counts.iter().copied().filter(|&c| c >= x_min).collect();
    if tail.len() < MIN_FIT_COUNTS {
        return Err(FitError::TooFewCounts(tail.len()));
    }
    if tail.iter().all(|&c| c == tail[0]) {
        return Err(FitError::Degenerate);
    }
    let n = tail.len() as f64;
    let sum_ln: f64 = tail.iter().map(|&c| math::ln(c as f64)).sum();
    let q = x_min as f64;
    let loglik = |a: f64| -a * sum_ln - n * math::ln(hurwitz_zeta(a, q));
    Ok(golden_max(loglik, 1.0 + 1e-6, 50.0, 1e-10))
}

/// ζ(s, q) = Σ_{k≥0} (k + q)^{−s} for s > 1, q > 0: direct sum then an
/// Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const N: usize = 16;
    // B_2k / (2k)!
    const B: [f64; 6] =
        [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0, 1.0 / 47900160.0, -691.0 / 1307674368000.0];
    let mut sum = 0.0;
    for k in 0..N {
        sum += math::pow(k as f64 + q, -s);
    }
    let x = N as f64 + q;
    let xs = math::pow(x, -s);
    sum += x * xs / (s - 1.0) + 0.5 * xs;
    // s(s+1)…(s+2j−2) x^{−s−2j+1}
    let mut rising = s;
    let mut xp = xs / x;
    for (j, b) in B.iter().enumerate() {
        sum += b * rising * xp;
        let m = (2 * j) as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        xp /= x * x;
    }
    sum
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (math::sqrt(5.0) - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}
