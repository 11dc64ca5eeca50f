//! Per-pair user attributes, latent user profiles, and the squared
//! distances consumed by the node factors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Corpus, Interaction, InteractionKind, Label, Pair, UserIdx};
use crate::math;

pub const N_ATTRS: usize = 5;

/// Columns of the pair-attribute table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Attribute {
    /// Engagement events received by the author from anyone.
    Gn,
    /// Replies between the two users, either direction.
    Rn,
    /// Comments between the two users.
    Cn,
    /// Forwards between the two users.
    Fn,
    /// Mentions between the two users.
    Mn,
}

impl Attribute {
    pub const ALL: [Attribute; N_ATTRS] = [Attribute::Gn, Attribute::Rn, Attribute::Cn, Attribute::Fn, Attribute::Mn];

    pub fn column(self) -> usize {
        self as usize
    }

    fn of_kind(kind: InteractionKind) -> Attribute {
        match kind {
            InteractionKind::Reply => Attribute::Rn,
            InteractionKind::Comment => Attribute::Cn,
            InteractionKind::Forward => Attribute::Fn,
            InteractionKind::Mention => Attribute::Mn,
        }
    }
}

/// `[GN, RN, CN, FN, MN]`, raw counts or normalized to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairAttributes(pub [f64; N_ATTRS]);

impl PairAttributes {
    pub fn get(&self, a: Attribute) -> f64 {
        self.0[a.column()]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("pair attributes need two distinct users (got {0:?} twice)")]
    SameUser(UserIdx),
    #[error("topic dimension mismatch: profile has {profile}, item has {item}")]
    TopicDimension { profile: usize, item: usize },
}

/// Interaction counts indexed for pair lookups.
#[derive(Debug, Clone, Default)]
pub struct InteractionLog {
    received: Vec<u32>,
    pairs: BTreeMap<(UserIdx, UserIdx), [u32; 4]>,
}

fn unordered(a: UserIdx, b: UserIdx) -> (UserIdx, UserIdx) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl InteractionLog {
    pub fn new(n_users: usize, interactions: &[Interaction]) -> Self {
        let mut log = InteractionLog { received: vec![0; n_users], pairs: BTreeMap::new() };
        for ix in interactions {
            if ix.actor == ix.target_author {
                continue;
            }
            log.received[ix.target_author.index()] += 1;
            log.pairs.entry(unordered(ix.actor, ix.target_author)).or_default()[ix.kind.slot()] += 1;
        }
        log
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(corpus.users.len(), &corpus.interactions)
    }

    /// Raw attributes of `author` towards `user`: pairwise counts in both
    /// directions plus everything `author` received.
    pub fn pair_features(&self, author: UserIdx, user: UserIdx) -> Result<PairAttributes, FeatureError> {
        if author == user {
            return Err(FeatureError::SameUser(author));
        }
        Ok(self.pair_features_unchecked(author, user))
    }

    fn pair_features_unchecked(&self, author: UserIdx, user: UserIdx) -> PairAttributes {
        let mut out = [0.0; N_ATTRS];
        out[Attribute::Gn.column()] = f64::from(self.received.get(author.index()).copied().unwrap_or(0));
        if author != user {
            if let Some(counts) = self.pairs.get(&unordered(author, user)) {
                for kind in InteractionKind::ALL {
                    out[Attribute::of_kind(kind).column()] = f64::from(counts[kind.slot()]);
                }
            }
        }
        PairAttributes(out)
    }
}

/// Column-wise `log1p` followed by min-max scaling; constant columns map to 0.
pub fn normalize_features(table: &[PairAttributes]) -> Vec<PairAttributes> {
    let logged: Vec<[f64; N_ATTRS]> = table.iter().map(|r| r.0.map(math::ln_1p)).collect();
    let mut lo = [f64::INFINITY; N_ATTRS];
    let mut hi = [f64::NEG_INFINITY; N_ATTRS];
    for row in &logged {
        for c in 0..N_ATTRS {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    logged
        .into_iter()
        .map(|row| {
            let mut out = [0.0; N_ATTRS];
            for c in 0..N_ATTRS {
                let span = hi[c] - lo[c];
                out[c] = if span > 0.0 { (row[c] - lo[c]) / span } else { 0.0 };
            }
            PairAttributes(out)
        })
        .collect()
}

/// Sparse nonnegative vector, sorted by term id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec(pub Vec<(u32, f64)>);

impl SparseVec {
    /// Sums duplicate ids.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (id, w) in entries {
            match out.last_mut() {
                Some(last) if last.0 == id => last.1 += w,
                _ => out.push((id, w)),
            }
        }
        SparseVec(out)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.0.iter().map(|e| e.1 * e.1).sum())
    }

    /// Unit L2 norm, or unchanged when the norm is zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for e in &mut self.0 {
                e.1 /= n;
            }
        }
        self
    }

    /// `‖a − b‖²` over the union of supports.
    pub fn sq_dist(&self, other: &SparseVec) -> f64 {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let d = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    x.1 - y.1
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    x.1
                }
                (Some(x), None) => {
                    i += 1;
                    x.1
                }
                (_, Some(y)) => {
                    j += 1;
                    y.1
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }

    fn add_scaled(acc: &mut BTreeMap<u32, f64>, v: &SparseVec, scale: f64) {
        for &(id, w) in &v.0 {
            *acc.entry(id).or_insert(0.0) += scale * w;
        }
    }
}

/// Z_i: a user's latent profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProfile {
    pub u_vec: [f64; N_ATTRS],
    pub tp_vec: Vec<f64>,
    pub kw_vec: SparseVec,
}

/// X_j as seen by one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatures {
    pub pair_attr: [f64; N_ATTRS],
    pub tp: Vec<f64>,
    pub kw: SparseVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeDistances {
    pub d_u: f64,
    pub d_tp: f64,
    pub d_kw: f64,
}

pub fn node_distances(z: &LatentProfile, x: &ItemFeatures) -> Result<NodeDistances, FeatureError> {
    if z.tp_vec.len() != x.tp.len() {
        return Err(FeatureError::TopicDimension { profile: z.tp_vec.len(), item: x.tp.len() });
    }
    Ok(NodeDistances {
        d_u: math::sq_dist(&z.u_vec, &x.pair_attr),
        d_tp: math::sq_dist(&z.tp_vec, &x.tp),
        d_kw: z.kw_vec.sq_dist(&x.kw),
    })
}

/// Which inputs to suppress when building features (ablations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureMask {
    pub drop_attrs: [bool; N_ATTRS],
    pub zero_tp: bool,
    pub zero_kw: bool,
}

impl FeatureMask {
    pub fn dropping(attr: Attribute) -> Self {
        let mut m = FeatureMask::default();
        m.drop_attrs[attr.column()] = true;
        m
    }
}

/// Term ids for every keyword in the corpus, in sorted term order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    ids: BTreeMap<alloc::string::String, u32>,
}

impl Vocabulary {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut terms: Vec<&str> =
            corpus.items.iter().flat_map(|it| it.keywords.iter().map(|(t, _)| t.as_str())).collect();
        terms.sort_unstable();
        terms.dedup();
        Vocabulary { ids: terms.into_iter().enumerate().map(|(i, t)| (t.into(), i as u32)).collect() }
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Every behavior pair with its attributes, the profiles and distances.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    /// Sorted behavior pairs (known and unknown).
    pub pairs: Vec<Pair>,
    pub raw: Vec<PairAttributes>,
    /// Normalized and masked.
    pub normalized: Vec<PairAttributes>,
    /// Indexed by user.
    pub profiles: Vec<LatentProfile>,
    /// Users with no known positive, who received the global mean profile.
    pub cold: Vec<bool>,
    pub distances: Vec<NodeDistances>,
}

impl FeatureTable {
    pub fn build(corpus: &Corpus, mask: &FeatureMask) -> Result<FeatureTable, FeatureError> {
        let log = InteractionLog::from_corpus(corpus);
        let vocab = Vocabulary::from_corpus(corpus);
        let item_kw: Vec<SparseVec> = corpus
            .items
            .iter()
            .map(|it| {
                SparseVec::from_entries(
                    it.keywords.iter().filter_map(|(t, w)| vocab.id(t).map(|id| (id, *w))).collect(),
                )
            })
            .collect();

        let pairs = corpus.labels.pairs();
        let raw: Vec<PairAttributes> = pairs
            .iter()
            .map(|&(u, i)| log.pair_features_unchecked(corpus.item(i).author, u))
            .collect();
        let mut normalized = normalize_features(&raw);
        for row in &mut normalized {
            for (c, &drop) in mask.drop_attrs.iter().enumerate() {
                if drop {
                    row.0[c] = 0.0;
                }
            }
        }
        let row_of: BTreeMap<Pair, usize> = pairs.iter().enumerate().map(|(r, &p)| (p, r)).collect();

        let (profiles, cold) = build_profiles(corpus, &row_of, &normalized, &item_kw);

        let mut distances = Vec::with_capacity(pairs.len());
        for (r, &(u, i)) in pairs.iter().enumerate() {
            let x = ItemFeatures {
                pair_attr: normalized[r].0,
                tp: corpus.item(i).topics.clone(),
                kw: item_kw[i.index()].clone().normalized(),
            };
            let mut d = node_distances(&profiles[u.index()], &x)?;
            if mask.zero_tp {
                d.d_tp = 0.0;
            }
            if mask.zero_kw {
                d.d_kw = 0.0;
            }
            distances.push(d);
        }

        Ok(FeatureTable { pairs, raw, normalized, profiles, cold, distances })
    }
}

/// Per-user profiles from known positives only; cold users get the mean
/// of the warm users' profiles.
fn build_profiles(
    corpus: &Corpus,
    row_of: &BTreeMap<Pair, usize>,
    normalized: &[PairAttributes],
    item_kw: &[SparseVec],
) -> (Vec<LatentProfile>, Vec<bool>) {
    let k = corpus.n_topics();
    let n_users = corpus.users.len();
    let mut liked: Vec<Vec<Pair>> = vec![Vec::new(); n_users];
    for (&pair, &label) in &corpus.labels.known {
        if label == Label::Like {
            liked[pair.0.index()].push(pair);
        }
    }

    let mut profiles: Vec<Option<LatentProfile>> = Vec::with_capacity(n_users);
    for pairs in &liked {
        if pairs.is_empty() {
            profiles.push(None);
            continue;
        }
        let n = pairs.len() as f64;
        let mut u_vec = [0.0; N_ATTRS];
        let mut tp_vec = vec![0.0; k];
        let mut kw: BTreeMap<u32, f64> = BTreeMap::new();
        for pair in pairs {
            let attrs = &normalized[row_of[pair]].0;
            for c in 0..N_ATTRS {
                u_vec[c] += attrs[c];
            }
            let item = corpus.item(pair.1);
            for (t, p) in tp_vec.iter_mut().zip(&item.topics) {
                *t += p;
            }
            SparseVec::add_scaled(&mut kw, &item_kw[pair.1.index()], 1.0);
        }
        for v in &mut u_vec {
            *v /= n;
        }
        renormalize(&mut tp_vec);
        profiles.push(Some(LatentProfile {
            u_vec,
            tp_vec,
            kw_vec: SparseVec(kw.into_iter().collect()).normalized(),
        }));
    }

    let cold: Vec<bool> = profiles.iter().map(Option::is_none).collect();
    let global = mean_profile(profiles.iter().flatten(), k);
    let profiles = profiles.into_iter().map(|p| p.unwrap_or_else(|| global.clone())).collect();
    (profiles, cold)
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}

fn mean_profile<'a>(warm: impl Iterator<Item = &'a LatentProfile>, k: usize) -> LatentProfile {
    let mut u_vec = [0.0; N_ATTRS];
    let mut tp_vec = vec![0.0; k];
    let mut kw: BTreeMap<u32, f64> = BTreeMap::new();
    let mut n = 0usize;
    for p in warm {
        n += 1;
        for c in 0..N_ATTRS {
            u_vec[c] += p.u_vec[c];
        }
        for (t, x) in tp_vec.iter_mut().zip(&p.tp_vec) {
            *t += x;
        }
        SparseVec::add_scaled(&mut kw, &p.kw_vec, 1.0);
    }
    if n == 0 {
        let uniform = if k > 0 { 1.0 / k as f64 } else { 0.0 };
        return LatentProfile { u_vec, tp_vec: vec![uniform; k], kw_vec: SparseVec::default() };
    }
    let n = n as f64;
    for v in &mut u_vec {
        *v /= n;
    }
    renormalize(&mut tp_vec);
    LatentProfile { u_vec, tp_vec, kw_vec: SparseVec(kw.into_iter().map(|(id, w)| (id, w / n)).collect()) }
}
