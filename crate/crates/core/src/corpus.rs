//! Users, items, interactions and the partial label set.
//!
//! A [`Corpus`] is built from flat records (one per input line) and is
//! immutable afterwards. Users and items are stored sorted by id, so the
//! dense indices [`UserIdx`] and [`ItemIdx`] order the same way the ids do
//! and everything downstream iterates deterministically.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Dense index of a user in [`Corpus::users`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserIdx(pub u32);

/// Dense index of an item in [`Corpus::items`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemIdx(pub u32);

impl UserIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A (user, item) behavior pair.
pub type Pair = (UserIdx, ItemIdx);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InteractionKind {
    Reply,
    Comment,
    Forward,
    Mention,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 4] = [
        InteractionKind::Reply,
        InteractionKind::Comment,
        InteractionKind::Forward,
        InteractionKind::Mention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Reply => "reply",
            InteractionKind::Comment => "comment",
            InteractionKind::Forward => "forward",
            InteractionKind::Mention => "mention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A known binary label: the user likes (+1) or dislikes (−1) the item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Dislike,
    Like,
}

impl Label {
    pub fn from_sign(y: i64) -> Option<Label> {
        match y {
            1 => Some(Label::Like),
            -1 => Some(Label::Dislike),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Like => 1,
            Label::Dislike => -1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.sign())
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Like => Label::Dislike,
            Label::Dislike => Label::Like,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: String,
    /// Sorted, deduplicated.
    pub followees: Vec<UserIdx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub author: UserIdx,
    /// At most three `(term, weight)` entries for a well-formed item.
    pub keywords: Vec<(String, f64)>,
    /// Probability vector over topics.
    pub topics: Vec<f64>,
    /// Stored for completeness; the model does not read it.
    pub timestamp: i64,
}

impl Item {
    /// Argmax of the topic vector, lowest index on ties.
    pub fn dominant_topic(&self) -> usize {
        math::argmax(&self.topics)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub actor: UserIdx,
    pub target_author: UserIdx,
    pub item: ItemIdx,
    pub timestamp: i64,
}

/// Y^K (known labels) and Y^U (pairs whose label is to be inferred).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSet {
    pub known: BTreeMap<Pair, Label>,
    pub unknown: BTreeSet<Pair>,
}

impl LabelSet {
    pub fn get(&self, pair: &Pair) -> Option<Label> {
        self.known.get(pair).copied()
    }

    /// Every behavior pair, known and unknown, in sorted order.
    pub fn pairs(&self) -> Vec<Pair> {
        let mut all: Vec<Pair> = self.known.keys().copied().chain(self.unknown.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.known.len() + self.unknown.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Flat records, one per input line, referencing entities by id.

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub id: String,
    pub followees: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub id: String,
    pub author: String,
    pub keywords: Vec<(String, f64)>,
    pub topics: Vec<f64>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub kind: InteractionKind,
    pub actor: String,
    pub target_author: String,
    pub item: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub user: String,
    pub item: String,
    /// `None` marks membership in Y^U.
    pub label: Option<Label>,
}

/// Which input list a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    User,
    Item,
    Interaction,
    Label,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::User => "users",
            RecordKind::Item => "items",
            RecordKind::Interaction => "interactions",
            RecordKind::Label => "labels",
        })
    }
}

/// Structural errors found while cross-referencing records. `index` is the
/// zero-based position of the offending record in its list.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate user id {id:?} ({kind} record {index})", kind = RecordKind::User)]
    DuplicateUser { index: usize, id: String },
    #[error("duplicate item id {id:?} ({kind} record {index})", kind = RecordKind::Item)]
    DuplicateItem { index: usize, id: String },
    #[error("unknown user id {id:?} referenced by {kind} record {index}")]
    UnknownUser { kind: RecordKind, index: usize, id: String },
    #[error("unknown item id {id:?} referenced by {kind} record {index}")]
    UnknownItem { kind: RecordKind, index: usize, id: String },
    #[error("duplicate label for pair ({user:?}, {item:?}) ({kind} record {index})", kind = RecordKind::Label)]
    DuplicateLabel { index: usize, user: String, item: String },
}

impl CorpusError {
    /// The record list and position that caused the error.
    pub fn location(&self) -> (RecordKind, usize) {
        match self {
            CorpusError::DuplicateUser { index, .. } => (RecordKind::User, *index),
            CorpusError::DuplicateItem { index, .. } => (RecordKind::Item, *index),
            CorpusError::UnknownUser { kind, index, .. } | CorpusError::UnknownItem { kind, index, .. } => {
                (*kind, *index)
            }
            CorpusError::DuplicateLabel { index, .. } => (RecordKind::Label, *index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusCounts {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub known: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub users: Vec<User>,
    pub items: Vec<Item>,
    pub interactions: Vec<Interaction>,
    pub labels: LabelSet,
    user_index: BTreeMap<String, UserIdx>,
    item_index: BTreeMap<String, ItemIdx>,
}

impl Corpus {
    pub fn from_records(
        users: Vec<UserRecord>,
        items: Vec<ItemRecord>,
        interactions: Vec<InteractionRecord>,
        labels: Vec<LabelRecord>,
    ) -> Result<Corpus, CorpusError> {
        let mut user_pos: BTreeMap<String, usize> = BTreeMap::new();
        for (index, u) in users.iter().enumerate() {
            if user_pos.insert(u.id.clone(), index).is_some() {
                return Err(CorpusError::DuplicateUser { index, id: u.id.clone() });
            }
        }
        let user_index: BTreeMap<String, UserIdx> =
            user_pos.keys().enumerate().map(|(i, id)| (id.clone(), UserIdx(i as u32))).collect();

        let mut item_pos: BTreeMap<String, usize> = BTreeMap::new();
        for (index, it) in items.iter().enumerate() {
            if item_pos.insert(it.id.clone(), index).is_some() {
                return Err(CorpusError::DuplicateItem { index, id: it.id.clone() });
            }
        }
        let item_index: BTreeMap<String, ItemIdx> =
            item_pos.keys().enumerate().map(|(i, id)| (id.clone(), ItemIdx(i as u32))).collect();

        let user_ref = |kind, index, id: &str| {
            user_index
                .get(id)
                .copied()
                .ok_or_else(|| CorpusError::UnknownUser { kind, index, id: id.into() })
        };
        let item_ref = |kind, index, id: &str| {
            item_index
                .get(id)
                .copied()
                .ok_or_else(|| CorpusError::UnknownItem { kind, index, id: id.into() })
        };

        let mut sorted_users = Vec::with_capacity(users.len());
        for &index in user_pos.values() {
            let rec = &users[index];
            let mut followees = Vec::with_capacity(rec.followees.len());
            for f in &rec.followees {
                followees.push(user_ref(RecordKind::User, index, f)?);
            }
            followees.sort_unstable();
            followees.dedup();
            sorted_users.push(User { id: rec.id.clone(), followees });
        }

        let mut sorted_items = Vec::with_capacity(items.len());
        for &index in item_pos.values() {
            let rec = &items[index];
            sorted_items.push(Item {
                id: rec.id.clone(),
                author: user_ref(RecordKind::Item, index, &rec.author)?,
                keywords: rec.keywords.clone(),
                topics: rec.topics.clone(),
                timestamp: rec.timestamp,
            });
        }

        let mut resolved = Vec::with_capacity(interactions.len());
        for (index, rec) in interactions.iter().enumerate() {
            resolved.push(Interaction {
                kind: rec.kind,
                actor: user_ref(RecordKind::Interaction, index, &rec.actor)?,
                target_author: user_ref(RecordKind::Interaction, index, &rec.target_author)?,
                item: item_ref(RecordKind::Interaction, index, &rec.item)?,
                timestamp: rec.timestamp,
            });
        }

        let mut label_set = LabelSet::default();
        for (index, rec) in labels.iter().enumerate() {
            let pair = (
                user_ref(RecordKind::Label, index, &rec.user)?,
                item_ref(RecordKind::Label, index, &rec.item)?,
            );
            if label_set.known.contains_key(&pair) || label_set.unknown.contains(&pair) {
                return Err(CorpusError::DuplicateLabel { index, user: rec.user.clone(), item: rec.item.clone() });
            }
            match rec.label {
                Some(l) => {
                    label_set.known.insert(pair, l);
                }
                None => {
                    label_set.unknown.insert(pair);
                }
            }
        }

        Ok(Corpus {
            users: sorted_users,
            items: sorted_items,
            interactions: resolved,
            labels: label_set,
            user_index,
            item_index,
        })
    }

    /// Flattens back to records. Reloading the output yields an equal corpus.
    pub fn to_records(&self) -> (Vec<UserRecord>, Vec<ItemRecord>, Vec<InteractionRecord>, Vec<LabelRecord>) {
        let users = self
            .users
            .iter()
            .map(|u| UserRecord {
                id: u.id.clone(),
                followees: u.followees.iter().map(|&f| self.user(f).id.clone()).collect(),
            })
            .collect();
        let items = self
            .items
            .iter()
            .map(|it| ItemRecord {
                id: it.id.clone(),
                author: self.user(it.author).id.clone(),
                keywords: it.keywords.clone(),
                topics: it.topics.clone(),
                timestamp: it.timestamp,
            })
            .collect();
        let interactions = self
            .interactions
            .iter()
            .map(|ix| InteractionRecord {
                kind: ix.kind,
                actor: self.user(ix.actor).id.clone(),
                target_author: self.user(ix.target_author).id.clone(),
                item: self.item(ix.item).id.clone(),
                timestamp: ix.timestamp,
            })
            .collect();
        let labels = self
            .labels
            .pairs()
            .into_iter()
            .map(|pair| LabelRecord {
                user: self.user(pair.0).id.clone(),
                item: self.item(pair.1).id.clone(),
                label: self.labels.get(&pair),
            })
            .collect();
        (users, items, interactions, labels)
    }

    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts {
            users: self.users.len(),
            items: self.items.len(),
            interactions: self.interactions.len(),
            known: self.labels.known.len(),
            unknown: self.labels.unknown.len(),
        }
    }

    pub fn user(&self, idx: UserIdx) -> &User {
        &self.users[idx.index()]
    }

    pub fn item(&self, idx: ItemIdx) -> &Item {
        &self.items[idx.index()]
    }

    pub fn user_idx(&self, id: &str) -> Option<UserIdx> {
        self.user_index.get(id).copied()
    }

    pub fn item_idx(&self, id: &str) -> Option<ItemIdx> {
        self.item_index.get(id).copied()
    }

    /// Topic dimension, taken from the first item (0 for an empty corpus).
    pub fn n_topics(&self) -> usize {
        self.items.first().map_or(0, |it| it.topics.len())
    }

    /// Replaces the label set. Pairs must reference existing entities.
    pub fn with_labels(mut self, labels: LabelSet) -> Corpus {
        debug_assert!(labels
            .pairs()
            .iter()
            .all(|(u, i)| u.index() < self.users.len() && i.index() < self.items.len()));
        self.labels = labels;
        self
    }
}

// ---------------------------------------------------------------------------
// Validation

pub const MAX_KEYWORDS: usize = 3;
const TOPIC_SUM_TOLERANCE: f64 = 1e-9;

/// A type invariant that does not hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TopicNotNormalized { item: String, sum: f64 },
    NegativeTopicMass { item: String },
    TopicDimensionMismatch { item: String, expected: usize, found: usize },
    TooManyKeywords { item: String, count: usize },
    NegativeKeywordWeight { item: String, term: String },
    SelfFollow { user: String },
}

/// Listed for the operator; not a broken invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    NoKeywords { item: String },
    NoInteractions { user: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TopicNotNormalized { item, sum } => {
                write!(f, "item {item}: topic vector sums to {sum}, expected 1")
            }
            Violation::NegativeTopicMass { item } => write!(f, "item {item}: negative topic entry"),
            Violation::TopicDimensionMismatch { item, expected, found } => {
                write!(f, "item {item}: {found} topics, expected {expected}")
            }
            Violation::TooManyKeywords { item, count } => {
                write!(f, "item {item}: {count} keywords, at most {MAX_KEYWORDS} allowed")
            }
            Violation::NegativeKeywordWeight { item, term } => {
                write!(f, "item {item}: keyword {term:?} has negative weight")
            }
            Violation::SelfFollow { user } => write!(f, "user {user} follows themselves"),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NoKeywords { item } => write!(f, "item {item}: no keywords"),
            Warning::NoInteractions { user } => write!(f, "user {user}: no interactions"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    /// True iff every type invariant holds. Warnings do not count.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let k = corpus.n_topics();

    for u in &corpus.users {
        let me = corpus.user_idx(&u.id).expect("indexed user");
        if u.followees.contains(&me) {
            report.violations.push(Violation::SelfFollow { user: u.id.clone() });
        }
    }

    for it in &corpus.items {
        if it.topics.len() != k {
            report.violations.push(Violation::TopicDimensionMismatch {
                item: it.id.clone(),
                expected: k,
                found: it.topics.len(),
            });
        }
        if it.topics.iter().any(|&p| p < 0.0) {
            report.violations.push(Violation::NegativeTopicMass { item: it.id.clone() });
        }
        let sum: f64 = it.topics.iter().sum();
        if !((sum - 1.0).abs() <= TOPIC_SUM_TOLERANCE) {
            report.violations.push(Violation::TopicNotNormalized { item: it.id.clone(), sum });
        }
        if it.keywords.len() > MAX_KEYWORDS {
            report.violations.push(Violation::TooManyKeywords { item: it.id.clone(), count: it.keywords.len() });
        }
        for (term, w) in &it.keywords {
            if !(*w >= 0.0) {
                report.violations.push(Violation::NegativeKeywordWeight { item: it.id.clone(), term: term.clone() });
            }
        }
        if it.keywords.is_empty() {
            report.warnings.push(Warning::NoKeywords { item: it.id.clone() });
        }
    }

    let mut active = alloc::vec![false; corpus.users.len()];
    for ix in &corpus.interactions {
        active[ix.actor.index()] = true;
        active[ix.target_author.index()] = true;
    }
    for (u, seen) in corpus.users.iter().zip(active) {
        if !seen {
            report.warnings.push(Warning::NoInteractions { user: u.id.clone() });
        }
    }
    report
}
