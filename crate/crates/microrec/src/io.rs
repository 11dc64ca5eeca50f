//! JSON Lines readers and writers for the corpus files and every stage
//! artifact. Parse errors carry the file and 1-based line number.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use microrec_core::eval::{AblationRow, ConfusionMatrix, Metrics};
use microrec_core::graph::Params;
use microrec_core::corpus::{
    Corpus, CorpusError, InteractionKind, InteractionRecord, ItemRecord, Label, LabelRecord, Pair, RecordKind,
    UserRecord,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Line { path: PathBuf, line: usize, msg: String },
    #[error("{}:{line}: {source}", path.display())]
    Corpus { path: PathBuf, line: usize, source: CorpusError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Parses every non-blank line; returns the records with their line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| IoError::Line { path: path.to_path_buf(), line: n + 1, msg: e.to_string() })?;
        out.push((n + 1, rec));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for row in rows {
        let line = serde_json::to_string(&row).expect("artifact rows serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Line { path: path.to_path_buf(), line: e.line(), msg: e.to_string() })
}

// ---------------------------------------------------------------------------
// Corpus files

#[derive(Debug, Serialize, Deserialize)]
pub struct UserLine {
    pub id: String,
    #[serde(default)]
    pub followees: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemLine {
    pub id: String,
    pub author: String,
    pub kw: Vec<(String, f64)>,
    pub tp: Vec<f64>,
    pub ts: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InteractionLine {
    pub kind: String,
    pub actor: String,
    pub target_author: String,
    pub item: String,
    pub ts: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelLine {
    pub user: String,
    pub item: String,
    pub y: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub users: PathBuf,
    pub items: PathBuf,
    pub interactions: PathBuf,
    pub labels: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            users: dir.join("users.jsonl"),
            items: dir.join("items.jsonl"),
            interactions: dir.join("interactions.jsonl"),
            labels: dir.join("labels.jsonl"),
        }
    }

    fn of(&self, kind: RecordKind) -> &Path {
        match kind {
            RecordKind::User => &self.users,
            RecordKind::Item => &self.items,
            RecordKind::Interaction => &self.interactions,
            RecordKind::Label => &self.labels,
        }
    }
}

fn parse_label(y: Option<i64>) -> Result<Option<Label>, String> {
    match y {
        None => Ok(None),
        Some(v) => Label::from_sign(v).map(Some).ok_or_else(|| format!("label must be 1, -1 or null (got {v})")),
    }
}

pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus, IoError> {
    let line_err = |path: &Path, line: usize, msg: String| IoError::Line { path: path.to_path_buf(), line, msg };

    let users: Vec<(usize, UserLine)> = read_jsonl(&paths.users)?;
    let items: Vec<(usize, ItemLine)> = read_jsonl(&paths.items)?;
    let interactions: Vec<(usize, InteractionLine)> = read_jsonl(&paths.interactions)?;
    let labels: Vec<(usize, LabelLine)> = read_jsonl(&paths.labels)?;

    let mut ix_records = Vec::with_capacity(interactions.len());
    for (line, r) in &interactions {
        let kind = InteractionKind::parse(&r.kind)
            .ok_or_else(|| line_err(&paths.interactions, *line, format!("unknown interaction kind {:?}", r.kind)))?;
        ix_records.push(InteractionRecord {
            kind,
            actor: r.actor.clone(),
            target_author: r.target_author.clone(),
            item: r.item.clone(),
            timestamp: r.ts,
        });
    }
    let mut label_records = Vec::with_capacity(labels.len());
    for (line, r) in &labels {
        let label = parse_label(r.y).map_err(|msg| line_err(&paths.labels, *line, msg))?;
        label_records.push(LabelRecord { user: r.user.clone(), item: r.item.clone(), label });
    }
    let line_numbers = |kind: RecordKind| -> Vec<usize> {
        match kind {
            RecordKind::User => users.iter().map(|(l, _)| *l).collect(),
            RecordKind::Item => items.iter().map(|(l, _)| *l).collect(),
            RecordKind::Interaction => interactions.iter().map(|(l, _)| *l).collect(),
            RecordKind::Label => labels.iter().map(|(l, _)| *l).collect(),
        }
    };

    let user_records = users.iter().map(|(_, r)| UserRecord { id: r.id.clone(), followees: r.followees.clone() }).collect();
    let item_records = items
        .iter()
        .map(|(_, r)| ItemRecord {
            id: r.id.clone(),
            author: r.author.clone(),
            keywords: r.kw.clone(),
            topics: r.tp.clone(),
            timestamp: r.ts,
        })
        .collect();

    Corpus::from_records(user_records, item_records, ix_records, label_records).map_err(|source| {
        let (kind, index) = source.location();
        let line = line_numbers(kind).get(index).copied().unwrap_or(0);
        IoError::Corpus { path: paths.of(kind).to_path_buf(), line, source }
    })
}

fn label_value(label: Option<Label>) -> Option<i64> {
    label.map(|l| i64::from(l.sign()))
}

pub fn write_corpus(paths: &CorpusPaths, corpus: &Corpus) -> Result<(), IoError> {
    let (users, items, interactions, labels) = corpus.to_records();
    write_jsonl(&paths.users, users.into_iter().map(|u| UserLine { id: u.id, followees: u.followees }))?;
    write_jsonl(
        &paths.items,
        items.into_iter().map(|i| ItemLine { id: i.id, author: i.author, kw: i.keywords, tp: i.topics, ts: i.timestamp }),
    )?;
    write_jsonl(
        &paths.interactions,
        interactions.into_iter().map(|x| InteractionLine {
            kind: x.kind.as_str().into(),
            actor: x.actor,
            target_author: x.target_author,
            item: x.item,
            ts: x.timestamp,
        }),
    )?;
    write_jsonl(
        &paths.labels,
        labels.into_iter().map(|l| LabelLine { user: l.user, item: l.item, y: label_value(l.label) }),
    )
}

// ---------------------------------------------------------------------------
// Withheld truth

pub fn write_truth(path: &Path, corpus: &Corpus, truth: &BTreeMap<Pair, Label>) -> Result<(), IoError> {
    write_jsonl(
        path,
        truth.iter().map(|(&(u, i), &l)| LabelLine {
            user: corpus.user(u).id.clone(),
            item: corpus.item(i).id.clone(),
            y: Some(i64::from(l.sign())),
        }),
    )
}

pub fn read_truth(path: &Path, corpus: &Corpus) -> Result<BTreeMap<Pair, Label>, IoError> {
    let mut truth = BTreeMap::new();
    for (line, r) in read_jsonl::<LabelLine>(path)? {
        let err = |msg: String| IoError::Line { path: path.to_path_buf(), line, msg };
        let label = parse_label(r.y).map_err(err)?.ok_or_else(|| err("truth labels cannot be null".into()))?;
        let u = corpus.user_idx(&r.user).ok_or_else(|| err(format!("unknown user id {:?}", r.user)))?;
        let i = corpus.item_idx(&r.item).ok_or_else(|| err(format!("unknown item id {:?}", r.item)))?;
        if truth.insert((u, i), label).is_some() {
            return Err(err(format!("duplicate truth for ({:?}, {:?})", r.user, r.item)));
        }
    }
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Stage artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLine {
    pub user: String,
    pub item: String,
    /// GN, RN, CN, FN, MN counts.
    pub raw: [f64; 5],
    /// Normalized and masked.
    pub attrs: [f64; 5],
    pub d_u: f64,
    pub d_tp: f64,
    pub d_kw: f64,
    pub cold_user: bool,
}

/// Behavior key used by the edge and graph files: `"<user>|<item>"`.
pub fn behavior_key(user: &str, item: &str) -> String {
    format!("{user}|{item}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLine {
    pub a: String,
    pub b: String,
    pub topic: usize,
    pub basis: f64,
}

/// One line of `graph.jsonl`: every node first, then every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GraphLine {
    Node { id: usize, user: String, item: String, d_u: f64, d_tp: f64, d_kw: f64, y: Option<i64> },
    Edge { a: usize, b: usize, topic: usize, basis: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsLine {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl From<Params> for ParamsLine {
    fn from(p: Params) -> Self {
        ParamsLine { alpha: p.alpha, beta: p.beta, gamma: p.gamma, lambda: p.lambda }
    }
}

impl From<&ParamsLine> for Params {
    fn from(p: &ParamsLine) -> Self {
        Params::new(p.alpha, p.beta, p.gamma, p.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub iteration: usize,
    pub omega: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub params: ParamsLine,
    pub inference_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub params: ParamsLine,
    pub iterations: usize,
    pub converged: bool,
    pub unknown_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub user: String,
    pub item: String,
    pub p_pos: f64,
    /// `null` marks an abstention.
    pub yhat: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLine {
    pub variant: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&AblationRow> for RowLine {
    fn from(r: &AblationRow) -> Self {
        RowLine { variant: r.variant.name().into(), accuracy: r.accuracy, precision: r.precision, recall: r.recall, f1: r.f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionLine {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub abstained: u64,
}

impl From<&ConfusionMatrix> for ConfusionLine {
    fn from(c: &ConfusionMatrix) -> Self {
        ConfusionLine { tp: c.tp, fp: c.fp, tn: c.tn, fn_: c.fn_, abstained: c.abstained }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&Metrics> for MetricsLine {
    fn from(m: &Metrics) -> Self {
        MetricsLine { accuracy: m.accuracy, precision: m.precision, recall: m.recall, f1: m.f1 }
    }
}

/// `report.json` from `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub policy: String,
    pub rows: Vec<RowLine>,
    pub confusion: ConfusionLine,
    /// Most-frequent-known-label predictor on the same truth.
    pub majority_baseline: MetricsLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: String,
    pub config_hash: String,
    /// Hash with `ablation.variant` left out; equal across variants.
    pub shared_hash: String,
    /// Keys whose values differ from the ALL variant's config.
    pub differs_in: Vec<String>,
}

/// `ablation.json` from `ablate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub rows: Vec<RowLine>,
    pub variants: Vec<VariantConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationLine {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub known: usize,
    pub unknown: usize,
    pub clean: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}
