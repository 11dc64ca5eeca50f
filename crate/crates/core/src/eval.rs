//! Scoring predictions against withheld truth, and the per-feature
//! ablation harness that reruns the whole model with one input removed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::corpus::{Corpus, Label, Pair};
use crate::features::{Attribute, FeatureError, FeatureMask, FeatureTable};
use crate::graph::{FactorGraph, GraphError, Params};
use crate::inference::{predict, InferenceError, Prediction, PredictionRow, TrainError, TrainOptions, TrainTrace};
use crate::influence::{build_edges, EdgeParams, EdgeSet, InfluenceParams, InfluenceTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("confusion matrix has no decided pairs")]
    EmptyMatrix,
    #[error("prediction for pair {0:?} which has no truth label")]
    PredictionWithoutTruth(Pair),
    #[error("no prediction or abstention for truth pair {0:?}")]
    MissingPrediction(Pair),
    #[error("unknown ablation variant {0:?}")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub abstained: u64,
}

impl ConfusionMatrix {
    pub fn decided(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn total(&self) -> u64 {
        self.decided() + self.abstained
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Abstentions are excluded from every denominator.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.decided() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Ok(Metrics { accuracy: ratio(cm.tp + cm.tn, cm.decided()), precision, recall, f1: f1_score(precision, recall) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AbstainPolicy {
    /// Abstentions are counted but left out of the metrics.
    #[default]
    Excluded,
    /// Abstentions count as a −1 prediction.
    Negative,
}

impl AbstainPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AbstainPolicy::Excluded => "excluded",
            AbstainPolicy::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "excluded" => Some(AbstainPolicy::Excluded),
            "negative" => Some(AbstainPolicy::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

pub fn evaluate(
    predictions: &BTreeMap<Pair, Prediction>,
    truth: &BTreeMap<Pair, Label>,
    policy: AbstainPolicy,
) -> Result<MetricsReport, EvalError> {
    if let Some(pair) = predictions.keys().find(|p| !truth.contains_key(p)) {
        return Err(EvalError::PredictionWithoutTruth(*pair));
    }
    let mut cm = ConfusionMatrix::default();
    for (pair, &actual) in truth {
        let decision = *predictions.get(pair).ok_or(EvalError::MissingPrediction(*pair))?;
        let decision = match (decision, policy) {
            (Prediction::Abstain, AbstainPolicy::Negative) => Prediction::Dislike,
            (d, _) => d,
        };
        match (decision, actual) {
            (Prediction::Abstain, _) => cm.abstained += 1,
            (Prediction::Like, Label::Like) => cm.tp += 1,
            (Prediction::Like, Label::Dislike) => cm.fp += 1,
            (Prediction::Dislike, Label::Dislike) => cm.tn += 1,
            (Prediction::Dislike, Label::Like) => cm.fn_ += 1,
        }
    }
    Ok(MetricsReport { confusion: cm, metrics: metrics(&cm)? })
}

/// Predicts the most frequent known label (ties → −1) for every truth pair.
pub fn majority_baseline(
    known: &BTreeMap<Pair, Label>,
    truth: &BTreeMap<Pair, Label>,
) -> Result<MetricsReport, EvalError> {
    let likes = known.values().filter(|&&l| l == Label::Like).count();
    let guess = if 2 * likes > known.len() { Prediction::Like } else { Prediction::Dislike };
    let predictions = truth.keys().map(|&p| (p, guess)).collect();
    evaluate(&predictions, truth, AbstainPolicy::Excluded)
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    All,
    NoEdge,
    NoFn,
    NoKw,
    NoTp,
    NoRn,
    NoCn,
    NoMn,
    NoGn,
}

impl Variant {
    /// Report order.
    pub const ALL: [Variant; 9] = [
        Variant::All,
        Variant::NoEdge,
        Variant::NoFn,
        Variant::NoKw,
        Variant::NoTp,
        Variant::NoRn,
        Variant::NoCn,
        Variant::NoMn,
        Variant::NoGn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::All => "ALL",
            Variant::NoEdge => "NoEdge",
            Variant::NoFn => "NoFN",
            Variant::NoKw => "NoKW",
            Variant::NoTp => "NoTP",
            Variant::NoRn => "NoRN",
            Variant::NoCn => "NoCN",
            Variant::NoMn => "NoMN",
            Variant::NoGn => "NoGN",
        }
    }

    pub fn parse(s: &str) -> Result<Variant, EvalError> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| EvalError::UnknownVariant(s.into()))
    }

    pub fn feature_mask(self) -> FeatureMask {
        match self {
            Variant::All | Variant::NoEdge => FeatureMask::default(),
            Variant::NoFn => FeatureMask::dropping(Attribute::Fn),
            Variant::NoRn => FeatureMask::dropping(Attribute::Rn),
            Variant::NoCn => FeatureMask::dropping(Attribute::Cn),
            Variant::NoMn => FeatureMask::dropping(Attribute::Mn),
            Variant::NoGn => FeatureMask::dropping(Attribute::Gn),
            Variant::NoKw => FeatureMask { zero_kw: true, ..FeatureMask::default() },
            Variant::NoTp => FeatureMask { zero_tp: true, ..FeatureMask::default() },
        }
    }

    pub fn keeps_edges(self) -> bool {
        self != Variant::NoEdge
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl AblationRow {
    pub fn new(variant: Variant, m: &Metrics) -> Self {
        AblationRow { variant, accuracy: m.accuracy, precision: m.precision, recall: m.recall, f1: m.f1 }
    }
}

/// Everything that shapes one model run apart from the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelConfig {
    pub influence: InfluenceParams,
    pub edges: EdgeParams,
    pub train: TrainOptions,
    pub abstain_band: f64,
    pub policy: AbstainPolicy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("train: {0}")]
    Train(#[from] TrainError),
    #[error("predict: {0}")]
    Inference(#[from] InferenceError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
}

/// Features, edges, and the factor graph (at `cfg.train.init`) for one variant.
pub struct BuiltModel {
    pub features: FeatureTable,
    pub edges: EdgeSet,
    pub graph: FactorGraph,
}

pub fn build_model(corpus: &Corpus, cfg: &ModelConfig, variant: Variant) -> Result<BuiltModel, PipelineError> {
    let features = FeatureTable::build(corpus, &variant.feature_mask())?;
    let edges = if variant.keeps_edges() {
        let table = InfluenceTable::build(corpus, &cfg.influence);
        build_edges(corpus, &features.pairs, &table, &cfg.edges)
    } else {
        EdgeSet::default()
    };
    let graph = FactorGraph::from_features(corpus, &features, edges.clone(), cfg.train.init)?;
    Ok(BuiltModel { features, edges, graph })
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub row: AblationRow,
    pub report: MetricsReport,
    pub params: Params,
    pub trace: TrainTrace,
    pub predictions: Vec<PredictionRow>,
}

/// Builds, trains, predicts, and scores one variant.
pub fn run_variant(
    corpus: &Corpus,
    truth: &BTreeMap<Pair, Label>,
    cfg: &ModelConfig,
    variant: Variant,
) -> Result<VariantRun, PipelineError> {
    let model = build_model(corpus, cfg, variant)?;
    let (params, trace) = crate::inference::train(&model.graph, &cfg.train)?;
    let predictions = predict(&model.graph, params, &cfg.train.engine, cfg.abstain_band)?;
    let decided: BTreeMap<Pair, Prediction> = predictions
        .iter()
        .map(|r| {
            let n = &model.graph.nodes[r.node];
            ((n.user, n.item), r.decision)
        })
        .collect();
    let report = evaluate(&decided, truth, cfg.policy)?;
    Ok(VariantRun { row: AblationRow::new(variant, &report.metrics), report, params, trace, predictions })
}

/// One row per requested variant, in the order given.
pub fn ablate(
    corpus: &Corpus,
    truth: &BTreeMap<Pair, Label>,
    cfg: &ModelConfig,
    variants: &[Variant],
) -> Result<Vec<AblationRow>, PipelineError> {
    variants.iter().map(|&v| run_variant(corpus, truth, cfg, v).map(|r| r.row)).collect()
}

/// Aligned text table: metrics down, variants across.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "Item");
    for r in rows {
        let _ = write!(out, " {:>8}", r.variant.name());
    }
    out.push('\n');
    let lines: [(&str, fn(&AblationRow) -> f64); 4] = [
        ("Accuracy", |r| r.accuracy),
        ("Precision", |r| r.precision),
        ("Recall", |r| r.recall),
        ("F1-Score", |r| r.f1),
    ];
    for (label, get) in lines {
        let _ = write!(out, "{label:<10}");
        for r in rows {
            let _ = write!(out, " {:>8.4}", get(r));
        }
        out.push('\n');
    }
    out
}
