//! Pipeline stages. Each stage reads what it needs from the run directory
//! (or from memory when chained by `pipeline`) and writes its artifacts
//! back there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use microrec_core::corpus::{validate_corpus, Corpus, Label, Pair};
use microrec_core::eval::{
    build_model, evaluate, format_table, majority_baseline, run_variant, AblationRow, BuiltModel, Variant,
};
use microrec_core::features::FeatureTable;
use microrec_core::graph::Params;
use microrec_core::inference::{predict, train, Prediction, PredictionRow};
use microrec_core::synth::generate_corpus;
use rayon::prelude::*;

use crate::config::{DataSource, ResolvedConfig, RunConfig};
use crate::io::{self, *};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Validate,
    Features,
    BuildGraph,
    Train,
    Predict,
    Eval,
    Ablate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Validate => "validate",
            Stage::Features => "features",
            Stage::BuildGraph => "build-graph",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
        }
    }
}

/// Stages `pipeline` runs, in order. `synth` is skipped for file input.
pub const PIPELINE: [Stage; 7] =
    [Stage::Synth, Stage::Validate, Stage::Features, Stage::BuildGraph, Stage::Train, Stage::Predict, Stage::Eval];

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source:#}")]
pub struct StageError {
    pub stage: &'static str,
    pub source: anyhow::Error,
}

/// One run directory plus whatever earlier stages left in memory.
pub struct Session {
    pub resolved: ResolvedConfig,
    pub cfg: RunConfig,
    pub dir: PathBuf,
    threads: usize,
    corpus: Option<Corpus>,
    truth: Option<BTreeMap<Pair, Label>>,
    model: Option<BuiltModel>,
    params: Option<Params>,
    predictions: Option<BTreeMap<Pair, Prediction>>,
}

impl Session {
    /// Creates the run directory and writes the resolved config into it.
    pub fn open(resolved: ResolvedConfig, threads: usize) -> Result<Session> {
        let cfg = resolved.typed();
        let dir = resolved.run_dir();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let cfg_path = dir.join("config.ini");
        std::fs::write(&cfg_path, resolved.render()).with_context(|| format!("writing {}", cfg_path.display()))?;
        Ok(Session {
            resolved,
            cfg,
            dir,
            threads,
            corpus: None,
            truth: None,
            model: None,
            params: None,
            predictions: None,
        })
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), StageError> {
        let result = match stage {
            Stage::Synth => self.synth(),
            Stage::Validate => self.validate(),
            Stage::Features => self.features(),
            Stage::BuildGraph => self.build_graph(),
            Stage::Train => self.train(),
            Stage::Predict => self.predict(),
            Stage::Eval => self.eval(),
            Stage::Ablate => self.ablate(),
        };
        result.map_err(|source| StageError { stage: stage.name(), source })
    }

    pub fn pipeline(&mut self) -> Result<(), StageError> {
        for stage in PIPELINE {
            if stage == Stage::Synth && self.cfg.source == DataSource::Files {
                continue;
            }
            self.run(stage)?;
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn log(&self, stage: Stage, msg: impl std::fmt::Display) {
        eprintln!("[{}] {msg}", stage.name());
    }

    fn corpus_paths(&self) -> CorpusPaths {
        match self.cfg.source {
            DataSource::Synth => CorpusPaths::in_dir(&self.path("corpus")),
            DataSource::Files => {
                let p = &self.cfg.paths;
                CorpusPaths {
                    users: p.users.clone(),
                    items: p.items.clone(),
                    interactions: p.interactions.clone(),
                    labels: p.labels.clone(),
                }
            }
        }
    }

    fn truth_path(&self) -> Option<PathBuf> {
        match self.cfg.source {
            DataSource::Synth => Some(self.path("truth.jsonl")),
            DataSource::Files => self.cfg.paths.truth.clone(),
        }
    }

    fn corpus(&mut self) -> Result<&Corpus> {
        if self.corpus.is_none() {
            let paths = self.corpus_paths();
            if self.cfg.source == DataSource::Synth && !paths.users.exists() {
                bail!("no corpus in {}; run the synth stage first", self.dir.display());
            }
            self.corpus = Some(io::load_corpus(&paths)?);
        }
        Ok(self.corpus.as_ref().expect("loaded above"))
    }

    fn truth(&mut self) -> Result<&BTreeMap<Pair, Label>> {
        if self.truth.is_none() {
            let path = self.truth_path().context("data.truth is not set; evaluation needs withheld labels")?;
            self.corpus()?;
            let truth = io::read_truth(&path, self.corpus.as_ref().expect("loaded above"))?;
            self.truth = Some(truth);
        }
        Ok(self.truth.as_ref().expect("loaded above"))
    }

    fn model(&mut self) -> Result<&BuiltModel> {
        if self.model.is_none() {
            self.corpus()?;
            let corpus = self.corpus.as_ref().expect("loaded above");
            self.model = Some(build_model(corpus, &self.cfg.model, self.cfg.variant)?);
        }
        Ok(self.model.as_ref().expect("built above"))
    }

    fn params(&mut self) -> Result<Params> {
        if let Some(p) = self.params {
            return Ok(p);
        }
        let path = self.path("params.json");
        if !path.exists() {
            bail!("no trained parameters in {}; run the train stage first", self.dir.display());
        }
        let summary: TrainSummary = read_json(&path)?;
        let p = Params::from(&summary.params);
        self.params = Some(p);
        Ok(p)
    }

    fn key(&self, pair: Pair) -> (String, String) {
        let c = self.corpus.as_ref().expect("corpus loaded");
        (c.user(pair.0).id.clone(), c.item(pair.1).id.clone())
    }

    fn synth(&mut self) -> Result<()> {
        let synthetic = generate_corpus(&self.cfg.synth)?;
        let dir = self.path("corpus");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_corpus(&CorpusPaths::in_dir(&dir), &synthetic.corpus)?;
        write_truth(&self.path("truth.jsonl"), &synthetic.corpus, &synthetic.truth)?;
        let n = synthetic.corpus.counts();
        self.log(
            Stage::Synth,
            format_args!(
                "{} users, {} items, {} interactions, {} known, {} withheld",
                n.users, n.items, n.interactions, n.known, n.unknown
            ),
        );
        self.corpus = Some(synthetic.corpus);
        self.truth = Some(synthetic.truth);
        Ok(())
    }

    fn validate(&mut self) -> Result<()> {
        let corpus = self.corpus()?;
        let report = validate_corpus(corpus);
        let n = corpus.counts();
        let line = ValidationLine {
            users: n.users,
            items: n.items,
            interactions: n.interactions,
            known: n.known,
            unknown: n.unknown,
            clean: report.is_clean(),
            violations: report.violations.iter().map(|v| v.to_string()).collect(),
            warnings: report.warnings.iter().map(|w| w.to_string()).collect(),
        };
        write_json(&self.path("validation.json"), &line)?;
        self.log(Stage::Validate, format_args!("{} violations, {} warnings", line.violations.len(), line.warnings.len()));
        if !line.clean {
            bail!("corpus has {} violations, first: {}", line.violations.len(), line.violations[0]);
        }
        Ok(())
    }

    fn features(&mut self) -> Result<()> {
        self.model()?;
        let (corpus, model) = (self.corpus.as_ref().expect("loaded"), self.model.as_ref().expect("built"));
        let t: &FeatureTable = &model.features;
        let rows = t.pairs.iter().enumerate().map(|(n, &(u, i))| FeatureLine {
            user: corpus.user(u).id.clone(),
            item: corpus.item(i).id.clone(),
            raw: t.raw[n].0,
            attrs: t.normalized[n].0,
            d_u: t.distances[n].d_u,
            d_tp: t.distances[n].d_tp,
            d_kw: t.distances[n].d_kw,
            cold_user: t.cold[u.index()],
        });
        write_jsonl(&self.path("features.jsonl"), rows)?;
        let cold = t.cold.iter().filter(|&&c| c).count();
        self.log(Stage::Features, format_args!("{} behaviors, {} cold users", t.pairs.len(), cold));
        Ok(())
    }

    fn build_graph(&mut self) -> Result<()> {
        self.model()?;
        let model = self.model.as_ref().expect("built");
        let pairs = &model.features.pairs;
        let keys: Vec<(String, String)> = pairs.iter().map(|&p| self.key(p)).collect();
        let edges = model.edges.iter().map(|e| EdgeLine {
            a: behavior_key(&keys[e.a].0, &keys[e.a].1),
            b: behavior_key(&keys[e.b].0, &keys[e.b].1),
            topic: e.topic,
            basis: e.basis,
        });
        write_jsonl(&self.path("edges.jsonl"), edges)?;
        let g = &model.graph;
        let nodes = g.nodes.iter().map(|n| GraphLine::Node {
            id: n.id,
            user: keys[n.id].0.clone(),
            item: keys[n.id].1.clone(),
            d_u: n.distances.d_u,
            d_tp: n.distances.d_tp,
            d_kw: n.distances.d_kw,
            y: n.label.map(|l| i64::from(l.sign())),
        });
        let links = g.edges.iter().map(|e| GraphLine::Edge { a: e.a, b: e.b, topic: e.topic, basis: e.basis });
        write_jsonl(&self.path("graph.jsonl"), nodes.chain(links))?;
        let largest = g.components().iter().map(Vec::len).max().unwrap_or(0);
        self.log(
            Stage::BuildGraph,
            format_args!(
                "{} nodes ({} known), {} edges, {} components, largest {}",
                g.nodes.len(),
                g.n_known(),
                g.edges.len(),
                g.components().len(),
                largest
            ),
        );
        Ok(())
    }

    fn train(&mut self) -> Result<()> {
        self.model()?;
        let graph = &self.model.as_ref().expect("built").graph;
        let (params, trace) = train(graph, &self.cfg.model.train)?;
        let lines = trace.records.iter().map(|r| TraceLine {
            iteration: r.iteration,
            omega: r.omega,
            objective: r.objective,
            grad_norm: r.grad_norm,
            step: r.step,
            params: r.params.into(),
            inference_converged: r.inference_converged,
        });
        write_jsonl(&self.path("trace.jsonl"), lines)?;
        let iterations = trace.records.last().map_or(0, |r| r.iteration);
        let summary = TrainSummary {
            params: params.into(),
            iterations,
            converged: trace.converged,
            unknown_ratio: trace.unknown_ratio,
        };
        write_json(&self.path("params.json"), &summary)?;
        self.log(
            Stage::Train,
            format_args!(
                "{iterations} iterations, converged={}, phi=({:.4}, {:.4}, {:.4}, {:.4})",
                trace.converged, params.alpha, params.beta, params.gamma, params.lambda
            ),
        );
        self.params = Some(params);
        Ok(())
    }

    fn predict(&mut self) -> Result<()> {
        let params = self.params()?;
        self.model()?;
        let graph = &self.model.as_ref().expect("built").graph;
        let rows: Vec<PredictionRow> = predict(graph, params, &self.cfg.model.train.engine, self.cfg.model.abstain_band)?;
        let mut decided = BTreeMap::new();
        let mut lines = Vec::with_capacity(rows.len());
        for r in &rows {
            let n = &graph.nodes[r.node];
            let (user, item) = self.key((n.user, n.item));
            decided.insert((n.user, n.item), r.decision);
            lines.push(PredictionLine { user, item, p_pos: r.p_pos, yhat: r.decision.sign().map(i64::from) });
        }
        write_jsonl(&self.path("predictions.jsonl"), lines)?;
        let abstained = rows.iter().filter(|r| r.decision == Prediction::Abstain).count();
        self.log(Stage::Predict, format_args!("{} predictions, {abstained} abstentions", rows.len()));
        self.predictions = Some(decided);
        Ok(())
    }

    fn read_predictions(&mut self) -> Result<BTreeMap<Pair, Prediction>> {
        let path = self.path("predictions.jsonl");
        if !path.exists() {
            bail!("no predictions in {}; run the predict stage first", self.dir.display());
        }
        let corpus = self.corpus()?;
        let mut out = BTreeMap::new();
        for (line, r) in read_jsonl::<PredictionLine>(&path)? {
            let err = |msg: String| IoError::Line { path: path.clone(), line, msg };
            let u = corpus.user_idx(&r.user).ok_or_else(|| err(format!("unknown user id {:?}", r.user)))?;
            let i = corpus.item_idx(&r.item).ok_or_else(|| err(format!("unknown item id {:?}", r.item)))?;
            let d = match r.yhat {
                Some(1) => Prediction::Like,
                Some(-1) => Prediction::Dislike,
                None => Prediction::Abstain,
                Some(v) => return Err(err(format!("yhat must be 1, -1 or null (got {v})")).into()),
            };
            out.insert((u, i), d);
        }
        Ok(out)
    }

    fn eval(&mut self) -> Result<()> {
        let predictions = match self.predictions.take() {
            Some(p) => p,
            None => self.read_predictions()?,
        };
        self.truth()?;
        let truth = self.truth.as_ref().expect("loaded");
        let known = &self.corpus.as_ref().expect("loaded").labels.known;
        let policy = self.cfg.model.policy;
        let report = evaluate(&predictions, truth, policy)?;
        let baseline = majority_baseline(known, truth)?;
        let row = AblationRow::new(self.cfg.variant, &report.metrics);
        let out = Report {
            config_hash: self.resolved.hash(),
            policy: policy.as_str().into(),
            rows: vec![RowLine::from(&row)],
            confusion: (&report.confusion).into(),
            majority_baseline: (&baseline.metrics).into(),
        };
        write_json(&self.path("report.json"), &out)?;
        write_text(&self.path("report.txt"), &format_table(&[row]))?;
        let m = report.metrics;
        self.log(
            Stage::Eval,
            format_args!(
                "accuracy {:.4}, precision {:.4}, recall {:.4}, F1 {:.4}",
                m.accuracy, m.precision, m.recall, m.f1
            ),
        );
        self.predictions = Some(predictions);
        Ok(())
    }

    fn ablate(&mut self) -> Result<()> {
        let base = {
            let mut c = self.resolved.clone();
            c.set("ablation.variant", Variant::All.name())?;
            c
        };
        let mut configs = Vec::with_capacity(Variant::ALL.len());
        for v in Variant::ALL {
            let mut c = base.clone();
            c.set("ablation.variant", v.name())?;
            let differs_in = base.diff(&c);
            if differs_in.iter().any(|k| k != "ablation.variant") {
                bail!("variant {} differs from ALL in {differs_in:?}", v.name());
            }
            configs.push((v, c, differs_in));
        }
        if self.cfg.source == DataSource::Synth && self.corpus.is_none() && !self.corpus_paths().users.exists() {
            self.synth()?;
        }
        self.truth()?;
        let corpus = self.corpus.as_ref().expect("loaded");
        let truth = self.truth.as_ref().expect("loaded");

        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.threads).build()?;
        let rows: Vec<AblationRow> = pool.install(|| {
            configs
                .par_iter()
                .map(|(v, c, _)| {
                    let typed = c.typed();
                    run_variant(corpus, truth, &typed.model, *v).map(|r| r.row)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let variants = configs
            .iter()
            .map(|(v, c, differs_in)| VariantConfig {
                variant: v.name().into(),
                config_hash: c.hash(),
                shared_hash: c.hash_excluding(&["ablation.variant"]),
                differs_in: differs_in.clone(),
            })
            .collect();
        let out = AblationReport { config_hash: base.hash(), rows: rows.iter().map(RowLine::from).collect(), variants };
        write_json(&self.path("ablation.json"), &out)?;
        let table = format_table(&rows);
        write_text(&self.path("ablation.txt"), &table)?;
        for line in table.lines() {
            self.log(Stage::Ablate, line);
        }
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
