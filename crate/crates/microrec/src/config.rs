//! Run configuration: an INI file checked against a fixed schema, with
//! `--set section.key=value` overrides applied on top.
//!
//! Values are kept as the exact strings the user wrote (or the schema
//! default), so the resolved file reproduces overrides byte for byte. The
//! config hash covers every key except `run.out_dir`.

use std::path::{Path, PathBuf};

use ini::Ini;
use microrec_core::eval::{AbstainPolicy, ModelConfig, Variant};
use microrec_core::graph::Params;
use microrec_core::inference::{Engine, LbpOptions, TrainOptions, EXACT_CAP};
use microrec_core::influence::{EdgeParams, InfluenceParams};
use microrec_core::synth::SynthConfig;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {0:?} given more than once")]
    Duplicate(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("override {0:?} must look like section.key=value")]
    BadOverride(String),
}

#[derive(Clone, Copy)]
enum Kind {
    Uint { min: u64, max: u64 },
    Real { min: f64, max: f64, open_min: bool, open_max: bool },
    Choice(&'static [&'static str]),
    Text,
}

const INF: f64 = f64::INFINITY;

const fn uint(min: u64) -> Kind {
    Kind::Uint { min, max: u64::MAX }
}

const fn real(min: f64, max: f64) -> Kind {
    Kind::Real { min, max, open_min: false, open_max: false }
}

const fn positive() -> Kind {
    Kind::Real { min: 0.0, max: INF, open_min: true, open_max: false }
}

const VARIANTS: &[&str] = &["ALL", "NoEdge", "NoFN", "NoKW", "NoTP", "NoRN", "NoCN", "NoMN", "NoGN"];

/// (section, key, default, kind), in output order.
const SCHEMA: &[(&str, &str, &str, Kind)] = &[
    ("run", "seed", "0", uint(0)),
    ("run", "out_dir", "runs", Kind::Text),
    ("data", "source", "synth", Kind::Choice(&["synth", "files"])),
    ("data", "users", "", Kind::Text),
    ("data", "items", "", Kind::Text),
    ("data", "interactions", "", Kind::Text),
    ("data", "labels", "", Kind::Text),
    ("data", "truth", "", Kind::Text),
    ("synth", "n_users", "200", uint(2)),
    ("synth", "n_items", "2000", uint(1)),
    ("synth", "n_topics", "10", uint(1)),
    ("synth", "vocab_size", "1000", uint(1)),
    ("synth", "powerlaw_exponent", "2.0", Kind::Real { min: 1.0, max: INF, open_min: true, open_max: true }),
    ("synth", "max_activity", "10000", uint(1)),
    ("synth", "candidates_per_user", "20", uint(1)),
    ("synth", "alpha", "1.0", real(-INF, INF)),
    ("synth", "beta", "0.5", real(-INF, INF)),
    ("synth", "gamma", "0.5", real(-INF, INF)),
    ("synth", "lambda", "0.8", real(-INF, INF)),
    ("synth", "known_fraction", "0.64", Kind::Real { min: 0.0, max: 1.0, open_min: true, open_max: true }),
    ("features", "sigma", "5.0", positive()),
    ("features", "w_reply", "0.5", real(0.0, INF)),
    ("features", "w_comment", "0.5", real(0.0, INF)),
    ("features", "w_forward", "1.0", real(0.0, INF)),
    ("features", "w_mention", "0.25", real(0.0, INF)),
    ("edge", "tau", "0.7", real(-1.0, 1.0)),
    ("edge", "delta", "0.3", real(0.0, 1.0)),
    ("edge", "d_max", "10", uint(0)),
    ("train", "engine", "auto", Kind::Choice(&["auto", "exact", "lbp"])),
    ("train", "exact_max", "12", Kind::Uint { min: 1, max: EXACT_CAP as u64 }),
    ("train", "lbp_max_iters", "100", uint(1)),
    ("train", "lbp_damping", "0.5", Kind::Real { min: 0.0, max: 1.0, open_min: false, open_max: true }),
    ("train", "lbp_tol", "1e-6", positive()),
    ("train", "max_iters", "200", uint(0)),
    ("train", "tol", "1e-6", positive()),
    ("train", "mu", "0.01", real(0.0, INF)),
    ("train", "init_alpha", "0.5", real(-INF, INF)),
    ("train", "init_beta", "0.5", real(-INF, INF)),
    ("train", "init_gamma", "0.5", real(-INF, INF)),
    ("train", "init_lambda", "0.5", real(-INF, INF)),
    ("predict", "abstain_band", "0.0", real(0.0, 0.5)),
    ("eval", "abstain_policy", "excluded", Kind::Choice(&["excluded", "negative"])),
    ("ablation", "variant", "ALL", Kind::Choice(VARIANTS)),
];

const UNHASHED: &[&str] = &["run.out_dir"];

fn schema_index(section: &str, key: &str) -> Option<usize> {
    SCHEMA.iter().position(|(s, k, _, _)| *s == section && *k == key)
}

fn check(kind: Kind, key: &str, value: &str) -> Result<(), ConfigError> {
    let invalid = |reason: String| ConfigError::Invalid { key: key.into(), value: value.into(), reason };
    match kind {
        Kind::Uint { min, max } => {
            let v: u64 = value.parse().map_err(|_| invalid("expected a non-negative integer".into()))?;
            if v < min || v > max {
                return Err(invalid(format!("must lie in [{min}, {max}]")));
            }
        }
        Kind::Real { min, max, open_min, open_max } => {
            let v: f64 = value.parse().map_err(|_| invalid("expected a number".into()))?;
            let low_ok = if open_min { v > min } else { v >= min };
            let high_ok = if open_max { v < max } else { v <= max };
            if !v.is_finite() || !low_ok || !high_ok {
                let (l, r) = (if open_min { "(" } else { "[" }, if open_max { ")" } else { "]" });
                return Err(invalid(format!("must be finite and in {l}{min}, {max}{r}")));
            }
        }
        Kind::Choice(options) => {
            if !options.contains(&value) {
                return Err(invalid(format!("expected one of {}", options.join(", "))));
            }
        }
        Kind::Text => {}
    }
    Ok(())
}

/// Every schema key with its raw value, in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedConfig {
    values: Vec<String>,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        ResolvedConfig { values: SCHEMA.iter().map(|(_, _, d, _)| d.to_string()).collect() }
    }
}

impl ResolvedConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut cfg = ResolvedConfig::default();
        let mut seen = vec![false; SCHEMA.len()];
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let name = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_string(),
                };
                let idx = section.and_then(|s| schema_index(s, key)).ok_or_else(|| ConfigError::UnknownKey(name.clone()))?;
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(ConfigError::Duplicate(name));
                }
                cfg.set_index(idx, value.trim())?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_ini_str(&text)
    }

    fn set_index(&mut self, idx: usize, value: &str) -> Result<(), ConfigError> {
        let (s, k, _, kind) = SCHEMA[idx];
        check(kind, &format!("{s}.{k}"), value)?;
        self.values[idx] = value.to_string();
        Ok(())
    }

    /// Sets `section.key` to the raw `value`.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<(), ConfigError> {
        let (section, key) = dotted.split_once('.').ok_or_else(|| ConfigError::UnknownKey(dotted.into()))?;
        let idx = schema_index(section, key).ok_or_else(|| ConfigError::UnknownKey(dotted.into()))?;
        self.set_index(idx, value)
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.into()))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, dotted: &str) -> Option<&str> {
        let (section, key) = dotted.split_once('.')?;
        schema_index(section, key).map(|i| self.values[i].as_str())
    }

    /// `(section.key, value)` in schema order.
    pub fn entries(&self) -> impl Iterator<Item = (String, &str)> {
        SCHEMA.iter().zip(&self.values).map(|((s, k, _, _), v)| (format!("{s}.{k}"), v.as_str()))
    }

    /// Canonical INI text with every key present.
    pub fn render(&self) -> String {
        self.render_filtered(&[])
    }

    fn render_filtered(&self, skip: &[&str]) -> String {
        let mut ini = Ini::new();
        for ((s, k, _, _), v) in SCHEMA.iter().zip(&self.values) {
            if !skip.contains(&format!("{s}.{k}").as_str()) {
                ini.with_section(Some(*s)).set(*k, v.as_str());
            }
        }
        let mut buf = Vec::new();
        ini.write_to_policy(&mut buf, ini::EscapePolicy::Nothing).expect("writing to memory");
        String::from_utf8(buf).expect("config text is UTF-8")
    }

    /// SHA-256 hex of the canonical text minus `run.out_dir`.
    pub fn hash(&self) -> String {
        self.hash_excluding(&[])
    }

    /// Hash with extra keys left out (used to compare ablation variants).
    pub fn hash_excluding(&self, keys: &[&str]) -> String {
        let mut skip: Vec<&str> = UNHASHED.to_vec();
        skip.extend_from_slice(keys);
        hex::encode(Sha256::digest(self.render_filtered(&skip).as_bytes()))
    }

    /// Keys whose values differ between two configs.
    pub fn diff(&self, other: &ResolvedConfig) -> Vec<String> {
        self.entries().zip(other.entries()).filter(|((_, a), (_, b))| a != b).map(|((k, _), _)| k).collect()
    }

    pub fn typed(&self) -> RunConfig {
        RunConfig::from_resolved(self)
    }

    /// `<out_dir>/<hash12>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        let out = self.get("run.out_dir").unwrap_or("runs");
        Path::new(out).join(format!("{}-s{}", &self.hash()[..12], self.get("run.seed").unwrap_or("0")))
    }
}

/// Seed for a named stage, derived from the run seed alone.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    Files,
}

#[derive(Debug, Clone)]
pub struct DataPaths {
    pub users: PathBuf,
    pub items: PathBuf,
    pub interactions: PathBuf,
    pub labels: PathBuf,
    pub truth: Option<PathBuf>,
}

/// Parsed view of a [`ResolvedConfig`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub source: DataSource,
    pub paths: DataPaths,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub variant: Variant,
}

impl RunConfig {
    fn from_resolved(c: &ResolvedConfig) -> RunConfig {
        let s = |k: &str| c.get(k).expect("schema key");
        let u = |k: &str| s(k).parse::<u64>().expect("validated integer");
        let f = |k: &str| s(k).parse::<f64>().expect("validated number");
        let p = |k: &str| PathBuf::from(s(k));
        let seed = u("run.seed");

        let synth = SynthConfig {
            n_users: u("synth.n_users") as usize,
            n_items: u("synth.n_items") as usize,
            n_topics: u("synth.n_topics") as usize,
            vocab_size: u("synth.vocab_size") as usize,
            powerlaw_exponent: f("synth.powerlaw_exponent"),
            max_activity: u("synth.max_activity") as usize,
            candidates_per_user: u("synth.candidates_per_user") as usize,
            planted_params: Params::new(f("synth.alpha"), f("synth.beta"), f("synth.gamma"), f("synth.lambda")),
            known_fraction: f("synth.known_fraction"),
            seed: stage_seed(seed, "synth"),
            influence: InfluenceParams::default(),
            edges: EdgeParams::default(),
        };
        let influence = InfluenceParams {
            sigma: f("features.sigma"),
            // reply, comment, forward, mention
            weights: [f("features.w_reply"), f("features.w_comment"), f("features.w_forward"), f("features.w_mention")],
        };
        let edges = EdgeParams { tau: f("edge.tau"), delta: f("edge.delta"), d_max: u("edge.d_max") as usize };
        let lbp = LbpOptions {
            max_iters: u("train.lbp_max_iters") as usize,
            damping: f("train.lbp_damping"),
            tol: f("train.lbp_tol"),
        };
        let engine = match s("train.engine") {
            "exact" => Engine::Exact,
            "lbp" => Engine::Lbp(lbp),
            _ => Engine::Auto { exact_max: u("train.exact_max") as usize, lbp },
        };
        let train = TrainOptions {
            engine,
            max_iters: u("train.max_iters") as usize,
            tol: f("train.tol"),
            mu: f("train.mu"),
            init: Params::new(f("train.init_alpha"), f("train.init_beta"), f("train.init_gamma"), f("train.init_lambda")),
        };
        let model = ModelConfig {
            influence,
            edges,
            train,
            abstain_band: f("predict.abstain_band"),
            policy: AbstainPolicy::parse(s("eval.abstain_policy")).expect("validated choice"),
        };
        let opt = |k: &str| if s(k).is_empty() { None } else { Some(p(k)) };
        RunConfig {
            seed,
            out_dir: p("run.out_dir"),
            source: if s("data.source") == "files" { DataSource::Files } else { DataSource::Synth },
            paths: DataPaths {
                users: p("data.users"),
                items: p("data.items"),
                interactions: p("data.interactions"),
                labels: p("data.labels"),
                truth: opt("data.truth"),
            },
            synth,
            model,
            variant: Variant::parse(s("ablation.variant")).expect("validated choice"),
        }
    }
}
