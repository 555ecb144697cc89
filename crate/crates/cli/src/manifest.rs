//! Experiment manifests and the model configuration file.
//!
//! Both files share one format: `key = value` lines, blank lines, and
//! `#` comments. A manifest names one experiment cell — which protocol,
//! model, and feature recipe run on which data — so a whole results
//! grid is simply a directory of manifests. The model configuration
//! collects every tunable with working defaults; a config file only
//! lists the keys it overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use veritask::{Error, Result};

/// Environment variable naming the root directory for run outputs when
/// a manifest does not set `out` explicitly.
pub const OUT_ENV_VAR: &str = "VERITASK_OUT";

/// How train and test sides are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Train on articles before the cutoff year, test on the cutoff year.
    Forecasting,
    /// Hold out whole publishers per source type, repeated several times.
    UnseenSource,
    /// Claim sentences with their published train/test tags.
    Claim,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Forecasting => "forecasting",
            Protocol::UnseenSource => "unseen_source",
            Protocol::Claim => "claim",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "forecasting" => Ok(Protocol::Forecasting),
            "unseen_source" => Ok(Protocol::UnseenSource),
            "claim" => Ok(Protocol::Claim),
            other => Err(Error::Config(format!(
                "unknown protocol `{other}`, expected forecasting, unseen_source or claim"
            ))),
        }
    }
}

/// Which classifier the manifest trains and evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// tf-idf features into a one-vs-rest linear SVM.
    Svm,
    /// Headline/body agreement features into a small MLP.
    Rdel,
    /// The encoder fine-tuned on the main task alone.
    Single,
    /// The encoder fine-tuned jointly with the auxiliary choice task.
    Mtl,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Svm => "svm",
            Model::Rdel => "rdel",
            Model::Single => "single",
            Model::Mtl => "mtl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Model::Svm),
            "rdel" => Ok(Model::Rdel),
            "single" => Ok(Model::Single),
            "mtl" => Ok(Model::Mtl),
            other => Err(Error::Config(format!(
                "unknown model `{other}`, expected svm, rdel, single or mtl"
            ))),
        }
    }

    pub fn is_encoder(&self) -> bool {
        matches!(self, Model::Single | Model::Mtl)
    }
}

/// Which article text feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Features {
    Title,
    Body,
    Merged,
}

impl Features {
    pub fn as_str(&self) -> &'static str {
        match self {
            Features::Title => "title",
            Features::Body => "body",
            Features::Merged => "merged",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(Features::Title),
            "body" => Ok(Features::Body),
            "merged" => Ok(Features::Merged),
            other => Err(Error::Config(format!(
                "unknown feature recipe `{other}`, expected title, body or merged"
            ))),
        }
    }
}

/// One experiment cell: data, protocol, model, features, seed, output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub name: String,
    pub protocol: Protocol,
    pub model: Model,
    pub features: Features,
    /// News article JSONL (forecasting / unseen_source protocols).
    pub articles: Option<PathBuf>,
    /// Claim sentence JSONL (claim protocol).
    pub claims: Option<PathBuf>,
    /// Multiple-choice item JSONL (required by the mtl model).
    pub csqa: Option<PathBuf>,
    /// Optional model configuration overrides.
    pub config: Option<PathBuf>,
    pub seed: u64,
    /// Explicit output directory; defaults to `$VERITASK_OUT/<name>` or
    /// `runs/<name>`.
    pub out: Option<PathBuf>,
}

/// Split `key = value` lines, dropping comments and blanks. Duplicate
/// keys are rejected so a typo cannot silently lose an override.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                i + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!(
                "line {}: empty key or value in `{line}`",
                i + 1
            )));
        }
        if pairs.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {}: key `{key}` set twice",
                i + 1
            )));
        }
    }
    Ok(pairs)
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{value}`")))
}

impl ExperimentManifest {
    /// Parse manifest text. Relative paths stay relative; `load`
    /// resolves them against the manifest's directory.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        let mut take = |key: &str| pairs.remove(key);

        let name = take("name")
            .ok_or_else(|| Error::Config("manifest is missing `name`".into()))?;
        if name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(Error::Config(format!(
                "experiment name `{name}` must be usable as a directory name"
            )));
        }
        let protocol = Protocol::parse(
            &take("protocol")
                .ok_or_else(|| Error::Config("manifest is missing `protocol`".into()))?,
        )?;
        let model = Model::parse(
            &take("model").ok_or_else(|| Error::Config("manifest is missing `model`".into()))?,
        )?;
        let features = match take("features") {
            Some(v) => Features::parse(&v)?,
            None => Features::Merged,
        };
        let articles = take("articles").map(PathBuf::from);
        let claims = take("claims").map(PathBuf::from);
        let csqa = take("csqa").map(PathBuf::from);
        let config = take("config").map(PathBuf::from);
        let seed = match take("seed") {
            Some(v) => parse_number("seed", &v)?,
            None => 0,
        };
        let out = take("out").map(PathBuf::from);

        if let Some(unknown) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown manifest key `{unknown}`")));
        }

        let manifest = ExperimentManifest {
            name,
            protocol,
            model,
            features,
            articles,
            claims,
            csqa,
            config,
            seed,
            out,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Read a manifest file and resolve its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in [
            &mut manifest.articles,
            &mut manifest.claims,
            &mut manifest.csqa,
            &mut manifest.config,
            &mut manifest.out,
        ]
        .into_iter()
        .flatten()
        {
            if entry.is_relative() {
                *entry = base.join(&entry);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    /// Reject unsupported protocol/model/data combinations early.
    pub fn validate(&self) -> Result<()> {
        match self.protocol {
            Protocol::Forecasting | Protocol::UnseenSource => {
                if self.articles.is_none() {
                    return Err(Error::Config(format!(
                        "protocol {} needs an `articles` path",
                        self.protocol.as_str()
                    )));
                }
            }
            Protocol::Claim => {
                if self.claims.is_none() {
                    return Err(Error::Config("protocol claim needs a `claims` path".into()));
                }
                if self.model == Model::Rdel {
                    return Err(Error::Config(
                        "model rdel scores headline/body agreement; claim sentences have \
                         neither, so this combination is unsupported"
                            .into(),
                    ));
                }
            }
        }
        if self.model == Model::Mtl && self.csqa.is_none() {
            return Err(Error::Config(
                "model mtl trains the auxiliary choice task and needs a `csqa` path".into(),
            ));
        }
        Ok(())
    }

    /// Output directory: explicit `out`, else `$VERITASK_OUT/<name>`,
    /// else `runs/<name>`.
    pub fn run_dir(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        match std::env::var(OUT_ENV_VAR) {
            Ok(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => PathBuf::from("runs").join(&self.name),
        }
    }

    /// Load the run's model configuration: defaults overlaid with the
    /// manifest's `config` file when present.
    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.config {
            Some(path) => ModelConfig::load(path),
            None => Ok(ModelConfig::default()),
        }
    }
}

/// Every tunable of the pipeline with its default. A configuration file
/// lists only the keys it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    // Ingestion.
    pub min_per_source: usize,
    pub cap_per_source: usize,
    pub lof_k: usize,
    pub lof_threshold: f64,
    // Split protocols.
    pub window_start: i32,
    pub cutoff: i32,
    pub train_fraction: f64,
    pub repeats: usize,
    // tf-idf features.
    pub max_features: usize,
    // Linear SVM.
    pub svm_epochs: usize,
    pub svm_learning_rate: f64,
    pub svm_l2: f64,
    // Headline/body MLP.
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub mlp_clip: f64,
    pub mlp_patience: usize,
    pub mlp_holdout: f64,
    // Encoder architecture.
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    // Input budgets (tokens per segment).
    pub max_title: usize,
    pub max_body: usize,
    pub max_question: usize,
    pub max_choice: usize,
    // Fine-tuning.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub clip_norm: f64,
    // Phase-1 development of a from-scratch encoder.
    pub pretrain_steps: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_learning_rate: f64,
    pub mask_prob: f64,
    pub init_noise: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            min_per_source: 10,
            cap_per_source: 250,
            lof_k: 20,
            lof_threshold: 1.5,
            window_start: 2015,
            cutoff: 2019,
            train_fraction: 0.9,
            repeats: 5,
            max_features: 25_000,
            svm_epochs: 100,
            svm_learning_rate: 0.5,
            svm_l2: 1e-4,
            mlp_hidden: 64,
            mlp_epochs: 100,
            mlp_learning_rate: 1e-3,
            mlp_clip: 5.0,
            mlp_patience: 5,
            mlp_holdout: 0.2,
            layers: 2,
            heads: 2,
            dim: 16,
            ffn_dim: 32,
            max_positions: 64,
            vocab_size: 2000,
            dropout: 0.0,
            max_title: 16,
            max_body: 44,
            max_question: 16,
            max_choice: 8,
            batch_size: 2,
            learning_rate: 2e-5,
            epochs: 4,
            momentum: 0.0,
            clip_norm: 5.0,
            pretrain_steps: 0,
            pretrain_batch_size: 8,
            pretrain_learning_rate: 0.05,
            mask_prob: 0.15,
            init_noise: 0.25,
        }
    }
}

impl ModelConfig {
    /// Overlay `key = value` overrides on the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut config = ModelConfig::default();
        for (key, value) in &pairs {
            match key.as_str() {
                "min_per_source" => config.min_per_source = parse_number(key, value)?,
                "cap_per_source" => config.cap_per_source = parse_number(key, value)?,
                "lof_k" => config.lof_k = parse_number(key, value)?,
                "lof_threshold" => config.lof_threshold = parse_number(key, value)?,
                "window_start" => config.window_start = parse_number(key, value)?,
                "cutoff" => config.cutoff = parse_number(key, value)?,
                "train_fraction" => config.train_fraction = parse_number(key, value)?,
                "repeats" => config.repeats = parse_number(key, value)?,
                "max_features" => config.max_features = parse_number(key, value)?,
                "svm_epochs" => config.svm_epochs = parse_number(key, value)?,
                "svm_learning_rate" => config.svm_learning_rate = parse_number(key, value)?,
                "svm_l2" => config.svm_l2 = parse_number(key, value)?,
                "mlp_hidden" => config.mlp_hidden = parse_number(key, value)?,
                "mlp_epochs" => config.mlp_epochs = parse_number(key, value)?,
                "mlp_learning_rate" => config.mlp_learning_rate = parse_number(key, value)?,
                "mlp_clip" => config.mlp_clip = parse_number(key, value)?,
                "mlp_patience" => config.mlp_patience = parse_number(key, value)?,
                "mlp_holdout" => config.mlp_holdout = parse_number(key, value)?,
                "layers" => config.layers = parse_number(key, value)?,
                "heads" => config.heads = parse_number(key, value)?,
                "dim" => config.dim = parse_number(key, value)?,
                "ffn_dim" => config.ffn_dim = parse_number(key, value)?,
                "max_positions" => config.max_positions = parse_number(key, value)?,
                "vocab_size" => config.vocab_size = parse_number(key, value)?,
                "dropout" => config.dropout = parse_number(key, value)?,
                "max_title" => config.max_title = parse_number(key, value)?,
                "max_body" => config.max_body = parse_number(key, value)?,
                "max_question" => config.max_question = parse_number(key, value)?,
                "max_choice" => config.max_choice = parse_number(key, value)?,
                "batch_size" => config.batch_size = parse_number(key, value)?,
                "learning_rate" => config.learning_rate = parse_number(key, value)?,
                "epochs" => config.epochs = parse_number(key, value)?,
                "momentum" => config.momentum = parse_number(key, value)?,
                "clip_norm" => config.clip_norm = parse_number(key, value)?,
                "pretrain_steps" => config.pretrain_steps = parse_number(key, value)?,
                "pretrain_batch_size" => config.pretrain_batch_size = parse_number(key, value)?,
                "pretrain_learning_rate" => {
                    config.pretrain_learning_rate = parse_number(key, value)?
                }
                "mask_prob" => config.mask_prob = parse_number(key, value)?,
                "init_noise" => config.init_noise = parse_number(key, value)?,
                other => {
                    return Err(Error::Config(format!("unknown config key `{other}`")));
                }
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}
