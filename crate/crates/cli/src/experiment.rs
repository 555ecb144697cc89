//! The pipeline behind each command: ingestion, fold planning, model
//! training, scoring, and report assembly.
//!
//! Every command is a pure function of its input files, the manifest,
//! and the seed: rerunning one writes byte-identical outputs. Each run
//! directory is laid out as
//!
//! ```text
//! <run>/folds.jsonl          fold plans (news protocols)
//! <run>/fold<i>/…            checkpoint + loss history + per-fold report
//! <run>/scores.csv           fold,macro_f1
//! <run>/aggregate.json       meta + pooled report (serde)
//! <run>/aggregate.md         the same report rendered as markdown
//! <run>/monthly.csv          per-month macro F1 (forecasting only)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use veritask::baselines::{
    build_ngram_vocab, claim_features, headline_body_features, tfidf_transform, train_linear_svm,
    train_mlp, LinearClassifier, MlpClassifier, MlpConfig, NgramVocabulary, SparseVector,
    SvmConfig, TrainingHistory,
};
use veritask::corpus::{
    clean_text, corpus_stats, filter_length_outliers, load_jsonl, prune_sources, tokens,
    write_jsonl, CSQAItem, ClaimLabel, ClaimStatement, NewsArticle, SourceType, SplitTag,
};
use veritask::encoder::{
    add_parameter_noise, build_vocab, make_nsp_pairs, pretrain_mlm_nsp, EncoderConfig,
    EncoderParams, PretrainConfig,
};
use veritask::evaluation::{
    cohens_d, confusion_csv, monthly_macro_f1, monthly_series_csv, paired_t_test, render_report,
    ExperimentReport, FoldScores, ReportFormat, SignificanceBlock,
};
use veritask::multitask::{
    choice_example, classification_example, fit, load_bundle_file, predict_class, register_task,
    save_bundle_file, FitHistory, InputRecipe, TaskDataset, TaskExample, TaskKind, TaskSpec,
    TrainConfig, ModelBundle,
};
use veritask::splits::{forecasting_split, unseen_source_folds, FoldPlan};
use veritask::{Error, Result};

use crate::manifest::{ExperimentManifest, Features, Model, ModelConfig, Protocol};

const FOLDS_FILE: &str = "folds.jsonl";
const AGGREGATE_JSON: &str = "aggregate.json";
/// Name of the auxiliary multiple-choice task inside mtl checkpoints.
const AUX_TASK: &str = "csqa";

/// Identity of a finished run, stored beside its report so `report` can
/// assemble a grid without re-reading manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub name: String,
    pub protocol: String,
    pub model: String,
    pub features: String,
    pub seed: u64,
}

/// Everything `evaluate` writes to `aggregate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub meta: RunMeta,
    pub report: ExperimentReport,
}

pub struct IngestSummary {
    pub loaded: usize,
    pub kept: usize,
    pub articles_path: PathBuf,
    pub stats_path: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "missing `{}`; {hint}",
            path.display()
        )))
    }
}

/// Load news articles and canonicalize their text fields.
fn cleaned_articles(path: &Path) -> Result<Vec<NewsArticle>> {
    let mut articles: Vec<NewsArticle> = load_jsonl(path)?;
    for a in &mut articles {
        a.title = clean_text(&a.title);
        a.body = clean_text(&a.body);
    }
    Ok(articles)
}

fn cleaned_claims(path: &Path) -> Result<Vec<ClaimStatement>> {
    let mut claims: Vec<ClaimStatement> = load_jsonl(path)?;
    for c in &mut claims {
        c.text = clean_text(&c.text);
    }
    Ok(claims)
}

fn cleaned_csqa(path: &Path) -> Result<Vec<CSQAItem>> {
    let mut items: Vec<CSQAItem> = load_jsonl(path)?;
    for it in &mut items {
        it.question = clean_text(&it.question);
        for c in &mut it.choices {
            *c = clean_text(c);
        }
    }
    Ok(items)
}

fn articles_path(manifest: &ExperimentManifest) -> Result<&Path> {
    manifest
        .articles
        .as_deref()
        .ok_or_else(|| Error::Config("manifest has no `articles` path".into()))
}

fn claims_path(manifest: &ExperimentManifest) -> Result<&Path> {
    manifest
        .claims
        .as_deref()
        .ok_or_else(|| Error::Config("manifest has no `claims` path".into()))
}

fn news_labels() -> Vec<String> {
    SourceType::ALL.iter().map(|t| t.as_str().to_string()).collect()
}

fn claim_labels() -> Vec<String> {
    ClaimLabel::ALL.iter().map(|l| l.as_str().to_string()).collect()
}

/// The classifier input text under a feature recipe (baseline models).
fn baseline_text(features: Features, article: &NewsArticle) -> String {
    match features {
        Features::Title => article.title.clone(),
        Features::Body => article.body.clone(),
        Features::Merged => format!("{} {}", article.title, article.body),
    }
}

/// The encoder input segments under a feature recipe.
fn encoder_segments(features: Features, article: &NewsArticle) -> (&str, Option<&str>) {
    match features {
        Features::Title => (&article.title, None),
        Features::Body => (&article.body, None),
        Features::Merged => (&article.title, Some(&article.body)),
    }
}

fn news_recipe(features: Features, config: &ModelConfig) -> InputRecipe {
    match features {
        Features::Title => InputRecipe { max_a: config.max_title, max_b: 0 },
        Features::Body => InputRecipe { max_a: config.max_body, max_b: 0 },
        Features::Merged => InputRecipe { max_a: config.max_title, max_b: config.max_body },
    }
}

fn svm_config(config: &ModelConfig) -> SvmConfig {
    SvmConfig {
        epochs: config.svm_epochs,
        learning_rate: config.svm_learning_rate,
        l2: config.svm_l2,
    }
}

fn fold_seed(manifest: &ExperimentManifest, fold_index: usize) -> u64 {
    manifest.seed.wrapping_add(1 + fold_index as u64)
}

fn dense_to_sparse(dense: Vec<f64>) -> Result<SparseVector> {
    SparseVector::new(
        dense
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect(),
    )
}

/// Clean, prune, outlier-filter, and write the canonical corpus plus its
/// statistics table.
pub fn cmd_ingest(
    input: &Path,
    out_dir: &Path,
    seed: u64,
    config: &ModelConfig,
) -> Result<IngestSummary> {
    let raw = cleaned_articles(input)?;
    let pruned = prune_sources(&raw, config.min_per_source, config.cap_per_source, seed)?;
    let kept = filter_length_outliers(&pruned, config.lof_k, config.lof_threshold);
    if kept.is_empty() {
        return Err(Error::domain(
            "no articles survive source pruning and outlier filtering",
        ));
    }
    fs::create_dir_all(out_dir)?;
    let articles_path = out_dir.join("articles.jsonl");
    write_jsonl(&articles_path, &kept)?;
    let stats_path = out_dir.join("stats.csv");
    write_text(&stats_path, &corpus_stats(&kept).to_csv())?;
    Ok(IngestSummary {
        loaded: raw.len(),
        kept: kept.len(),
        articles_path,
        stats_path,
    })
}

/// Per-category statistics table of an article file.
pub fn cmd_stats(input: &Path) -> Result<String> {
    let articles = cleaned_articles(input)?;
    Ok(corpus_stats(&articles).to_csv())
}

/// Materialize the manifest's fold plans under its run directory.
pub fn cmd_split(manifest: &ExperimentManifest, config: &ModelConfig) -> Result<(PathBuf, usize)> {
    let plans = match manifest.protocol {
        Protocol::Claim => {
            return Err(Error::Config(
                "the claim protocol uses the published train/test tags; \
                 there are no fold plans to build"
                    .into(),
            ))
        }
        Protocol::Forecasting => {
            let articles = cleaned_articles(articles_path(manifest)?)?;
            vec![forecasting_split(&articles, config.window_start, config.cutoff)?]
        }
        Protocol::UnseenSource => {
            let articles = cleaned_articles(articles_path(manifest)?)?;
            unseen_source_folds(&articles, config.train_fraction, config.repeats, manifest.seed)?
        }
    };
    let path = manifest.run_dir().join(FOLDS_FILE);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_jsonl(&path, &plans)?;
    Ok((path, plans.len()))
}

/// One resolved fold: references into the loaded corpus.
struct NewsFold<'a> {
    index: usize,
    train: Vec<&'a NewsArticle>,
    test: Vec<&'a NewsArticle>,
}

fn read_fold_plans(run_dir: &Path) -> Result<Vec<FoldPlan>> {
    let path = run_dir.join(FOLDS_FILE);
    require_file(&path, "run `veritask split` first")?;
    load_jsonl(&path)
}

fn resolve_folds<'a>(
    articles: &'a [NewsArticle],
    plans: &[FoldPlan],
) -> Result<Vec<NewsFold<'a>>> {
    let by_id: HashMap<&str, &NewsArticle> =
        articles.iter().map(|a| (a.id.as_str(), a)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&'a NewsArticle>> {
        ids.iter()
            .map(|id| {
                by_id.get(id.as_str()).copied().ok_or_else(|| {
                    Error::validation("id", format!("fold references unknown article `{id}`"))
                })
            })
            .collect()
    };
    plans
        .iter()
        .map(|plan| {
            Ok(NewsFold {
                index: plan.fold_index,
                train: lookup(&plan.train_ids)?,
                test: lookup(&plan.test_ids)?,
            })
        })
        .collect()
}

fn claim_partition(claims: &[ClaimStatement]) -> (Vec<&ClaimStatement>, Vec<&ClaimStatement>) {
    claims.iter().partition(|c| c.split == SplitTag::Train)
}

fn mlp_history_csv(history: &TrainingHistory) -> String {
    let mut out = String::from("epoch,train_loss,holdout_loss\n");
    for (i, (train, holdout)) in history
        .train_loss
        .iter()
        .zip(&history.holdout_loss)
        .enumerate()
    {
        out.push_str(&format!("{},{train:.6},{holdout:.6}\n", i + 1));
    }
    out
}

fn fit_history_csv(history: &FitHistory) -> String {
    let mut out = String::from("epoch,task,mean_loss\n");
    let epochs = history
        .per_task
        .values()
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    for epoch in 0..epochs {
        for (task, losses) in &history.per_task {
            if let Some(loss) = losses.get(epoch) {
                out.push_str(&format!("{},{task},{loss:.6}\n", epoch + 1));
            }
        }
    }
    out
}

/// Train the classical model named by the manifest (svm or rdel).
pub fn cmd_train_baseline(
    manifest: &ExperimentManifest,
    config: &ModelConfig,
) -> Result<Vec<String>> {
    if manifest.model.is_encoder() {
        return Err(Error::Config(format!(
            "model {} is trained by `veritask train-mtl`",
            manifest.model.as_str()
        )));
    }
    let run_dir = manifest.run_dir();
    let mut log = Vec::new();

    if manifest.protocol == Protocol::Claim {
        let claims = cleaned_claims(claims_path(manifest)?)?;
        let (train, _) = claim_partition(&claims);
        if train.is_empty() {
            return Err(Error::Protocol("no train-tagged claim sentences".into()));
        }
        let texts: Vec<&str> = train.iter().map(|c| c.text.as_str()).collect();
        let vocab = build_ngram_vocab(&texts, config.max_features)?;
        let xs: Vec<SparseVector> = train
            .iter()
            .map(|c| dense_to_sparse(claim_features(&c.text, c.annotations.as_deref(), &vocab)))
            .collect::<Result<_>>()?;
        let ys: Vec<&str> = train.iter().map(|c| c.label.as_str()).collect();
        let model = train_linear_svm(&xs, &ys, &svm_config(config))?;
        let fold_dir = run_dir.join("fold0");
        fs::create_dir_all(&fold_dir)?;
        vocab.save(fold_dir.join("vocab.ngrams"))?;
        model.save(fold_dir.join("model.svm"))?;
        log.push(format!("fold 0: trained svm on {} claim sentences", train.len()));
        return Ok(log);
    }

    let articles = cleaned_articles(articles_path(manifest)?)?;
    let plans = read_fold_plans(&run_dir)?;
    let folds = resolve_folds(&articles, &plans)?;
    for fold in &folds {
        let fold_dir = run_dir.join(format!("fold{}", fold.index));
        fs::create_dir_all(&fold_dir)?;
        let texts: Vec<String> = fold
            .train
            .iter()
            .map(|a| baseline_text(manifest.features, a))
            .collect();
        let vocab = build_ngram_vocab(&texts, config.max_features)?;
        vocab.save(fold_dir.join("vocab.ngrams"))?;
        let ys: Vec<&str> = fold.train.iter().map(|a| a.source_type.as_str()).collect();
        match manifest.model {
            Model::Svm => {
                let xs: Vec<SparseVector> =
                    texts.iter().map(|t| tfidf_transform(t, &vocab)).collect();
                let model = train_linear_svm(&xs, &ys, &svm_config(config))?;
                model.save(fold_dir.join("model.svm"))?;
                log.push(format!(
                    "fold {}: trained svm on {} articles",
                    fold.index,
                    fold.train.len()
                ));
            }
            Model::Rdel => {
                let features: Vec<Vec<f64>> = fold
                    .train
                    .iter()
                    .map(|a| headline_body_features(&a.title, &a.body, &vocab))
                    .collect();
                let mlp_config = MlpConfig {
                    hidden_dim: config.mlp_hidden,
                    epochs: config.mlp_epochs,
                    learning_rate: config.mlp_learning_rate,
                    clip_norm: config.mlp_clip,
                    patience: config.mlp_patience,
                    holdout_fraction: config.mlp_holdout,
                    seed: fold_seed(manifest, fold.index),
                };
                let (model, history) = train_mlp(&features, &ys, &mlp_config)?;
                model.save(fold_dir.join("model.mlp"))?;
                write_text(&fold_dir.join("history.csv"), &mlp_history_csv(&history))?;
                log.push(format!(
                    "fold {}: trained rdel on {} articles ({} epochs run)",
                    fold.index,
                    fold.train.len(),
                    history.epochs_run
                ));
            }
            Model::Single | Model::Mtl => unreachable!("encoder models rejected above"),
        }
    }
    Ok(log)
}

/// The main (classification) task of an encoder run, already cleaned.
struct MainTask {
    name: &'static str,
    labels: Vec<String>,
    recipe: InputRecipe,
    /// (segment_a, segment_b, label)
    examples: Vec<(String, Option<String>, String)>,
}

fn news_main_task(
    features: Features,
    config: &ModelConfig,
    train: &[&NewsArticle],
) -> MainTask {
    let examples = train
        .iter()
        .map(|a| {
            let (seg_a, seg_b) = encoder_segments(features, a);
            (
                seg_a.to_string(),
                seg_b.map(str::to_string),
                a.source_type.as_str().to_string(),
            )
        })
        .collect();
    MainTask {
        name: "news",
        labels: news_labels(),
        recipe: news_recipe(features, config),
        examples,
    }
}

fn claim_main_task(config: &ModelConfig, train: &[&ClaimStatement]) -> MainTask {
    let examples = train
        .iter()
        .map(|c| (c.text.clone(), None, c.label.as_str().to_string()))
        .collect();
    MainTask {
        name: "claim",
        labels: claim_labels(),
        recipe: InputRecipe { max_a: config.max_body, max_b: 0 },
        examples,
    }
}

/// Break text into pseudo-sentences for the self-supervised phase.
fn chunk_tokens(text: &str, width: usize) -> Vec<String> {
    let toks: Vec<&str> = tokens(text).collect();
    toks.chunks(width).map(|c| c.join(" ")).collect()
}

fn pretrain_documents(main: &MainTask, aux: Option<&[CSQAItem]>) -> Vec<Vec<String>> {
    let mut documents = Vec::new();
    let mut singles: Vec<String> = Vec::new();
    for (seg_a, seg_b, _) in &main.examples {
        let mut doc = chunk_tokens(seg_a, 12);
        if let Some(b) = seg_b {
            doc.extend(chunk_tokens(b, 12));
        }
        if doc.len() >= 2 {
            documents.push(doc);
        } else {
            singles.extend(doc);
        }
    }
    // Short inputs (claim sentences, bare titles) group into pseudo-docs
    // so they still yield sentence pairs.
    for group in singles.chunks(4) {
        if group.len() >= 2 {
            documents.push(group.to_vec());
        }
    }
    if let Some(items) = aux {
        for it in items {
            documents.push(vec![it.question.clone(), it.choices[it.answer_index].clone()]);
        }
    }
    documents
}

fn train_encoder_fold(
    fold_dir: &Path,
    main: &MainTask,
    aux: Option<&[CSQAItem]>,
    config: &ModelConfig,
    seed: u64,
) -> Result<FitHistory> {
    if main.examples.is_empty() {
        return Err(Error::Protocol(format!(
            "task `{}` has no training examples",
            main.name
        )));
    }

    // Word vocabulary over the training text of every task.
    let mut texts: Vec<&str> = Vec::new();
    for (seg_a, seg_b, _) in &main.examples {
        texts.push(seg_a);
        if let Some(b) = seg_b {
            texts.push(b);
        }
    }
    if let Some(items) = aux {
        for it in items {
            texts.push(&it.question);
            for c in &it.choices {
                texts.push(c);
            }
        }
    }
    let vocab = build_vocab(&texts, config.vocab_size)?;

    let enc_config = EncoderConfig {
        layers: config.layers,
        heads: config.heads,
        dim: config.dim,
        ffn_dim: config.ffn_dim,
        max_positions: config.max_positions,
        vocab_size: vocab.len(),
        dropout: config.dropout,
    };

    // Phase 1: self-supervised development of the shared encoder, or a
    // seeded random-feature widening when no pretraining is configured.
    let mut params = if config.pretrain_steps > 0 {
        let documents = pretrain_documents(main, aux);
        let pairs = make_nsp_pairs(&documents, seed);
        let pretrain = PretrainConfig {
            steps: config.pretrain_steps,
            batch_size: config.pretrain_batch_size,
            learning_rate: config.pretrain_learning_rate,
            clip_norm: config.clip_norm,
            mask_prob: config.mask_prob,
            max_first: config.max_title.max(config.max_question),
            max_second: config.max_body.max(config.max_choice),
        };
        pretrain_mlm_nsp(&pairs, &vocab, &enc_config, &pretrain, seed)?.0
    } else {
        EncoderParams::init(&enc_config, seed)?
    };
    if config.init_noise > 0.0 {
        add_parameter_noise(&mut params, config.init_noise, seed);
    }

    let mut bundle = ModelBundle::from_encoder(enc_config, params, vocab)?;
    register_task(
        &mut bundle,
        TaskSpec {
            name: main.name.to_string(),
            kind: TaskKind::Classification { labels: main.labels.clone() },
            recipe: main.recipe.clone(),
        },
        seed ^ 1,
    )?;
    let main_examples: Vec<TaskExample> = main
        .examples
        .iter()
        .map(|(a, b, label)| classification_example(&bundle, main.name, a, b.as_deref(), label))
        .collect::<Result<_>>()?;
    let mut datasets = vec![TaskDataset {
        name: main.name.to_string(),
        examples: main_examples,
    }];
    if let Some(items) = aux {
        register_task(
            &mut bundle,
            TaskSpec {
                name: AUX_TASK.to_string(),
                kind: TaskKind::MultipleChoice,
                recipe: InputRecipe { max_a: config.max_question, max_b: config.max_choice },
            },
            seed ^ 2,
        )?;
        let examples: Vec<TaskExample> = items
            .iter()
            .map(|it| choice_example(&bundle, AUX_TASK, it))
            .collect::<Result<_>>()?;
        datasets.push(TaskDataset {
            name: AUX_TASK.to_string(),
            examples,
        });
    }

    let train = TrainConfig {
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        momentum: config.momentum,
        clip_norm: config.clip_norm,
        seed,
    };
    let history = fit(&mut bundle, &datasets, &train)?;

    fs::create_dir_all(fold_dir)?;
    save_bundle_file(&fold_dir.join("model.bundle"), &bundle)?;
    write_text(&fold_dir.join("history.csv"), &fit_history_csv(&history))?;
    Ok(history)
}

/// Fine-tune the encoder (single task, or jointly with the choice task).
pub fn cmd_train_mtl(manifest: &ExperimentManifest, config: &ModelConfig) -> Result<Vec<String>> {
    if !manifest.model.is_encoder() {
        return Err(Error::Config(format!(
            "model {} is trained by `veritask train-baseline`",
            manifest.model.as_str()
        )));
    }
    let aux_items = match (manifest.model, &manifest.csqa) {
        (Model::Mtl, Some(path)) => Some(cleaned_csqa(path)?),
        (Model::Mtl, None) => {
            return Err(Error::Config("model mtl needs a `csqa` path".into()))
        }
        _ => None,
    };
    let run_dir = manifest.run_dir();
    let mut log = Vec::new();

    if manifest.protocol == Protocol::Claim {
        let claims = cleaned_claims(claims_path(manifest)?)?;
        let (train, _) = claim_partition(&claims);
        if train.is_empty() {
            return Err(Error::Protocol("no train-tagged claim sentences".into()));
        }
        let main = claim_main_task(config, &train);
        let history = train_encoder_fold(
            &run_dir.join("fold0"),
            &main,
            aux_items.as_deref(),
            config,
            fold_seed(manifest, 0),
        )?;
        log.push(fit_log_line(0, manifest.model, &history));
        return Ok(log);
    }

    let articles = cleaned_articles(articles_path(manifest)?)?;
    let plans = read_fold_plans(&run_dir)?;
    let folds = resolve_folds(&articles, &plans)?;
    for fold in &folds {
        let main = news_main_task(manifest.features, config, &fold.train);
        let history = train_encoder_fold(
            &run_dir.join(format!("fold{}", fold.index)),
            &main,
            aux_items.as_deref(),
            config,
            fold_seed(manifest, fold.index),
        )?;
        log.push(fit_log_line(fold.index, manifest.model, &history));
    }
    Ok(log)
}

fn fit_log_line(fold: usize, model: Model, history: &FitHistory) -> String {
    let mut parts = Vec::new();
    for (task, losses) in &history.per_task {
        if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
            parts.push(format!("{task} {first:.4}→{last:.4}"));
        }
    }
    format!(
        "fold {fold}: trained {} ({})",
        model.as_str(),
        parts.join(", ")
    )
}

/// Predictions for one news fold from whichever checkpoint kind the
/// manifest trains.
fn predict_news_fold(
    manifest: &ExperimentManifest,
    fold_dir: &Path,
    fold: &NewsFold<'_>,
) -> Result<Vec<String>> {
    match manifest.model {
        Model::Svm => {
            let vocab_path = fold_dir.join("vocab.ngrams");
            let model_path = fold_dir.join("model.svm");
            require_file(&vocab_path, "run `veritask train-baseline` first")?;
            require_file(&model_path, "run `veritask train-baseline` first")?;
            let vocab = NgramVocabulary::load(&vocab_path)?;
            let model = LinearClassifier::load(&model_path)?;
            let xs: Vec<SparseVector> = fold
                .test
                .iter()
                .map(|a| tfidf_transform(&baseline_text(manifest.features, a), &vocab))
                .collect();
            Ok(model.predict_batch(&xs))
        }
        Model::Rdel => {
            let vocab_path = fold_dir.join("vocab.ngrams");
            let model_path = fold_dir.join("model.mlp");
            require_file(&vocab_path, "run `veritask train-baseline` first")?;
            require_file(&model_path, "run `veritask train-baseline` first")?;
            let vocab = NgramVocabulary::load(&vocab_path)?;
            let model = MlpClassifier::load(&model_path)?;
            let features: Vec<Vec<f64>> = fold
                .test
                .iter()
                .map(|a| headline_body_features(&a.title, &a.body, &vocab))
                .collect();
            model.predict_batch(&features)
        }
        Model::Single | Model::Mtl => {
            let model_path = fold_dir.join("model.bundle");
            require_file(&model_path, "run `veritask train-mtl` first")?;
            let bundle = load_bundle_file(&model_path)?;
            fold.test
                .iter()
                .map(|a| {
                    let (seg_a, seg_b) = encoder_segments(manifest.features, a);
                    predict_class(&bundle, "news", seg_a, seg_b).map(|(label, _)| label)
                })
                .collect()
        }
    }
}

fn predict_claims(
    manifest: &ExperimentManifest,
    run_dir: &Path,
    test: &[&ClaimStatement],
) -> Result<Vec<String>> {
    let fold_dir = run_dir.join("fold0");
    match manifest.model {
        Model::Svm => {
            let vocab_path = fold_dir.join("vocab.ngrams");
            let model_path = fold_dir.join("model.svm");
            require_file(&vocab_path, "run `veritask train-baseline` first")?;
            require_file(&model_path, "run `veritask train-baseline` first")?;
            let vocab = NgramVocabulary::load(&vocab_path)?;
            let model = LinearClassifier::load(&model_path)?;
            let xs: Vec<SparseVector> = test
                .iter()
                .map(|c| dense_to_sparse(claim_features(&c.text, c.annotations.as_deref(), &vocab)))
                .collect::<Result<_>>()?;
            Ok(model.predict_batch(&xs))
        }
        Model::Single | Model::Mtl => {
            let model_path = fold_dir.join("model.bundle");
            require_file(&model_path, "run `veritask train-mtl` first")?;
            let bundle = load_bundle_file(&model_path)?;
            test.iter()
                .map(|c| predict_class(&bundle, "claim", &c.text, None).map(|(label, _)| label))
                .collect()
        }
        Model::Rdel => Err(Error::Config(
            "model rdel does not support the claim protocol".into(),
        )),
    }
}

/// Score the trained checkpoints on every test fold, write per-fold and
/// aggregate reports, and (with `compare`) attach a paired significance
/// block against another finished run.
pub fn cmd_evaluate(
    manifest: &ExperimentManifest,
    config: &ModelConfig,
    compare: Option<&Path>,
) -> Result<(RunSummary, Vec<String>)> {
    let run_dir = manifest.run_dir();
    let mut log = Vec::new();

    let labels;
    let mut truth: Vec<String> = Vec::new();
    let mut pred: Vec<String> = Vec::new();
    let mut dates: Vec<chrono::NaiveDate> = Vec::new();
    let mut fold_macros: Vec<f64> = Vec::new();

    if manifest.protocol == Protocol::Claim {
        labels = claim_labels();
        let claims = cleaned_claims(claims_path(manifest)?)?;
        let (_, test) = claim_partition(&claims);
        if test.is_empty() {
            return Err(Error::Protocol("no test-tagged claim sentences".into()));
        }
        let fold_pred = predict_claims(manifest, &run_dir, &test)?;
        let fold_truth: Vec<String> = test.iter().map(|c| c.label.as_str().to_string()).collect();
        let report = ExperimentReport::from_predictions(&fold_truth, &fold_pred, &labels)?;
        write_fold_report(&run_dir.join("fold0"), &report)?;
        log.push(format!(
            "fold 0: macro F1 {:.2} on {} sentences",
            report.macro_f1_pct,
            test.len()
        ));
        fold_macros.push(report.macro_f1_pct);
        truth = fold_truth;
        pred = fold_pred;
    } else {
        labels = news_labels();
        let articles = cleaned_articles(articles_path(manifest)?)?;
        let plans = read_fold_plans(&run_dir)?;
        let folds = resolve_folds(&articles, &plans)?;
        for fold in &folds {
            let fold_dir = run_dir.join(format!("fold{}", fold.index));
            let fold_pred = predict_news_fold(manifest, &fold_dir, fold)?;
            let fold_truth: Vec<String> = fold
                .test
                .iter()
                .map(|a| a.source_type.as_str().to_string())
                .collect();
            let report = ExperimentReport::from_predictions(&fold_truth, &fold_pred, &labels)?;
            write_fold_report(&fold_dir, &report)?;
            log.push(format!(
                "fold {}: macro F1 {:.2} on {} articles",
                fold.index,
                report.macro_f1_pct,
                fold.test.len()
            ));
            fold_macros.push(report.macro_f1_pct);
            truth.extend(fold_truth);
            pred.extend(fold_pred);
            dates.extend(fold.test.iter().map(|a| a.published));
        }
    }

    let mut report = ExperimentReport::from_predictions(&truth, &pred, &labels)?;
    report.folds = Some(FoldScores::from_scores(fold_macros)?);
    if manifest.protocol == Protocol::Forecasting {
        let monthly = monthly_macro_f1(&dates, &truth, &pred, &labels, config.cutoff)?;
        report.monthly_pct = Some(
            monthly
                .iter()
                .map(|m| m.map(|f| f * 100.0))
                .collect(),
        );
    }
    if let Some(other_dir) = compare {
        let other = read_summary(other_dir)?;
        let ours = &report.folds.as_ref().expect("set above").scores;
        let theirs = other
            .report
            .folds
            .as_ref()
            .ok_or_else(|| {
                Error::Config(format!(
                    "run `{}` has no fold scores to compare against",
                    other_dir.display()
                ))
            })?
            .scores
            .clone();
        match paired_t_test(ours, &theirs) {
            Ok(t) => {
                let d = cohens_d(ours, &theirs)?;
                report.significance = Some(SignificanceBlock {
                    t: t.t,
                    df: t.df,
                    p: t.p,
                    cohens_d: d,
                });
                log.push(format!(
                    "compared against {}: t = {:.4}, p = {:.4}",
                    other.meta.name, t.t, t.p
                ));
            }
            // Identical fold scores leave the test undefined; report the
            // tie rather than failing the run.
            Err(Error::Domain(_)) => log.push(format!(
                "compared against {}: fold differences have zero variance; \
                 no significance block",
                other.meta.name
            )),
            Err(e) => return Err(e),
        }
    }

    let summary = RunSummary {
        meta: RunMeta {
            name: manifest.name.clone(),
            protocol: manifest.protocol.as_str().to_string(),
            model: manifest.model.as_str().to_string(),
            features: manifest.features.as_str().to_string(),
            seed: manifest.seed,
        },
        report,
    };
    write_summary(&run_dir, &summary)?;
    log.push(format!(
        "aggregate macro F1 {:.2}; wrote {}",
        summary.report.macro_f1_pct,
        run_dir.join(AGGREGATE_JSON).display()
    ));
    Ok((summary, log))
}

fn write_fold_report(fold_dir: &Path, report: &ExperimentReport) -> Result<()> {
    write_text(
        &fold_dir.join("report.csv"),
        &render_report(report, ReportFormat::Csv),
    )?;
    write_text(
        &fold_dir.join("confusion.csv"),
        &confusion_csv(&report.confusion),
    )
}

fn write_summary(run_dir: &Path, summary: &RunSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("cannot serialize the run summary: {e}")))?;
    write_text(&run_dir.join(AGGREGATE_JSON), &format!("{json}\n"))?;
    write_text(
        &run_dir.join("aggregate.md"),
        &render_report(&summary.report, ReportFormat::Markdown),
    )?;
    let mut scores = String::from("fold,macro_f1\n");
    if let Some(folds) = &summary.report.folds {
        for (i, score) in folds.scores.iter().enumerate() {
            scores.push_str(&format!("{i},{score:.4}\n"));
        }
    }
    write_text(&run_dir.join("scores.csv"), &scores)?;
    if let Some(monthly) = &summary.report.monthly_pct {
        write_text(&run_dir.join("monthly.csv"), &monthly_series_csv(monthly))?;
    }
    Ok(())
}

fn read_summary(run_dir: &Path) -> Result<RunSummary> {
    let path = run_dir.join(AGGREGATE_JSON);
    require_file(&path, "run `veritask evaluate` there first")?;
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "cannot parse run summary `{}`: {e}",
            path.display()
        ))
    })
}

fn model_rank(model: &str) -> usize {
    match model {
        "svm" => 0,
        "rdel" => 1,
        "single" => 2,
        "mtl" => 3,
        _ => 4,
    }
}

/// Combine finished runs into one markdown grid: one section per
/// (protocol, features) pair, one row per model, class columns plus a
/// final F1-Macro column, and a paired single-vs-mtl significance line
/// wherever both encoder runs are present.
pub fn cmd_report(runs: &[PathBuf]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Config("no run directories given".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<(RunSummary, PathBuf)>> = BTreeMap::new();
    for dir in runs {
        let summary = read_summary(dir)?;
        groups
            .entry((summary.meta.protocol.clone(), summary.meta.features.clone()))
            .or_default()
            .push((summary, dir.clone()));
    }

    let mut out = String::new();
    for ((protocol, features), mut members) in groups {
        members.sort_by(|(a, _), (b, _)| {
            model_rank(&a.meta.model)
                .cmp(&model_rank(&b.meta.model))
                .then_with(|| a.meta.name.cmp(&b.meta.name))
        });
        let labels = members[0].0.report.labels.clone();
        for (summary, _) in &members {
            if summary.report.labels != labels {
                return Err(Error::Config(format!(
                    "run `{}` reports different classes than the rest of its group",
                    summary.meta.name
                )));
            }
        }

        out.push_str(&format!("## {protocol} — features: {features}\n\n"));
        out.push_str("| Model |");
        for label in &labels {
            out.push_str(&format!(" {label} |"));
        }
        out.push_str(" F1-Macro |\n| :-- |");
        for _ in 0..=labels.len() {
            out.push_str(" ---: |");
        }
        out.push('\n');
        for (summary, _) in &members {
            out.push_str(&format!("| {} |", summary.meta.model));
            for f1 in &summary.report.per_class_f1_pct {
                out.push_str(&format!(" {f1:.2} |"));
            }
            out.push_str(&format!(" {:.2} |\n", summary.report.macro_f1_pct));
        }

        let single = members.iter().find(|(s, _)| s.meta.model == "single");
        let mtl = members.iter().find(|(s, _)| s.meta.model == "mtl");
        if let (Some((single, _)), Some((mtl, _))) = (single, mtl) {
            if let (Some(sf), Some(mf)) = (&single.report.folds, &mtl.report.folds) {
                match paired_t_test(&mf.scores, &sf.scores) {
                    Ok(t) => {
                        let d = cohens_d(&mf.scores, &sf.scores)?;
                        out.push_str(&format!(
                            "\nPaired t-test (mtl vs single over {} folds): \
                             t = {:.4}, df = {}, p = {:.4}, Cohen's d = {:.4}\n",
                            mf.scores.len(),
                            t.t,
                            t.df,
                            t.p,
                            d
                        ));
                    }
                    Err(Error::Domain(_)) => out.push_str(
                        "\nPaired t-test (mtl vs single): fold scores are \
                         identical; the test is degenerate\n",
                    ),
                    Err(e) => return Err(e),
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}
