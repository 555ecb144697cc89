//! Cross-task training: the shuffled batch schedule, single optimization
//! steps with gradient isolation, and the epoch loop.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    add_scaled, backward, forward_cached, DropoutState, EncoderParams, ParamGroup,
};
use crate::{Error, Result};

use super::{HeadParams, ModelBundle, TaskDataset, TaskExample, TaskKind};

/// Optimization settings for multi-task fine-tuning.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2,
            learning_rate: 2e-5,
            epochs: 4,
            momentum: 0.0,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::domain(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::domain("clip norm must be positive"));
        }
        Ok(())
    }
}

/// One slot in the cross-task schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub task: String,
    pub batch_index: usize,
}

/// Permute the concatenated batch lists of all tasks uniformly by seed.
/// Every batch reference appears exactly once.
pub fn build_schedule(
    batch_counts: &[(String, usize)],
    seed: u64,
) -> Result<Vec<ScheduleEntry>> {
    let mut entries = Vec::new();
    for (task, count) in batch_counts {
        if *count == 0 {
            return Err(Error::domain(format!(
                "task `{task}` contributes zero batches"
            )));
        }
        for batch_index in 0..*count {
            entries.push(ScheduleEntry {
                task: task.clone(),
                batch_index,
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::domain("no tasks to schedule"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    Ok(entries)
}

/// Momentum buffers matching the bundle's parameter schema.
pub struct OptimizerState {
    encoder: EncoderParams,
    heads: BTreeMap<String, HeadParams>,
}

impl OptimizerState {
    pub fn new(bundle: &ModelBundle) -> Self {
        OptimizerState {
            encoder: bundle.params.zeros_like(),
            heads: bundle
                .tasks
                .iter()
                .map(|(name, task)| (name.clone(), task.head.zeros_like()))
                .collect(),
        }
    }
}

fn cross_entropy_with_grad(logits: &Array1<f64>, target: usize) -> (f64, Array1<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum: f64 = exps.sum();
    let probs = exps / sum;
    let loss = -(probs[target].max(1e-300)).ln();
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    (loss, dlogits)
}

/// Mean cross-entropy of one batch plus the gradients it induces on the
/// shared encoder and the active task's head. No parameters change.
pub fn batch_gradients(
    bundle: &ModelBundle,
    task_name: &str,
    batch: &[TaskExample],
    mut dropout: Option<&mut DropoutState>,
) -> Result<(f64, EncoderParams, HeadParams)> {
    let task = bundle.task(task_name)?;
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut enc_grads = bundle.params.zeros_like();
    let mut head_grads = task.head.zeros_like();

    for example in batch {
        match (example, &task.spec.kind) {
            (
                TaskExample::Classification { input, label_index },
                TaskKind::Classification { labels },
            ) => {
                if *label_index >= labels.len() {
                    return Err(Error::domain(format!(
                        "label index {label_index} outside task `{task_name}`"
                    )));
                }
                let cache =
                    forward_cached(input, &bundle.params, &bundle.config, dropout.as_deref_mut())?;
                let logits = task.head.w.dot(&cache.pooled) + &task.head.b;
                let (sample_loss, mut dlogits) = cross_entropy_with_grad(&logits, *label_index);
                loss += sample_loss * scale;
                dlogits *= scale;
                head_grads.w += &dlogits
                    .view()
                    .insert_axis(Axis(1))
                    .dot(&cache.pooled.view().insert_axis(Axis(0)));
                head_grads.b += &dlogits;
                let d_pooled = task.head.w.t().dot(&dlogits);
                let d_states = Array2::zeros(cache.states.raw_dim());
                let sample = backward(&cache, &bundle.params, &bundle.config, &d_states, &d_pooled)?;
                add_scaled(&mut enc_grads, &sample, 1.0);
            }
            (
                TaskExample::MultipleChoice {
                    choices,
                    answer_index,
                },
                TaskKind::MultipleChoice,
            ) => {
                if choices.len() < 2 || *answer_index >= choices.len() {
                    return Err(Error::domain("malformed multiple-choice example"));
                }
                let mut caches = Vec::with_capacity(choices.len());
                let mut scores = Array1::zeros(choices.len());
                for (c, choice) in choices.iter().enumerate() {
                    let cache = forward_cached(
                        choice,
                        &bundle.params,
                        &bundle.config,
                        dropout.as_deref_mut(),
                    )?;
                    scores[c] = task.head.w.row(0).dot(&cache.pooled) + task.head.b[0];
                    caches.push(cache);
                }
                let (sample_loss, mut dscores) = cross_entropy_with_grad(&scores, *answer_index);
                loss += sample_loss * scale;
                dscores *= scale;
                for (c, cache) in caches.iter().enumerate() {
                    let d_pooled = &task.head.w.row(0).to_owned() * dscores[c];
                    {
                        let mut w_row = head_grads.w.row_mut(0);
                        w_row.zip_mut_with(&cache.pooled.view(), |g, &p| *g += dscores[c] * p);
                    }
                    head_grads.b[0] += dscores[c];
                    let d_states = Array2::zeros(cache.states.raw_dim());
                    let sample =
                        backward(cache, &bundle.params, &bundle.config, &d_states, &d_pooled)?;
                    add_scaled(&mut enc_grads, &sample, 1.0);
                }
            }
            _ => {
                return Err(Error::domain(format!(
                    "example kind does not match task `{task_name}`"
                )));
            }
        }
    }
    Ok((loss, enc_grads, head_grads))
}

/// One optimization step on one task's batch: forward, cross-entropy,
/// backward, joint clip to the configured norm, momentum SGD update of
/// the shared encoder and the active head only.
pub fn train_step(
    bundle: &mut ModelBundle,
    task_name: &str,
    batch: &[TaskExample],
    train: &TrainConfig,
    optimizer: &mut OptimizerState,
    dropout: Option<&mut DropoutState>,
) -> Result<f64> {
    train.validate()?;
    let (loss, mut enc_grads, mut head_grads) =
        batch_gradients(bundle, task_name, batch, dropout)?;
    if !loss.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss {loss} on task `{task_name}`; \
             the step was aborted before touching any parameters"
        )));
    }

    let sq = enc_grads.sq_norm() + head_grads.sq_norm();
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient norm on task `{task_name}`"
        )));
    }
    if norm > train.clip_norm {
        let scale = train.clip_norm / norm;
        enc_grads.scale_all(scale);
        head_grads.scale_all(scale);
    }

    optimizer.encoder.scale_all(train.momentum);
    add_scaled(&mut optimizer.encoder, &enc_grads, 1.0);
    add_scaled(&mut bundle.params, &optimizer.encoder, -train.learning_rate);

    let velocity = optimizer
        .heads
        .get_mut(task_name)
        .ok_or_else(|| Error::domain(format!("optimizer has no state for `{task_name}`")))?;
    velocity.scale_all(train.momentum);
    add_scaled(velocity, &head_grads, 1.0);
    let head = &mut bundle.tasks.get_mut(task_name).unwrap().head;
    add_scaled(head, &*velocity, -train.learning_rate);
    Ok(loss)
}

/// Epoch-mean training loss per task, one entry per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FitHistory {
    pub per_task: BTreeMap<String, Vec<f64>>,
}

/// Multi-task fine-tuning: each epoch rebuilds the cross-task schedule
/// with seed `base + epoch` and runs one step per scheduled batch.
pub fn fit(
    bundle: &mut ModelBundle,
    datasets: &[TaskDataset],
    train: &TrainConfig,
) -> Result<FitHistory> {
    train.validate()?;
    if datasets.is_empty() {
        return Err(Error::domain("no datasets to fit"));
    }
    let mut by_name: BTreeMap<&str, &TaskDataset> = BTreeMap::new();
    for dataset in datasets {
        bundle.task_spec(&dataset.name)?;
        if by_name.insert(&dataset.name, dataset).is_some() {
            return Err(Error::domain(format!(
                "dataset `{}` appears twice",
                dataset.name
            )));
        }
    }
    let batch_counts: Vec<(String, usize)> = datasets
        .iter()
        .map(|d| (d.name.clone(), d.examples.len().div_ceil(train.batch_size)))
        .collect();

    let mut optimizer = OptimizerState::new(bundle);
    let mut dropout = (bundle.config.dropout > 0.0)
        .then(|| DropoutState::new(bundle.config.dropout, train.seed ^ 0xd0d0_d0d0));
    let mut history: BTreeMap<String, Vec<f64>> = datasets
        .iter()
        .map(|d| (d.name.clone(), Vec::with_capacity(train.epochs)))
        .collect();

    for epoch in 0..train.epochs {
        let schedule = build_schedule(&batch_counts, train.seed + epoch as u64)?;
        let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for entry in &schedule {
            let dataset = by_name[entry.task.as_str()];
            let start = entry.batch_index * train.batch_size;
            let end = (start + train.batch_size).min(dataset.examples.len());
            let loss = train_step(
                bundle,
                &entry.task,
                &dataset.examples[start..end],
                train,
                &mut optimizer,
                dropout.as_mut(),
            )?;
            let slot = sums.entry(entry.task.as_str()).or_insert((0.0, 0));
            slot.0 += loss;
            slot.1 += 1;
        }
        for (task, (sum, count)) in sums {
            history.get_mut(task).unwrap().push(sum / count as f64);
        }
    }
    Ok(FitHistory { per_task: history })
}
