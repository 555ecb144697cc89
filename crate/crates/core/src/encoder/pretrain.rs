//! Self-supervised pretraining: masked-token prediction plus
//! next-sentence classification, trained jointly.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

use super::encode::{encode_pair, EncodedPair};
use super::forward::{backward, forward_cached, DropoutState};
use super::params::{add_scaled, EncoderConfig, EncoderParams, ParamGroup};
use super::vocab::{Vocabulary, MASK};

/// One training example: two sentences and whether the second really
/// followed the first.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub first: String,
    pub second: String,
    pub is_next: bool,
}

/// Build sentence pairs from documents (each a sentence list): every
/// consecutive pair appears once, and half the time — decided by coin
/// flip — the successor is swapped for a random sentence drawn from the
/// rest of the corpus.
pub fn make_nsp_pairs(documents: &[Vec<String>], seed: u64) -> Vec<SentencePair> {
    let all: Vec<&String> = documents.iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for doc in documents {
        for window in doc.windows(2) {
            let negative = all.len() > 1 && rng.random::<f64>() < 0.5;
            if negative {
                let replacement = loop {
                    let pick = all[rng.random_range(0..all.len())];
                    if pick != &window[1] {
                        break pick.clone();
                    }
                };
                pairs.push(SentencePair {
                    first: window[0].clone(),
                    second: replacement,
                    is_next: false,
                });
            } else {
                pairs.push(SentencePair {
                    first: window[0].clone(),
                    second: window[1].clone(),
                    is_next: true,
                });
            }
        }
    }
    pairs
}

/// Optimization settings for the pretraining phase.
#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Probability that a real, non-special position is selected for
    /// masked-token prediction.
    pub mask_prob: f64,
    pub max_first: usize,
    pub max_second: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 200,
            batch_size: 8,
            learning_rate: 0.05,
            clip_norm: 5.0,
            mask_prob: 0.15,
            max_first: 32,
            max_second: 32,
        }
    }
}

/// Per-step loss components. `joint = mlm + nsp`.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainStep {
    pub joint: f64,
    pub mlm: f64,
    pub nsp: f64,
}

/// Heads used only during pretraining and discarded afterwards. The
/// masked-token logits tie to the token embedding matrix; only a bias
/// is extra. Sentence-order classification reads the pooled vector.
struct AuxHeads {
    mlm_bias: Array1<f64>,
    nsp_w: Array2<f64>,
    nsp_b: Array1<f64>,
}

struct MaskedPosition {
    position: usize,
    target: usize,
}

/// Select positions for masked prediction and rewrite them in place:
/// 80% become [MASK], 10% a random regular token, 10% stay unchanged.
fn apply_masking(
    enc: &mut EncodedPair,
    mask_prob: f64,
    vocab_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<MaskedPosition> {
    let mut selected = Vec::new();
    for pos in 0..enc.len() {
        if enc.mask[pos] == 0 || Vocabulary::is_special(enc.ids[pos]) {
            continue;
        }
        if rng.random::<f64>() >= mask_prob {
            continue;
        }
        let target = enc.ids[pos];
        let roll = rng.random::<f64>();
        if roll < 0.8 {
            enc.ids[pos] = MASK;
        } else if roll < 0.9 {
            enc.ids[pos] = rng.random_range(5..vocab_size);
        }
        selected.push(MaskedPosition {
            position: pos,
            target,
        });
    }
    selected
}

fn log_softmax_loss(logits: &Array1<f64>, target: usize) -> (f64, Array1<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum: f64 = exps.sum();
    let probs = exps / sum;
    let loss = -(probs[target].max(1e-300)).ln();
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    (loss, dlogits)
}

/// Pretrain an encoder from scratch on sentence pairs. Returns the
/// encoder parameters (auxiliary heads are dropped) and the per-step
/// loss trajectory.
pub fn pretrain_mlm_nsp(
    pairs: &[SentencePair],
    vocab: &Vocabulary,
    config: &EncoderConfig,
    train: &PretrainConfig,
    seed: u64,
) -> Result<(EncoderParams, Vec<PretrainStep>)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::domain("no sentence pairs to pretrain on"));
    }
    if train.batch_size == 0 || train.steps == 0 {
        return Err(Error::domain("batch size and step count must be positive"));
    }
    if !(0.0..1.0).contains(&train.mask_prob) {
        return Err(Error::domain(format!(
            "mask probability {} outside [0, 1)",
            train.mask_prob
        )));
    }
    if !(train.learning_rate.is_finite() && train.learning_rate > 0.0) {
        return Err(Error::domain("learning rate must be positive"));
    }
    if vocab.len() != config.vocab_size {
        return Err(Error::domain(format!(
            "vocabulary has {} entries but the encoder expects {}",
            vocab.len(),
            config.vocab_size
        )));
    }

    let encoded: Vec<EncodedPair> = pairs
        .iter()
        .map(|p| {
            encode_pair(
                &p.first,
                Some(&p.second),
                train.max_first,
                train.max_second,
                vocab,
            )
        })
        .collect::<Result<_>>()?;
    if let Some(too_long) = encoded.iter().position(|e| e.len() > config.max_positions) {
        return Err(Error::domain(format!(
            "pair {too_long} exceeds the position budget even after truncation"
        )));
    }

    let mut params = EncoderParams::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dist = Normal::new(0.0, 0.02).unwrap();
    let mut aux = AuxHeads {
        mlm_bias: Array1::zeros(config.vocab_size),
        nsp_w: Array2::from_shape_fn((2, config.dim), |_| dist.sample(&mut rng)),
        nsp_b: Array1::zeros(2),
    };
    let mut dropout = (config.dropout > 0.0).then(|| DropoutState::new(config.dropout, seed ^ 1));

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut history = Vec::with_capacity(train.steps);

    for _ in 0..train.steps {
        let mut batch = Vec::with_capacity(train.batch_size);
        for _ in 0..train.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        // Select masked positions for the whole batch first so the MLM
        // loss can be normalized by the batch-wide count.
        let mut samples: Vec<(EncodedPair, Vec<MaskedPosition>, bool)> = Vec::new();
        let mut total_masked = 0usize;
        for &idx in &batch {
            let mut enc = encoded[idx].clone();
            let selected = apply_masking(&mut enc, train.mask_prob, config.vocab_size, &mut rng);
            total_masked += selected.len();
            samples.push((enc, selected, pairs[idx].is_next));
        }

        let mut grads = params.zeros_like();
        let mut aux_grads = AuxHeads {
            mlm_bias: Array1::zeros(config.vocab_size),
            nsp_w: Array2::zeros((2, config.dim)),
            nsp_b: Array1::zeros(2),
        };
        let mut mlm_loss = 0.0;
        let mut nsp_loss = 0.0;

        for (enc, selected, is_next) in &samples {
            let cache = forward_cached(enc, &params, config, dropout.as_mut())?;
            let mut d_states = Array2::zeros(cache.states.raw_dim());

            for m in selected {
                let state = cache.states.row(m.position).to_owned();
                let logits = params.token_embedding.dot(&state) + &aux.mlm_bias;
                let (loss, mut dlogits) = log_softmax_loss(&logits, m.target);
                mlm_loss += loss / total_masked as f64;
                dlogits /= total_masked as f64;
                let dstate = dlogits.dot(&params.token_embedding);
                let mut row = d_states.row_mut(m.position);
                row += &dstate;
                grads.token_embedding += &dlogits
                    .view()
                    .insert_axis(Axis(1))
                    .dot(&state.view().insert_axis(Axis(0)));
                aux_grads.mlm_bias += &dlogits;
            }

            let nsp_logits = aux.nsp_w.dot(&cache.pooled) + &aux.nsp_b;
            let label = usize::from(*is_next);
            let (loss, mut dlogits) = log_softmax_loss(&nsp_logits, label);
            nsp_loss += loss / train.batch_size as f64;
            dlogits /= train.batch_size as f64;
            let d_pooled = aux.nsp_w.t().dot(&dlogits);
            aux_grads.nsp_w += &dlogits
                .view()
                .insert_axis(Axis(1))
                .dot(&cache.pooled.view().insert_axis(Axis(0)));
            aux_grads.nsp_b += &dlogits;

            let sample_grads = backward(&cache, &params, config, &d_states, &d_pooled)?;
            add_scaled(&mut grads, &sample_grads, 1.0);
        }

        // Joint clip over encoder and auxiliary gradients.
        let sq = grads.sq_norm()
            + aux_grads.mlm_bias.iter().map(|g| g * g).sum::<f64>()
            + aux_grads.nsp_w.iter().map(|g| g * g).sum::<f64>()
            + aux_grads.nsp_b.iter().map(|g| g * g).sum::<f64>();
        let norm = sq.sqrt();
        let scale = if norm > train.clip_norm {
            train.clip_norm / norm
        } else {
            1.0
        };
        add_scaled(&mut params, &grads, -train.learning_rate * scale);
        let lr = train.learning_rate * scale;
        aux.mlm_bias.zip_mut_with(&aux_grads.mlm_bias, |p, &g| *p -= lr * g);
        aux.nsp_w.zip_mut_with(&aux_grads.nsp_w, |p, &g| *p -= lr * g);
        aux.nsp_b.zip_mut_with(&aux_grads.nsp_b, |p, &g| *p -= lr * g);

        history.push(PretrainStep {
            joint: mlm_loss + nsp_loss,
            mlm: mlm_loss,
            nsp: nsp_loss,
        });
    }

    Ok((params, history))
}
