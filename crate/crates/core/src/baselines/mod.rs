//! Classical baselines: tf-idf n-gram features, a one-vs-rest linear
//! SVM, a headline/body perceptron that scores headline-body agreement,
//! and the three-way claim score mapping.

pub(crate) mod checkpoint;
mod mlp;
mod svm;
mod vocab;

pub use mlp::{train_mlp, MlpClassifier, MlpConfig, TrainingHistory};
pub use svm::{train_linear_svm, LinearClassifier, SvmConfig};
pub use vocab::{
    build_ngram_vocab, cosine_similarity, tfidf_transform, NgramVocabulary, SparseVector,
};

use crate::corpus::{token_count, ClaimLabel};
use crate::{Error, Result};

/// Dense feature vector for the headline/body model:
/// `concat(tfidf(title), tfidf(body), [cos(title, body)])`, dimension
/// `2·|vocab| + 1`.
pub fn headline_body_features(
    title: &str,
    body: &str,
    vocab: &NgramVocabulary,
) -> Vec<f64> {
    let dim = vocab.len();
    let title_vec = tfidf_transform(title, vocab);
    let body_vec = tfidf_transform(body, vocab);
    let mut features = Vec::with_capacity(2 * dim + 1);
    features.extend(title_vec.to_dense(dim).expect("indices come from vocab"));
    features.extend(body_vec.to_dense(dim).expect("indices come from vocab"));
    features.push(cosine_similarity(&title_vec, &body_vec));
    features
}

/// Dense feature vector for claim sentences: tf-idf, the sentence token
/// length, and any externally supplied per-sentence annotations
/// appended verbatim.
pub fn claim_features(
    text: &str,
    annotations: Option<&[f64]>,
    vocab: &NgramVocabulary,
) -> Vec<f64> {
    let dim = vocab.len();
    let mut features = tfidf_transform(text, vocab)
        .to_dense(dim)
        .expect("indices come from vocab");
    features.push(token_count(text) as f64);
    if let Some(extra) = annotations {
        features.extend_from_slice(extra);
    }
    features
}

/// Map a check-worthiness score in [0, 1] to its class: below 0.33 is
/// non-factual, above 0.66 is check-worthy, the closed middle interval
/// is unimportant-factual.
pub fn map_claim_score(score: f64) -> Result<ClaimLabel> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::domain(format!(
            "claim score {score} outside [0, 1]"
        )));
    }
    Ok(if score < 0.33 {
        ClaimLabel::NFS
    } else if score > 0.66 {
        ClaimLabel::CFS
    } else {
        ClaimLabel::UFS
    })
}
