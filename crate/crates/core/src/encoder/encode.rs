//! Turning one or two cleaned text segments into model input ids.

use crate::corpus::tokens;
use crate::{Error, Result};

use super::vocab::{Vocabulary, CLS, PAD, SEP};

/// A tokenized input: ids, segment markers (0 for the first segment
/// including its [SEP], 1 afterwards), and an attention mask that is 0
/// exactly on [PAD] positions.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub ids: Vec<usize>,
    pub segments: Vec<u8>,
    pub mask: Vec<u8>,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Extend with [PAD] tokens (mask 0, segment 0) up to `target_len`.
    pub fn pad_to(&mut self, target_len: usize) {
        while self.ids.len() < target_len {
            self.ids.push(PAD);
            self.segments.push(0);
            self.mask.push(0);
        }
    }

    /// Positions that hold real (non-pad) tokens.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Encode `[CLS] a… [SEP]` or `[CLS] a… [SEP] b… [SEP]`. Each segment is
/// truncated from the tail to its own budget before assembly.
pub fn encode_pair(
    segment_a: &str,
    segment_b: Option<&str>,
    max_a: usize,
    max_b: usize,
    vocab: &Vocabulary,
) -> Result<EncodedPair> {
    let ids_a: Vec<usize> = tokens(segment_a).take(max_a).map(|t| vocab.id(t)).collect();
    if ids_a.is_empty() {
        return Err(Error::domain(
            "first segment is empty after tokenization; nothing to encode",
        ));
    }
    let mut ids = Vec::with_capacity(ids_a.len() + 2);
    ids.push(CLS);
    ids.extend(&ids_a);
    ids.push(SEP);
    let mut segments = vec![0u8; ids.len()];
    if let Some(b) = segment_b {
        let ids_b: Vec<usize> = tokens(b).take(max_b).map(|t| vocab.id(t)).collect();
        ids.extend(&ids_b);
        ids.push(SEP);
        segments.resize(ids.len(), 1);
    }
    let mask = vec![1u8; ids.len()];
    Ok(EncodedPair {
        ids,
        segments,
        mask,
    })
}
