//! Word-level vocabulary with fixed special tokens.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::tokens;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;

const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Token ↔ id table. Ids 0–4 are always the special tokens, in the
/// order [PAD], [UNK], [CLS], [SEP], [MASK].
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_items(items: Vec<String>) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { items, index }
    }

    /// Number of entries including the specials.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Id for a token, falling back to [UNK] for unknown words.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Token string for an id.
    pub fn token(&self, id: usize) -> Result<&str> {
        self.items
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::domain(format!("token id {id} out of range")))
    }

    /// Ids 5.. are ordinary words; anything below is a special token.
    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    /// One `token<TAB>id` line per entry, in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, token) in self.items.iter().enumerate() {
            writeln!(out, "{token}\t{i}").unwrap();
        }
        out
    }

    /// Parse the `token<TAB>id` listing written by [`Vocabulary::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (token, id_text) = line.split_once('\t').ok_or_else(|| Error::Checkpoint(
                format!("vocabulary line {} missing tab separator", lineno + 1),
            ))?;
            let id: usize = id_text.parse().map_err(|_| {
                Error::Checkpoint(format!("bad token id `{id_text}` on line {}", lineno + 1))
            })?;
            if id != items.len() {
                return Err(Error::Checkpoint(format!(
                    "vocabulary ids must be consecutive; expected {}, got {id}",
                    items.len()
                )));
            }
            items.push(token.to_string());
        }
        for (i, special) in SPECIALS.iter().enumerate() {
            if items.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Checkpoint(format!(
                    "vocabulary must start with the special tokens; id {i} should be {special}"
                )));
            }
        }
        Ok(Vocabulary::from_items(items))
    }
}

/// Build a vocabulary from cleaned texts: the 5 specials followed by the
/// `max_size − 5` most frequent words (ties broken lexicographically).
pub fn build_vocab<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size < 6 {
        return Err(Error::domain(format!(
            "vocabulary size {max_size} leaves no room for words beyond the 5 specials"
        )));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for text in texts {
        for token in tokens(text.as_ref()) {
            *freq.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - SPECIALS.len());
    let mut items: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    items.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from_items(items))
}
