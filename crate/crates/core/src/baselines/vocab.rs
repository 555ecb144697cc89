//! N-gram vocabulary and tf-idf vectors.
//!
//! Terms are whitespace unigrams and bigrams ranked by total corpus
//! frequency (ties broken lexicographically), capped at `max_features`.
//! Weights use the smoothed scheme
//! `tf_raw · (ln((1+N)/(1+df)) + 1)` followed by L2 normalization.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::tokens;
use crate::{Error, Result};

/// Fixed term list with document frequencies over a corpus of `doc_count`
/// documents.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramVocabulary {
    terms: Vec<String>,
    df: Vec<u64>,
    index: HashMap<String, usize>,
    doc_count: u64,
}

impl NgramVocabulary {
    /// Assemble a vocabulary from explicit (term, document frequency)
    /// pairs; term order is preserved as given.
    pub fn from_terms(terms: Vec<(String, u64)>, doc_count: u64) -> Result<Self> {
        if doc_count == 0 {
            return Err(Error::domain("vocabulary needs a positive document count"));
        }
        let mut index = HashMap::with_capacity(terms.len());
        let mut term_list = Vec::with_capacity(terms.len());
        let mut df = Vec::with_capacity(terms.len());
        for (i, (term, d)) in terms.into_iter().enumerate() {
            if d == 0 || d > doc_count {
                return Err(Error::domain(format!(
                    "df {d} for `{term}` outside [1, {doc_count}]"
                )));
            }
            if index.insert(term.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate term `{term}`")));
            }
            term_list.push(term);
            df.push(d);
        }
        Ok(NgramVocabulary {
            terms: term_list,
            df,
            index,
            doc_count,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Smoothed inverse document frequency of the `i`-th term.
    pub fn idf(&self, i: usize) -> f64 {
        ((1.0 + self.doc_count as f64) / (1.0 + self.df[i] as f64)).ln() + 1.0
    }

    /// Plain text persistence: a header line with counts, then one
    /// `term<TAB>df` line per term (bigrams contain spaces, hence tabs).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(out, "ngram-vocab {} {}", self.doc_count, self.terms.len())?;
        for (term, df) in self.terms.iter().zip(&self.df) {
            writeln!(out, "{term}\t{df}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("empty vocabulary file".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("ngram-vocab") {
            return Err(Error::Checkpoint("not a vocabulary file".into()));
        }
        let doc_count: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad document count".into()))?;
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad term count".into()))?;
        let mut terms = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            let (term, df) = line
                .split_once('\t')
                .ok_or_else(|| Error::Checkpoint(format!("bad vocab line `{line}`")))?;
            let df: u64 = df
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad df in `{line}`")))?;
            terms.push((term.to_string(), df));
        }
        if terms.len() != n {
            return Err(Error::Checkpoint(format!(
                "expected {n} terms, found {}",
                terms.len()
            )));
        }
        Self::from_terms(terms, doc_count)
    }
}

/// Unigrams plus space-joined bigrams of a cleaned text.
fn ngrams(text: &str) -> Vec<String> {
    let toks: Vec<&str> = tokens(text).collect();
    let mut grams: Vec<String> = toks.iter().map(|t| t.to_string()).collect();
    for pair in toks.windows(2) {
        grams.push(format!("{} {}", pair[0], pair[1]));
    }
    grams
}

/// Rank all unigrams and bigrams by total corpus frequency (descending,
/// lexicographic tiebreak) and keep the top `max_features`.
pub fn build_ngram_vocab<S: AsRef<str>>(
    texts: &[S],
    max_features: usize,
) -> Result<NgramVocabulary> {
    if texts.is_empty() {
        return Err(Error::domain("cannot build a vocabulary from an empty corpus"));
    }
    if max_features == 0 {
        return Err(Error::domain("max_features must be positive"));
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    let mut df: HashMap<String, u64> = HashMap::new();
    for text in texts {
        let grams = ngrams(text.as_ref());
        for g in &grams {
            *freq.entry(g.clone()).or_insert(0) += 1;
        }
        let mut seen: Vec<&String> = grams.iter().collect();
        seen.sort_unstable();
        seen.dedup();
        for g in seen {
            *df.entry(g.clone()).or_insert(0) += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::domain("corpus contains no tokens"));
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|(ta, fa), (tb, fb)| fb.cmp(fa).then_with(|| ta.cmp(tb)));
    ranked.truncate(max_features);
    let terms = ranked
        .into_iter()
        .map(|(term, _)| {
            let d = df[&term];
            (term, d)
        })
        .collect();
    NgramVocabulary::from_terms(terms, texts.len() as u64)
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Build from unsorted (index, weight) pairs; duplicate indices are
    /// rejected, zero weights dropped.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::domain(format!(
                    "duplicate sparse index {}",
                    pair[0].0
                )));
            }
        }
        for &(i, w) in &entries {
            if !w.is_finite() {
                return Err(Error::domain(format!("non-finite weight at index {i}")));
            }
        }
        Ok(SparseVector { entries })
    }

    pub fn zero() -> Self {
        SparseVector { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            let (ia, wa) = self.entries[i];
            let (ib, wb) = other.entries[j];
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, w)| w * w)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, factor: f64) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w * factor)).collect(),
        }
    }

    /// Expand into a dense vector of the given dimension. Indices at or
    /// beyond `dim` are an error.
    pub fn to_dense(&self, dim: usize) -> Result<Vec<f64>> {
        let mut dense = vec![0.0; dim];
        for &(i, w) in &self.entries {
            if i >= dim {
                return Err(Error::domain(format!(
                    "sparse index {i} outside dense dimension {dim}"
                )));
            }
            dense[i] = w;
        }
        Ok(dense)
    }
}

/// tf-idf vector of a cleaned text under a fixed vocabulary: raw term
/// counts scaled by smoothed idf, then L2-normalized. Out-of-vocabulary
/// terms are ignored; a text with no in-vocab terms maps to the zero
/// vector.
pub fn tfidf_transform(text: &str, vocab: &NgramVocabulary) -> SparseVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for gram in ngrams(text) {
        if let Some(i) = vocab.term_index(&gram) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, tf)| (i, tf * vocab.idf(i)))
        .collect();
    entries.sort_by_key(|&(i, _)| i);
    let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for entry in &mut entries {
            entry.1 /= norm;
        }
    }
    SparseVector { entries }
}

/// Cosine similarity with the convention that a zero vector has
/// similarity 0.0 to everything.
pub fn cosine_similarity(u: &SparseVector, v: &SparseVector) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(v) / (nu * nv)
}
