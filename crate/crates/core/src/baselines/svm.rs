//! One-vs-rest linear SVM trained by deterministic full-batch gradient
//! descent on the L2-regularized hinge loss, starting from zero weights.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::baselines::vocab::SparseVector;
use crate::{Error, Result};

use super::checkpoint::{parse_floats, write_floats};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 100,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Linear one-vs-rest classifier: one weight row and bias per class,
/// prediction by maximum margin with ties going to the lowest class
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn margin(&self, class: usize, x: &SparseVector) -> f64 {
        let row = &self.weights[class];
        let mut m = self.bias[class];
        for &(i, w) in x.entries() {
            if i < row.len() {
                m += row[i] * w;
            }
        }
        m
    }

    /// Margins for every class, in label order.
    pub fn decision_values(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.labels.len()).map(|c| self.margin(c, x)).collect()
    }

    pub fn predict(&self, x: &SparseVector) -> &str {
        let margins = self.decision_values(x);
        let mut best = 0;
        for (c, &m) in margins.iter().enumerate().skip(1) {
            if m > margins[best] {
                best = c;
            }
        }
        &self.labels[best]
    }

    pub fn predict_batch(&self, xs: &[SparseVector]) -> Vec<String> {
        crate::parallel::map_slice(xs, |x| self.predict(x).to_string())
    }

    /// Text checkpoint: header with dims, a tab-separated label line,
    /// one weight row per class, then the bias row.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(
            out,
            "linear {} {}",
            self.labels.len(),
            self.feature_dim()
        )?;
        writeln!(out, "{}", self.labels.join("\t"))?;
        for row in &self.weights {
            write_floats(&mut out, row)?;
        }
        write_floats(&mut out, &self.bias)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint("truncated classifier file".into()))?
                .map_err(Error::from)
        };
        let header = next_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("linear") {
            return Err(Error::Checkpoint("not a linear classifier file".into()));
        }
        let classes: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad class count".into()))?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad feature dim".into()))?;
        let labels: Vec<String> = next_line()?.split('\t').map(String::from).collect();
        if labels.len() != classes {
            return Err(Error::Checkpoint("label count mismatch".into()));
        }
        let mut weights = Vec::with_capacity(classes);
        for _ in 0..classes {
            let row = parse_floats(&next_line()?, dim)?;
            weights.push(row);
        }
        let bias = parse_floats(&next_line()?, classes)?;
        Ok(LinearClassifier {
            labels,
            weights,
            bias,
        })
    }
}

/// Sorted unique labels; errors unless at least two classes are present.
pub(crate) fn class_list<S: AsRef<str>>(y: &[S]) -> Result<Vec<String>> {
    let mut labels: Vec<String> = y.iter().map(|s| s.as_ref().to_string()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::domain(format!(
            "training needs at least 2 classes, found {}",
            labels.len()
        )));
    }
    Ok(labels)
}

/// Train one-vs-rest hinge-loss linear models. Each class sees targets
/// ±1; a full-batch subgradient step runs per epoch:
/// `w ← w − lr·(l2·w − mean over active rows of s·x)`.
pub fn train_linear_svm<S: AsRef<str>>(
    x: &[SparseVector],
    y: &[S],
    config: &SvmConfig,
) -> Result<LinearClassifier> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::domain(format!(
            "{} feature vectors vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let labels = class_list(y)?;
    let dim = 1 + x
        .iter()
        .flat_map(|v| v.entries().iter().map(|&(i, _)| i))
        .max()
        .unwrap_or(0);
    let n = x.len() as f64;

    let mut weights = vec![vec![0.0; dim]; labels.len()];
    let mut bias = vec![0.0; labels.len()];
    for (c, label) in labels.iter().enumerate() {
        let signs: Vec<f64> = y
            .iter()
            .map(|l| if l.as_ref() == label { 1.0 } else { -1.0 })
            .collect();
        let w = &mut weights[c];
        let b = &mut bias[c];
        for _ in 0..config.epochs {
            let mut grad_w = vec![0.0; dim];
            let mut grad_b = 0.0;
            for (xi, &s) in x.iter().zip(&signs) {
                let mut m = *b;
                for &(i, v) in xi.entries() {
                    m += w[i] * v;
                }
                if s * m < 1.0 {
                    for &(i, v) in xi.entries() {
                        grad_w[i] -= s * v;
                    }
                    grad_b -= s;
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad_w) {
                *wi -= config.learning_rate * (config.l2 * *wi + g / n);
            }
            *b -= config.learning_rate * grad_b / n;
        }
    }
    Ok(LinearClassifier {
        labels,
        weights,
        bias,
    })
}
