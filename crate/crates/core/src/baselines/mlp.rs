//! Single-hidden-layer perceptron (ReLU → softmax) trained with
//! full-batch gradient descent, global gradient-norm clipping, and early
//! stopping on a held-out split.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

use super::checkpoint::{parse_floats, write_floats};
use super::svm::class_list;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Global L2 gradient-norm ceiling.
    pub clip_norm: f64,
    /// Epochs of non-improving held-out loss tolerated before stopping.
    pub patience: usize,
    /// Fraction of samples held out for early stopping; 0 disables it.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_dim: 64,
            epochs: 100,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            patience: 5,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Per-epoch losses recorded during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    /// Number of epochs actually run.
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub labels: Vec<String>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl MlpClassifier {
    /// Seeded Gaussian initialization scaled by 1/√fan_in.
    pub fn init(labels: Vec<String>, in_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |rows: usize, cols: usize| -> Array2<f64> {
            let dist = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).unwrap();
            let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Array2::from_shape_vec((rows, cols), data).unwrap()
        };
        let n_classes = labels.len();
        let w1 = sample(hidden_dim, in_dim);
        let w2 = sample(n_classes, hidden_dim);
        MlpClassifier {
            labels,
            w1,
            b1: Array1::zeros(hidden_dim),
            w2,
            b2: Array1::zeros(n_classes),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Class probabilities for a batch (rows = samples).
    fn probabilities(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let hidden_pre = x.dot(&self.w1.t()) + &self.b1;
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        let mut probs = logits;
        for mut row in probs.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        (probs, hidden)
    }

    /// Mean cross-entropy plus gradients over a full batch.
    fn batch_grads(&self, x: &Array2<f64>, targets: &[usize]) -> (f64, Grads) {
        let n = x.nrows() as f64;
        let (probs, hidden) = self.probabilities(x);
        let mut loss = 0.0;
        let mut dlogits = probs;
        for (mut row, &t) in dlogits.rows_mut().into_iter().zip(targets) {
            loss -= row[t].max(1e-300).ln();
            row[t] -= 1.0;
        }
        loss /= n;
        dlogits.mapv_inplace(|v| v / n);

        let gw2 = dlogits.t().dot(&hidden);
        let gb2 = dlogits.sum_axis(Axis(0));
        let mut dhidden = dlogits.dot(&self.w2);
        dhidden.zip_mut_with(&hidden, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let gw1 = dhidden.t().dot(x);
        let gb1 = dhidden.sum_axis(Axis(0));
        (
            loss,
            Grads {
                w1: gw1,
                b1: gb1,
                w2: gw2,
                b2: gb2,
            },
        )
    }

    fn mean_loss(&self, x: &Array2<f64>, targets: &[usize]) -> f64 {
        let (probs, _) = self.probabilities(x);
        let mut loss = 0.0;
        for (row, &t) in probs.rows().into_iter().zip(targets) {
            loss -= row[t].max(1e-300).ln();
        }
        loss / x.nrows() as f64
    }

    pub fn predict(&self, features: &[f64]) -> Result<&str> {
        if features.len() != self.in_dim() {
            return Err(Error::domain(format!(
                "feature dim {} does not match model dim {}",
                features.len(),
                self.in_dim()
            )));
        }
        let x = Array2::from_shape_vec((1, features.len()), features.to_vec()).unwrap();
        let (probs, _) = self.probabilities(&x);
        let row = probs.row(0);
        let mut best = 0;
        for (c, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = c;
            }
        }
        Ok(&self.labels[best])
    }

    pub fn predict_batch(&self, features: &[Vec<f64>]) -> Result<Vec<String>> {
        crate::parallel::try_map_slice(features, |f| self.predict(f).map(String::from))
    }

    /// Text checkpoint mirroring the linear format: header, labels,
    /// then w1 rows, b1, w2 rows, b2.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(
            out,
            "mlp {} {} {}",
            self.in_dim(),
            self.hidden_dim(),
            self.labels.len()
        )?;
        writeln!(out, "{}", self.labels.join("\t"))?;
        for row in self.w1.rows() {
            write_floats(&mut out, row.as_slice().unwrap())?;
        }
        write_floats(&mut out, self.b1.as_slice().unwrap())?;
        for row in self.w2.rows() {
            write_floats(&mut out, row.as_slice().unwrap())?;
        }
        write_floats(&mut out, self.b2.as_slice().unwrap())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint("truncated mlp file".into()))?
                .map_err(Error::from)
        };
        let header = next_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("mlp") {
            return Err(Error::Checkpoint("not an mlp file".into()));
        }
        let mut dim = || -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Checkpoint("bad dimension in mlp header".into()))
        };
        let (in_dim, hidden, classes) = (dim()?, dim()?, dim()?);
        let labels: Vec<String> = next_line()?.split('\t').map(String::from).collect();
        if labels.len() != classes {
            return Err(Error::Checkpoint("label count mismatch".into()));
        }
        fn read_matrix(
            next: &mut dyn FnMut() -> Result<String>,
            rows: usize,
            cols: usize,
        ) -> Result<Array2<f64>> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                data.extend(parse_floats(&next()?, cols)?);
            }
            Ok(Array2::from_shape_vec((rows, cols), data).unwrap())
        }
        let w1 = read_matrix(&mut next_line, hidden, in_dim)?;
        let b1 = Array1::from_vec(parse_floats(&next_line()?, hidden)?);
        let w2 = read_matrix(&mut next_line, classes, hidden)?;
        let b2 = Array1::from_vec(parse_floats(&next_line()?, classes)?);
        Ok(MlpClassifier {
            labels,
            w1,
            b1,
            w2,
            b2,
        })
    }
}

fn clip_global_norm(grads: &mut Grads, ceiling: f64) {
    let sq: f64 = grads.w1.iter().map(|g| g * g).sum::<f64>()
        + grads.b1.iter().map(|g| g * g).sum::<f64>()
        + grads.w2.iter().map(|g| g * g).sum::<f64>()
        + grads.b2.iter().map(|g| g * g).sum::<f64>();
    let norm = sq.sqrt();
    if norm > ceiling {
        let scale = ceiling / norm;
        grads.w1.mapv_inplace(|g| g * scale);
        grads.b1.mapv_inplace(|g| g * scale);
        grads.w2.mapv_inplace(|g| g * scale);
        grads.b2.mapv_inplace(|g| g * scale);
    }
}

/// Train on dense feature vectors. A seeded shuffle carves off the
/// held-out part; the parameters with the best held-out loss are the
/// ones returned.
pub fn train_mlp<S: AsRef<str>>(
    features: &[Vec<f64>],
    labels: &[S],
    config: &MlpConfig,
) -> Result<(MlpClassifier, TrainingHistory)> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} feature vectors vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let in_dim = features[0].len();
    if in_dim == 0 || features.iter().any(|f| f.len() != in_dim) {
        return Err(Error::domain("feature vectors must share a positive dimension"));
    }
    if config.hidden_dim == 0 {
        return Err(Error::domain("hidden dimension must be positive"));
    }
    let class_names = class_list(labels)?;
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| {
            class_names
                .iter()
                .position(|c| c == l.as_ref())
                .expect("labels come from class_list")
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng);
    let n_holdout = if config.holdout_fraction > 0.0 {
        ((config.holdout_fraction * features.len() as f64).floor() as usize)
            .min(features.len() - 1)
    } else {
        0
    };
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut data = Vec::with_capacity(idx.len() * in_dim);
        let mut t = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(&features[i]);
            t.push(targets[i]);
        }
        (
            Array2::from_shape_vec((idx.len(), in_dim), data).unwrap(),
            t,
        )
    };
    let (train_x, train_t) = gather(train_idx);
    let (holdout_x, holdout_t) = gather(holdout_idx);

    let mut model = MlpClassifier::init(class_names, in_dim, config.hidden_dim, config.seed);
    let mut history = TrainingHistory {
        train_loss: Vec::new(),
        holdout_loss: Vec::new(),
        epochs_run: 0,
    };
    let mut best: Option<(f64, MlpClassifier)> = None;
    let mut bad_epochs = 0;
    for _ in 0..config.epochs {
        let (loss, mut grads) = model.batch_grads(&train_x, &train_t);
        clip_global_norm(&mut grads, config.clip_norm);
        model.w1.zip_mut_with(&grads.w1, |w, g| *w -= config.learning_rate * g);
        model.b1.zip_mut_with(&grads.b1, |w, g| *w -= config.learning_rate * g);
        model.w2.zip_mut_with(&grads.w2, |w, g| *w -= config.learning_rate * g);
        model.b2.zip_mut_with(&grads.b2, |w, g| *w -= config.learning_rate * g);
        history.train_loss.push(loss);
        history.epochs_run += 1;

        if n_holdout > 0 {
            let h_loss = model.mean_loss(&holdout_x, &holdout_t);
            history.holdout_loss.push(h_loss);
            let improved = best.as_ref().is_none_or(|(b, _)| h_loss < *b);
            if improved {
                best = Some((h_loss, model.clone()));
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs > config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, best_model)) = best {
        model = best_model;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n_per_class: usize) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per_class {
            let jitter = i as f64 * 0.01;
            x.push(vec![1.0 + jitter, 0.0, jitter]);
            y.push("left".to_string());
            x.push(vec![0.0, 1.0 + jitter, jitter]);
            y.push("right".to_string());
        }
        (x, y)
    }

    fn fast_config() -> MlpConfig {
        MlpConfig {
            hidden_dim: 8,
            epochs: 60,
            learning_rate: 0.5,
            holdout_fraction: 0.25,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn training_loss_decreases_on_separable_data() {
        let (x, y) = separable(10);
        let (_, history) = train_mlp(&x, &y, &fast_config()).unwrap();
        for w in history.train_loss[..10].windows(2) {
            assert!(w[1] < w[0], "loss must strictly decrease: {w:?}");
        }
    }

    #[test]
    fn separable_data_classified_correctly() {
        let (x, y) = separable(10);
        let (model, _) = train_mlp(&x, &y, &fast_config()).unwrap();
        let preds = model.predict_batch(&x).unwrap();
        let correct = preds.iter().zip(&y).filter(|(p, t)| p == t).count();
        assert_eq!(correct, x.len());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (x, y) = separable(10);
        let config = MlpConfig {
            learning_rate: 0.0,
            ..fast_config()
        };
        let (model, _) = train_mlp(&x, &y, &config).unwrap();
        let classes = vec!["left".to_string(), "right".to_string()];
        let fresh = MlpClassifier::init(classes, 3, config.hidden_dim, config.seed);
        assert_eq!(model.w1, fresh.w1);
        assert_eq!(model.b1, fresh.b1);
        assert_eq!(model.w2, fresh.w2);
        assert_eq!(model.b2, fresh.b2);
    }

    #[test]
    fn same_seed_reproduces_identical_history() {
        let (x, y) = separable(10);
        let (ma, ha) = train_mlp(&x, &y, &fast_config()).unwrap();
        let (mb, hb) = train_mlp(&x, &y, &fast_config()).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ma, mb);
    }

    #[test]
    fn single_class_is_domain_error() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec!["same", "same"];
        assert!(matches!(
            train_mlp(&x, &y, &MlpConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradients_match_central_differences() {
        let (x, y) = separable(4);
        let classes = vec!["left".to_string(), "right".to_string()];
        let targets: Vec<usize> = y.iter().map(|l| usize::from(l == "right")).collect();
        let xs = Array2::from_shape_vec(
            (x.len(), 3),
            x.iter().flatten().copied().collect(),
        )
        .unwrap();
        let model = MlpClassifier::init(classes, 3, 5, 42);
        let (_, grads) = model.batch_grads(&xs, &targets);
        let h = 1e-6;
        // Spot-check a handful of coordinates in each tensor.
        for (r, c) in [(0, 0), (2, 1), (4, 2)] {
            let mut plus = model.clone();
            plus.w1[(r, c)] += h;
            let mut minus = model.clone();
            minus.w1[(r, c)] -= h;
            let numeric =
                (plus.mean_loss(&xs, &targets) - minus.mean_loss(&xs, &targets)) / (2.0 * h);
            assert!(
                (grads.w1[(r, c)] - numeric).abs() < 1e-7,
                "w1[{r},{c}]: analytic {} vs numeric {numeric}",
                grads.w1[(r, c)]
            );
        }
        for c in 0..2 {
            let mut plus = model.clone();
            plus.b2[c] += h;
            let mut minus = model.clone();
            minus.b2[c] -= h;
            let numeric =
                (plus.mean_loss(&xs, &targets) - minus.mean_loss(&xs, &targets)) / (2.0 * h);
            assert!((grads.b2[c] - numeric).abs() < 1e-7);
        }
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut grads = Grads {
            w1: Array2::from_elem((2, 2), 10.0),
            b1: Array1::from_elem(2, 10.0),
            w2: Array2::from_elem((2, 2), 10.0),
            b2: Array1::from_elem(2, 10.0),
        };
        clip_global_norm(&mut grads, 5.0);
        let norm = (grads.w1.iter().map(|g| g * g).sum::<f64>()
            + grads.b1.iter().map(|g| g * g).sum::<f64>()
            + grads.w2.iter().map(|g| g * g).sum::<f64>()
            + grads.b2.iter().map(|g| g * g).sum::<f64>())
        .sqrt();
        assert!((norm - 5.0).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (x, y) = separable(6);
        let (model, _) = train_mlp(&x, &y, &fast_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.txt");
        model.save(&path).unwrap();
        let loaded = MlpClassifier::load(&path).unwrap();
        assert_eq!(model, loaded);
    }
}
