//! Encoder parameter tensors and the uniform flat-access layer shared by
//! the optimizer, gradient clipping, gradient checking, and checkpoints.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Architecture hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.max_positions == 0 || self.vocab_size < 6 {
            return Err(Error::Config(
                "need positions ≥ 1 and vocab ≥ 6 (5 specials + 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Read-only view over one named tensor.
pub enum TensorView<'a> {
    Mat(&'a Array2<f64>),
    Vec1(&'a Array1<f64>),
}

/// Mutable view over one named tensor.
pub enum TensorViewMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec1(&'a mut Array1<f64>),
}

impl TensorView<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorView::Mat(m) => m.len(),
            TensorView::Vec1(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major flat read.
    pub fn get(&self, i: usize) -> f64 {
        match self {
            TensorView::Mat(m) => m.as_slice().expect("standard layout")[i],
            TensorView::Vec1(v) => v[i],
        }
    }

    pub fn sq_sum(&self) -> f64 {
        match self {
            TensorView::Mat(m) => m.iter().map(|x| x * x).sum(),
            TensorView::Vec1(v) => v.iter().map(|x| x * x).sum(),
        }
    }
}

impl TensorViewMut<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorViewMut::Mat(m) => m.len(),
            TensorViewMut::Vec1(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            TensorViewMut::Mat(m) => m.as_slice().expect("standard layout")[i],
            TensorViewMut::Vec1(v) => v[i],
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        match self {
            TensorViewMut::Mat(m) => m.as_slice_mut().expect("standard layout")[i] = value,
            TensorViewMut::Vec1(v) => v[i] = value,
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        match self {
            TensorViewMut::Mat(m) => m.mapv_inplace(f),
            TensorViewMut::Vec1(v) => v.mapv_inplace(f),
        }
    }
}

/// Anything exposing a fixed, ordered set of named tensors: encoder
/// parameters, task heads, or a whole model bundle. The flat index
/// space concatenates all tensors row-major in declaration order.
pub trait ParamGroup {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)>;
    fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)>;

    fn flat_len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn sq_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sq_sum()).sum()
    }

    fn get_flat(&self, index: usize) -> f64 {
        let mut offset = index;
        for (_, t) in self.tensors() {
            if offset < t.len() {
                return t.get(offset);
            }
            offset -= t.len();
        }
        panic!("flat index {index} out of range");
    }

    fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for (_, mut t) in self.tensors_mut() {
            if offset < t.len() {
                t.set(offset, value);
                return;
            }
            offset -= t.len();
        }
        panic!("flat index {index} out of range");
    }

    /// Name of the tensor a flat index falls in (diagnostics).
    fn tensor_name_at(&self, index: usize) -> String {
        let mut offset = index;
        for (name, t) in self.tensors() {
            if offset < t.len() {
                return name;
            }
            offset -= t.len();
        }
        panic!("flat index {index} out of range");
    }

    fn scale_all(&mut self, factor: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.map_inplace(|x| x * factor);
        }
    }

    fn zero_all(&mut self) {
        for (_, mut t) in self.tensors_mut() {
            t.map_inplace(|_| 0.0);
        }
    }

    /// True when every scalar is finite.
    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| match t {
            TensorView::Mat(m) => m.iter().all(|x| x.is_finite()),
            TensorView::Vec1(v) => v.iter().all(|x| x.is_finite()),
        })
    }
}

/// `dst ← dst + alpha · src`, tensor by tensor. Schemas must match.
pub fn add_scaled<P: ParamGroup + ?Sized, Q: ParamGroup + ?Sized>(
    dst: &mut P,
    src: &Q,
    alpha: f64,
) {
    let src_tensors = src.tensors();
    let mut dst_tensors = dst.tensors_mut();
    assert_eq!(
        dst_tensors.len(),
        src_tensors.len(),
        "parameter schemas differ"
    );
    for ((dname, dt), (sname, st)) in dst_tensors.iter_mut().zip(&src_tensors) {
        assert_eq!(dname, sname, "parameter schemas differ");
        match (dt, st) {
            (TensorViewMut::Mat(d), TensorView::Mat(s)) => {
                d.zip_mut_with(s, |a, &b| *a += alpha * b);
            }
            (TensorViewMut::Vec1(d), TensorView::Vec1(s)) => {
                d.zip_mut_with(s, |a, &b| *a += alpha * b);
            }
            _ => panic!("tensor `{dname}` changed rank between groups"),
        }
    }
}

/// Adds seeded Gaussian noise `N(0, scale²)` to every parameter.
///
/// Fine-tuning from the plain σ=0.02 initialization stalls: pooled
/// vectors are then nearly identical across inputs (content reaches the
/// pooled slot only through products of tiny weights), so per-example
/// classification-head gradients cancel against each other and losses
/// sit at ln K for thousands of steps. Widening the weights to σ≈0.25
/// turns the untrained encoder into a random feature map whose pooled
/// outputs already separate inputs, after which gradient descent makes
/// ordinary progress. Use this as a cheap substitute for a phase-1
/// pretraining pass when training from scratch.
pub fn add_parameter_noise<P: ParamGroup + ?Sized>(params: &mut P, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, scale).expect("finite non-negative scale");
    // Explicit flat loop: the draw order is part of the deterministic
    // contract, so don't depend on ndarray's iteration order.
    for (_, mut t) in params.tensors_mut() {
        for i in 0..t.len() {
            let v = t.get(i) + dist.sample(&mut rng);
            t.set(i, v);
        }
    }
}

/// One transformer layer's parameters. Projection weights are stored as
/// (out × in) and applied as `x · Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_scale: Array1<f64>,
    pub ln1_shift: Array1<f64>,
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array1<f64>,
    pub ln2_scale: Array1<f64>,
    pub ln2_shift: Array1<f64>,
}

/// All trainable encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub segment_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub pooler_w: Array2<f64>,
    pub pooler_b: Array1<f64>,
}

impl EncoderParams {
    /// Seeded Gaussian init (σ = 0.02) for weights and embeddings;
    /// biases and layer-norm shifts start at 0, layer-norm scales at 1.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.02).unwrap();
        let mut mat = |rows: usize, cols: usize| -> Array2<f64> {
            let data: Vec<f64> = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Array2::from_shape_vec((rows, cols), data).unwrap()
        };
        let d = config.dim;
        let token_embedding = mat(config.vocab_size, d);
        let position_embedding = mat(config.max_positions, d);
        let segment_embedding = mat(2, d);
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(LayerParams {
                wq: mat(d, d),
                bq: Array1::zeros(d),
                wk: mat(d, d),
                bk: Array1::zeros(d),
                wv: mat(d, d),
                bv: Array1::zeros(d),
                wo: mat(d, d),
                bo: Array1::zeros(d),
                ln1_scale: Array1::ones(d),
                ln1_shift: Array1::zeros(d),
                ffn_w1: mat(config.ffn_dim, d),
                ffn_b1: Array1::zeros(config.ffn_dim),
                ffn_w2: mat(d, config.ffn_dim),
                ffn_b2: Array1::zeros(d),
                ln2_scale: Array1::ones(d),
                ln2_shift: Array1::zeros(d),
            });
        }
        let pooler_w = mat(d, d);
        Ok(EncoderParams {
            token_embedding,
            position_embedding,
            segment_embedding,
            layers,
            pooler_w,
            pooler_b: Array1::zeros(d),
        })
    }

    /// Same shapes, all zeros — gradient and momentum buffers.
    pub fn zeros_like(&self) -> Self {
        let mut copy = self.clone();
        copy.zero_all();
        copy
    }
}

impl ParamGroup for EncoderParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let mut out: Vec<(String, TensorView<'_>)> = vec![
            ("token_embedding".into(), TensorView::Mat(&self.token_embedding)),
            (
                "position_embedding".into(),
                TensorView::Mat(&self.position_embedding),
            ),
            (
                "segment_embedding".into(),
                TensorView::Mat(&self.segment_embedding),
            ),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            let name = |field: &str| format!("layer{i}.{field}");
            out.push((name("wq"), TensorView::Mat(&layer.wq)));
            out.push((name("bq"), TensorView::Vec1(&layer.bq)));
            out.push((name("wk"), TensorView::Mat(&layer.wk)));
            out.push((name("bk"), TensorView::Vec1(&layer.bk)));
            out.push((name("wv"), TensorView::Mat(&layer.wv)));
            out.push((name("bv"), TensorView::Vec1(&layer.bv)));
            out.push((name("wo"), TensorView::Mat(&layer.wo)));
            out.push((name("bo"), TensorView::Vec1(&layer.bo)));
            out.push((name("ln1_scale"), TensorView::Vec1(&layer.ln1_scale)));
            out.push((name("ln1_shift"), TensorView::Vec1(&layer.ln1_shift)));
            out.push((name("ffn_w1"), TensorView::Mat(&layer.ffn_w1)));
            out.push((name("ffn_b1"), TensorView::Vec1(&layer.ffn_b1)));
            out.push((name("ffn_w2"), TensorView::Mat(&layer.ffn_w2)));
            out.push((name("ffn_b2"), TensorView::Vec1(&layer.ffn_b2)));
            out.push((name("ln2_scale"), TensorView::Vec1(&layer.ln2_scale)));
            out.push((name("ln2_shift"), TensorView::Vec1(&layer.ln2_shift)));
        }
        out.push(("pooler_w".into(), TensorView::Mat(&self.pooler_w)));
        out.push(("pooler_b".into(), TensorView::Vec1(&self.pooler_b)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        let mut out: Vec<(String, TensorViewMut<'_>)> = vec![
            (
                "token_embedding".into(),
                TensorViewMut::Mat(&mut self.token_embedding),
            ),
            (
                "position_embedding".into(),
                TensorViewMut::Mat(&mut self.position_embedding),
            ),
            (
                "segment_embedding".into(),
                TensorViewMut::Mat(&mut self.segment_embedding),
            ),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let name = |field: &str| format!("layer{i}.{field}");
            out.push((name("wq"), TensorViewMut::Mat(&mut layer.wq)));
            out.push((name("bq"), TensorViewMut::Vec1(&mut layer.bq)));
            out.push((name("wk"), TensorViewMut::Mat(&mut layer.wk)));
            out.push((name("bk"), TensorViewMut::Vec1(&mut layer.bk)));
            out.push((name("wv"), TensorViewMut::Mat(&mut layer.wv)));
            out.push((name("bv"), TensorViewMut::Vec1(&mut layer.bv)));
            out.push((name("wo"), TensorViewMut::Mat(&mut layer.wo)));
            out.push((name("bo"), TensorViewMut::Vec1(&mut layer.bo)));
            out.push((name("ln1_scale"), TensorViewMut::Vec1(&mut layer.ln1_scale)));
            out.push((name("ln1_shift"), TensorViewMut::Vec1(&mut layer.ln1_shift)));
            out.push((name("ffn_w1"), TensorViewMut::Mat(&mut layer.ffn_w1)));
            out.push((name("ffn_b1"), TensorViewMut::Vec1(&mut layer.ffn_b1)));
            out.push((name("ffn_w2"), TensorViewMut::Mat(&mut layer.ffn_w2)));
            out.push((name("ffn_b2"), TensorViewMut::Vec1(&mut layer.ffn_b2)));
            out.push((name("ln2_scale"), TensorViewMut::Vec1(&mut layer.ln2_scale)));
            out.push((name("ln2_shift"), TensorViewMut::Vec1(&mut layer.ln2_shift)));
        }
        out.push(("pooler_w".into(), TensorViewMut::Mat(&mut self.pooler_w)));
        out.push(("pooler_b".into(), TensorViewMut::Vec1(&mut self.pooler_b)));
        out
    }
}

#[cfg(test)]
pub(crate) fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        heads: 2,
        dim: 8,
        ffn_dim: 16,
        max_positions: 16,
        vocab_size: 16,
        dropout: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_finite() {
        let config = tiny_config();
        let a = EncoderParams::init(&config, 3).unwrap();
        let b = EncoderParams::init(&config, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        let c = EncoderParams::init(&config, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layer_norm_scales_start_at_one() {
        let params = EncoderParams::init(&tiny_config(), 0).unwrap();
        assert!(params.layers[0].ln1_scale.iter().all(|&x| x == 1.0));
        assert!(params.layers[1].ln2_shift.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn flat_access_round_trips() {
        let mut params = EncoderParams::init(&tiny_config(), 1).unwrap();
        let n = params.flat_len();
        let probe = [0, 1, n / 3, n / 2, n - 1];
        for &i in &probe {
            let v = params.get_flat(i);
            params.set_flat(i, v + 1.5);
            assert_eq!(params.get_flat(i), v + 1.5);
            params.set_flat(i, v);
            assert_eq!(params.get_flat(i), v);
        }
    }

    #[test]
    fn flat_len_counts_every_scalar() {
        let config = tiny_config();
        let params = EncoderParams::init(&config, 1).unwrap();
        let d = config.dim;
        let per_layer = 4 * (d * d + d) + 4 * d + 2 * (d * config.ffn_dim) + config.ffn_dim + d;
        let expected = (config.vocab_size + config.max_positions + 2) * d
            + config.layers * per_layer
            + d * d
            + d;
        assert_eq!(params.flat_len(), expected);
    }

    #[test]
    fn add_scaled_accumulates() {
        let config = tiny_config();
        let mut a = EncoderParams::init(&config, 1).unwrap();
        let b = EncoderParams::init(&config, 2).unwrap();
        let a0 = a.get_flat(10);
        let b0 = b.get_flat(10);
        add_scaled(&mut a, &b, -0.5);
        assert!((a.get_flat(10) - (a0 - 0.5 * b0)).abs() < 1e-15);
    }

    #[test]
    fn zeros_like_matches_schema() {
        let params = EncoderParams::init(&tiny_config(), 1).unwrap();
        let zeros = params.zeros_like();
        assert_eq!(zeros.flat_len(), params.flat_len());
        assert_eq!(zeros.sq_norm(), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut config = tiny_config();
        config.dim = 7;
        assert!(config.validate().is_err(), "dim must divide by heads");
        let mut config = tiny_config();
        config.vocab_size = 5;
        assert!(config.validate().is_err());
        let mut config = tiny_config();
        config.dropout = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn tensor_names_locate_flat_indices() {
        let params = EncoderParams::init(&tiny_config(), 1).unwrap();
        assert_eq!(params.tensor_name_at(0), "token_embedding");
        assert_eq!(params.tensor_name_at(params.flat_len() - 1), "pooler_b");
    }
}
