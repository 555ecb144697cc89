//! Central-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::params::ParamGroup;

/// Compare analytic gradients against central differences on a uniformly
/// sampled subset of parameter coordinates (all of them when `samples`
/// covers the parameter count). Returns the maximum relative error
/// `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// `params` is perturbed in place one coordinate at a time and restored
/// bit-exactly. `loss_fn` must be deterministic in the parameters.
pub fn grad_check<P: ParamGroup>(
    params: &mut P,
    analytic: &P,
    loss_fn: &mut dyn FnMut(&P) -> Result<f64>,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::domain("need at least one sampled coordinate"));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain(format!("step {step} must be positive")));
    }
    let n = params.flat_len();
    if analytic.flat_len() != n {
        return Err(Error::domain(
            "analytic gradient schema does not match the parameters",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = if samples >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng, n, samples).into_vec()
    };

    let mut max_rel = 0.0f64;
    for index in indices {
        let original = params.get_flat(index);
        params.set_flat(index, original + step);
        let plus = loss_fn(params)?;
        params.set_flat(index, original - step);
        let minus = loss_fn(params)?;
        params.set_flat(index, original);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::domain(format!(
                "loss is not finite near coordinate {index} (tensor `{}`)",
                params.tensor_name_at(index)
            )));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.get_flat(index);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
