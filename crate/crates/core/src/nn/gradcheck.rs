//! Central finite-difference verification of analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Loss, Network, Targets};
use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

pub const FD_EPSILON: f64 = 1e-5;
pub const MAX_CHECK_PARAMS: usize = 5000;
const BATCH: usize = 3;
/// Gradients below this magnitude are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub n_checked: usize,
    /// Parameters whose perturbation moved a max-pool argmax.
    pub n_excluded: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares backprop gradients with central differences on a random
/// double-precision instance of `spec`.
pub fn grad_check(spec: &NetworkSpec, tol: f64, seed: u64) -> Result<GradCheckReport> {
    if spec.n_params() > MAX_CHECK_PARAMS {
        return Err(Error::Validation(format!(
            "gradient check limited to {MAX_CHECK_PARAMS} parameters, network has {}",
            spec.n_params()
        )));
    }
    let mut net = Network::<f64>::init(spec.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let x = Array2::from_shape_simple_fn((BATCH, spec.input_dim()), || rng.gen_range(-1.0..1.0));
    let n_out = spec.output_dim();
    let classify = matches!(spec.layers.last(), Some(LayerSpec::Softmax { .. }));
    let labels: Vec<usize> = (0..BATCH).map(|_| rng.gen_range(0..n_out)).collect();
    let values = Array2::from_shape_simple_fn((BATCH, n_out), || rng.gen_range(-1.0..1.0));
    let (loss, targets) = if classify {
        (Loss::CrossEntropy, Targets::Labels(&labels))
    } else {
        (Loss::Mse, Targets::Values(values.view()))
    };

    let fwd = net.forward(&x)?;
    let signature = fwd.pool_signature();
    let n_layers = spec.layers.len();
    let (_, grads) = net.backward(&fwd, &targets, loss, n_layers)?;
    let mut analytic = Vec::with_capacity(net.n_params());
    for g in grads.iter().flatten() {
        g.for_each_slice(&mut |s| analytic.extend_from_slice(s));
    }

    let base = net.flat_params();
    let mut theta = base.clone();
    let eval = |net: &mut Network<f64>, theta: &[f64]| -> Result<(f64, bool)> {
        net.set_flat_params(theta)?;
        let f = net.forward(&x)?;
        let same = f.pool_signature() == signature;
        let (l, _) = net.backward(&f, &targets, loss, 0)?;
        Ok((l, same))
    };

    let mut max_rel: f64 = 0.0;
    let mut excluded = 0;
    for i in 0..base.len() {
        theta[i] = base[i] + FD_EPSILON;
        let (lp, same_p) = eval(&mut net, &theta)?;
        theta[i] = base[i] - FD_EPSILON;
        let (lm, same_m) = eval(&mut net, &theta)?;
        theta[i] = base[i];
        if !(same_p && same_m) {
            excluded += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_EPSILON);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        n_params: base.len(),
        n_checked: base.len() - excluded,
        n_excluded: excluded,
        max_rel_error: max_rel,
        tol,
        passed: max_rel < tol,
    })
}
