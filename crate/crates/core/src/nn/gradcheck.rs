//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{zero_grads, Layer, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

fn projected_loss(layer: &mut dyn Layer, x: &Tensor, proj: &[f64], mode: Mode) -> Result<f64> {
    let y = layer.forward(x, mode)?;
    Ok(y.data().iter().zip(proj).map(|(a, b)| a * b).sum())
}

fn nudge_param(layer: &mut dyn Layer, which: usize, elem: usize, delta: f64) {
    let mut i = 0;
    layer.visit_params(&mut |p| {
        if p.trainable {
            if i == which {
                p.value.data_mut()[elem] += delta;
            }
            i += 1;
        }
    });
}

/// Check `points` random trainable-parameter entries and `points` random input
/// entries of `layer` against central differences of the scalar loss
/// `sum(R * layer(x))` for a fixed random `R`. Returns the worst relative error.
pub fn check_layer(layer: &mut dyn Layer, x: &Tensor, mode: Mode, points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = layer.forward(x, mode)?;
    let proj: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    zero_grads(layer);
    layer.forward(x, mode)?;
    let dx = layer.backward(&Tensor::new(out.shape().to_vec(), proj.clone())?)?;

    let mut sizes = Vec::new();
    let mut grads = Vec::new();
    layer.visit_params_ref(&mut |p| {
        if p.trainable {
            sizes.push(p.value.len());
            grads.push(p.grad.data().to_vec());
        }
    });

    let mut worst = 0.0f64;
    let mut report = |what: String, a: f64, n: f64| -> Result<()> {
        let e = relative_error(a, n);
        worst = worst.max(e);
        if e > TOLERANCE {
            return Err(Error::Diverged(format!("{what}: analytic {a:e} vs numeric {n:e} (rel {e:e})")));
        }
        Ok(())
    };

    if !sizes.is_empty() {
        let total: usize = sizes.iter().sum();
        for _ in 0..points {
            let mut flat = rng.gen_range(0..total);
            let mut which = 0;
            while flat >= sizes[which] {
                flat -= sizes[which];
                which += 1;
            }
            nudge_param(layer, which, flat, EPS);
            let up = projected_loss(layer, x, &proj, mode)?;
            nudge_param(layer, which, flat, -2.0 * EPS);
            let down = projected_loss(layer, x, &proj, mode)?;
            nudge_param(layer, which, flat, EPS);
            report(format!("{} param {which}[{flat}]", layer.name()), grads[which][flat], (up - down) / (2.0 * EPS))?;
        }
    }
    for _ in 0..points {
        let i = rng.gen_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[i] += EPS;
        let up = projected_loss(layer, &xp, &proj, mode)?;
        xp.data_mut()[i] -= 2.0 * EPS;
        let down = projected_loss(layer, &xp, &proj, mode)?;
        report(format!("{} input[{i}]", layer.name()), dx.data()[i], (up - down) / (2.0 * EPS))?;
    }
    Ok(worst)
}
