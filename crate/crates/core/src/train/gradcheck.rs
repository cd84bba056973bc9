//! Central finite-difference check of [`backward`].

use crate::error::Result;
use crate::nn::{NetworkSpec, NetworkWeights, Tensor};

use super::backprop::{backward, forward_train};
use super::loss::Loss;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Parameters compared.
    pub checked: usize,
    /// Parameters left out because the `±h` probe flipped a ReLU.
    pub kinked: usize,
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

fn batch_loss(
    spec: &NetworkSpec,
    w: &NetworkWeights,
    inputs: &[Tensor],
    labels: &[&[f64]],
    loss: Loss,
) -> Result<(f64, Vec<bool>)> {
    let pass = forward_train(spec, w, inputs)?;
    let preds: Vec<&[f64]> = pass.predictions.iter().map(|p| p.as_slice()).collect();
    Ok((loss.value(&preds, labels)?, pass.relu_mask(w)))
}

/// Compare analytic gradients of every trainable parameter against central
/// differences with step `h`. Gradients smaller than `floor` are compared
/// in absolute terms against `floor`. A parameter whose two probes see
/// different ReLU patterns straddles a kink, where the central difference
/// means nothing; it is counted in `kinked` and skipped.
pub fn gradient_check(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    inputs: &[Tensor],
    labels: &[&[f64]],
    loss: Loss,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let (_, grads, _) = backward(spec, weights, inputs, labels, loss)?;
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let mut w = weights.clone();
    let mut report = GradCheck { checked: 0, kinked: 0, max_rel_err: 0.0 };
    for (t, a) in analytic.iter().enumerate() {
        for k in 0..a.len() {
            let orig = w.trainable()[t][k];
            w.trainable_mut()[t][k] = orig + h;
            let (up, up_mask) = batch_loss(spec, &w, inputs, labels, loss)?;
            w.trainable_mut()[t][k] = orig - h;
            let (dn, dn_mask) = batch_loss(spec, &w, inputs, labels, loss)?;
            w.trainable_mut()[t][k] = orig;
            if up_mask != dn_mask {
                report.kinked += 1;
                continue;
            }
            let num = (up - dn) / (2.0 * h);
            let rel = (a[k] - num).abs() / a[k].abs().max(num.abs()).max(floor);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
