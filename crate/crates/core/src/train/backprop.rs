//! Reverse-mode gradients through a [`NetworkSpec`] in training mode.
//!
//! Batch norm normalizes with statistics of the current batch (all examples
//! and pixels). Per-example work may run in parallel; every cross-example
//! reduction is summed in example order so results do not depend on the
//! thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{conv2d, conv2d_backward, last_readers, LayerKind, NetworkSpec, NetworkWeights, Tensor, BN_EPS};

use super::loss::Loss;

/// Per-channel batch statistics of one hidden layer's pre-normalization output.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (divide by count) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

impl BatchStats {
    fn inv_std(&self) -> Vec<f64> {
        self.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect()
    }
}

enum Cache {
    /// Post-ReLU output of the input layer.
    Activation(Vec<Tensor>),
    /// Pre-normalization conv output of a hidden layer.
    PreNorm(Vec<Tensor>),
    Output,
}

/// Everything the reverse pass needs from a training-mode forward pass.
pub struct TrainPass {
    pub predictions: Vec<Vec<f64>>,
    pub stats: Vec<Option<BatchStats>>,
    caches: Vec<Cache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
}

impl NetworkGrads {
    /// Same order as [`NetworkWeights::trainable_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.kernel);
            out.push(&l.bias);
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g);
                out.push(b);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn ordered_sum(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

fn channel_sums(t: &Tensor, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; t.channels];
    for px in t.data.chunks_exact(t.channels) {
        for (c, &v) in px.iter().enumerate() {
            s[c] += f(c, v);
        }
    }
    s
}

fn batch_stats(z: &[Tensor]) -> BatchStats {
    let c = z[0].channels;
    let count: usize = z.iter().map(|t| t.pixels()).sum();
    let sums = ordered_sum(z.par_iter().map(|t| channel_sums(t, |_, v| v)).collect(), c);
    let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let sq = ordered_sum(
        z.par_iter().map(|t| channel_sums(t, |ch, v| (v - mean[ch]) * (v - mean[ch]))).collect(),
        c,
    );
    let var = sq.iter().map(|s| s / count as f64).collect();
    BatchStats { mean, var, count }
}

/// ReLU(gamma * (z - mean) * inv_std + beta).
fn normalize_activate(z: &Tensor, mean: &[f64], inv_std: &[f64], gamma: &[f64], beta: &[f64]) -> Tensor {
    let mut out = z.clone();
    let c = z.channels;
    for px in out.data.chunks_exact_mut(c) {
        for ch in 0..c {
            let y = gamma[ch] * ((px[ch] - mean[ch]) * inv_std[ch]) + beta[ch];
            px[ch] = if y > 0.0 { y } else { 0.0 };
        }
    }
    out
}

impl TrainPass {
    /// Activation of `layer` for every example, recomputed from the cache.
    fn activations(&self, layer: usize, weights: &NetworkWeights) -> Vec<Tensor> {
        match &self.caches[layer] {
            Cache::Activation(a) => a.clone(),
            Cache::PreNorm(z) => {
                let st = self.stats[layer].as_ref().expect("hidden layers carry stats");
                let bn = weights.layers[layer].bn.as_ref().expect("hidden layers carry BN");
                let inv = st.inv_std();
                z.par_iter()
                    .map(|t| normalize_activate(t, &st.mean, &inv, &bn.gamma, &bn.beta))
                    .collect()
            }
            Cache::Output => unreachable!("output layer activations are never re-read"),
        }
    }

    /// Which ReLUs are open, over every layer, example and sample.
    pub(crate) fn relu_mask(&self, weights: &NetworkWeights) -> Vec<bool> {
        (0..self.caches.len())
            .filter(|&l| !matches!(self.caches[l], Cache::Output))
            .flat_map(|l| self.activations(l, weights))
            .flat_map(|t| t.data.into_iter().map(|v| v > 0.0))
            .collect()
    }
}

fn layer_inputs(
    spec: &NetworkSpec,
    layer: usize,
    inputs: &[Tensor],
    acts: &dyn Fn(usize) -> Vec<Tensor>,
) -> Result<Vec<Tensor>> {
    if layer == 0 {
        return Ok(inputs.to_vec());
    }
    let prev = acts(layer - 1);
    let l = &spec.layers[layer];
    if l.skip_sources.is_empty() {
        return Ok(prev);
    }
    let sources: Vec<Vec<Tensor>> = l.skip_sources.iter().map(|&s| acts(s)).collect();
    (0..inputs.len())
        .map(|e| {
            let mut parts = vec![&prev[e]];
            parts.extend(sources.iter().map(|s| &s[e]));
            Tensor::concat(&parts)
        })
        .collect()
}

/// Training-mode forward pass over a batch.
pub fn forward_train(spec: &NetworkSpec, weights: &NetworkWeights, inputs: &[Tensor]) -> Result<TrainPass> {
    weights.check(spec)?;
    if inputs.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if let Some(bad) = inputs.iter().find(|t| t.channels != spec.input_channels) {
        return Err(Error::Shape(format!(
            "network `{}` expects {} input channels, got {}",
            spec.target, spec.input_channels, bad.channels
        )));
    }
    let last = last_readers(spec);
    let mut live: Vec<Option<Vec<Tensor>>> = vec![None; spec.layers.len()];
    let mut caches = Vec::with_capacity(spec.layers.len());
    let mut stats = Vec::with_capacity(spec.layers.len());
    let mut predictions = Vec::new();
    for (i, (l, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        let xs = {
            let live_ref = &live;
            layer_inputs(spec, i, inputs, &|j| live_ref[j].clone().expect("activation kept alive"))?
        };
        let z: Vec<Tensor> = xs
            .par_iter()
            .map(|x| conv2d(x, &w.kernel, &w.bias, l.out_channels, l.dilation))
            .collect::<Result<_>>()?;
        drop(xs);
        let act = match l.kind {
            LayerKind::Input => {
                let a: Vec<Tensor> = z.into_iter().map(|mut t| {
                    crate::nn::ops::relu_in_place(&mut t.data);
                    t
                }).collect();
                caches.push(Cache::Activation(a.clone()));
                stats.push(None);
                Some(a)
            }
            LayerKind::Hidden => {
                let st = batch_stats(&z);
                let bn = w.bn.as_ref().expect("checked");
                let inv = st.inv_std();
                let a: Vec<Tensor> = z
                    .par_iter()
                    .map(|t| normalize_activate(t, &st.mean, &inv, &bn.gamma, &bn.beta))
                    .collect();
                caches.push(Cache::PreNorm(z));
                stats.push(Some(st));
                Some(a)
            }
            LayerKind::Output => {
                predictions = z.into_iter().map(|t| t.data).collect();
                caches.push(Cache::Output);
                stats.push(None);
                None
            }
        };
        for (j, slot) in live.iter_mut().enumerate() {
            if slot.is_some() && last[j] <= i {
                *slot = None;
            }
        }
        live[i] = act;
    }
    Ok(TrainPass { predictions, stats, caches })
}

/// Gradients of `loss` with respect to every trainable parameter, plus the
/// loss value and the pass (for running-statistics updates).
pub fn backward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    inputs: &[Tensor],
    labels: &[&[f64]],
    loss: Loss,
) -> Result<(f64, NetworkGrads, TrainPass)> {
    let pass = forward_train(spec, weights, inputs)?;
    let preds: Vec<&[f64]> = pass.predictions.iter().map(|p| p.as_slice()).collect();
    let (value, dpred) = loss.value_and_grad(&preds, labels)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {value}")));
    }
    let n_layers = spec.layers.len();
    let mut dact: Vec<Option<Vec<Tensor>>> = vec![None; n_layers];
    dact[n_layers - 1] = Some(
        inputs
            .iter()
            .zip(dpred)
            .map(|(x, d)| Tensor::new(x.height, x.width, 1, d))
            .collect::<Result<_>>()?,
    );
    let mut grads: Vec<Option<LayerGrads>> = vec![None; n_layers];
    for i in (0..n_layers).rev() {
        let l = &spec.layers[i];
        let w = &weights.layers[i];
        let d = dact[i].take().ok_or_else(|| Error::Numeric(format!("layer {i} receives no gradient")))?;
        let (dz, gamma_beta) = match (&pass.caches[i], l.kind) {
            (Cache::Output, _) => (d, None),
            (Cache::Activation(a), _) => {
                let dz = d
                    .into_iter()
                    .zip(a)
                    .map(|(mut g, a)| {
                        for (gv, &av) in g.data.iter_mut().zip(&a.data) {
                            if av <= 0.0 {
                                *gv = 0.0;
                            }
                        }
                        g
                    })
                    .collect();
                (dz, None)
            }
            (Cache::PreNorm(z), _) => {
                let st = pass.stats[i].as_ref().expect("hidden stats");
                let bn = w.bn.as_ref().expect("hidden BN");
                let inv = st.inv_std();
                let c = l.out_channels;
                // dY = dA * relu'(y); then partial sums for dbeta, dgamma.
                let dy_parts: Vec<(Tensor, Vec<f64>, Vec<f64>)> = d
                    .into_par_iter()
                    .zip(z.par_iter())
                    .map(|(mut g, zt)| {
                        let mut sb = vec![0.0; c];
                        let mut sg = vec![0.0; c];
                        for (gp, zp) in g.data.chunks_exact_mut(c).zip(zt.data.chunks_exact(c)) {
                            for ch in 0..c {
                                let xhat = (zp[ch] - st.mean[ch]) * inv[ch];
                                let y = bn.gamma[ch] * xhat + bn.beta[ch];
                                if y <= 0.0 {
                                    gp[ch] = 0.0;
                                }
                                sb[ch] += gp[ch];
                                sg[ch] += gp[ch] * xhat;
                            }
                        }
                        (g, sb, sg)
                    })
                    .collect();
                let mut dbeta = vec![0.0; c];
                let mut dgamma = vec![0.0; c];
                for (_, sb, sg) in &dy_parts {
                    for ch in 0..c {
                        dbeta[ch] += sb[ch];
                        dgamma[ch] += sg[ch];
                    }
                }
                let m = st.count as f64;
                let dz: Vec<Tensor> = dy_parts
                    .into_par_iter()
                    .zip(z.par_iter())
                    .map(|((mut g, _, _), zt)| {
                        for (gp, zp) in g.data.chunks_exact_mut(c).zip(zt.data.chunks_exact(c)) {
                            for ch in 0..c {
                                let xhat = (zp[ch] - st.mean[ch]) * inv[ch];
                                gp[ch] = bn.gamma[ch] * inv[ch] / m
                                    * (m * gp[ch] - dbeta[ch] - xhat * dgamma[ch]);
                            }
                        }
                        g
                    })
                    .collect();
                (dz, Some((dgamma, dbeta)))
            }
        };
        let xs = layer_inputs(spec, i, inputs, &|j| pass.activations(j, weights))?;
        let want_input = i > 0;
        let per_example: Vec<_> = xs
            .par_iter()
            .zip(dz.par_iter())
            .map(|(x, g)| conv2d_backward(x, &w.kernel, g, l.dilation, want_input))
            .collect::<Result<_>>()?;
        drop(xs);
        let mut dkernel = vec![0.0; w.kernel.len()];
        let mut dbias = vec![0.0; w.bias.len()];
        let mut dinputs = Vec::with_capacity(per_example.len());
        for g in per_example {
            for (a, v) in dkernel.iter_mut().zip(&g.kernel) {
                *a += v;
            }
            for (a, v) in dbias.iter_mut().zip(&g.bias) {
                *a += v;
            }
            dinputs.push(g.input);
        }
        if want_input {
            let mut sizes = vec![spec.layers[i - 1].out_channels];
            sizes.extend(l.skip_sources.iter().map(|&s| spec.layers[s].out_channels));
            let targets: Vec<usize> =
                std::iter::once(i - 1).chain(l.skip_sources.iter().copied()).collect();
            let mut per_target: Vec<Vec<Tensor>> = targets.iter().map(|_| Vec::new()).collect();
            for dx in dinputs {
                let dx = dx.expect("input gradient requested");
                for (k, piece) in dx.split_channels(&sizes)?.into_iter().enumerate() {
                    per_target[k].push(piece);
                }
            }
            for (t, pieces) in targets.into_iter().zip(per_target) {
                match dact[t].as_mut() {
                    None => dact[t] = Some(pieces),
                    Some(acc) => {
                        for (a, p) in acc.iter_mut().zip(pieces) {
                            for (x, y) in a.data.iter_mut().zip(&p.data) {
                                *x += y;
                            }
                        }
                    }
                }
            }
        }
        let (gamma, beta) = match gamma_beta {
            Some((g, b)) => (Some(g), Some(b)),
            None => (None, None),
        };
        grads[i] = Some(LayerGrads { kernel: dkernel, bias: dbias, gamma, beta });
    }
    let layers = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
    Ok((value, NetworkGrads { layers }, pass))
}

/// Exponential moving average of batch statistics into the running ones,
/// using the unbiased batch variance.
pub fn update_running_stats(weights: &mut NetworkWeights, stats: &[Option<BatchStats>], momentum: f64) {
    for (lw, st) in weights.layers.iter_mut().zip(stats) {
        if let (Some(bn), Some(st)) = (lw.bn.as_mut(), st) {
            let unbias = if st.count > 1 { st.count as f64 / (st.count - 1) as f64 } else { 1.0 };
            for c in 0..bn.running_mean.len() {
                bn.running_mean[c] = (1.0 - momentum) * bn.running_mean[c] + momentum * st.mean[c];
                bn.running_var[c] = (1.0 - momentum) * bn.running_var[c] + momentum * st.var[c] * unbias;
            }
        }
    }
}
