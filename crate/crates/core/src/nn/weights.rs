use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    /// `[3, 3, cin, cout]`, row-major.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

impl NetworkWeights {
    /// Zero kernels and biases, identity batch norm. The network then outputs
    /// zero everywhere.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| LayerWeights {
                kernel: vec![0.0; l.kernel_len()],
                bias: vec![0.0; l.out_channels],
                bn: l.has_batch_norm().then(|| BatchNorm::identity(l.out_channels)),
            })
            .collect();
        NetworkWeights { layers }
    }

    /// He-normal kernels (std `sqrt(2 / fan_in)`), zero biases, identity BN.
    pub fn he_init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut w = Self::zeros(spec);
        for (lw, ls) in w.layers.iter_mut().zip(&spec.layers) {
            let fan_in = (9 * ls.in_channels) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for k in lw.kernel.iter_mut() {
                *k = normal.sample(rng);
            }
        }
        w
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight layers for {} spec layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (w, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            let c = l.out_channels;
            let bn_ok = match (&w.bn, l.has_batch_norm()) {
                (Some(bn), true) => [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .all(|v| v.len() == c),
                (None, false) => true,
                _ => false,
            };
            if w.kernel.len() != l.kernel_len() || w.bias.len() != c || !bn_ok {
                return Err(Error::Shape(format!("layer {i} weights do not match its spec")));
            }
            if let Some(bn) = &w.bn {
                if bn.running_var.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Numeric(format!("layer {i} has negative running variance")));
                }
            }
        }
        Ok(())
    }

    /// Trainable tensors in declaration order: kernel, bias, then gamma and
    /// beta for batch-norm layers.
    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.kernel);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.kernel);
            out.push(&l.bias);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    /// Zero the final (output) convolution, which makes every residual zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.kernel.fill(0.0);
            last.bias.fill(0.0);
        }
    }
}
