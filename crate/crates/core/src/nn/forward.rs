use super::ops::{batch_norm_infer, conv2d, relu_in_place, BN_EPS};
use super::spec::{LayerKind, NetworkSpec};
use super::tensor::Tensor;
use super::weights::NetworkWeights;
use crate::error::{Error, Result};
use crate::image::PlaneImage;

/// Index of the last layer that reads each layer's output.
pub(crate) fn last_readers(spec: &NetworkSpec) -> Vec<usize> {
    let mut last: Vec<usize> = (0..spec.layers.len()).map(|i| i + 1).collect();
    for (i, l) in spec.layers.iter().enumerate() {
        for &s in &l.skip_sources {
            last[s] = last[s].max(i);
        }
    }
    last
}

/// Inference pass returning the single-channel prediction. Batch norm uses
/// the stored running statistics.
pub fn forward(spec: &NetworkSpec, weights: &NetworkWeights, x: &Tensor) -> Result<PlaneImage> {
    weights.check(spec)?;
    if x.channels != spec.input_channels {
        return Err(Error::Shape(format!(
            "network `{}` expects {} input channels, got {}",
            spec.target, spec.input_channels, x.channels
        )));
    }
    let last = last_readers(spec);
    let mut live: Vec<Option<Tensor>> = vec![None; spec.layers.len()];
    let mut current: Option<Tensor> = None;
    for (i, (l, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        let input = match &current {
            None => x.clone(),
            Some(prev) if l.skip_sources.is_empty() => prev.clone(),
            Some(prev) => {
                let mut parts = vec![prev];
                for &s in &l.skip_sources {
                    parts.push(live[s].as_ref().expect("skip source kept alive"));
                }
                Tensor::concat(&parts)?
            }
        };
        let mut y = conv2d(&input, &w.kernel, &w.bias, l.out_channels, l.dilation)?;
        match l.kind {
            LayerKind::Input => relu_in_place(&mut y.data),
            LayerKind::Hidden => {
                let bn = w.bn.as_ref().expect("checked above");
                y = batch_norm_infer(&y, &bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var, BN_EPS)?;
                relu_in_place(&mut y.data);
            }
            LayerKind::Output => {}
        }
        for (j, slot) in live.iter_mut().enumerate() {
            if slot.is_some() && last[j] <= i {
                *slot = None;
            }
        }
        if last[i] > i + 1 {
            live[i] = Some(y.clone());
        }
        current = Some(y);
    }
    current.expect("network has layers").channel(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{HiddenBlock, Target};
    use crate::nn::ops::conv2d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor {
        Tensor::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn randomize_bn(w: &mut NetworkWeights, rng: &mut ChaCha8Rng) {
        for l in &mut w.layers {
            if let Some(bn) = &mut l.bn {
                for v in bn.gamma.iter_mut().chain(&mut bn.beta).chain(&mut bn.running_mean) {
                    *v = rng.random_range(-0.5..0.5);
                }
                for v in &mut bn.running_var {
                    *v = rng.random_range(0.5..2.0);
                }
            }
            for b in &mut l.bias {
                *b = rng.random_range(-0.1..0.1);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = NetworkSpec::default_for(Target::Gr);
        let w = NetworkWeights::zeros(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, 9, 7, 2);
        let y = forward(&spec, &w, &x).unwrap();
        assert_eq!(y.dims(), (9, 7));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_one_hidden_layer() {
        // Every conv is a centre tap, so each layer is pointwise.
        let spec = NetworkSpec::build(Target::Gr, 1, &[HiddenBlock::plain()], 1).unwrap();
        let mut w = NetworkWeights::zeros(&spec);
        w.layers[0].kernel[4 * 2] = 2.0; // channel 0 -> feature
        w.layers[0].kernel[4 * 2 + 1] = -1.0; // channel 1 -> feature
        w.layers[0].bias[0] = 0.5;
        w.layers[1].kernel[4] = 1.5;
        w.layers[1].bias[0] = -1.0;
        let bn = w.layers[1].bn.as_mut().unwrap();
        bn.gamma[0] = 2.0;
        bn.beta[0] = 0.25;
        bn.running_mean[0] = 1.0;
        bn.running_var[0] = 4.0 - BN_EPS;
        w.layers[2].kernel[4] = -3.0;
        w.layers[2].bias[0] = 0.125;

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, 5, 5, 2);
        let y = forward(&spec, &w, &x).unwrap();
        for p in 0..25 {
            let a0 = (2.0 * x.data[2 * p] - x.data[2 * p + 1] + 0.5).max(0.0);
            let z1 = 1.5 * a0 - 1.0;
            let a1 = (2.0 * (z1 - 1.0) / 2.0 + 0.25).max(0.0);
            let out = -3.0 * a1 + 0.125;
            assert!((y.data()[p] - out).abs() < 1e-12, "pixel {p}: {} vs {out}", y.data()[p]);
        }
    }

    #[test]
    fn skip_concat_matches_unrolled() {
        let blocks = [vec![HiddenBlock::plain(); 4], vec![HiddenBlock::concat(&[5])], vec![HiddenBlock::plain()]].concat();
        let spec = NetworkSpec::build(Target::G, 4, &blocks, 3).unwrap();
        assert_eq!(spec.layers[5].in_channels, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = NetworkWeights::he_init(&spec, &mut rng);
        randomize_bn(&mut w, &mut rng);
        let x = random_tensor(&mut rng, 8, 9, 3);
        let got = forward(&spec, &w, &x).unwrap();

        // Unrolled: keep every activation and build the concat by hand.
        let mut acts: Vec<Tensor> = Vec::new();
        for (i, (l, lw)) in spec.layers.iter().zip(&w.layers).enumerate() {
            let input = if i == 0 {
                x.clone()
            } else if i == 5 {
                let (prev, src) = (&acts[4], &acts[0]);
                let mut data = Vec::new();
                for p in 0..prev.pixels() {
                    data.extend_from_slice(&prev.data[p * 4..p * 4 + 4]);
                    data.extend_from_slice(&src.data[p * 4..p * 4 + 4]);
                }
                Tensor::new(8, 9, 8, data).unwrap()
            } else {
                acts[i - 1].clone()
            };
            let mut y = conv2d(&input, &lw.kernel, &lw.bias, l.out_channels, l.dilation).unwrap();
            if let Some(bn) = &lw.bn {
                for px in y.data.chunks_exact_mut(4) {
                    for c in 0..4 {
                        px[c] = bn.gamma[c] * (px[c] - bn.running_mean[c])
                            / (bn.running_var[c] + BN_EPS).sqrt()
                            + bn.beta[c];
                    }
                }
            }
            if l.kind != LayerKind::Output {
                relu_in_place(&mut y.data);
            }
            acts.push(y);
        }
        let want = acts.last().unwrap();
        for (a, b) in got.data().iter().zip(&want.data) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn output_keeps_spatial_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for t in Target::ALL {
            let spec = NetworkSpec::plain(t, 4, 4, 3).unwrap();
            let w = NetworkWeights::he_init(&spec, &mut rng);
            let x = random_tensor(&mut rng, 6, 11, t.input_channels());
            assert_eq!(forward(&spec, &w, &x).unwrap().dims(), (6, 11));
        }
    }

    #[test]
    fn translation_equivariant_in_interior() {
        let spec = NetworkSpec::plain(Target::G, 4, 3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = NetworkWeights::he_init(&spec, &mut rng);
        let big = random_tensor(&mut rng, 14, 14, 3);
        // Shift by (1, 1): drop the first row and column.
        let mut shifted = Vec::new();
        for y in 1..14 {
            for x in 1..14 {
                shifted.extend_from_slice(&big.data[(y * 14 + x) * 3..(y * 14 + x) * 3 + 3]);
            }
        }
        let shifted = Tensor::new(13, 13, 3, shifted).unwrap();
        let a = forward(&spec, &w, &big).unwrap();
        let b = forward(&spec, &w, &shifted).unwrap();
        // Receptive-field radius is 3 for three 3x3 layers.
        for y in 4..10 {
            for x in 4..10 {
                assert!((a.get(y + 1, x + 1) - b.get(y, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let spec = NetworkSpec::plain(Target::G, 4, 3, 1).unwrap();
        let w = NetworkWeights::zeros(&spec);
        assert!(forward(&spec, &w, &Tensor::zeros(5, 5, 2)).is_err());
        let other = NetworkSpec::plain(Target::G, 4, 4, 1).unwrap();
        assert!(forward(&other, &w, &Tensor::zeros(5, 5, 3)).is_err());
    }
}
