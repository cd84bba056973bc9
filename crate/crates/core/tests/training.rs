mod common;

use approx::assert_relative_eq;
use bayernet::nn::NetworkWeights;
use bayernet::report::synthetic_set;
use bayernet::train::{
    backward, build_dataset, lr_schedule, make_example, train, AdamConfig, AdamState, Loss, TrainConfig,
};
use bayernet::{hqli, mosaic, BayerLayout, NetworkSpec, RgbImage, Target, Tensor};
use common::{random_image, rng};
use proptest::prelude::*;

#[test]
fn labels_plus_initialization_give_the_truth() {
    let mut r = rng(41);
    for layout in BayerLayout::ALL {
        let patch = random_image(10, 10, &mut r);
        let init = hqli(&mosaic(&patch, layout)).unwrap();
        for t in Target::ALL {
            let ex = make_example(&patch, t, layout).unwrap();
            for y in 0..10 {
                for x in 0..10 {
                    let l = ex.label.get(y, x);
                    let (g0, r0, b0) = (init.g.get(y, x), init.r.get(y, x), init.b.get(y, x));
                    let (g, rr, b) = (patch.g.get(y, x), patch.r.get(y, x), patch.b.get(y, x));
                    match t {
                        Target::G => assert_eq!(l + g0, g),
                        Target::Gr => assert_eq!(l + (g0 - r0), g - rr),
                        Target::Gb => assert_eq!(l + (g0 - b0), g - b),
                    }
                }
            }
        }
    }
}

#[test]
fn split_matches_hand_enumeration() {
    // 20x20 images in 10x10 patches: 4 from the original and 2 from each
    // shifted copy, so 8 per image for `g` and 9 for the difference nets.
    let images: Vec<RgbImage> = synthetic_set(20, 20, 20, 5);
    let cfg = TrainConfig { patch_size: 10, discard: 2, ..TrainConfig::default() };
    let g = build_dataset(&images, Target::G, BayerLayout::Rggb, &cfg).unwrap();
    assert_eq!((g.train.len(), g.val.len()), (19 * 8, 8 - 2));
    let gr = build_dataset(&images, Target::Gr, BayerLayout::Rggb, &cfg).unwrap();
    assert_eq!((gr.train.len(), gr.val.len()), (19 * 9, 9 - 2));

    let too_much = TrainConfig { discard: 8, ..cfg };
    assert!(build_dataset(&images, Target::G, BayerLayout::Rggb, &too_much).is_err());
}

#[test]
fn zero_weights_zero_labels_zero_gradients() {
    let spec = NetworkSpec::plain(Target::Gb, 3, 4, 3).unwrap();
    let w = NetworkWeights::zeros(&spec);
    let x: Vec<Tensor> = (0..2).map(|i| Tensor::new(6, 6, 2, vec![i as f64 + 0.5; 72]).unwrap()).collect();
    let labels = vec![0.0; 36];
    let (loss, grads, _) = backward(&spec, &w, &x, &[&labels, &labels], Loss::Mse).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(grads.max_abs(), 0.0);
}

#[test]
fn adam_first_step_closed_form() {
    let mut p = vec![0.0, 2.0];
    let mut st = AdamState::for_shapes([&p]);
    st.step(vec![&mut p], &[&[1.0, 0.0]], 0.005, &AdamConfig::default()).unwrap();
    assert_relative_eq!(p[0], -0.005 / (1.0 + 1e-8), max_relative = 1e-12);
    assert_eq!(p[1], 2.0);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut p = vec![0.0];
    let mut st = AdamState::for_shapes([&p]);
    for _ in 0..200 {
        let g = 2.0 * (p[0] - 0.3);
        st.step(vec![&mut p], &[&[g]], 0.01, &AdamConfig::default()).unwrap();
    }
    assert!((p[0] - 0.3).abs() < 1e-3, "{}", p[0]);
}

#[test]
fn schedule_values() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_schedule(1, &cfg), 0.005);
    assert_eq!(lr_schedule(5, &cfg), 0.005);
    assert_eq!(lr_schedule(6, &cfg), 0.0025);
    assert_eq!(lr_schedule(31, &cfg), 0.005 / 64.0);
    assert_eq!(lr_schedule(500, &cfg), 0.005 / 64.0);
    assert!((1..60).all(|e| lr_schedule(e + 1, &cfg) <= lr_schedule(e, &cfg)));
}

#[test]
fn config_text_round_trip() {
    let cfg = TrainConfig { epochs: 7, seed: 99, max_steps: Some(12), layout: BayerLayout::Bggr, ..TrainConfig::default() };
    assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert!(TrainConfig::parse("epochs = 3\nbogus = 1\n").is_err());
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let images = synthetic_set(6, 24, 24, 8);
    let cfg = TrainConfig { patch_size: 8, discard: 0, train_percent: 70, batch_size: 8, epochs: 2, seed: 4, ..TrainConfig::default() };
    let data = build_dataset(&images, Target::G, cfg.layout, &cfg).unwrap();
    let spec = NetworkSpec::plain(Target::G, 4, 4, 1).unwrap();
    let a = train(&spec, &data, &cfg).unwrap();
    let b = train(&spec, &data, &cfg).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.len(), 2);
    let c = train(&spec, &data, &TrainConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.weights, c.weights);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_steps_against_the_gradient(g in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let mut p = vec![0.0; g.len()];
        let mut st = AdamState::for_shapes([&p]);
        st.step(vec![&mut p], &[&g], 0.005, &AdamConfig::default()).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            if *gi != 0.0 {
                prop_assert!(pi.signum() == -gi.signum());
            }
        }
    }

    #[test]
    fn pnorm_is_the_smoothed_power_sum(r in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let zeros = vec![0.0; r.len()];
        let v = Loss::pnorm().value(&[&r], &[&zeros]).unwrap();
        let want: f64 = r.iter().map(|x| (x * x + 1e-12).powf(0.45)).sum();
        prop_assert!((v - want).abs() <= 1e-12 * want.max(1.0));
    }
}
