mod common;

use approx::assert_abs_diff_eq;
use bayernet::{hqli, mosaic, BayerLayout, PlaneImage, RgbImage};
use common::{cfa_colour, hqli_oracle, random_image, rng, rows};
use proptest::prelude::*;

#[test]
fn odd_and_minimal_sizes_match_oracle() {
    let mut r = rng(21);
    for (h, w) in [(5, 5), (7, 9), (13, 6), (6, 13)] {
        let img = random_image(h, w, &mut r);
        for layout in BayerLayout::ALL {
            let m = mosaic(&img, layout);
            let got = hqli(&m).unwrap();
            let want = hqli_oracle(&m.cfa, layout);
            assert_eq!(rows(&got.r), want[0], "{h}x{w} {layout}");
            assert_eq!(rows(&got.g), want[1], "{h}x{w} {layout}");
            assert_eq!(rows(&got.b), want[2], "{h}x{w} {layout}");
        }
    }
}

#[test]
fn too_small_is_rejected() {
    let img = RgbImage::filled(4, 9, [1.0, 2.0, 3.0]).unwrap();
    assert!(hqli(&mosaic(&img, BayerLayout::Rggb)).is_err());
}

#[test]
fn linear_ramps_are_exact_away_from_the_border() {
    let ramp = |a: f64, b: f64, c: f64| PlaneImage::from_fn(12, 14, |y, x| a * y as f64 + b * x as f64 + c).unwrap();
    let img = RgbImage::new(ramp(3.0, -1.5, 40.0), ramp(-2.0, 4.0, 90.0), ramp(0.5, 0.25, 10.0)).unwrap();
    for layout in BayerLayout::ALL {
        let out = hqli(&mosaic(&img, layout)).unwrap();
        for y in 2..10 {
            for x in 2..12 {
                assert_abs_diff_eq!(out.r.get(y, x), img.r.get(y, x), epsilon = 1e-9);
                assert_abs_diff_eq!(out.g.get(y, x), img.g.get(y, x), epsilon = 1e-9);
                assert_abs_diff_eq!(out.b.get(y, x), img.b.get(y, x), epsilon = 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_values_pass_through(h in 5usize..14, w in 5usize..14, seed in any::<u64>(), l in 0usize..4) {
        let layout = BayerLayout::ALL[l];
        let img = random_image(h, w, &mut rng(seed));
        let m = mosaic(&img, layout);
        let out = hqli(&m).unwrap();
        for y in 0..h {
            for x in 0..w {
                let plane = match cfa_colour(layout, y, x) {
                    'R' => &out.r,
                    'G' => &out.g,
                    _ => &out.b,
                };
                prop_assert_eq!(plane.get(y, x), m.cfa.get(y, x));
            }
        }
    }
}
