#![allow(dead_code)]

use bayernet::nn::{HiddenBlock, NetworkSpec, NetworkWeights, Target};
use bayernet::{BayerLayout, PlaneImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random image with integer samples in `0..=255`.
pub fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut p = || PlaneImage::new(h, w, (0..h * w).map(|_| rng.random_range(0..256) as f64).collect()).unwrap();
    let (r, g, b) = (p(), p(), p());
    RgbImage::new(r, g, b).unwrap()
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Which of 'R', 'G', 'B' the layout samples at (y, x).
pub fn cfa_colour(layout: BayerLayout, y: usize, x: usize) -> char {
    layout.to_string().as_bytes()[(y % 2) * 2 + x % 2] as char
}

type Taps = &'static [(isize, isize, f64)];

// Nonzero taps in raster order, written out independently of the library.
const GREEN: Taps = &[
    (-2, 0, -1.0),
    (-1, 0, 2.0),
    (0, -2, -1.0),
    (0, -1, 2.0),
    (0, 0, 4.0),
    (0, 1, 2.0),
    (0, 2, -1.0),
    (1, 0, 2.0),
    (2, 0, -1.0),
];
const SAME_ROW: Taps = &[
    (-2, 0, 0.5),
    (-1, -1, -1.0),
    (-1, 1, -1.0),
    (0, -2, -1.0),
    (0, -1, 4.0),
    (0, 0, 5.0),
    (0, 1, 4.0),
    (0, 2, -1.0),
    (1, -1, -1.0),
    (1, 1, -1.0),
    (2, 0, 0.5),
];
const SAME_COL: Taps = &[
    (-2, 0, -1.0),
    (-1, -1, -1.0),
    (-1, 0, 4.0),
    (-1, 1, -1.0),
    (0, -2, 0.5),
    (0, 0, 5.0),
    (0, 2, 0.5),
    (1, -1, -1.0),
    (1, 0, 4.0),
    (1, 1, -1.0),
    (2, 0, -1.0),
];
const OPPOSITE: Taps = &[
    (-2, 0, -1.5),
    (-1, -1, 2.0),
    (-1, 1, 2.0),
    (0, -2, -1.5),
    (0, 0, 6.0),
    (0, 2, -1.5),
    (1, -1, 2.0),
    (1, 1, 2.0),
    (2, 0, -1.5),
];

/// Direct nested-loop interpolation, returned as `[r, g, b]` rows.
pub fn hqli_oracle(cfa: &PlaneImage, layout: BayerLayout) -> [Vec<Vec<f64>>; 3] {
    let (h, w) = cfa.dims();
    let at = |y: isize, x: isize| cfa.get(mirror(y, h), mirror(x, w));
    let apply = |taps: Taps, y: usize, x: usize| {
        let mut acc = 0.0;
        for &(dy, dx, c) in taps {
            acc += c * at(y as isize + dy, x as isize + dx);
        }
        acc / 8.0
    };
    let mut out = [vec![vec![0.0; w]; h], vec![vec![0.0; w]; h], vec![vec![0.0; w]; h]];
    for y in 0..h {
        for x in 0..w {
            let v = cfa.get(y, x);
            let here = cfa_colour(layout, y, x);
            let (r, g, b) = match here {
                'R' => (v, apply(GREEN, y, x), apply(OPPOSITE, y, x)),
                'B' => (apply(OPPOSITE, y, x), apply(GREEN, y, x), v),
                _ => {
                    // A green site: its row neighbours are one of R/B, column neighbours the other.
                    let row_neighbour = cfa_colour(layout, y, x + 1);
                    if row_neighbour == 'R' {
                        (apply(SAME_ROW, y, x), v, apply(SAME_COL, y, x))
                    } else {
                        (apply(SAME_COL, y, x), v, apply(SAME_ROW, y, x))
                    }
                }
            };
            out[0][y][x] = r;
            out[1][y][x] = g;
            out[2][y][x] = b;
        }
    }
    out
}

pub fn rows(p: &PlaneImage) -> Vec<Vec<f64>> {
    p.data().chunks(p.width()).map(|r| r.to_vec()).collect()
}

/// Small specs with the default architectures' structure: plain green,
/// dilated difference networks with one `i - 5` concatenation.
pub fn small_specs(width: usize) -> [NetworkSpec; 3] {
    let mut diff_blocks = vec![HiddenBlock::plain(); 6];
    diff_blocks[4] = HiddenBlock::concat(&[5]);
    [
        NetworkSpec::plain(Target::G, width, 6, 1).unwrap(),
        NetworkSpec::build(Target::Gr, width, &diff_blocks, 3).unwrap(),
        NetworkSpec::build(Target::Gb, width, &diff_blocks, 3).unwrap(),
    ]
}

/// He-initialized weights with non-trivial batch-norm parameters.
pub fn random_weights(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> NetworkWeights {
    let mut w = NetworkWeights::he_init(spec, rng);
    for l in &mut w.layers {
        for b in l.bias.iter_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
        if let Some(bn) = &mut l.bn {
            for c in 0..bn.gamma.len() {
                bn.gamma[c] = rng.random_range(0.5..1.5);
                bn.beta[c] = rng.random_range(-0.5..0.5);
                bn.running_mean[c] = rng.random_range(-2.0..2.0);
                bn.running_var[c] = rng.random_range(0.5..4.0);
            }
        }
    }
    w
}
