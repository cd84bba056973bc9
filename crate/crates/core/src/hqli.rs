//! High-quality linear interpolation (Malvar–He–Cutler) of a Bayer mosaic.
//!
//! Every missing sample is a fixed 5x5 stencil over the raw CFA, divided by
//! 8. Each stencil sums to 8, so constant images are reproduced exactly.
//! Sampled positions are copied through untouched.
//!
//! ```text
//!   green at R/B            R at G, R in row          R at B
//!   .  .  -1  .  .          .   .  1/2  .   .         .    .  -3/2  .    .
//!   .  .   2  .  .          .  -1   .  -1   .         .    2   .    2    .
//!  -1  2   4  2 -1         -1   4   5   4  -1       -3/2   .   6    .  -3/2
//!   .  .   2  .  .          .  -1   .  -1   .         .    2   .    2    .
//!   .  .  -1  .  .          .   .  1/2  .   .         .    .  -3/2  .    .
//! ```
//!
//! R at G with R in the column is the transpose of the row stencil. Blue uses
//! the same stencils with R and B exchanged.
//!
//! Borders use whole-sample reflection (`-1 -> 1`, `-2 -> 2`), which keeps the
//! Bayer phase of reflected samples intact.

use crate::error::{Error, Result};
use crate::image::{BayerLayout, Channel, MosaicImage, PlaneImage, RgbImage};

/// Smallest mosaic the 5x5 stencils accept.
pub const MIN_SIZE: usize = 5;

pub type Stencil = [[f64; 5]; 5];

pub const STENCIL_DIVISOR: f64 = 8.0;

pub const GREEN_AT_RB: Stencil = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [-1.0, 2.0, 4.0, 2.0, -1.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];

pub const RB_AT_G_ROW: Stencil = [
    [0.0, 0.0, 0.5, 0.0, 0.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [-1.0, 4.0, 5.0, 4.0, -1.0],
    [0.0, -1.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.5, 0.0, 0.0],
];

pub const RB_AT_G_COL: Stencil = [
    [0.0, 0.0, -1.0, 0.0, 0.0],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.5, 0.0, 5.0, 0.0, 0.5],
    [0.0, -1.0, 4.0, -1.0, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0],
];

pub const RB_AT_BR: Stencil = [
    [0.0, 0.0, -1.5, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [-1.5, 0.0, 6.0, 0.0, -1.5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0, 0.0, -1.5, 0.0, 0.0],
];

// Plain bilinear stencils on the same x8 scale, for ablation runs.
const BILINEAR_GREEN: Stencil = [
    [0.0; 5],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0, 0.0, 2.0, 0.0, 0.0],
    [0.0; 5],
];
const BILINEAR_ROW: Stencil =
    [[0.0; 5], [0.0; 5], [0.0, 4.0, 0.0, 4.0, 0.0], [0.0; 5], [0.0; 5]];
const BILINEAR_COL: Stencil = [
    [0.0; 5],
    [0.0, 0.0, 4.0, 0.0, 0.0],
    [0.0; 5],
    [0.0, 0.0, 4.0, 0.0, 0.0],
    [0.0; 5],
];
const BILINEAR_DIAG: Stencil = [
    [0.0; 5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0; 5],
    [0.0, 2.0, 0.0, 2.0, 0.0],
    [0.0; 5],
];

/// Which stencil family fills the missing samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Initializer {
    #[default]
    Hqli,
    Bilinear,
}

struct StencilSet {
    green: Stencil,
    row: Stencil,
    col: Stencil,
    diag: Stencil,
}

const HQLI_SET: StencilSet =
    StencilSet { green: GREEN_AT_RB, row: RB_AT_G_ROW, col: RB_AT_G_COL, diag: RB_AT_BR };
const BILINEAR_SET: StencilSet = StencilSet {
    green: BILINEAR_GREEN,
    row: BILINEAR_ROW,
    col: BILINEAR_COL,
    diag: BILINEAR_DIAG,
};

/// Whole-sample reflection of `i` into `0..n`. Valid for offsets up to `n - 1`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// CFA with a 2-pixel reflected border.
struct Padded {
    width: usize,
    data: Vec<f64>,
}

const PAD: usize = 2;

impl Padded {
    fn new(cfa: &PlaneImage) -> Self {
        let (h, w) = cfa.dims();
        let pw = w + 2 * PAD;
        let mut data = Vec::with_capacity((h + 2 * PAD) * pw);
        for py in 0..h + 2 * PAD {
            let sy = reflect(py as isize - PAD as isize, h);
            for px in 0..pw {
                data.push(cfa.get(sy, reflect(px as isize - PAD as isize, w)));
            }
        }
        Padded { width: pw, data }
    }

    #[inline]
    fn apply(&self, s: &Stencil, y: usize, x: usize) -> f64 {
        // (y, x) is in unpadded coordinates; the window starts at (y, x) padded.
        let mut acc = 0.0;
        for (ky, row) in s.iter().enumerate() {
            let base = (y + ky) * self.width + x;
            for (kx, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    acc += c * self.data[base + kx];
                }
            }
        }
        acc / STENCIL_DIVISOR
    }
}

/// Initial full-resolution estimate `(r0, g0, b0)` from the CFA.
pub fn hqli(m: &MosaicImage) -> Result<RgbImage> {
    interpolate(m, Initializer::Hqli)
}

pub fn interpolate(m: &MosaicImage, method: Initializer) -> Result<RgbImage> {
    let (h, w) = m.dims();
    if h < MIN_SIZE || w < MIN_SIZE {
        return Err(Error::TooSmall { height: h, width: w, min: MIN_SIZE });
    }
    let set = match method {
        Initializer::Hqli => &HQLI_SET,
        Initializer::Bilinear => &BILINEAR_SET,
    };
    let pad = Padded::new(&m.cfa);
    let layout = m.layout;
    let mut r = vec![0.0; h * w];
    let mut g = vec![0.0; h * w];
    let mut b = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = m.cfa.get(y, x);
            match layout.channel_at(y, x) {
                Channel::G => {
                    g[i] = v;
                    let (for_r, for_b) = if row_holds(layout, y, Channel::R) {
                        (&set.row, &set.col)
                    } else {
                        (&set.col, &set.row)
                    };
                    r[i] = pad.apply(for_r, y, x);
                    b[i] = pad.apply(for_b, y, x);
                }
                Channel::R => {
                    r[i] = v;
                    g[i] = pad.apply(&set.green, y, x);
                    b[i] = pad.apply(&set.diag, y, x);
                }
                Channel::B => {
                    b[i] = v;
                    g[i] = pad.apply(&set.green, y, x);
                    r[i] = pad.apply(&set.diag, y, x);
                }
            }
        }
    }
    RgbImage::new(PlaneImage::new(h, w, r)?, PlaneImage::new(h, w, g)?, PlaneImage::new(h, w, b)?)
}

/// Whether row `y` carries samples of `c` (only meaningful for R and B).
#[inline]
fn row_holds(layout: BayerLayout, y: usize, c: Channel) -> bool {
    layout.channel_at(y, 0) == c || layout.channel_at(y, 1) == c
}

/// Colour-difference planes `(g0 - r0, g0 - b0)`. Not clipped.
pub fn difference_planes(init: &RgbImage) -> Result<(PlaneImage, PlaneImage)> {
    Ok((init.g.zip_with(&init.r, |g, r| g - r)?, init.g.zip_with(&init.b, |g, b| g - b)?))
}
