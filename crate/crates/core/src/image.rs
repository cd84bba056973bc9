//! Planar image types, Bayer sampling and patch tiling.
//!
//! Intensities are `f64` on a nominal `[0, 255]` scale. Nothing here clips
//! implicitly; quantization to 8 bits happens only in [`crate::io`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest plane the crate accepts in either dimension.
pub const MIN_PLANE_DIM: usize = 2;

/// Single-channel raster stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PlaneImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < MIN_PLANE_DIM || width < MIN_PLANE_DIM {
            return Err(Error::TooSmall { height, width, min: MIN_PLANE_DIM });
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane {}x{} needs {} samples, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Elementwise combination of two planes of equal size.
    pub fn zip_with(&self, other: &PlaneImage, f: impl Fn(f64, f64) -> f64) -> Result<PlaneImage> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(PlaneImage { height: self.height, width: self.width, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PlaneImage {
        PlaneImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the `h`x`w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<PlaneImage> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Shape(format!(
                "window {}x{}@({},{}) exceeds {}x{}",
                h, w, y0, x0, self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
        }
        PlaneImage::new(h, w, data)
    }
}

/// Clamp every sample to `[0, 255]`.
pub fn clip(x: &PlaneImage) -> PlaneImage {
    x.map(|v| v.clamp(0.0, 255.0))
}

/// Three planes of identical size.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub r: PlaneImage,
    pub g: PlaneImage,
    pub b: PlaneImage,
}

impl RgbImage {
    pub fn new(r: PlaneImage, g: PlaneImage, b: PlaneImage) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(Error::Shape(format!(
                "channel sizes differ: r {:?}, g {:?}, b {:?}",
                r.dims(),
                g.dims(),
                b.dims()
            )));
        }
        Ok(Self { r, g, b })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(
            PlaneImage::filled(height, width, rgb[0])?,
            PlaneImage::filled(height, width, rgb[1])?,
            PlaneImage::filled(height, width, rgb[2])?,
        )
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.r.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.r.width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn plane(&self, channel: Channel) -> &PlaneImage {
        match channel {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<RgbImage> {
        RgbImage::new(
            self.r.crop(y0, x0, h, w)?,
            self.g.crop(y0, x0, h, w)?,
            self.b.crop(y0, x0, h, w)?,
        )
    }

    pub fn clip(&self) -> RgbImage {
        RgbImage { r: clip(&self.r), g: clip(&self.g), b: clip(&self.b) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
}

/// The four phases of the 2x2 Bayer tile, named by their top-left 2x2 block
/// read in raster order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BayerLayout {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerLayout {
    pub const ALL: [BayerLayout; 4] =
        [BayerLayout::Rggb, BayerLayout::Grbg, BayerLayout::Gbrg, BayerLayout::Bggr];

    fn tile(self) -> [[Channel; 2]; 2] {
        use Channel::*;
        match self {
            BayerLayout::Rggb => [[R, G], [G, B]],
            BayerLayout::Grbg => [[G, R], [B, G]],
            BayerLayout::Gbrg => [[G, B], [R, G]],
            BayerLayout::Bggr => [[B, G], [G, R]],
        }
    }

    /// Channel sampled at `(y, x)`.
    #[inline]
    pub fn channel_at(self, y: usize, x: usize) -> Channel {
        self.tile()[y & 1][x & 1]
    }

    /// Layout seen by an image whose origin has moved to `(dy, dx)` of this one.
    pub fn shifted(self, dy: usize, dx: usize) -> BayerLayout {
        let t = self.tile();
        let want = [
            [t[dy & 1][dx & 1], t[dy & 1][(dx + 1) & 1]],
            [t[(dy + 1) & 1][dx & 1], t[(dy + 1) & 1][(dx + 1) & 1]],
        ];
        BayerLayout::ALL
            .into_iter()
            .find(|l| l.tile() == want)
            .expect("every phase shift of a Bayer tile is a Bayer tile")
    }

    pub fn token(self) -> &'static str {
        match self {
            BayerLayout::Rggb => "RGGB",
            BayerLayout::Grbg => "GRBG",
            BayerLayout::Gbrg => "GBRG",
            BayerLayout::Bggr => "BGGR",
        }
    }
}

impl fmt::Display for BayerLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for BayerLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGGB" => Ok(BayerLayout::Rggb),
            "GRBG" => Ok(BayerLayout::Grbg),
            "GBRG" => Ok(BayerLayout::Gbrg),
            "BGGR" => Ok(BayerLayout::Bggr),
            other => Err(Error::Invalid(format!("unknown Bayer layout `{other}`"))),
        }
    }
}

/// A CFA raster together with the layout that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct MosaicImage {
    pub cfa: PlaneImage,
    pub layout: BayerLayout,
}

impl MosaicImage {
    pub fn dims(&self) -> (usize, usize) {
        self.cfa.dims()
    }
}

/// Sample `src` through the colour filter array described by `layout`.
pub fn mosaic(src: &RgbImage, layout: BayerLayout) -> MosaicImage {
    let (h, w) = src.dims();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(src.plane(layout.channel_at(y, x)).get(y, x));
        }
    }
    MosaicImage {
        cfa: PlaneImage::new(h, w, data).expect("dimensions inherited from a valid image"),
        layout,
    }
}

/// Coordinates at which each channel was originally sampled.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PixelSets {
    pub r: Vec<(usize, usize)>,
    pub g: Vec<(usize, usize)>,
    pub b: Vec<(usize, usize)>,
}

impl PixelSets {
    pub fn of(&self, channel: Channel) -> &[(usize, usize)] {
        match channel {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
        }
    }
}

pub fn pixel_sets(height: usize, width: usize, layout: BayerLayout) -> Result<PixelSets> {
    if height < MIN_PLANE_DIM || width < MIN_PLANE_DIM {
        return Err(Error::TooSmall { height, width, min: MIN_PLANE_DIM });
    }
    let mut sets = PixelSets::default();
    for y in 0..height {
        for x in 0..width {
            match layout.channel_at(y, x) {
                Channel::R => sets.r.push((y, x)),
                Channel::G => sets.g.push((y, x)),
                Channel::B => sets.b.push((y, x)),
            }
        }
    }
    Ok(sets)
}

/// Non-overlapping `size`x`size` tiles in raster order. Partial tiles at the
/// bottom and right edges are dropped.
pub fn extract_patches(img: &RgbImage, size: usize) -> Result<Vec<RgbImage>> {
    if size < MIN_PLANE_DIM {
        return Err(Error::Invalid(format!("patch size {size} below {MIN_PLANE_DIM}")));
    }
    let (h, w) = img.dims();
    let mut out = Vec::with_capacity((h / size) * (w / size));
    for ty in 0..h / size {
        for tx in 0..w / size {
            out.push(img.crop(ty * size, tx * size, size, size)?);
        }
    }
    Ok(out)
}
