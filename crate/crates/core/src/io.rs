//! Image files: PNG through the `image` crate, binary PPM/PGM by hand.
//!
//! CFA rasters are stored as PGM with a `# bayer: RGGB` header comment so the
//! layout travels with the data. Everything is 8 bit on disk; values are
//! rounded and clamped to `0..=255` on export.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{BayerLayout, MosaicImage, PlaneImage, RgbImage};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Round and clamp to an 8-bit sample.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

struct Pnm {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    comments: Vec<String>,
    raster: Vec<u8>,
}

fn parse_pnm(buf: &[u8]) -> Result<Pnm> {
    let bad = |m: &str| Error::Decode(m.to_string());
    if buf.len() < 2 || buf[0] != b'P' {
        return Err(bad("not a PNM file"));
    }
    let magic = [buf[0], buf[1]];
    let mut pos = 2;
    let mut comments = Vec::new();
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match buf.get(pos) {
                Some(b'#') => {
                    let end = buf[pos..].iter().position(|&c| c == b'\n').map_or(buf.len(), |e| pos + e);
                    comments.push(String::from_utf8_lossy(&buf[pos + 1..end]).trim().to_string());
                    pos = end;
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated PNM header")),
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&buf[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad PNM header field"))?;
    }
    if !buf.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after PNM header"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("PNM dimensions or maxval out of range"));
    }
    Ok(Pnm { magic, width, height, maxval, comments, raster: buf[pos + 1..].to_vec() })
}

impl Pnm {
    /// Samples scaled to `0..=255`.
    fn samples(&self, per_pixel: usize) -> Result<Vec<f64>> {
        let n = self.width * self.height * per_pixel;
        let scale = 255.0 / self.maxval as f64;
        let out: Vec<f64> = if self.maxval < 256 {
            if self.raster.len() < n {
                return Err(Error::Decode("truncated PNM raster".into()));
            }
            self.raster[..n].iter().map(|&v| v as f64).collect()
        } else {
            if self.raster.len() < 2 * n {
                return Err(Error::Decode("truncated PNM raster".into()));
            }
            self.raster[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
        };
        Ok(if self.maxval == 255 { out } else { out.into_iter().map(|v| v * scale).collect() })
    }

    fn bayer(&self) -> Option<Result<BayerLayout>> {
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix("bayer:").map(|v| v.trim().parse()))
    }
}

fn interleaved_to_rgb(h: usize, w: usize, v: &[f64]) -> Result<RgbImage> {
    let ch = |k: usize| PlaneImage::new(h, w, v.iter().skip(k).step_by(3).copied().collect());
    RgbImage::new(ch(0)?, ch(1)?, ch(2)?)
}

pub fn decode_rgb(buf: &[u8]) -> Result<RgbImage> {
    if buf.starts_with(PNG_SIGNATURE) {
        let img = image::load_from_memory_with_format(buf, image::ImageFormat::Png)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let v: Vec<f64> = img.into_raw().into_iter().map(f64::from).collect();
        return interleaved_to_rgb(h, w, &v);
    }
    let pnm = parse_pnm(buf)?;
    match &pnm.magic {
        b"P6" => interleaved_to_rgb(pnm.height, pnm.width, &pnm.samples(3)?),
        b"P5" => {
            let g = PlaneImage::new(pnm.height, pnm.width, pnm.samples(1)?)?;
            RgbImage::new(g.clone(), g.clone(), g)
        }
        m => Err(Error::Decode(format!("unsupported PNM type {}", String::from_utf8_lossy(m)))),
    }
}

/// Prefix I/O and decode errors with the file they came from.
pub(crate) fn at_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Decode(m) => Error::Decode(format!("{}: {m}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| at_path(path)(e.into()))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    decode_rgb(&read_file(path)?).map_err(at_path(path))
}

fn interleave(img: &RgbImage) -> Vec<u8> {
    let (r, g, b) = (img.r.data(), img.g.data(), img.b.data());
    (0..r.len()).flat_map(|i| [quantize(r[i]), quantize(g[i]), quantize(b[i])]).collect()
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let (h, w) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(interleave(img));
    out
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Write as PNG when the extension says so, binary PPM otherwise.
pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    if is_png(path) {
        let (h, w) = img.dims();
        image::save_buffer(path, &interleave(img), w as u32, h as u32, image::ExtendedColorType::Rgb8)?;
    } else {
        std::fs::write(path, encode_ppm(img))?;
    }
    Ok(())
}

pub fn encode_pgm_cfa(m: &MosaicImage) -> Vec<u8> {
    let (h, w) = m.dims();
    let mut out = format!("P5\n# bayer: {}\n{w} {h}\n255\n", m.layout).into_bytes();
    out.extend(m.cfa.data().iter().map(|&v| quantize(v)));
    out
}

/// Decode a single-channel CFA raster. The layout comes from the file's
/// `# bayer:` comment, else from `fallback`.
pub fn decode_cfa(buf: &[u8], fallback: Option<BayerLayout>) -> Result<MosaicImage> {
    let (cfa, found) = if buf.starts_with(PNG_SIGNATURE) {
        let img = image::load_from_memory_with_format(buf, image::ImageFormat::Png)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        (PlaneImage::new(h, w, img.into_raw().into_iter().map(f64::from).collect())?, None)
    } else {
        let pnm = parse_pnm(buf)?;
        if &pnm.magic != b"P5" {
            return Err(Error::Decode("a CFA must be a binary PGM (P5) or grayscale PNG".into()));
        }
        (PlaneImage::new(pnm.height, pnm.width, pnm.samples(1)?)?, pnm.bayer().transpose()?)
    };
    let layout = found
        .or(fallback)
        .ok_or_else(|| Error::Decode("CFA has no `# bayer:` comment and no layout was given".into()))?;
    Ok(MosaicImage { cfa, layout })
}

pub fn read_cfa(path: &Path, fallback: Option<BayerLayout>) -> Result<MosaicImage> {
    decode_cfa(&read_file(path)?, fallback).map_err(at_path(path))
}

pub fn write_cfa(path: &Path, m: &MosaicImage) -> Result<()> {
    if is_png(path) {
        let (h, w) = m.dims();
        let data: Vec<u8> = m.cfa.data().iter().map(|&v| quantize(v)).collect();
        image::save_buffer(path, &data, w as u32, h as u32, image::ExtendedColorType::L8)?;
    } else {
        std::fs::write(path, encode_pgm_cfa(m))?;
    }
    Ok(())
}

/// Whether a file name looks like an image this module can read.
pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::mosaic;

    fn sample() -> RgbImage {
        let p = |k: usize| PlaneImage::from_fn(5, 7, |y, x| ((y * 40 + x * 9 + k * 70) % 256) as f64).unwrap();
        RgbImage::new(p(0), p(1), p(2)).unwrap()
    }

    #[test]
    fn quantize_rounds_and_clamps() {
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(254.5), 255);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(10.49), 10);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn ppm_round_trip() {
        let img = sample();
        assert_eq!(decode_rgb(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_cfa_carries_layout() {
        let m = mosaic(&sample(), BayerLayout::Gbrg);
        let bytes = encode_pgm_cfa(&m);
        assert!(bytes.starts_with(b"P5\n# bayer: GBRG\n7 5\n255\n"));
        assert_eq!(decode_cfa(&bytes, None).unwrap(), m);
        // The embedded layout wins over the fallback.
        assert_eq!(decode_cfa(&bytes, Some(BayerLayout::Rggb)).unwrap().layout, BayerLayout::Gbrg);
    }

    #[test]
    fn cfa_without_layout_needs_fallback() {
        let mut bytes = b"P5 3 2 255\n".to_vec();
        bytes.extend([1, 2, 3, 4, 5, 6]);
        assert!(decode_cfa(&bytes, None).is_err());
        let m = decode_cfa(&bytes, Some(BayerLayout::Bggr)).unwrap();
        assert_eq!(m.cfa.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn sixteen_bit_scaled() {
        let mut bytes = b"P5\n2 2\n65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0, 0, 0xff, 0xff, 0, 0]);
        assert_eq!(decode_cfa(&bytes, Some(BayerLayout::Rggb)).unwrap().cfa.data(), &[255.0, 0.0, 255.0, 0.0]);
    }

    #[test]
    fn malformed_rejected() {
        assert!(decode_rgb(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode_rgb(b"P9\n1 1\n255\n\x00").is_err());
        assert!(decode_rgb(b"hello").is_err());
        assert!(decode_rgb(b"P6\n0 2\n255\n").is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = sample();
        write_rgb(&path, &img).unwrap();
        assert_eq!(read_rgb(&path).unwrap(), img);
        let m = mosaic(&img, BayerLayout::Rggb);
        let cpath = dir.path().join("c.png");
        write_cfa(&cpath, &m).unwrap();
        assert_eq!(read_cfa(&cpath, Some(BayerLayout::Rggb)).unwrap(), m);
    }
}
