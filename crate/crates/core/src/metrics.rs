//! Peak signal-to-noise ratio on 8-bit-scaled planes.
//!
//! Identical inputs give `f64::INFINITY`. Dataset means skip infinite entries.

use crate::error::{Error, Result};
use crate::image::{PlaneImage, RgbImage};

pub const PEAK_8BIT: f64 = 255.0;

fn sum_sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &PlaneImage, b: &PlaneImage, peak: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("psnr of {:?} vs {:?}", a.dims(), b.dims())));
    }
    let mse = sum_sq_err(a.data(), b.data()) / a.data().len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

/// Per-channel PSNR plus the composite over all three planes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsnrReport {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub cpsnr: f64,
}

pub fn psnr_report(truth: &RgbImage, est: &RgbImage, crop: usize) -> Result<PsnrReport> {
    if truth.dims() != est.dims() {
        return Err(Error::Shape(format!(
            "report of {:?} vs {:?}",
            truth.dims(),
            est.dims()
        )));
    }
    let (h, w) = truth.dims();
    if 2 * crop >= h.min(w) {
        return Err(Error::Invalid(format!("crop {crop} too large for {h}x{w}")));
    }
    let (ch, cw) = (h - 2 * crop, w - 2 * crop);
    let (t, e) = if crop == 0 {
        (truth.clone(), est.clone())
    } else {
        (truth.crop(crop, crop, ch, cw)?, est.crop(crop, crop, ch, cw)?)
    };
    let n = (ch * cw) as f64;
    let sr = sum_sq_err(t.r.data(), e.r.data());
    let sg = sum_sq_err(t.g.data(), e.g.data());
    let sb = sum_sq_err(t.b.data(), e.b.data());
    Ok(PsnrReport {
        r: psnr_from_mse(sr / n, PEAK_8BIT),
        g: psnr_from_mse(sg / n, PEAK_8BIT),
        b: psnr_from_mse(sb / n, PEAK_8BIT),
        cpsnr: psnr_from_mse((sr + sg + sb) / (3.0 * n), PEAK_8BIT),
    })
}

/// Mean of finite values, with the number of entries dropped for being infinite.
pub fn finite_mean(values: impl IntoIterator<Item = f64>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in values {
        if v.is_finite() {
            sum += v;
            n += 1;
        } else {
            skipped += 1;
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

/// Dataset average in the per-image convention: each channel is the mean of
/// per-image PSNRs, not the PSNR of pooled squared error.
pub fn dataset_mean(reports: &[PsnrReport]) -> PsnrReport {
    let mut skipped = 0;
    let mut chan = |f: fn(&PsnrReport) -> f64| {
        let (m, s) = finite_mean(reports.iter().map(f));
        skipped += s;
        m.unwrap_or(f64::INFINITY)
    };
    let out = PsnrReport {
        r: chan(|p| p.r),
        g: chan(|p| p.g),
        b: chan(|p| p.b),
        cpsnr: chan(|p| p.cpsnr),
    };
    if skipped > 0 {
        log::warn!("{skipped} infinite PSNR entries excluded from dataset mean");
    }
    out
}
