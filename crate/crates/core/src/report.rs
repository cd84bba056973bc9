//! Dataset ingestion, synthetic test sets and benchmark reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hqli::MIN_SIZE;
use crate::image::{mosaic, BayerLayout, PlaneImage, RgbImage};
use crate::io::{is_image_path, read_rgb};
use crate::metrics::{dataset_mean, psnr_report, PsnrReport};
use crate::nn::{count_flops, Target};
use crate::pipeline::{demosaic_batch, DemosaicModel, NetTimings};

/// Images of a directory in file-name order.
#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub names: Vec<String>,
    pub images: Vec<RgbImage>,
    /// Files that could not be used, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Load every PNG/PPM/PGM file in `dir` in lexicographic order. Unreadable
/// or too-small files are skipped with a warning and recorded.
pub fn ingest_dataset(dir: &Path) -> Result<Ingested> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| crate::io::at_path(dir)(e.into()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_path(p))
        .collect();
    paths.sort();
    let mut out = Ingested::default();
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match read_rgb(&p) {
            Ok(img) if img.height() >= MIN_SIZE && img.width() >= MIN_SIZE => {
                out.names.push(name);
                out.images.push(img);
            }
            Ok(img) => {
                let why = format!("{}x{} is below {MIN_SIZE}x{MIN_SIZE}", img.height(), img.width());
                log::warn!("skipping {name}: {why}");
                out.skipped.push((name, why));
            }
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                out.skipped.push((name, e.to_string()));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    Gradient,
    Checkerboard,
    Texture,
    Shapes,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] =
        [SyntheticKind::Gradient, SyntheticKind::Checkerboard, SyntheticKind::Texture, SyntheticKind::Shapes];
}

fn plane(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> PlaneImage {
    PlaneImage::from_fn(h, w, |y, x| f(y, x).round().clamp(0.0, 255.0)).expect("positive size")
}

/// Sum of a few oriented sinusoids, roughly in `[-1, 1]`.
fn waves(rng: &mut ChaCha8Rng, count: usize) -> impl Fn(f64, f64) -> f64 {
    let w: Vec<[f64; 4]> = (0..count)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let freq = rng.random_range(0.05..1.2);
            [freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..6.3), rng.random_range(0.3..1.0)]
        })
        .collect();
    let norm: f64 = w.iter().map(|c| c[3]).sum();
    move |y, x| w.iter().map(|c| c[3] * (c[0] * x + c[1] * y + c[2]).sin()).sum::<f64>() / norm
}

/// A colour differing from `base` mostly in brightness. Colour channels of
/// natural scenes move together; independent jumps make edges ambiguous
/// under a Bayer sampling.
fn related(base: [f64; 3], rng: &mut ChaCha8Rng) -> [f64; 3] {
    let step = rng.random_range(30.0..110.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    base.map(|v| v + step + rng.random_range(-12.0..12.0))
}

/// One integer-valued synthetic image.
pub fn synthetic_image(kind: SyntheticKind, h: usize, w: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let color = |rng: &mut ChaCha8Rng| {
        let l = rng.random_range(70.0..185.0);
        [0; 3].map(|_| l + rng.random_range(-40.0..40.0))
    };
    let rgb = |f: &dyn Fn(usize, usize, usize) -> f64| {
        RgbImage::new(plane(h, w, |y, x| f(0, y, x)), plane(h, w, |y, x| f(1, y, x)), plane(h, w, |y, x| f(2, y, x)))
            .expect("planes share a size")
    };
    match kind {
        SyntheticKind::Gradient => {
            let base = color(rng);
            let slope: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
            rgb(&|c, y, x| base[c] + slope[c][0] * (y as f64 - h as f64 / 2.0) + slope[c][1] * (x as f64 - w as f64 / 2.0))
        }
        SyntheticKind::Checkerboard => {
            let a = color(rng);
            let b = related(a, rng);
            let cell = rng.random_range(2..9usize);
            rgb(&|c, y, x| if (y / cell + x / cell) % 2 == 0 { a[c] } else { b[c] })
        }
        SyntheticKind::Texture => {
            let luma = waves(rng, 5);
            let chroma = waves(rng, 2);
            let base = color(rng);
            let tint: Vec<f64> = (0..3).map(|_| rng.random_range(-25.0..25.0)).collect();
            let amp = rng.random_range(30.0..70.0);
            rgb(&|c, y, x| {
                let (yf, xf) = (y as f64, x as f64);
                base[c] + amp * luma(yf, xf) + tint[c] * chroma(yf * 0.2, xf * 0.2)
            })
        }
        SyntheticKind::Shapes => {
            let bg = color(rng);
            let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
                .map(|_| {
                    let r = rng.random_range(2.0..(h.min(w) as f64 / 2.0).max(3.0));
                    (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64), r, related(bg, rng))
                })
                .collect();
            rgb(&|c, y, x| {
                let (yf, xf) = (y as f64, x as f64);
                discs
                    .iter()
                    .rev()
                    .find(|(cy, cx, r, _)| (yf - cy).powi(2) + (xf - cx).powi(2) <= r * r)
                    .map_or(bg[c], |d| d.3[c])
            })
        }
    }
}

/// `n` synthetic images cycling through every [`SyntheticKind`].
pub fn synthetic_set(n: usize, h: usize, w: usize, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synthetic_image(SyntheticKind::ALL[i % 4], h, w, &mut rng)).collect()
}

/// Hash of the model bytes, for fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Everything that determines a report's numbers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub version: String,
    pub model_hash: u64,
    pub layout: BayerLayout,
    pub crop: usize,
    pub seed: Option<u64>,
    pub flags: String,
}

impl Fingerprint {
    pub fn lines(&self) -> Vec<(String, String)> {
        vec![
            ("version".into(), self.version.clone()),
            ("model".into(), format!("{:016x}", self.model_hash)),
            ("layout".into(), self.layout.to_string()),
            ("crop".into(), self.crop.to_string()),
            ("seed".into(), self.seed.map_or("-".into(), |s| s.to_string())),
            ("flags".into(), if self.flags.is_empty() { "-".into() } else { self.flags.clone() }),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<(String, PsnrReport)>,
    pub mean: PsnrReport,
    /// Conv weights per network (g, gr, gb), recomputed from the specs.
    pub params: [u64; 3],
    pub flops_size: (usize, usize),
    pub flops: [u64; 3],
    pub timings: NetTimings,
    pub wall: Duration,
    pub skipped: Vec<(String, String)>,
    pub fingerprint: Fingerprint,
}

fn fmt_db(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

impl BenchmarkReport {
    /// Machine-readable form. Contains no timings, so equal inputs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fingerprint.lines() {
            writeln!(s, "# {k}={v}").unwrap();
        }
        writeln!(s, "# params={},{},{}", self.params[0], self.params[1], self.params[2]).unwrap();
        s.push_str("image,r,g,b,cpsnr\n");
        let mut row = |name: &str, p: &PsnrReport| {
            writeln!(s, "{name},{},{},{},{}", fmt_db(p.r), fmt_db(p.g), fmt_db(p.b), fmt_db(p.cpsnr)).unwrap()
        };
        for (name, p) in &self.rows {
            row(name, p);
        }
        row("mean", &self.mean);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}", "image", "R", "G", "B", "CPSNR").unwrap();
        let mut row = |name: &str, p: &PsnrReport| {
            writeln!(
                s,
                "{name:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
                fmt_db(p.r),
                fmt_db(p.g),
                fmt_db(p.b),
                fmt_db(p.cpsnr)
            )
            .unwrap()
        };
        for (name, p) in &self.rows {
            row(name, p);
        }
        row("mean", &self.mean);
        let total: u64 = self.params.iter().sum();
        writeln!(s, "\nparams  g {}  gr {}  gb {}  total {total}", self.params[0], self.params[1], self.params[2]).unwrap();
        let (h, w) = self.flops_size;
        writeln!(s, "flops at {h}x{w}: {:.4e}", self.flops.iter().sum::<u64>() as f64).unwrap();
        let t = &self.timings;
        writeln!(
            s,
            "time    wall {:.3}s  g {:.3}s  gr {:.3}s  gb {:.3}s",
            self.wall.as_secs_f64(),
            t.g.as_secs_f64(),
            t.gr.as_secs_f64(),
            t.gb.as_secs_f64()
        )
        .unwrap();
        for (name, why) in &self.skipped {
            writeln!(s, "skipped {name}: {why}").unwrap();
        }
        s
    }
}

pub struct EvalOptions {
    pub layout: BayerLayout,
    /// Border pixels excluded from PSNR on every side.
    pub crop: usize,
    pub threads: usize,
    pub seed: Option<u64>,
    pub flags: String,
}

/// Mosaic each ground truth, demosaic it and score the result.
pub fn evaluate(names: &[String], truth: &[RgbImage], model: &DemosaicModel, opts: &EvalOptions) -> Result<BenchmarkReport> {
    if truth.is_empty() {
        return Err(Error::EmptyDataset("no images to evaluate".into()));
    }
    if names.len() != truth.len() {
        return Err(Error::Shape(format!("{} names for {} images", names.len(), truth.len())));
    }
    let mosaics: Vec<_> = truth.iter().map(|t| mosaic(t, opts.layout)).collect();
    let out = demosaic_batch(&mosaics, model, opts.threads)?;
    let mut rows = Vec::with_capacity(truth.len());
    let mut skipped = Vec::new();
    for ((name, t), res) in names.iter().zip(truth).zip(out.results) {
        match res.and_then(|est| psnr_report(t, &est, opts.crop)) {
            Ok(p) => rows.push((name.clone(), p)),
            Err(e) => {
                log::warn!("{name}: {e}");
                skipped.push((name.clone(), e.to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset("every image failed to evaluate".into()));
    }
    let reports: Vec<PsnrReport> = rows.iter().map(|(_, p)| *p).collect();
    let flops_size = truth[0].dims();
    Ok(BenchmarkReport {
        mean: dataset_mean(&reports),
        rows,
        params: model.param_counts(),
        flops: Target::ALL.map(|t| count_flops(&model.net(t).spec, flops_size.0, flops_size.1)),
        flops_size,
        timings: out.timings,
        wall: out.wall,
        skipped,
        fingerprint: Fingerprint {
            version: env!("CARGO_PKG_VERSION").into(),
            model_hash: fnv1a64(&model.to_bytes()?),
            layout: opts.layout,
            crop: opts.crop,
            seed: opts.seed,
            flags: opts.flags.clone(),
        },
    })
}

/// Parameter and FLOP table for a model at an `h`x`w` input.
pub fn model_report(model: &DemosaicModel, h: usize, w: usize) -> String {
    let mut s = String::new();
    writeln!(s, "{:<6} {:>6} {:>12} {:>18}", "net", "depth", "params", format!("flops@{h}x{w}")).unwrap();
    let (mut tp, mut tf) = (0u64, 0u64);
    for t in Target::ALL {
        let spec = &model.net(t).spec;
        let p = crate::nn::count_params(spec);
        let f = count_flops(spec, h, w);
        tp += p;
        tf += f;
        writeln!(s, "{:<6} {:>6} {:>12} {:>18}", t.name(), spec.depth(), p, f).unwrap();
    }
    writeln!(s, "{:<6} {:>6} {:>12} {:>18}", "total", "", tp, tf).unwrap();
    writeln!(s, "total flops {:.3e}", tf as f64).unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_integer() {
        let a = synthetic_set(8, 12, 10, 3);
        assert_eq!(a, synthetic_set(8, 12, 10, 3));
        assert_ne!(a, synthetic_set(8, 12, 10, 4));
        for img in &a {
            for p in [&img.r, &img.g, &img.b] {
                assert!(p.data().iter().all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)));
            }
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn default_report_counts() {
        let text = model_report(&DemosaicModel::zeros_default(), 100, 100);
        for n in ["277632", "314208", "332640", "924480", "9244800000"] {
            assert!(text.contains(n), "{n} missing from\n{text}");
        }
    }

    #[test]
    fn evaluate_refuses_empty() {
        let opts = EvalOptions { layout: BayerLayout::Rggb, crop: 0, threads: 1, seed: None, flags: String::new() };
        assert!(evaluate(&[], &[], &DemosaicModel::zeros_default(), &opts).is_err());
    }
}
