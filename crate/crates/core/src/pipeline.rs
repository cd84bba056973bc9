//! End-to-end demosaicking: HQLI initialization, three residual networks,
//! reassembly, sample restoration and clipping.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hqli::{difference_planes, hqli};
use crate::image::{clip, pixel_sets, MosaicImage, PlaneImage, RgbImage};
use crate::nn::{count_params, format, forward, NetworkSpec, NetworkWeights, Target, Tensor};

/// Stack the initialization planes a target's network reads.
///
/// `g` sees `[r0, g0, b0]`; `gr` sees `[g0 - r0, g0]`; `gb` sees `[g0 - b0, g0]`.
pub fn network_input(init: &RgbImage, target: Target) -> Result<Tensor> {
    match target {
        Target::G => Tensor::from_planes(&[&init.r, &init.g, &init.b]),
        Target::Gr => {
            let d = init.g.zip_with(&init.r, |g, r| g - r)?;
            Tensor::from_planes(&[&d, &init.g])
        }
        Target::Gb => {
            let d = init.g.zip_with(&init.b, |g, b| g - b)?;
            Tensor::from_planes(&[&d, &init.g])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubNetwork {
    pub spec: NetworkSpec,
    pub weights: NetworkWeights,
}

impl SubNetwork {
    pub fn new(spec: NetworkSpec, weights: NetworkWeights) -> Result<Self> {
        spec.validate()?;
        weights.check(&spec)?;
        Ok(Self { spec, weights })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let weights = NetworkWeights::zeros(&spec);
        Self::new(spec, weights)
    }
}

/// The three trained networks that make up a demosaicker.
#[derive(Clone, Debug, PartialEq)]
pub struct DemosaicModel {
    pub g: SubNetwork,
    pub gr: SubNetwork,
    pub gb: SubNetwork,
}

impl DemosaicModel {
    pub fn new(g: SubNetwork, gr: SubNetwork, gb: SubNetwork) -> Result<Self> {
        for (net, want) in [(&g, Target::G), (&gr, Target::Gr), (&gb, Target::Gb)] {
            if net.spec.target != want || net.spec.input_channels != want.input_channels() {
                return Err(Error::Invalid(format!(
                    "slot `{want}` holds a `{}` network with {} input channels",
                    net.spec.target, net.spec.input_channels
                )));
            }
        }
        Ok(Self { g, gr, gb })
    }

    /// Default architectures with all weights zero; demosaics to plain HQLI.
    pub fn zeros_default() -> Self {
        Self::from_specs(Target::ALL.map(NetworkSpec::default_for), NetworkWeights::zeros)
            .expect("default specs are valid")
    }

    /// He-initialized networks for the given specs (ordered g, gr, gb).
    pub fn he_init(specs: [NetworkSpec; 3], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_specs(specs, |s| NetworkWeights::he_init(s, &mut rng))
    }

    pub fn from_specs(specs: [NetworkSpec; 3], mut init: impl FnMut(&NetworkSpec) -> NetworkWeights) -> Result<Self> {
        let [g, gr, gb] = specs.map(|s| {
            let w = init(&s);
            SubNetwork::new(s, w)
        });
        Self::new(g?, gr?, gb?)
    }

    pub fn net(&self, target: Target) -> &SubNetwork {
        match target {
            Target::G => &self.g,
            Target::Gr => &self.gr,
            Target::Gb => &self.gb,
        }
    }

    pub fn net_mut(&mut self, target: Target) -> &mut SubNetwork {
        match target {
            Target::G => &mut self.g,
            Target::Gr => &mut self.gr,
            Target::Gb => &mut self.gb,
        }
    }

    /// Conv weight counts recomputed from the specs, in g, gr, gb order.
    pub fn param_counts(&self) -> [u64; 3] {
        Target::ALL.map(|t| count_params(&self.net(t).spec))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        format::encode(&[
            (&self.g.spec, &self.g.weights),
            (&self.gr.spec, &self.gr.weights),
            (&self.gb.spec, &self.gb.weights),
        ])
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let [(gs, gw), (rs, rw), (bs, bw)] = format::decode(buf)?;
        Self::new(SubNetwork::new(gs, gw)?, SubNetwork::new(rs, rw)?, SubNetwork::new(bs, bw)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&crate::io::read_file(path)?).map_err(crate::io::at_path(path))
    }
}

/// Every plane computed on the way to the output, for inspection and testing.
#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates {
    pub init: RgbImage,
    pub residual_g: PlaneImage,
    pub residual_gr: PlaneImage,
    pub residual_gb: PlaneImage,
    /// `f_g + g0` with green samples restored.
    pub g_hat: PlaneImage,
    /// Estimated `g - r` and `g - b`.
    pub diff_r: PlaneImage,
    pub diff_b: PlaneImage,
    /// Reassembled planes with samples restored, before clipping.
    pub unclipped: RgbImage,
}

/// Wall time spent in each network's forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NetTimings {
    pub g: Duration,
    pub gr: Duration,
    pub gb: Duration,
}

impl std::ops::AddAssign for NetTimings {
    fn add_assign(&mut self, o: Self) {
        self.g += o.g;
        self.gr += o.gr;
        self.gb += o.gb;
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

fn run(m: &MosaicImage, model: &DemosaicModel) -> Result<(RgbImage, Intermediates, NetTimings)> {
    let (h, w) = m.dims();
    let init = hqli(m)?;
    let (d_r0, d_b0) = difference_planes(&init)?;
    let x_g = network_input(&init, Target::G)?;
    let x_gr = Tensor::from_planes(&[&d_r0, &init.g])?;
    let x_gb = Tensor::from_planes(&[&d_b0, &init.g])?;

    let fwd = |net: &SubNetwork, x: &Tensor| timed(|| forward(&net.spec, &net.weights, x));
    let ((f_g, t_g), ((f_gr, t_gr), (f_gb, t_gb))) =
        rayon::join(|| fwd(&model.g, &x_g), || rayon::join(|| fwd(&model.gr, &x_gr), || fwd(&model.gb, &x_gb)));
    let (f_g, f_gr, f_gb) = (f_g?, f_gr?, f_gb?);

    let sets = pixel_sets(h, w, m.layout)?;
    let mut g_hat = f_g.zip_with(&init.g, |f, g0| f + g0)?;
    for &(y, x) in &sets.g {
        g_hat.set(y, x, m.cfa.get(y, x));
    }
    let diff_r = f_gr.zip_with(&d_r0, |f, d| f + d)?;
    let diff_b = f_gb.zip_with(&d_b0, |f, d| f + d)?;
    let mut r = g_hat.zip_with(&diff_r, |g, d| g - d)?;
    let mut b = g_hat.zip_with(&diff_b, |g, d| g - d)?;
    for &(y, x) in &sets.r {
        r.set(y, x, m.cfa.get(y, x));
    }
    for &(y, x) in &sets.b {
        b.set(y, x, m.cfa.get(y, x));
    }
    let unclipped = RgbImage::new(r, g_hat.clone(), b)?;
    let out = RgbImage::new(clip(&unclipped.r), clip(&unclipped.g), clip(&unclipped.b))?;
    let inter = Intermediates {
        init,
        residual_g: f_g,
        residual_gr: f_gr,
        residual_gb: f_gb,
        g_hat,
        diff_r,
        diff_b,
        unclipped,
    };
    Ok((out, inter, NetTimings { g: t_g, gr: t_gr, gb: t_gb }))
}

/// Demosaic one CFA image. Needs at least 5x5 pixels.
pub fn demosaic(m: &MosaicImage, model: &DemosaicModel) -> Result<RgbImage> {
    Ok(run(m, model)?.0)
}

/// Like [`demosaic`], also returning every intermediate plane.
pub fn demosaic_debug(m: &MosaicImage, model: &DemosaicModel) -> Result<(RgbImage, Intermediates)> {
    let (out, inter, _) = run(m, model)?;
    Ok((out, inter))
}

pub fn demosaic_timed(m: &MosaicImage, model: &DemosaicModel) -> Result<(RgbImage, NetTimings)> {
    let (out, _, t) = run(m, model)?;
    Ok((out, t))
}

pub struct BatchOutput {
    /// One entry per input, in input order.
    pub results: Vec<Result<RgbImage>>,
    /// Forward-pass time per network, summed over images.
    pub timings: NetTimings,
    pub wall: Duration,
}

/// Demosaic many images on a pool of `parallelism` threads. A failing image
/// does not stop the rest; outputs do not depend on `parallelism`.
pub fn demosaic_batch(images: &[MosaicImage], model: &DemosaicModel, parallelism: usize) -> Result<BatchOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let t0 = Instant::now();
    let per_image: Vec<Result<(RgbImage, NetTimings)>> =
        pool.install(|| images.par_iter().map(|m| demosaic_timed(m, model)).collect());
    let wall = t0.elapsed();
    let mut timings = NetTimings::default();
    let results = per_image
        .into_iter()
        .map(|r| {
            r.map(|(img, t)| {
                timings += t;
                img
            })
        })
        .collect();
    Ok(BatchOutput { results, timings, wall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{mosaic, BayerLayout};

    fn ramp(h: usize, w: usize) -> RgbImage {
        let p = |k: usize| PlaneImage::from_fn(h, w, |y, x| ((y * 7 + x * 13 + k * 40) % 256) as f64).unwrap();
        RgbImage::new(p(0), p(1), p(2)).unwrap()
    }

    #[test]
    fn zero_model_is_clipped_hqli() {
        let model = DemosaicModel::zeros_default();
        for layout in BayerLayout::ALL {
            let m = mosaic(&ramp(9, 12), layout);
            let out = demosaic(&m, &model).unwrap();
            assert_eq!(out, hqli(&m).unwrap().clip());
        }
    }

    #[test]
    fn constant_image_exact() {
        let model = DemosaicModel::zeros_default();
        let img = RgbImage::filled(7, 8, [12.0, 200.0, 97.0]).unwrap();
        assert_eq!(demosaic(&mosaic(&img, BayerLayout::Grbg), &model).unwrap(), img);
    }

    #[test]
    fn too_small_rejected() {
        let model = DemosaicModel::zeros_default();
        let m = mosaic(&ramp(4, 9), BayerLayout::Rggb);
        assert!(matches!(demosaic(&m, &model), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn slots_checked() {
        let m = DemosaicModel::zeros_default();
        assert!(DemosaicModel::new(m.gr.clone(), m.g.clone(), m.gb.clone()).is_err());
    }

    #[test]
    fn empty_batch() {
        let out = demosaic_batch(&[], &DemosaicModel::zeros_default(), 2).unwrap();
        assert!(out.results.is_empty());
    }
}
