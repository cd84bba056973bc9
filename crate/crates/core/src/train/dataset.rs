//! Training pairs: augmented images are cut into patches, each patch is
//! mosaicked and HQLI-initialized, and the label is the residual the target
//! network has to predict.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hqli::hqli;
use crate::image::{extract_patches, mosaic, BayerLayout, PlaneImage, RgbImage};
use crate::nn::{Target, Tensor};
use crate::pipeline::network_input;

use super::config::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub input: Tensor,
    pub label: PlaneImage,
}

/// Shifted copies of `img`: dropping the first row or column changes the
/// Bayer phase the content is sampled at. The difference targets also get
/// the copy with both removed.
pub fn augment(img: &RgbImage, target: Target) -> Result<Vec<RgbImage>> {
    let (h, w) = img.dims();
    let mut out = vec![img.clone(), img.crop(1, 0, h - 1, w)?, img.crop(0, 1, h, w - 1)?];
    if target != Target::G {
        out.push(img.crop(1, 1, h - 1, w - 1)?);
    }
    Ok(out)
}

/// Build the input/label pair for one ground-truth patch.
pub fn make_example(patch: &RgbImage, target: Target, layout: BayerLayout) -> Result<TrainingExample> {
    let init = hqli(&mosaic(patch, layout))?;
    let input = network_input(&init, target)?;
    let label = match target {
        Target::G => patch.g.zip_with(&init.g, |g, g0| g - g0)?,
        Target::Gr => {
            let truth = patch.g.zip_with(&patch.r, |g, r| g - r)?;
            let start = init.g.zip_with(&init.r, |g, r| g - r)?;
            truth.zip_with(&start, |t, s| t - s)?
        }
        Target::Gb => {
            let truth = patch.g.zip_with(&patch.b, |g, b| g - b)?;
            let start = init.g.zip_with(&init.b, |g, b| g - b)?;
            truth.zip_with(&start, |t, s| t - s)?
        }
    };
    Ok(TrainingExample { input, label })
}

fn patches_of(img: &RgbImage, target: Target, size: usize) -> Result<Vec<RgbImage>> {
    let mut out = Vec::new();
    for a in augment(img, target)? {
        out.extend(extract_patches(&a, size)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<TrainingExample>,
    pub val: Vec<TrainingExample>,
}

/// Shuffle the images, route the patches of the first `train_percent` of
/// them to training, drop the next `discard` patches and validate on the
/// rest.
pub fn build_dataset(images: &[RgbImage], target: Target, layout: BayerLayout, cfg: &TrainConfig) -> Result<Dataset> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("no training images".into()));
    }
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = images.len() * cfg.train_percent / 100;
    let mut ds = Dataset::default();
    let mut skipped = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        for p in patches_of(&images[i], target, cfg.patch_size)? {
            if rank < n_train {
                ds.train.push(make_example(&p, target, layout)?);
            } else if skipped < cfg.discard {
                skipped += 1;
            } else {
                ds.val.push(make_example(&p, target, layout)?);
            }
        }
    }
    if ds.train.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no training patches from {} of {} images; add images or raise train_percent",
            n_train,
            images.len()
        )));
    }
    if ds.val.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "validation set is empty after discarding {skipped} patches; lower `discard`"
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize, seed: usize) -> RgbImage {
        let p = |k: usize| {
            PlaneImage::from_fn(h, w, |y, x| ((y * 31 + x * 17 + k * 59 + seed * 7) * (x + 3) % 256) as f64).unwrap()
        };
        RgbImage::new(p(0), p(1), p(2)).unwrap()
    }

    #[test]
    fn augment_shapes() {
        let img = textured(10, 10, 0);
        let dims: Vec<_> = augment(&img, Target::G).unwrap().iter().map(|i| i.dims()).collect();
        assert_eq!(dims, vec![(10, 10), (9, 10), (10, 9)]);
        let four = augment(&img, Target::Gr).unwrap();
        assert_eq!(four.len(), 4);
        assert_eq!(four[3].dims(), (9, 9));
        let other_way = img.crop(0, 1, 10, 9).unwrap().crop(1, 0, 9, 9).unwrap();
        assert_eq!(four[3], other_way);
    }

    #[test]
    fn labels_reconstruct_truth() {
        let patch = textured(8, 8, 3);
        for target in Target::ALL {
            let ex = make_example(&patch, target, BayerLayout::Gbrg).unwrap();
            // g0 is channel 1 of the green input, the start difference is channel 0 otherwise.
            let start = ex.input.channel(if target == Target::G { 1 } else { 0 }).unwrap();
            let rebuilt = ex.label.zip_with(&start, |l, s| l + s).unwrap();
            let want = match target {
                Target::G => patch.g.clone(),
                Target::Gr => patch.g.zip_with(&patch.r, |g, r| g - r).unwrap(),
                Target::Gb => patch.g.zip_with(&patch.b, |g, b| g - b).unwrap(),
            };
            assert_eq!(rebuilt, want, "{target}");
        }
    }

    #[test]
    fn empty_validation_is_an_error() {
        let imgs: Vec<_> = (0..4).map(|s| textured(10, 10, s)).collect();
        let mut cfg = TrainConfig { patch_size: 5, train_percent: 75, ..TrainConfig::default() };
        assert!(matches!(build_dataset(&imgs, Target::G, BayerLayout::Rggb, &cfg), Err(Error::EmptyDataset(_))));
        cfg.discard = 0;
        assert!(build_dataset(&imgs, Target::G, BayerLayout::Rggb, &cfg).is_ok());
    }
}
