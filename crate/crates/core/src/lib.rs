//! Channel-by-channel Bayer demosaicking.
//!
//! A CFA image is first interpolated with the Malvar-He-Cutler linear
//! filters. Three small residual CNNs then refine the estimate: one predicts
//! the green correction, two predict corrections to the `g - r` and `g - b`
//! colour differences. Everything runs on the CPU in `f64`.
//!
//! ```
//! use bayernet::{demosaic, hqli, mosaic, BayerLayout, DemosaicModel, RgbImage};
//!
//! let truth = RgbImage::filled(8, 8, [40.0, 120.0, 200.0]).unwrap();
//! let cfa = mosaic(&truth, BayerLayout::Rggb);
//! let out = demosaic(&cfa, &DemosaicModel::zeros_default()).unwrap();
//! assert_eq!(out, hqli(&cfa).unwrap());
//! ```

pub mod error;
pub mod hqli;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod search;
pub mod train;

pub use error::{Error, Result};
pub use hqli::{difference_planes, hqli, interpolate, Initializer};
pub use image::{clip, mosaic, pixel_sets, BayerLayout, Channel, MosaicImage, PixelSets, PlaneImage, RgbImage};
pub use metrics::{psnr, psnr_report, PsnrReport};
pub use nn::{count_flops, count_params, NetworkSpec, NetworkWeights, Target, Tensor};
pub use pipeline::{demosaic, demosaic_batch, DemosaicModel, SubNetwork};
pub use search::{depth_bound, progressive_search, skip_variants, SearchBudget, SearchResult};
pub use train::{TrainConfig, TrainingExample};
