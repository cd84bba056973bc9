//! Fixtures shared by the criterion benchmarks in `benches/`.

use bayernet::nn::NetworkSpec;
use bayernet::report::synthetic_set;
use bayernet::{mosaic, BayerLayout, DemosaicModel, MosaicImage, Target, Tensor};

/// Deterministic tensor with values in `[-1, 1)`.
pub fn tensor(h: usize, w: usize, c: usize) -> Tensor {
    let data = (0..h * w * c).map(|i| ((i * 7919) % 2000) as f64 / 1000.0 - 1.0).collect();
    Tensor::new(h, w, c, data).expect("sizes agree")
}

/// Kernel of `[3, 3, cin, cout]` small weights.
pub fn kernel(cin: usize, cout: usize) -> Vec<f64> {
    (0..9 * cin * cout).map(|i| ((i * 104_729) % 200) as f64 / 1000.0 - 0.1).collect()
}

pub fn cfa(h: usize, w: usize) -> MosaicImage {
    mosaic(&synthetic_set(1, h, w, 1)[0], BayerLayout::Rggb)
}

/// He-initialized default-shaped model at `width` channels and `hidden` hidden layers.
pub fn model(width: usize, hidden: usize) -> DemosaicModel {
    let specs = Target::ALL.map(|t| {
        let dilation = if t == Target::G { 1 } else { 3 };
        NetworkSpec::plain(t, width, hidden + 2, dilation).expect("valid bench spec")
    });
    DemosaicModel::he_init(specs, 0).expect("valid bench model")
}
