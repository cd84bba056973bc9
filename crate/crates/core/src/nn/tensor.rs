use crate::error::{Error, Result};
use crate::image::PlaneImage;

/// Feature volume stored height-major, channels innermost (HWC).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "tensor {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Interleave equally sized planes as channels.
    pub fn from_planes(planes: &[&PlaneImage]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| Error::Invalid("no planes".into()))?;
        let (h, w) = first.dims();
        if planes.iter().any(|p| p.dims() != (h, w)) {
            return Err(Error::Shape("planes differ in size".into()));
        }
        let c = planes.len();
        let mut data = vec![0.0; h * w * c];
        for (k, p) in planes.iter().enumerate() {
            for (i, &v) in p.data().iter().enumerate() {
                data[i * c + k] = v;
            }
        }
        Tensor::new(h, w, c, data)
    }

    pub fn channel(&self, c: usize) -> Result<PlaneImage> {
        if c >= self.channels {
            return Err(Error::Shape(format!("channel {c} of {}", self.channels)));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        PlaneImage::new(self.height, self.width, data)
    }

    /// Channel-axis concatenation, in argument order.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        if parts.len() == 1 {
            return Ok((*first).clone());
        }
        let (h, w) = (first.height, first.width);
        if parts.iter().any(|t| t.height != h || t.width != w) {
            return Err(Error::Shape("concatenated tensors differ in size".into()));
        }
        let c: usize = parts.iter().map(|t| t.channels).sum();
        let mut data = Vec::with_capacity(h * w * c);
        for p in 0..h * w {
            for t in parts {
                data.extend_from_slice(&t.data[p * t.channels..(p + 1) * t.channels]);
            }
        }
        Tensor::new(h, w, c, data)
    }

    /// Undo [`Tensor::concat`]: split into consecutive channel groups.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        if sizes.iter().sum::<usize>() != self.channels {
            return Err(Error::Shape(format!("split {sizes:?} of {} channels", self.channels)));
        }
        let mut out: Vec<Tensor> =
            sizes.iter().map(|&c| Tensor::zeros(self.height, self.width, c)).collect();
        for p in 0..self.pixels() {
            let mut off = p * self.channels;
            for (t, &c) in out.iter_mut().zip(sizes) {
                t.data[p * c..(p + 1) * c].copy_from_slice(&self.data[off..off + c]);
                off += c;
            }
        }
        Ok(out)
    }
}
