//! Dense float images shared by every stage of the pipeline.
//!
//! Pixels are stored row-major, channel-interleaved (`HWC`). Each image carries
//! the value domain it lives in; moving between the `[0, 1]` pixel domain and the
//! `[-1, 1]` sampling domain is always an explicit call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// Values in `[0, 1]`.
    Pixel,
    /// Values nominally in `[-1, 1]`; what the diffusion sampler operates on.
    Sampling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    domain: Domain,
    data: Vec<f64>,
}

/// A noisy or clean image in the sampler's value domain.
pub type LatentImage = Image;

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize, domain: Domain) -> Self {
        Self::filled(width, height, channels, domain, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, domain: Domain, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            domain,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        domain: Domain,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            domain,
            data,
        })
    }

    /// An image of the same shape and domain with every value set to `value`.
    pub fn filled_like(&self, value: f64) -> Self {
        Self::filled(self.width, self.height, self.channels, self.domain, value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape {}x{}x{} does not match {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Re-tags the image without touching the values.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Linear map into the sampling domain (`2x - 1`). Identity if already there.
    pub fn to_sampling(&self) -> Image {
        match self.domain {
            Domain::Sampling => self.clone(),
            Domain::Pixel => Image {
                data: self.data.iter().map(|v| 2.0 * v - 1.0).collect(),
                domain: Domain::Sampling,
                ..*self
            },
        }
    }

    /// Linear map into the pixel domain (`(x + 1) / 2`). Identity if already there.
    pub fn to_pixel(&self) -> Image {
        match self.domain {
            Domain::Pixel => self.clone(),
            Domain::Sampling => Image {
                data: self.data.iter().map(|v| 0.5 * (v + 1.0)).collect(),
                domain: Domain::Pixel,
                ..*self
            },
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Elementwise combination; shapes must match.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(Image {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Values of channel `c`, in pixel order.
    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(c).step_by(self.channels).copied()
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        self.channel(c).sum::<f64>() / self.pixel_count() as f64
    }

    /// Population variance of channel `c` over all pixels.
    pub fn channel_variance(&self, c: usize) -> f64 {
        let mean = self.channel_mean(c);
        self.channel(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.pixel_count() as f64
    }

    /// Composites a premultiplied color image over a constant background.
    pub fn composite_over(&self, alpha: &Image, background: [f64; 3]) -> Result<Image> {
        if alpha.channels != 1 || alpha.width != self.width || alpha.height != self.height {
            return Err(Error::invalid("composite_over: alpha must be a matching 1-channel image"));
        }
        if self.channels != 3 {
            return Err(Error::invalid("composite_over: color must have 3 channels"));
        }
        let mut out = self.clone();
        for (px, a) in out.data.chunks_exact_mut(3).zip(&alpha.data) {
            for (v, bg) in px.iter_mut().zip(background) {
                *v += (1.0 - a) * bg;
            }
        }
        Ok(out)
    }

    /// 2x2 box downsample; odd trailing rows/columns are dropped.
    pub fn downsample2(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = Image::zeros(w, h, self.channels, self.domain);
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    let s = self.get(2 * x, 2 * y, c)
                        + self.get(2 * x + 1, 2 * y, c)
                        + self.get(2 * x, 2 * y + 1, c)
                        + self.get(2 * x + 1, 2 * y + 1, c);
                    out.set(x, y, c, 0.25 * s);
                }
            }
        }
        out
    }
}
