//! Dense row-major rasters.

use crate::error::{Error, Result};
use crate::real::Real;

/// An `height × width × channels` raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<F> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<F>,
}

impl<F: Real> Image<F> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, F::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: F) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} raster needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> F {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, c: usize) -> &mut F {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, idx: usize) -> &[F] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn same_shape<G>(&self, other: &Image<G>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn cast<G: Real>(&self) -> Image<G> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| G::lit(v.as_f64())).collect(),
        }
    }
}

/// Binary keep-mask: `true` marks tissue pixels, `false` tool pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn all(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Clears the half-open rectangle `[x0, x1) × [y0, y1)`.
    pub fn clear_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0.min(self.height)..y1.min(self.height) {
            for x in x0.min(self.width)..x1.min(self.width) {
                self.data[y * self.width + x] = false;
            }
        }
    }

    pub fn matches<F>(&self, img: &Image<F>) -> bool {
        self.width == img.width && self.height == img.height
    }
}
