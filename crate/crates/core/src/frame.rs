use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::model::Camera;
use crate::real::Real;

/// One timestep of a sequence: color, depth, tool mask, pose and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<F> {
    pub index: usize,
    /// `H × W × 3`, values in `[0, 1]`.
    pub image: Image<F>,
    /// `H × W`; metric for binocular input, relative for monocular input.
    pub depth: Image<F>,
    pub mask: Mask,
    pub camera: Camera<F>,
    /// Normalized time in `[0, 1]`.
    pub time: F,
}

impl<F: Real> FrameRecord<F> {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn cast<G: Real>(&self) -> FrameRecord<G> {
        FrameRecord {
            index: self.index,
            image: self.image.cast(),
            depth: self.depth.cast(),
            mask: self.mask.clone(),
            camera: self.camera.cast(),
            time: G::lit(self.time.as_f64()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Error::Frame { frame: self.index, detail };
        if self.image.channels != 3 {
            return Err(bad(format!("image has {} channels, expected 3", self.image.channels)));
        }
        if self.depth.channels != 1
            || self.depth.width != self.image.width
            || self.depth.height != self.image.height
        {
            return Err(bad(format!(
                "depth raster is {}x{}, image is {}x{}",
                self.depth.width, self.depth.height, self.image.width, self.image.height
            )));
        }
        if !self.mask.matches(&self.image) {
            return Err(bad(format!(
                "mask raster is {}x{}, image is {}x{}",
                self.mask.width, self.mask.height, self.image.width, self.image.height
            )));
        }
        if self.camera.width != self.image.width || self.camera.height != self.image.height {
            return Err(bad("camera size differs from the image size".into()));
        }
        if !(self.time >= F::zero() && self.time <= F::one()) {
            return Err(bad(format!("time {} outside [0, 1]", self.time)));
        }
        if self.depth.data.iter().zip(&self.mask.data).any(|(d, &m)| m && *d < F::zero()) {
            return Err(bad("negative depth inside the mask".into()));
        }
        Ok(())
    }
}
