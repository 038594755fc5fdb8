use serde::{Deserialize, Serialize};

/// How per-tile gradients are merged into per-Gaussian totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    /// Fixed tile order; bit-identical for any thread count.
    #[default]
    Deterministic,
    /// Per-thread buffers reduced in whatever order the scheduler picks.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Added to both diagonal entries of every projected covariance (px²).
    pub dilation: f64,
    /// Splats with `α` below this value are skipped at a pixel.
    pub alpha_cutoff: f64,
    pub alpha_max: f64,
    /// Compositing stops once transmittance drops below this value.
    pub stop_threshold: f64,
    pub background: [f64; 3],
    pub accumulation: Accumulation,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            dilation: 0.3,
            alpha_cutoff: 1.0 / 255.0,
            alpha_max: 0.99,
            stop_threshold: 1e-4,
            background: [0.0; 3],
            accumulation: Accumulation::Deterministic,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        use crate::error::Error;
        if self.tile_size == 0 {
            return Err(Error::Config("tile size must be at least 1".into()));
        }
        if !(self.dilation >= 0.0) {
            return Err(Error::Config("dilation must be non-negative".into()));
        }
        if !(self.alpha_cutoff >= 0.0 && self.alpha_cutoff < self.alpha_max && self.alpha_max < 1.0) {
            return Err(Error::Config("require 0 <= alpha_cutoff < alpha_max < 1".into()));
        }
        if !(self.stop_threshold >= 0.0) {
            return Err(Error::Config("stop threshold must be non-negative".into()));
        }
        Ok(())
    }
}
