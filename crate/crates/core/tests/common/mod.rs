#![allow(dead_code)]

mod checks;

#[allow(unused_imports)]
pub use checks::*;

use dynsplat::image::Image;
use dynsplat::math::quat_normalize;
use dynsplat::model::{Camera, GaussianCloud, Intrinsics};
use dynsplat::raster::RasterConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn camera(width: usize, height: usize) -> Camera<f64> {
    let intr = Intrinsics { fx: 1.2 * width as f64, fy: 1.2 * width as f64, cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0 };
    Camera::identity_pose(intr, width, height, 0.1, 100.0).unwrap()
}

/// Raster settings without any discontinuity: every splat touches every
/// pixel and compositing never stops early.
pub fn smooth_config(tile_size: usize) -> RasterConfig {
    RasterConfig { tile_size, alpha_cutoff: 0.0, stop_threshold: 0.0, ..Default::default() }
}

/// A few Gaussians in front of the camera with view-dependent color that
/// stays well above the clamp at zero.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, sh_degree: usize) -> GaussianCloud<f64> {
    let mut cloud = GaussianCloud::new(n, sh_degree);
    for i in 0..n {
        let z = rng.gen_range(2.0..5.0);
        cloud.positions[i] = [rng.gen_range(-0.3..0.3) * z, rng.gen_range(-0.3..0.3) * z, z];
        cloud.rotations[i] = quat_normalize(&std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        cloud.log_scales[i] = std::array::from_fn(|_| rng.gen_range(-2.5f64..-1.0));
        cloud.opacity_logits[i] = rng.gen_range(-2.0..2.0);
        let sh = cloud.sh_mut(i);
        for (k, c) in sh.iter_mut().enumerate() {
            *c = if k < 3 { rng.gen_range(0.0..1.0) } else { rng.gen_range(-0.1..0.1) };
        }
    }
    cloud
}

pub fn random_image(rng: &mut ChaCha8Rng, width: usize, height: usize, channels: usize) -> Image<f64> {
    let data = (0..width * height * channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Image::from_vec(width, height, channels, data).unwrap()
}

pub fn dot(a: &Image<f64>, b: &Image<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Largest relative error between analytic and central-difference
/// gradients over entries where either exceeds `floor`.
pub struct GradCheck {
    pub worst: f64,
    pub checked: usize,
    pub label: String,
}

impl GradCheck {
    pub fn new(label: impl Into<String>) -> Self {
        Self { worst: 0.0, checked: 0, label: label.into() }
    }

    pub fn compare(&mut self, analytic: f64, numeric: f64, floor: f64, what: &str) {
        let scale = analytic.abs().max(numeric.abs());
        if scale <= floor {
            return;
        }
        let rel = (analytic - numeric).abs() / scale;
        if rel > self.worst {
            self.worst = rel;
            self.label = format!("{what}: analytic {analytic:e} numeric {numeric:e}");
        }
        self.checked += 1;
    }

    pub fn merge(&mut self, other: GradCheck) {
        if other.worst > self.worst {
            self.worst = other.worst;
            self.label = other.label;
        }
        self.checked += other.checked;
    }
}

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_FLOOR: f64 = 1e-6;

/// Fourth-order central difference of `f` with respect to the entry `get`
/// selects.
pub fn central<T>(state: &mut T, get: impl Fn(&mut T) -> &mut f64, f: impl Fn(&T) -> f64) -> f64 {
    let x0 = *get(state);
    let mut at = |dx: f64| {
        *get(state) = x0 + dx;
        f(state)
    };
    let h = FD_STEP;
    let d = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
    *get(state) = x0;
    d
}
