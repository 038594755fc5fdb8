//! Point-cloud initialization from depth maps, plus the random baseline.

mod knn;
mod ply;

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::math::Vec3;
use crate::model::{GaussianCloud, SH_C0};
use crate::real::{logit, Real};

pub use knn::mean_knn_distance;
pub use ply::{read_ply, write_ply};

/// Colored points in world coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud<F> {
    pub positions: Vec<Vec3<F>>,
    pub colors: Vec<[F; 3]>,
}

impl<F: Real> PointCloud<F> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn push(&mut self, p: Vec3<F>, c: [F; 3]) {
        self.positions.push(p);
        self.colors.push(c);
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn from_points<F: Real>(points: &[Vec3<F>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Self { min: first.map(|v| v.as_f64()), max: first.map(|v| v.as_f64()) };
        for p in points {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a].as_f64());
                b.max[a] = b.max[a].max(p[a].as_f64());
            }
        }
        Some(b)
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Grows every side by `fraction` of the largest extent.
    pub fn expanded(&self, fraction: f64) -> Self {
        let pad = self.extent().iter().cloned().fold(0.0, f64::max) * fraction;
        Self { min: self.min.map(|v| v - pad), max: self.max.map(|v| v + pad) }
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub keep_fraction: f64,
    pub initial_opacity: f64,
    /// Scale used when a cloud has too few points for a 3-NN estimate.
    pub fallback_scale: f64,
    /// Lower clamp on the 3-NN scale, so duplicated points stay finite.
    pub min_scale: f64,
    pub sh_degree: usize,
    pub seed: u64,
    /// Random box used when no frame yields points. Off unless set.
    pub random_fallback: Option<RandomFallback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFallback {
    pub count: usize,
    pub bounds: Aabb,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            keep_fraction: 0.001,
            initial_opacity: 0.1,
            fallback_scale: 0.01,
            min_scale: 1e-7,
            sh_degree: 3,
            seed: 0,
            random_fallback: None,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep_fraction {} outside (0, 1]", self.keep_fraction)));
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return Err(Error::Config(format!("initial_opacity {} outside (0, 1)", self.initial_opacity)));
        }
        if !(self.fallback_scale > 0.0 && self.min_scale > 0.0) {
            return Err(Error::Config("scales must be positive".into()));
        }
        if self.sh_degree > 3 {
            return Err(Error::Config(format!("SH degree {} outside 0..=3", self.sh_degree)));
        }
        Ok(())
    }
}

/// Back-projects every kept pixel with positive depth into world space.
pub fn reproject_frame<F: Real>(frame: &FrameRecord<F>) -> Result<PointCloud<F>> {
    frame.validate()?;
    let mut cloud = PointCloud::default();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            let d = frame.depth.at(x, y, 0);
            if !frame.mask.get(x, y) || !(d > F::zero()) || !d.is_finite() {
                continue;
            }
            let p = frame.camera.unproject(F::lit(x as f64), F::lit(y as f64), d);
            let c = [frame.image.at(x, y, 0), frame.image.at(x, y, 1), frame.image.at(x, y, 2)];
            cloud.push(p, c);
        }
    }
    if cloud.is_empty() {
        return Err(Error::EmptyFrame { frame: frame.index });
    }
    Ok(cloud)
}

/// Reprojects frames in parallel. Frames without usable pixels are logged and
/// reported by index instead of failing the whole batch.
pub fn reproject_frames<F: Real>(frames: &[FrameRecord<F>]) -> Result<(Vec<PointCloud<F>>, Vec<usize>)> {
    let results: Vec<_> = frames.par_iter().map(reproject_frame).collect();
    let mut clouds = Vec::with_capacity(frames.len());
    let mut skipped = vec![];
    for r in results {
        match r {
            Ok(c) => clouds.push(c),
            Err(Error::EmptyFrame { frame }) => {
                warn!("frame {frame} has no kept pixels with positive depth; skipped");
                skipped.push(frame);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((clouds, skipped))
}

/// `ceil(fraction · total)` without float fuzz turning an exact product into
/// one extra point.
pub fn keep_count(total: usize, fraction: f64) -> usize {
    let x = fraction * total as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (k as usize).clamp(1, total.max(1))
}

/// Concatenates clouds and keeps a seeded uniform subset of
/// `ceil(keep_fraction · M)` points, in their original order.
pub fn combine_holistic<F: Real>(clouds: &[PointCloud<F>], keep_fraction: f64, seed: u64) -> Result<PointCloud<F>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction {keep_fraction} outside (0, 1]")));
    }
    let total: usize = clouds.iter().map(PointCloud::len).sum();
    if total == 0 {
        return Err(Error::Init("no points to combine".into()));
    }
    let mut all = PointCloud { positions: Vec::with_capacity(total), colors: Vec::with_capacity(total) };
    for c in clouds {
        all.positions.extend_from_slice(&c.positions);
        all.colors.extend_from_slice(&c.colors);
    }
    let k = keep_count(total, keep_fraction);
    if k == total {
        return Ok(all);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, total, k).into_vec();
    idx.sort_unstable();
    Ok(PointCloud {
        positions: idx.iter().map(|&i| all.positions[i]).collect(),
        colors: idx.iter().map(|&i| all.colors[i]).collect(),
    })
}

/// Builds isotropic Gaussians at the given points.
pub fn instantiate_gaussians<F: Real>(points: &PointCloud<F>, config: &InitConfig) -> Result<GaussianCloud<F>> {
    config.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::Init("cannot instantiate Gaussians from an empty cloud".into()));
    }
    if points.colors.len() != n {
        return Err(Error::Shape(format!("{} positions but {} colors", n, points.colors.len())));
    }
    if points.positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Init("point cloud has non-finite coordinates".into()));
    }
    let scales: Vec<F> = if n < 4 {
        vec![F::lit(config.fallback_scale); n]
    } else {
        mean_knn_distance(&points.positions, 3)
    };
    let mut cloud = GaussianCloud::new(n, config.sh_degree);
    let opacity = logit(F::lit(config.initial_opacity));
    let c0 = F::lit(SH_C0);
    for i in 0..n {
        cloud.positions[i] = points.positions[i];
        let s = scales[i].max(F::lit(config.min_scale)).ln();
        cloud.log_scales[i] = [s; 3];
        cloud.opacity_logits[i] = opacity;
        let sh = cloud.sh_mut(i);
        for ch in 0..3 {
            sh[ch] = (points.colors[i][ch] - F::half()) / c0;
        }
    }
    Ok(cloud)
}

/// Uniform random gray Gaussians inside `bounds`.
pub fn random_init<F: Real>(count: usize, bounds: &Aabb, config: &InitConfig, seed: u64) -> Result<GaussianCloud<F>> {
    if count == 0 {
        return Err(Error::Init("random initialization needs at least one Gaussian".into()));
    }
    let ext = bounds.extent();
    if !(ext.iter().all(|e| *e > 0.0 && e.is_finite())) {
        return Err(Error::Init(format!("degenerate bounding box {bounds:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..count)
        .map(|_| std::array::from_fn(|a| F::lit(bounds.min[a] + rng.gen::<f64>() * ext[a])))
        .collect();
    let gray = F::half();
    let points = PointCloud { positions, colors: vec![[gray; 3]; count] };
    instantiate_gaussians(&points, config)
}

/// Reprojection, combination and instantiation over a set of frames.
pub fn holistic_init<F: Real>(frames: &[FrameRecord<F>], config: &InitConfig) -> Result<GaussianCloud<F>> {
    config.validate()?;
    let (clouds, _) = reproject_frames(frames)?;
    match combine_holistic(&clouds, config.keep_fraction, config.seed) {
        Ok(points) => instantiate_gaussians(&points, config),
        Err(Error::Init(msg)) => match &config.random_fallback {
            Some(fb) => {
                warn!("{msg}; falling back to {} random Gaussians", fb.count);
                random_init(fb.count, &fb.bounds, config, config.seed)
            }
            None => Err(Error::Init(msg)),
        },
        Err(e) => Err(e),
    }
}
