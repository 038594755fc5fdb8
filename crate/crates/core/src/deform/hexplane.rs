//! Multi-resolution HexPlane: six 2D feature planes over the axis pairs of
//! `(x, y, z, t)`, sampled bilinearly and combined by products.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::Aabb;
use crate::math::Vec3;
use crate::real::Real;

/// Axis pairs in storage order: XY, XZ, YZ, XT, YT, ZT (axis 3 is time).
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
/// Planes multiplied together: XY·ZT, XZ·YT, YZ·XT.
pub const PLANE_PAIRS: [(usize, usize); 3] = [(0, 5), (1, 4), (2, 3)];

const SCATTER_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HexPlaneConfig {
    pub levels: usize,
    /// Nodes per spatial axis at the coarsest level; doubled per level.
    pub spatial_res: usize,
    /// Nodes along time, shared by every level.
    pub time_res: usize,
    pub channels: usize,
    /// Spatial planes start uniform in this range; time planes start at 1.
    pub init_range: [f64; 2],
}

impl Default for HexPlaneConfig {
    fn default() -> Self {
        Self { levels: 2, spatial_res: 32, time_res: 16, channels: 16, init_range: [0.1, 0.5] }
    }
}

impl HexPlaneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.channels == 0 {
            return Err(Error::Config("HexPlane needs at least one level and one channel".into()));
        }
        if self.spatial_res < 2 || self.time_res < 2 {
            return Err(Error::Config("HexPlane resolutions must be at least 2".into()));
        }
        Ok(())
    }

    pub fn level_spatial_res(&self, level: usize) -> usize {
        self.spatial_res << level
    }

    pub fn feature_dim(&self) -> usize {
        self.levels * self.channels
    }

    /// `Σ_levels (6 planes · nodes · channels + 3 · channels)`.
    pub fn param_count(&self) -> usize {
        (0..self.levels)
            .map(|l| {
                let s = self.level_spatial_res(l);
                (3 * s * s + 3 * s * self.time_res) * self.channels + 3 * self.channels
            })
            .sum()
    }

    /// Parameters held by the XY, XZ and YZ planes alone.
    pub fn spatial_param_count(&self) -> usize {
        (0..self.levels).map(|l| 3 * self.level_spatial_res(l).pow(2) * self.channels).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexLevel<F> {
    pub spatial_res: usize,
    pub time_res: usize,
    pub channels: usize,
    /// Node features, `[b][a][channel]` for a plane over axes `(a, b)`.
    pub planes: [Vec<F>; 6],
    pub mix: [Vec<F>; 3],
}

impl<F: Real> HexLevel<F> {
    #[inline]
    pub fn axis_res(&self, axis: usize) -> usize {
        if axis == 3 {
            self.time_res
        } else {
            self.spatial_res
        }
    }

    pub fn plane_dims(&self, plane: usize) -> (usize, usize) {
        let (a, b) = PLANE_AXES[plane];
        (self.axis_res(a), self.axis_res(b))
    }

    fn zeros_like(&self) -> Self {
        Self {
            spatial_res: self.spatial_res,
            time_res: self.time_res,
            channels: self.channels,
            planes: self.planes.each_ref().map(|p| vec![F::zero(); p.len()]),
            mix: self.mix.each_ref().map(|m| vec![F::zero(); m.len()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexPlaneField<F> {
    pub bounds: Aabb,
    pub levels: Vec<HexLevel<F>>,
}

/// Per-query values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HexCache<F> {
    /// Normalized, clamped `(x, y, z, t)` per query.
    pub coords: Vec<[F; 4]>,
    pub clamped: Vec<[bool; 4]>,
    /// Sampled plane features, `[query][level][plane][channel]`.
    pub samples: Vec<F>,
    /// Queries whose time fell outside `[0, 1]`.
    pub time_clamps: usize,
}

#[inline]
fn cell<F: Real>(u: F, res: usize) -> (usize, F) {
    let x = u * F::lit((res - 1) as f64);
    let i = (x.floor().as_f64().max(0.0) as usize).min(res - 2);
    (i, x - F::lit(i as f64))
}

impl<F: Real> HexPlaneField<F> {
    pub fn new(config: &HexPlaneConfig, bounds: Aabb, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if !bounds.extent().iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("HexPlane bounds {bounds:?} have zero extent")));
        }
        let [lo, hi] = config.init_range;
        let levels = (0..config.levels)
            .map(|l| {
                let s = config.level_spatial_res(l);
                let c = config.channels;
                let mut planes: [Vec<F>; 6] = Default::default();
                for (p, &(_, b)) in PLANE_AXES.iter().enumerate() {
                    planes[p] = if b == 3 {
                        vec![F::one(); s * config.time_res * c]
                    } else {
                        (0..s * s * c).map(|_| F::lit(rng.gen_range(lo..=hi))).collect()
                    };
                }
                HexLevel { spatial_res: s, time_res: config.time_res, channels: c, planes, mix: std::array::from_fn(|_| vec![F::one(); c]) }
            })
            .collect();
        Ok(Self { bounds, levels })
    }

    pub fn zeros_like(&self) -> Self {
        Self { bounds: self.bounds, levels: self.levels.iter().map(HexLevel::zeros_like).collect() }
    }

    pub fn feature_dim(&self) -> usize {
        self.levels.iter().map(|l| l.channels).sum()
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> Vec<&[F]> {
        let mut out = vec![];
        for l in &self.levels {
            out.extend(l.planes.iter().map(Vec::as_slice));
            out.extend(l.mix.iter().map(Vec::as_slice));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = vec![];
        for l in &mut self.levels {
            out.extend(l.planes.iter_mut().map(Vec::as_mut_slice));
            out.extend(l.mix.iter_mut().map(Vec::as_mut_slice));
        }
        out
    }

    fn normalize(&self, p: &Vec3<F>, t: F) -> ([F; 4], [bool; 4]) {
        let mut u = [F::zero(); 4];
        let mut clamped = [false; 4];
        for a in 0..3 {
            let lo = F::lit(self.bounds.min[a]);
            let ext = F::lit(self.bounds.max[a] - self.bounds.min[a]);
            let v = (p[a] - lo) / ext;
            clamped[a] = !(v >= F::zero() && v <= F::one());
            u[a] = v.max(F::zero()).min(F::one());
        }
        clamped[3] = !(t >= F::zero() && t <= F::one());
        u[3] = t.max(F::zero()).min(F::one());
        (u, clamped)
    }

    fn samples_per_query(&self) -> usize {
        self.levels.iter().map(|l| 6 * l.channels).sum()
    }

    /// Features of one query; `samples` receives the raw plane samples.
    fn query_one(&self, u: &[F; 4], feature: &mut [F], samples: &mut [F]) {
        let mut fo = 0;
        let mut so = 0;
        for level in &self.levels {
            let c = level.channels;
            for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
                let (ra, rb) = (level.axis_res(a), level.axis_res(b));
                let (ia, fa) = cell(u[a], ra);
                let (ib, fb) = cell(u[b], rb);
                let data = &level.planes[p];
                let n00 = (ib * ra + ia) * c;
                let n10 = n00 + c;
                let n01 = n00 + ra * c;
                let n11 = n01 + c;
                let (w00, w10) = ((F::one() - fa) * (F::one() - fb), fa * (F::one() - fb));
                let (w01, w11) = ((F::one() - fa) * fb, fa * fb);
                let out = &mut samples[so + p * c..so + (p + 1) * c];
                for k in 0..c {
                    out[k] = w00 * data[n00 + k] + w10 * data[n10 + k] + w01 * data[n01 + k] + w11 * data[n11 + k];
                }
            }
            let s = &samples[so..so + 6 * c];
            for k in 0..c {
                let mut f = F::zero();
                for (m, &(p, q)) in PLANE_PAIRS.iter().enumerate() {
                    f += level.mix[m][k] * s[p * c + k] * s[q * c + k];
                }
                feature[fo + k] = f;
            }
            fo += c;
            so += 6 * c;
        }
    }

    /// Features for every position at time `t`, one row per query.
    pub fn query_batch(&self, positions: &[Vec3<F>], t: F) -> (Array2<F>, HexCache<F>) {
        let n = positions.len();
        let dim = self.feature_dim();
        let sdim = self.samples_per_query();
        let mut features = vec![F::zero(); n * dim];
        let mut samples = vec![F::zero(); n * sdim];
        let norm: Vec<([F; 4], [bool; 4])> = positions.iter().map(|p| self.normalize(p, t)).collect();
        features
            .par_chunks_mut(dim.max(1))
            .zip(samples.par_chunks_mut(sdim.max(1)))
            .zip(norm.par_iter())
            .with_min_len(64)
            .for_each(|((f, s), (u, _))| self.query_one(u, f, s));
        let time_clamps = if norm.first().is_some_and(|(_, c)| c[3]) { n } else { 0 };
        let features = Array2::from_shape_vec((n, dim), features).expect("feature buffer size");
        let (coords, clamped) = norm.into_iter().unzip();
        (features, HexCache { coords, clamped, samples, time_clamps })
    }

    /// Feature vector at a single world position and time.
    pub fn query_voxel(&self, position: &Vec3<F>, t: F) -> Vec<F> {
        self.query_batch(std::slice::from_ref(position), t).0.into_raw_vec_and_offset().0
    }

    /// Scatters feature gradients onto plane nodes and mixing vectors of
    /// `grad` and returns the gradient for each query position.
    pub fn backward(&self, cache: &HexCache<F>, dfeat: &Array2<F>, grad: &mut HexPlaneField<F>) -> Result<Vec<Vec3<F>>> {
        let n = cache.coords.len();
        let dim = self.feature_dim();
        if dfeat.dim() != (n, dim) || cache.samples.len() != n * self.samples_per_query() {
            return Err(Error::StateMismatch(format!(
                "feature gradient is {:?}, field expects ({n}, {dim})",
                dfeat.dim()
            )));
        }
        if grad.levels.len() != self.levels.len() {
            return Err(Error::StateMismatch("gradient field has a different level count".into()));
        }
        let dfeat = dfeat.as_standard_layout();
        let dflat = dfeat.as_slice().expect("standard layout");
        // Fixed chunking keeps the summation order independent of threads.
        let chunks: Vec<(HexPlaneField<F>, Vec<Vec3<F>>)> = (0..n.div_ceil(SCATTER_CHUNK))
            .into_par_iter()
            .map(|ci| {
                let mut local = self.zeros_like();
                let range = ci * SCATTER_CHUNK..((ci + 1) * SCATTER_CHUNK).min(n);
                let pos = range.map(|i| self.backward_one(cache, i, &dflat[i * dim..(i + 1) * dim], &mut local)).collect();
                (local, pos)
            })
            .collect();
        let mut positions = Vec::with_capacity(n);
        for (local, pos) in chunks {
            for (dst, src) in grad.slices_mut().into_iter().zip(local.slices()) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += *s;
                }
            }
            positions.extend(pos);
        }
        Ok(positions)
    }

    fn backward_one(&self, cache: &HexCache<F>, i: usize, df: &[F], grad: &mut HexPlaneField<F>) -> Vec3<F> {
        let u = &cache.coords[i];
        let sdim = self.samples_per_query();
        let samples = &cache.samples[i * sdim..(i + 1) * sdim];
        let mut du = [F::zero(); 4];
        let mut fo = 0;
        let mut so = 0;
        for (level, glevel) in self.levels.iter().zip(grad.levels.iter_mut()) {
            let c = level.channels;
            let s = &samples[so..so + 6 * c];
            let mut ds = vec![F::zero(); 6 * c];
            for k in 0..c {
                let g = df[fo + k];
                if g == F::zero() {
                    continue;
                }
                for (m, &(p, q)) in PLANE_PAIRS.iter().enumerate() {
                    let (sp, sq) = (s[p * c + k], s[q * c + k]);
                    let v = level.mix[m][k];
                    glevel.mix[m][k] += g * sp * sq;
                    ds[p * c + k] += g * v * sq;
                    ds[q * c + k] += g * v * sp;
                }
            }
            for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
                let (ra, rb) = (level.axis_res(a), level.axis_res(b));
                let (ia, fa) = cell(u[a], ra);
                let (ib, fb) = cell(u[b], rb);
                let data = &level.planes[p];
                let gdata = &mut glevel.planes[p];
                let n00 = (ib * ra + ia) * c;
                let n10 = n00 + c;
                let n01 = n00 + ra * c;
                let n11 = n01 + c;
                let (w00, w10) = ((F::one() - fa) * (F::one() - fb), fa * (F::one() - fb));
                let (w01, w11) = ((F::one() - fa) * fb, fa * fb);
                let (mut ga, mut gb) = (F::zero(), F::zero());
                for k in 0..c {
                    let g = ds[p * c + k];
                    if g == F::zero() {
                        continue;
                    }
                    gdata[n00 + k] += g * w00;
                    gdata[n10 + k] += g * w10;
                    gdata[n01 + k] += g * w01;
                    gdata[n11 + k] += g * w11;
                    let (v00, v10, v01, v11) = (data[n00 + k], data[n10 + k], data[n01 + k], data[n11 + k]);
                    ga += g * ((F::one() - fb) * (v10 - v00) + fb * (v11 - v01));
                    gb += g * ((F::one() - fa) * (v01 - v00) + fa * (v11 - v10));
                }
                du[a] += ga * F::lit((ra - 1) as f64);
                du[b] += gb * F::lit((rb - 1) as f64);
            }
            fo += c;
            so += 6 * c;
        }
        let mut out = [F::zero(); 3];
        for a in 0..3 {
            if !cache.clamped[i][a] {
                out[a] = du[a] / F::lit(self.bounds.max[a] - self.bounds.min[a]);
            }
        }
        out
    }

    /// Mean squared first difference along time of the XT, YT and ZT planes,
    /// summed over planes and levels.
    pub fn temporal_tv(&self) -> F {
        let mut total = F::zero();
        for level in &self.levels {
            for p in 3..6 {
                let (ra, rt) = level.plane_dims(p);
                let c = level.channels;
                let data = &level.planes[p];
                let row = ra * c;
                let mut s = F::zero();
                for j in 0..rt - 1 {
                    for k in 0..row {
                        let d = data[(j + 1) * row + k] - data[j * row + k];
                        s += d * d;
                    }
                }
                total += s / F::lit((row * (rt - 1)) as f64);
            }
        }
        total
    }

    /// Adds `weight · ∂temporal_tv/∂planes` into `grad`.
    pub fn temporal_tv_backward(&self, weight: F, grad: &mut HexPlaneField<F>) {
        for (level, glevel) in self.levels.iter().zip(grad.levels.iter_mut()) {
            for p in 3..6 {
                let (ra, rt) = level.plane_dims(p);
                let row = ra * level.channels;
                let scale = weight * F::lit(2.0 / (row * (rt - 1)) as f64);
                let data = &level.planes[p];
                let g = &mut glevel.planes[p];
                for j in 0..rt - 1 {
                    for k in 0..row {
                        let d = (data[(j + 1) * row + k] - data[j * row + k]) * scale;
                        g[(j + 1) * row + k] += d;
                        g[j * row + k] -= d;
                    }
                }
            }
        }
    }
}
