use rayon::prelude::*;

use crate::math::{norm3, sub3, Mat3, Sym2, Vec2, Vec3};
use crate::model::{build_covariance, eval_sh_raw, Camera, GaussianCloud};
use crate::real::{sigmoid, Real};

use super::RasterConfig;

/// A Gaussian splatted onto the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian<F> {
    /// Projected center in pixels.
    pub mean2d: Vec2<F>,
    /// Screen-space covariance `Σ′`, including the low-pass dilation.
    pub cov2d: Sym2<F>,
    /// `Σ′⁻¹`.
    pub conic: Sym2<F>,
    /// Camera-space depth.
    pub depth: F,
    pub color: [F; 3],
    pub opacity: F,
    pub gaussian_id: usize,
}

impl<F: Real> ProjectedGaussian<F> {
    /// Builds a splat directly from screen-space quantities. Returns `None`
    /// when `cov2d` is not invertible.
    pub fn new(mean2d: Vec2<F>, cov2d: Sym2<F>, depth: F, color: [F; 3], opacity: F, gaussian_id: usize) -> Option<Self> {
        let conic = cov2d.inverse()?;
        Some(Self { mean2d, cov2d, conic, depth, color, opacity, gaussian_id })
    }

    /// Returns `(α, G, clamped)` at pixel `(px, py)`, with
    /// `α = min(o·G, alpha_max)`.
    #[inline(always)]
    pub fn alpha_at(&self, px: F, py: F, alpha_max: F) -> (F, F, bool) {
        self.alpha_from_power(self.power_at(px, py), alpha_max)
    }

    /// Gaussian exponent `-½ Δᵀ Σ′⁻¹ Δ` at pixel `(px, py)`.
    #[inline(always)]
    pub(crate) fn power_at(&self, px: F, py: F) -> F {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        -F::half() * (self.conic.xx * dx * dx + self.conic.yy * dy * dy) - self.conic.xy * dx * dy
    }

    /// An exponent below this value certainly gives `α < cutoff`, so the
    /// exponential can be skipped. The margin absorbs rounding in `o·exp(p)`.
    pub(crate) fn skip_below(&self, cutoff: F) -> F {
        if cutoff > F::zero() {
            (cutoff / self.opacity).ln() - F::lit(1e-3)
        } else {
            F::neg_infinity()
        }
    }

    #[inline(always)]
    pub(crate) fn alpha_from_power(&self, power: F, alpha_max: F) -> (F, F, bool) {
        let g = power.exp();
        let a = self.opacity * g;
        if a > alpha_max {
            (alpha_max, g, true)
        } else {
            (a, g, false)
        }
    }

    /// Inclusive pixel bounds `[x0, y0, x1, y1]` of the ellipse outside which
    /// `α` is certainly below `cutoff`, or `None` if it never reaches it.
    pub fn pixel_bounds(&self, cutoff: F) -> Option<[F; 4]> {
        if self.opacity < cutoff {
            return None;
        }
        let r = if cutoff > F::zero() {
            (F::lit(2.0) * (self.opacity / cutoff).ln()).max(F::zero()).sqrt()
        } else {
            F::infinity()
        };
        let ex = r * self.cov2d.xx.sqrt();
        let ey = r * self.cov2d.yy.sqrt();
        Some([self.mean2d[0] - ex, self.mean2d[1] - ey, self.mean2d[0] + ex, self.mean2d[1] + ey])
    }
}

/// Screen-space affine Jacobian of the perspective projection at camera point `t`.
#[inline]
pub(crate) fn projection_jacobian<F: Real>(camera: &Camera<F>, t: &Vec3<F>) -> [[F; 3]; 2] {
    let k = &camera.intrinsics;
    let iz = F::one() / t[2];
    let iz2 = iz * iz;
    [[k.fx * iz, F::zero(), -k.fx * t[0] * iz2], [F::zero(), k.fy * iz, -k.fy * t[1] * iz2]]
}

/// `M = J W` (2×3).
#[inline]
pub(crate) fn jw<F: Real>(j: &[[F; 3]; 2], w: &Mat3<F>) -> [[F; 3]; 2] {
    let mut m = [[F::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            m[r][c] = j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c];
        }
    }
    m
}

/// `M Σ Mᵀ` for 2×3 `M` and symmetric 3×3 `Σ`.
#[inline]
pub(crate) fn project_cov<F: Real>(m: &[[F; 3]; 2], sigma: &Mat3<F>) -> Sym2<F> {
    let mut ms = [[F::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ms[r][c] = m[r][0] * sigma[0][c] + m[r][1] * sigma[1][c] + m[r][2] * sigma[2][c];
        }
    }
    let e = |a: usize, b: usize| ms[a][0] * m[b][0] + ms[a][1] * m[b][1] + ms[a][2] * m[b][2];
    Sym2::new(e(0, 0), e(0, 1), e(1, 1))
}

/// Unit viewing direction from the camera center to `p`.
#[inline]
pub(crate) fn view_dir<F: Real>(camera: &Camera<F>, p: &Vec3<F>) -> (Vec3<F>, F) {
    let v = sub3(p, &camera.center());
    let n = norm3(&v);
    if n > F::zero() {
        (v.map(|x| x / n), n)
    } else {
        ([F::zero(), F::zero(), F::one()], F::zero())
    }
}

/// Projects every Gaussian in front of the camera. Gaussians whose depth lies
/// outside `(near, far)` or whose screen covariance is singular are culled.
/// Output order follows the cloud.
pub fn project<F: Real>(cloud: &GaussianCloud<F>, camera: &Camera<F>, config: &RasterConfig) -> Vec<ProjectedGaussian<F>> {
    let w = camera.view_rotation();
    let dilation = F::lit(config.dilation);
    let k = camera.intrinsics;
    (0..cloud.len())
        .into_par_iter()
        .with_min_len(256)
        .filter_map(|i| {
            let mu = &cloud.positions[i];
            let t = camera.world_to_camera(mu);
            if !(t[2] > camera.near && t[2] < camera.far) {
                return None;
            }
            let sigma = build_covariance(&cloud.rotations[i], &cloud.log_scales[i]);
            let j = projection_jacobian(camera, &t);
            let m = jw(&j, &w);
            let mut cov2d = project_cov(&m, &sigma);
            cov2d.xx += dilation;
            cov2d.yy += dilation;
            let (dir, _) = view_dir(camera, mu);
            let color = eval_sh_raw(cloud.sh(i), &dir, cloud.sh_degree).map(|c| c.max(F::zero()));
            let mean2d = [k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy];
            ProjectedGaussian::new(mean2d, cov2d, t[2], color, sigmoid(cloud.opacity_logits[i]), i)
        })
        .collect()
}
