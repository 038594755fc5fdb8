use crate::model::Camera;
use crate::real::Real;

use super::render::sort_front_to_back;
use super::{ProjectedGaussian, RasterConfig, RenderOutput};

/// One splat's contribution at a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendStep<F> {
    pub gaussian_id: usize,
    pub alpha: F,
    /// Transmittance in front of this splat.
    pub transmittance: F,
    /// `alpha · transmittance`.
    pub weight: F,
}

fn walk<F: Real>(sorted: &[ProjectedGaussian<F>], px: F, py: F, config: &RasterConfig, mut visit: impl FnMut(&ProjectedGaussian<F>, BlendStep<F>)) -> F {
    let cutoff = F::lit(config.alpha_cutoff);
    let alpha_max = F::lit(config.alpha_max);
    let mut t = F::one();
    for g in sorted {
        let (alpha, _, _) = g.alpha_at(px, py, alpha_max);
        if alpha < cutoff {
            continue;
        }
        visit(g, BlendStep { gaussian_id: g.gaussian_id, alpha, transmittance: t, weight: alpha * t });
        t *= F::one() - alpha ;
    }
    t
}

/// Every contributor at pixel `(x, y)` in compositing order, and the final
/// transmittance. No early termination.
pub fn blend_trace<F: Real>(projected: &[ProjectedGaussian<F>], x: usize, y: usize, config: &RasterConfig) -> (Vec<BlendStep<F>>, F) {
    let mut sorted = projected.to_vec();
    sort_front_to_back(&mut sorted);
    let mut steps = Vec::new();
    let t = walk(&sorted, F::lit(x as f64), F::lit(y as f64), config, |_, s| steps.push(s));
    (steps, t)
}

/// Reference renderer: every pixel walks every splat in global depth order,
/// with no tiling and no early termination.
pub fn render_oracle<F: Real>(
    projected: &[ProjectedGaussian<F>],
    camera: &Camera<F>,
    config: &RasterConfig,
) -> RenderOutput<F> {
    let mut sorted = projected.to_vec();
    sort_front_to_back(&mut sorted);
    let background = config.background.map(F::lit);
    let mut out = RenderOutput::background(camera.width, camera.height, background);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let mut c = [F::zero(); 3];
            let mut d = F::zero();
            let mut n = 0;
            let t = walk(&sorted, F::lit(x as f64), F::lit(y as f64), config, |g, s| {
                for ch in 0..3 {
                    c[ch] += g.color[ch] * s.weight;
                }
                d += g.depth * s.weight;
                n += 1;
            });
            let pix = y * camera.width + x;
            for ch in 0..3 {
                out.color.data[pix * 3 + ch] = c[ch] + t * background[ch];
            }
            out.depth.data[pix] = d;
            out.alpha.data[pix] = F::one() - t;
            out.contributors[pix] = n;
        }
    }
    out
}
