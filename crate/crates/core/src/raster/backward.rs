use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{mat3_tvec, Mat3, Sym2, Vec2};
use crate::model::{build_covariance, covariance_vjp, eval_sh_raw, sh_basis, sh_basis_grad, sh_coeff_count, Camera, CloudGrad, GaussianCloud};
use crate::real::{sigmoid, Real};

use super::project::{jw, projection_jacobian, view_dir};
use super::{Accumulation, ForwardState, ProjectedGaussian, RasterConfig};

/// Loss gradient w.r.t. one splat's screen-space quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectedGrad<F> {
    pub mean2d: Vec2<F>,
    /// Matrix gradient w.r.t. the conic `Σ′⁻¹` (symmetric).
    pub conic: Sym2<F>,
    pub depth: F,
    pub color: [F; 3],
    pub opacity: F,
}

impl<F: Real> ProjectedGrad<F> {
    fn zero() -> Self {
        Self {
            mean2d: [F::zero(); 2],
            conic: Sym2::zero(),
            depth: F::zero(),
            color: [F::zero(); 3],
            opacity: F::zero(),
        }
    }

    fn add_assign(&mut self, o: &Self) {
        self.mean2d[0] += o.mean2d[0];
        self.mean2d[1] += o.mean2d[1];
        self.conic.add_assign(&o.conic);
        self.depth += o.depth;
        for c in 0..3 {
            self.color[c] += o.color[c];
        }
        self.opacity += o.opacity;
    }
}

fn backward_tile<F: Real>(
    state: &ForwardState<F>,
    tile: usize,
    grad_color: &Image<F>,
    grad_depth: &Image<F>,
) -> Vec<ProjectedGrad<F>> {
    let range = state.tile_range(tile);
    let entries = &state.tile_entries[range];
    let mut local = vec![ProjectedGrad::zero(); entries.len()];
    let (x0, y0, x1, y1) = state.tile_rect(tile);
    let cutoff = F::lit(state.config.alpha_cutoff);
    let alpha_max = F::lit(state.config.alpha_max);
    let background = state.config.background.map(F::lit);
    let skip: Vec<F> = entries.iter().map(|&e| state.projected[e as usize].skip_below(cutoff)).collect();
    for y in y0..y1 {
        let py = F::lit(y as f64);
        for x in x0..x1 {
            let pix = y * state.width + x;
            let gc = [grad_color.data[pix * 3], grad_color.data[pix * 3 + 1], grad_color.data[pix * 3 + 2]];
            let gd = grad_depth.data[pix];
            if gc[0] == F::zero() && gc[1] == F::zero() && gc[2] == F::zero() && gd == F::zero() {
                continue;
            }
            let px = F::lit(x as f64);
            let mut t = state.final_transmittance[pix];
            // Color and depth seen behind the current splat, per unit of its
            // incoming transmittance.
            let mut rest_c = background;
            let mut rest_d = F::zero();
            for k in (0..state.last_entry[pix] as usize).rev() {
                let g = &state.projected[entries[k] as usize];
                let power = g.power_at(px, py);
                if power < skip[k] {
                    continue;
                }
                let (alpha, gauss, clamped) = g.alpha_from_power(power, alpha_max);
                if alpha < cutoff {
                    continue;
                }
                let one_minus = F::one() - alpha;
                let t_in = t / one_minus;
                let w = alpha * t_in;
                let lg = &mut local[k];
                for c in 0..3 {
                    lg.color[c] += w * gc[c];
                }
                lg.depth += w * gd;
                let d_alpha = t_in
                    * (gc[0] * (g.color[0] - rest_c[0])
                        + gc[1] * (g.color[1] - rest_c[1])
                        + gc[2] * (g.color[2] - rest_c[2])
                        + gd * (g.depth - rest_d));
                for c in 0..3 {
                    rest_c[c] = alpha * g.color[c] + one_minus * rest_c[c];
                }
                rest_d = alpha * g.depth + one_minus * rest_d;
                t = t_in;
                if clamped {
                    continue;
                }
                // α = o·exp(-½ Δᵀ A Δ), Δ = pixel − mean
                lg.opacity += d_alpha * gauss;
                let dx = [px - g.mean2d[0], py - g.mean2d[1]];
                let s = d_alpha * alpha;
                let ad = g.conic.mul_vec(&dx);
                lg.mean2d[0] += s * ad[0];
                lg.mean2d[1] += s * ad[1];
                let h = -F::half() * s;
                lg.conic.xx += h * dx[0] * dx[0];
                lg.conic.xy += h * dx[0] * dx[1];
                lg.conic.yy += h * dx[1] * dx[1];
            }
        }
    }
    local
}

/// Back-propagates image gradients to per-splat screen-space gradients,
/// aligned with `state.projected`. Splats that did not contribute to any
/// pixel get exact zeros.
pub fn render_backward<F: Real>(
    state: &ForwardState<F>,
    grad_color: &Image<F>,
    grad_depth: &Image<F>,
) -> Result<Vec<ProjectedGrad<F>>> {
    let (w, h) = (state.width, state.height);
    if grad_color.width != w || grad_color.height != h || grad_color.channels != 3 {
        return Err(Error::StateMismatch(format!(
            "color gradient is {}x{}x{}, forward pass was {w}x{h}x3",
            grad_color.width, grad_color.height, grad_color.channels
        )));
    }
    if grad_depth.width != w || grad_depth.height != h || grad_depth.channels != 1 {
        return Err(Error::StateMismatch(format!(
            "depth gradient is {}x{}x{}, forward pass was {w}x{h}x1",
            grad_depth.width, grad_depth.height, grad_depth.channels
        )));
    }
    if state.final_transmittance.len() != w * h || state.tile_offsets.len() != state.tiles_x * state.tiles_y + 1 {
        return Err(Error::StateMismatch("corrupt forward state".into()));
    }
    let n_tiles = state.tiles_x * state.tiles_y;
    let n = state.projected.len();
    match state.config.accumulation {
        Accumulation::Deterministic => {
            let per_tile: Vec<Vec<ProjectedGrad<F>>> =
                (0..n_tiles).into_par_iter().map(|t| backward_tile(state, t, grad_color, grad_depth)).collect();
            let mut total = vec![ProjectedGrad::zero(); n];
            for (tile, local) in per_tile.iter().enumerate() {
                let entries = &state.tile_entries[state.tile_range(tile)];
                for (k, g) in local.iter().enumerate() {
                    total[entries[k] as usize].add_assign(g);
                }
            }
            Ok(total)
        }
        Accumulation::Fast => Ok((0..n_tiles)
            .into_par_iter()
            .fold(
                || vec![ProjectedGrad::zero(); n],
                |mut acc, t| {
                    let local = backward_tile(state, t, grad_color, grad_depth);
                    let entries = &state.tile_entries[state.tile_range(t)];
                    for (k, g) in local.iter().enumerate() {
                        acc[entries[k] as usize].add_assign(g);
                    }
                    acc
                },
            )
            .reduce(
                || vec![ProjectedGrad::zero(); n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        x.add_assign(y);
                    }
                    a
                },
            )),
    }
}

/// Chains screen-space gradients through projection, covariance, SH color
/// and opacity activation back to the cloud's stored attributes.
pub fn project_backward<F: Real>(
    cloud: &GaussianCloud<F>,
    camera: &Camera<F>,
    _config: &RasterConfig,
    projected: &[ProjectedGaussian<F>],
    grads: &[ProjectedGrad<F>],
) -> Result<CloudGrad<F>> {
    if projected.len() != grads.len() {
        return Err(Error::StateMismatch(format!("{} splats but {} gradients", projected.len(), grads.len())));
    }
    let mut out = CloudGrad::zeros_like(cloud);
    let w = camera.view_rotation();
    let k = camera.intrinsics;
    let nb = sh_coeff_count(cloud.sh_degree);
    for (p, g) in projected.iter().zip(grads) {
        let i = p.gaussian_id;
        if i >= cloud.len() {
            return Err(Error::StateMismatch(format!("splat refers to Gaussian {i} of {}", cloud.len())));
        }
        let mu = cloud.positions[i];
        let t = camera.world_to_camera(&mu);
        if t[2] != p.depth {
            return Err(Error::StateMismatch(format!("Gaussian {i} moved since the forward pass")));
        }

        // Opacity activation.
        let o = sigmoid(cloud.opacity_logits[i]);
        out.opacity_logits[i] += g.opacity * o * (F::one() - o);

        // Color: clamped channels pass no gradient.
        let (dir, dist) = view_dir(camera, &mu);
        let coeffs = cloud.sh(i);
        let raw = eval_sh_raw(coeffs, &dir, cloud.sh_degree);
        let gc = [0, 1, 2].map(|c| if raw[c] > F::zero() { g.color[c] } else { F::zero() });
        let basis = sh_basis(cloud.sh_degree, &dir);
        let sh_grad = &mut out.sh_coeffs[i * nb * 3..(i + 1) * nb * 3];
        for b in 0..nb {
            for c in 0..3 {
                sh_grad[b * 3 + c] += basis[b] * gc[c];
            }
        }
        let mut g_pos = [F::zero(); 3];
        if cloud.sh_degree > 0 && dist > F::zero() {
            let dbasis = sh_basis_grad(cloud.sh_degree, &dir);
            let mut g_dir = [F::zero(); 3];
            for b in 1..nb {
                let s = coeffs[b * 3] * gc[0] + coeffs[b * 3 + 1] * gc[1] + coeffs[b * 3 + 2] * gc[2];
                for a in 0..3 {
                    g_dir[a] += s * dbasis[b][a];
                }
            }
            let proj = g_dir[0] * dir[0] + g_dir[1] * dir[1] + g_dir[2] * dir[2];
            for a in 0..3 {
                g_pos[a] += (g_dir[a] - dir[a] * proj) / dist;
            }
        }

        // Screen covariance: A = Σ′⁻¹ ⇒ dL/dΣ′ = −A (dL/dA) A.
        let g_cov2 = Sym2::sandwich(&p.conic, &g.conic).scaled(-F::one());
        let sigma = build_covariance(&cloud.rotations[i], &cloud.log_scales[i]);
        let j = projection_jacobian(camera, &t);
        let m = jw(&j, &w);
        let gm = [[g_cov2.xx, g_cov2.xy], [g_cov2.xy, g_cov2.yy]];
        // dL/dΣ = Mᵀ G M
        let mut g_sigma: Mat3<F> = [[F::zero(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = F::zero();
                for r in 0..2 {
                    for s in 0..2 {
                        acc += m[r][a] * gm[r][s] * m[s][b];
                    }
                }
                g_sigma[a][b] = acc;
            }
        }
        let (gq, gls) = covariance_vjp(&cloud.rotations[i], &cloud.log_scales[i], &g_sigma);
        for a in 0..4 {
            out.rotations[i][a] += gq[a];
        }
        for a in 0..3 {
            out.log_scales[i][a] += gls[a];
        }
        // dL/dM = 2 G M Σ, dL/dJ = dL/dM Wᵀ
        let mut g_m = [[F::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                let mut acc = F::zero();
                for s in 0..2 {
                    for q in 0..3 {
                        acc += gm[r][s] * m[s][q] * sigma[q][c];
                    }
                }
                g_m[r][c] = F::lit(2.0) * acc;
            }
        }
        let mut g_j = [[F::zero(); 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                g_j[r][c] = g_m[r][0] * w[c][0] + g_m[r][1] * w[c][1] + g_m[r][2] * w[c][2];
            }
        }
        let iz = F::one() / t[2];
        let iz2 = iz * iz;
        let iz3 = iz2 * iz;
        let two = F::lit(2.0);
        let mut g_t = [
            -g_j[0][2] * k.fx * iz2,
            -g_j[1][2] * k.fy * iz2,
            -g_j[0][0] * k.fx * iz2 + g_j[0][2] * two * k.fx * t[0] * iz3 - g_j[1][1] * k.fy * iz2
                + g_j[1][2] * two * k.fy * t[1] * iz3,
        ];
        // Projected mean: d mean2d / dt = J.
        for a in 0..3 {
            g_t[a] += j[0][a] * g.mean2d[0] + j[1][a] * g.mean2d[1];
        }
        g_t[2] += g.depth;
        // t = W (μ − c) ⇒ dL/dμ = Wᵀ dL/dt
        let g_mu = mat3_tvec(&w, &g_t);
        for a in 0..3 {
            out.positions[i][a] += g_mu[a] + g_pos[a];
        }
    }
    Ok(out)
}
