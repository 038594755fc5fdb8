//! Finite-difference checks shared by the gradient tests and the acceptance run.

use dynsplat::deform::{DeformConfig, DeformationField, EncoderKind, HexPlaneConfig, HexPlaneField};
use dynsplat::image::{Image, Mask};
use dynsplat::init::Aabb;
use dynsplat::model::{CloudGrad, GaussianCloud};
use dynsplat::objectives::*;
use dynsplat::raster::{backward, forward, Accumulation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

/// Every cloud attribute of a random scene against a random linear functional
/// of the rendered color and depth.
pub fn raster_check(seed: u64, width: usize, height: usize, max_gaussians: usize, accumulation: Accumulation) -> GradCheck {
    let mut r = rng(seed);
    let n = r.gen_range(2..=max_gaussians);
    let mut cloud = random_cloud(&mut r, n, 3);
    let cam = camera(width, height);
    let mut cfg = smooth_config(8);
    cfg.accumulation = accumulation;
    let mut r2 = rng(seed ^ 0xabc);
    let gc = random_image(&mut r2, width, height, 3);
    let gd = random_image(&mut r2, width, height, 1);
    let (_, state) = forward(&cloud, &cam, &cfg);
    let grad = backward(&cloud, &cam, &state, &gc, &gd).unwrap();
    let f = |c: &GaussianCloud<f64>| {
        let (out, _) = forward(c, &cam, &cfg);
        dot(&out.color, &gc) + dot(&out.depth, &gd)
    };
    let nb = cloud.coeffs_per_gaussian();
    let mut check = GradCheck::new("");
    for i in 0..n {
        for a in 0..3 {
            let num = central(&mut cloud, |c| &mut c.positions[i][a], f);
            check.compare(grad.positions[i][a], num, GRAD_FLOOR, &format!("seed {seed} position {i}.{a}"));
            let num = central(&mut cloud, |c| &mut c.log_scales[i][a], f);
            check.compare(grad.log_scales[i][a], num, GRAD_FLOOR, &format!("seed {seed} log_scale {i}.{a}"));
        }
        for a in 0..4 {
            let num = central(&mut cloud, |c| &mut c.rotations[i][a], f);
            check.compare(grad.rotations[i][a], num, GRAD_FLOOR, &format!("seed {seed} rotation {i}.{a}"));
        }
        let num = central(&mut cloud, |c| &mut c.opacity_logits[i], f);
        check.compare(grad.opacity_logits[i], num, GRAD_FLOOR, &format!("seed {seed} opacity {i}"));
        for k in 0..nb {
            let num = central(&mut cloud, |c| &mut c.sh_mut(i)[k], f);
            check.compare(grad.sh_coeffs[i * nb + k], num, GRAD_FLOOR, &format!("seed {seed} sh {i}.{k}"));
        }
    }
    check
}

fn randomize(field: &mut DeformationField<f64>, rng: &mut ChaCha8Rng) {
    for s in field.slices_mut() {
        for v in s.iter_mut() {
            *v = rng.gen_range(-0.6..0.6);
        }
    }
}

fn upstream(rng: &mut ChaCha8Rng, cloud: &GaussianCloud<f64>) -> CloudGrad<f64> {
    let mut g = CloudGrad::zeros_like(cloud);
    for v in g.positions.iter_mut().flatten().chain(g.rotations.iter_mut().flatten()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    for v in g.log_scales.iter_mut().flatten().chain(g.opacity_logits.iter_mut()) {
        *v = rng.gen_range(-1.0..1.0);
    }
    g
}

fn deform_objective(field: &DeformationField<f64>, cloud: &GaussianCloud<f64>, t: f64, up: &CloudGrad<f64>) -> (f64, Vec<bool>) {
    let (d, cache) = field.deform(cloud, t).unwrap();
    let mut s = 0.0;
    for i in 0..cloud.len() {
        for a in 0..3 {
            s += d.positions[i][a] * up.positions[i][a] + d.log_scales[i][a] * up.log_scales[i][a];
        }
        for a in 0..4 {
            s += d.rotations[i][a] * up.rotations[i][a];
        }
        s += d.opacity_logits[i] * up.opacity_logits[i];
    }
    (s, cache.activation_pattern())
}

/// Central difference that refuses to straddle a ReLU kink.
fn smooth_central<T>(state: &mut T, get: impl Fn(&mut T) -> &mut f64, f: impl Fn(&T) -> (f64, Vec<bool>)) -> Option<f64> {
    let base = f(state).1;
    let x0 = *get(state);
    let h = FD_STEP;
    let mut vals = [0.0; 4];
    for (k, dx) in [-2.0 * h, -h, h, 2.0 * h].into_iter().enumerate() {
        *get(state) = x0 + dx;
        let (v, pattern) = f(state);
        if pattern != base {
            *get(state) = x0;
            return None;
        }
        vals[k] = v;
    }
    *get(state) = x0;
    Some((vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h))
}

/// Plane features, mixing vectors (or encoder MLP weights), decoder weights
/// and canonical positions through the deformation field.
pub fn deform_check(seed: u64, encoder: EncoderKind, trunk: bool) -> GradCheck {
    let mut r = rng(seed);
    let cloud = random_cloud(&mut r, 6, 1);
    let cfg = DeformConfig {
        encoder,
        hexplane: HexPlaneConfig { levels: 2, spatial_res: 3, time_res: 3, channels: 2, ..Default::default() },
        decoder_hidden: 4,
        shared_trunk: trunk,
        pe_frequencies: 2,
        pe_layers: 1,
        ..Default::default()
    };
    let mut field = DeformationField::for_cloud(&cfg, &cloud, seed).unwrap();
    randomize(&mut field, &mut r);
    let up = upstream(&mut r, &cloud);
    let t = r.gen_range(0.0..1.0);
    let (_, cache) = field.deform(&cloud, t).unwrap();
    let mut grad = field.zeros_like();
    let gcloud = field.backward(&cache, &up, &mut grad).unwrap();

    let mut out = GradCheck::new("");
    let analytic: Vec<f64> = grad.slices().concat();
    let sizes: Vec<usize> = field.slices().iter().map(|s| s.len()).collect();
    let mut k = 0;
    for (s, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let num = smooth_central(&mut field, |f| &mut f.slices_mut().swap_remove(s)[j], |f| deform_objective(f, &cloud, t, &up));
            if let Some(num) = num {
                out.compare(analytic[k], num, GRAD_FLOOR, &format!("{encoder:?} seed {seed} param {s}.{j}"));
            }
            k += 1;
        }
    }
    let mut c = cloud.clone();
    for i in 0..c.len() {
        for a in 0..3 {
            let num = smooth_central(&mut c, |c| &mut c.positions[i][a], |c| deform_objective(&field, c, t, &up));
            if let Some(num) = num {
                out.compare(gcloud.positions[i][a], num, GRAD_FLOOR, &format!("{encoder:?} seed {seed} position {i}.{a}"));
            }
        }
    }
    out
}

fn positive(r: &mut ChaCha8Rng, c: usize) -> Image<f64> {
    let data = (0..64 * c).map(|_| r.gen_range(0.5..4.0)).collect();
    Image::from_vec(8, 8, c, data).unwrap()
}

fn random_mask(r: &mut ChaCha8Rng) -> Mask {
    Mask { width: 8, height: 8, data: (0..64).map(|_| r.gen_bool(0.8)).collect() }
}

pub type LossFn = fn(&Image<f64>, &Image<f64>, &Mask, Option<Grad<'_, f64>>) -> dynsplat::Result<Term<f64>>;

/// A masked per-pixel loss with respect to the prediction.
pub fn pixel_loss_check(f: LossFn, channels: usize, seed: u64, name: &str) -> GradCheck {
    let mut r = rng(seed);
    let mut pred = positive(&mut r, channels);
    let target = positive(&mut r, channels);
    let m = random_mask(&mut r);
    let mut g = Image::new(8, 8, channels);
    f(&pred, &target, &m, Some(Grad { image: &mut g, weight: 1.7 })).unwrap();
    let mut out = GradCheck::new("");
    for i in 0..pred.data.len() {
        let num = central(&mut pred, |p| &mut p.data[i], |p| 1.7 * f(p, &target, &m, None).unwrap().value);
        out.compare(g.data[i], num, GRAD_FLOOR, &format!("{name} seed {seed} entry {i}"));
    }
    out
}

/// Whether every neighbour difference of `values` (an 8×8×c raster) is far
/// from the |·| kink relative to the finite-difference step.
fn clear_of_kinks(values: &[f64], c: usize) -> bool {
    let far = |a: f64, b: f64| (a - b).abs() > 1e-2;
    (0..8).all(|y| {
        (0..8).all(|x| {
            (0..c).all(|k| {
                let i = (y * 8 + x) * c + k;
                (x == 7 || far(values[i], values[i + c])) && (y == 7 || far(values[i], values[i + 8 * c]))
            })
        })
    })
}

/// Spatial TV with respect to color and depth.
pub fn spatial_tv_check(seed: u64) -> GradCheck {
    let mut total = GradCheck::new("");
    let mut r = rng(seed);
    let mut color = positive(&mut r, 3);
    while !clear_of_kinks(&color.data, 3) {
        color = positive(&mut r, 3);
    }
    let mut depth = positive(&mut r, 1);
    while !clear_of_kinks(&depth.data.iter().map(|d| 1.0 / d).collect::<Vec<_>>(), 1) {
        depth = positive(&mut r, 1);
    }
    let mut gc = Image::new(8, 8, 3);
    let mut gd = Image::new(8, 8, 1);
    loss_spatial_tv(&color, &depth, Some((Grad { image: &mut gc, weight: 0.5 }, Grad { image: &mut gd, weight: 0.5 }))).unwrap();
    for i in 0..color.data.len() {
        let num = central(&mut color, |c| &mut c.data[i], |c| 0.5 * loss_spatial_tv(c, &depth, None).unwrap());
        total.compare(gc.data[i], num, GRAD_FLOOR, &format!("tv color seed {seed} entry {i}"));
    }
    for i in 0..depth.data.len() {
        let num = central(&mut depth, |d| &mut d.data[i], |d| 0.5 * loss_spatial_tv(&color, d, None).unwrap());
        total.compare(gd.data[i], num, GRAD_FLOOR, &format!("tv depth seed {seed} entry {i}"));
    }
    total
}

/// Temporal TV with respect to every HexPlane parameter. Also asserts that
/// purely spatial planes receive exactly zero.
pub fn temporal_tv_check(seed: u64) -> GradCheck {
    let cfg = HexPlaneConfig { levels: 2, spatial_res: 3, time_res: 4, channels: 2, ..Default::default() };
    let mut r = rng(seed);
    let mut field: HexPlaneField<f64> = HexPlaneField::new(&cfg, Aabb::new([0.0; 3], [1.0; 3]), &mut r).unwrap();
    for s in field.slices_mut() {
        s.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    }
    let mut g = field.zeros_like();
    field.temporal_tv_backward(0.3, &mut g);
    let analytic: Vec<f64> = g.slices().concat();
    let sizes: Vec<usize> = field.slices().iter().map(|s| s.len()).collect();
    let mut check = GradCheck::new("");
    let mut k = 0;
    for (s, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            let num = central(&mut field, |f| &mut f.slices_mut().swap_remove(s)[j], |f| 0.3 * loss_temporal_tv(f));
            if s % 9 < 3 && analytic[k] != 0.0 {
                // XY, XZ, YZ planes carry no temporal term.
                check.compare(f64::INFINITY, 0.0, 0.0, &format!("spatial slice {s} entry {j} got a temporal gradient"));
            }
            check.compare(analytic[k], num, GRAD_FLOOR, &format!("temporal slice {s} entry {j}"));
            k += 1;
        }
    }
    check
}

/// All loss terms for one seed.
pub fn loss_check(seed: u64) -> GradCheck {
    let mut total = pixel_loss_check(loss_color, 3, seed, "color");
    total.merge(pixel_loss_check(loss_depth_binocular, 1, seed, "binocular"));
    total.merge(pixel_loss_check(loss_depth_monocular, 1, seed, "monocular"));
    total.merge(spatial_tv_check(seed));
    total.merge(temporal_tv_check(seed));
    total
}

/// The three families above on one seed, alternating encoder kinds and
/// accumulation modes.
pub fn full_check(seed: u64) -> GradCheck {
    let accumulation = if seed % 5 == 4 { Accumulation::Fast } else { Accumulation::Deterministic };
    let mut total = raster_check(seed, 32, 32, 20, accumulation);
    let encoder = if seed.is_multiple_of(2) { EncoderKind::Hexplane } else { EncoderKind::Mlp };
    total.merge(deform_check(seed, encoder, seed.is_multiple_of(3)));
    total.merge(loss_check(seed));
    total
}
