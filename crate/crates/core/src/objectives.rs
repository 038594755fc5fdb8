//! Loss terms and their image-space gradients.
//!
//! Every pixel loss is a mean over kept pixels, so weights do not depend on
//! resolution. Functions taking a `Option<Grad>` add `weight · ∂loss/∂input`
//! into the given image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::real::Real;

/// Guard added to depths before taking reciprocals.
pub const DEPTH_EPS: f64 = 1e-6;
/// Guard inside the square root of the Pearson denominator.
pub const PEARSON_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    /// Metric depth supervised through reciprocal L1.
    #[default]
    Binocular,
    /// Relative depth supervised through Pearson correlation.
    Monocular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub color: f64,
    pub depth: f64,
    pub spatial_tv: f64,
    pub temporal_tv: f64,
    pub depth_mode: DepthMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::for_mode(DepthMode::Binocular)
    }
}

impl LossWeights {
    pub fn for_mode(depth_mode: DepthMode) -> Self {
        let depth = match depth_mode {
            DepthMode::Binocular => 1.0,
            DepthMode::Monocular => 0.1,
        };
        Self { color: 1.0, depth, spatial_tv: 0.01, temporal_tv: 0.01, depth_mode }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.color, self.depth, self.spatial_tv, self.temporal_tv];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and non-negative, got {all:?}")))
        }
    }
}

/// Unweighted term values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub color: f64,
    pub depth: f64,
    pub spatial_tv: f64,
    pub temporal_tv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total: f64,
    /// Set when a term fell back to its degenerate value (empty mask,
    /// constant depth).
    pub degenerate: bool,
}

pub fn total_loss(terms: LossTerms, weights: &LossWeights) -> LossReport {
    let total = weights.color * terms.color
        + weights.depth * terms.depth
        + weights.spatial_tv * terms.spatial_tv
        + weights.temporal_tv * terms.temporal_tv;
    LossReport { terms, total, degenerate: false }
}

/// A loss value plus whether it hit its degenerate fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term<F> {
    pub value: F,
    pub degenerate: bool,
}

/// Destination for a weighted gradient.
pub struct Grad<'a, F> {
    pub image: &'a mut Image<F>,
    pub weight: F,
}

fn check_shapes<F>(pred: &Image<F>, target: &Image<F>, mask: &Mask, grad: &Option<Grad<'_, F>>) -> Result<()> {
    let same = pred.width == target.width
        && pred.height == target.height
        && pred.channels == target.channels
        && mask.width == pred.width
        && mask.height == pred.height;
    let grad_ok = grad.as_ref().is_none_or(|g| {
        g.image.width == pred.width && g.image.height == pred.height && g.image.channels == pred.channels
    });
    if same && grad_ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "loss inputs disagree: prediction {}x{}x{}, target {}x{}x{}, mask {}x{}",
            pred.width, pred.height, pred.channels, target.width, target.height, target.channels, mask.width, mask.height
        )))
    }
}

#[inline]
fn sign<F: Real>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else if x < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

/// Mean absolute color error over kept pixels and channels.
pub fn loss_color<F: Real>(pred: &Image<F>, target: &Image<F>, mask: &Mask, mut grad: Option<Grad<'_, F>>) -> Result<Term<F>> {
    check_shapes(pred, target, mask, &grad)?;
    let c = pred.channels;
    let kept = mask.count();
    if kept == 0 {
        return Ok(Term { value: F::zero(), degenerate: true });
    }
    let norm = F::one() / F::lit((kept * c) as f64);
    let mut sum = F::zero();
    for (i, &m) in mask.data.iter().enumerate() {
        if !m {
            continue;
        }
        for k in 0..c {
            let d = pred.data[i * c + k] - target.data[i * c + k];
            sum += d.abs();
            if let Some(g) = grad.as_mut() {
                g.image.data[i * c + k] += g.weight * norm * sign(d);
            }
        }
    }
    Ok(Term { value: sum * norm, degenerate: false })
}

/// Mean absolute difference of reciprocal depths over kept pixels.
pub fn loss_depth_binocular<F: Real>(
    pred: &Image<F>,
    target: &Image<F>,
    mask: &Mask,
    mut grad: Option<Grad<'_, F>>,
) -> Result<Term<F>> {
    check_shapes(pred, target, mask, &grad)?;
    let kept = mask.count();
    if kept == 0 {
        return Ok(Term { value: F::zero(), degenerate: true });
    }
    let eps = F::lit(DEPTH_EPS);
    let norm = F::one() / F::lit(kept as f64);
    let mut sum = F::zero();
    for (i, &m) in mask.data.iter().enumerate() {
        if !m {
            continue;
        }
        let rp = F::one() / (pred.data[i] + eps);
        let d = rp - F::one() / (target.data[i] + eps);
        sum += d.abs();
        if let Some(g) = grad.as_mut() {
            g.image.data[i] -= g.weight * norm * sign(d) * rp * rp;
        }
    }
    Ok(Term { value: sum * norm, degenerate: false })
}

/// `1 − ρ` between rendered and reference depth over kept pixels.
pub fn loss_depth_monocular<F: Real>(
    pred: &Image<F>,
    target: &Image<F>,
    mask: &Mask,
    mut grad: Option<Grad<'_, F>>,
) -> Result<Term<F>> {
    check_shapes(pred, target, mask, &grad)?;
    let idx: Vec<usize> = mask.data.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    let degenerate = Term { value: F::one(), degenerate: true };
    if idx.len() < 2 {
        return Ok(degenerate);
    }
    // Accumulate in f64: the statistics are sums over every kept pixel.
    let n = idx.len() as f64;
    let x: Vec<f64> = idx.iter().map(|&i| pred.data[i].as_f64()).collect();
    let y: Vec<f64> = idx.iter().map(|&i| target.data[i].as_f64()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov /= n;
    vx /= n;
    vy /= n;
    let flat = |v: f64, m: f64| v <= 1e-12 * m.abs().max(1.0).powi(2);
    if flat(vx, mx) || flat(vy, my) {
        return Ok(degenerate);
    }
    let s = (vx * vy + PEARSON_EPS).sqrt();
    let rho = cov / s;
    if let Some(g) = grad.as_mut() {
        let w = g.weight.as_f64();
        for (k, &i) in idx.iter().enumerate() {
            let drho = ((y[k] - my) - cov * vy * (x[k] - mx) / (s * s)) / (n * s);
            g.image.data[i] -= F::lit(w * drho);
        }
    }
    Ok(Term { value: F::lit(1.0 - rho), degenerate: false })
}

/// Mean absolute horizontal difference plus mean absolute vertical
/// difference, over all channels. Adds `weight · ∂/∂img` into `grad`.
pub fn total_variation<F: Real>(img: &Image<F>, mut grad: Option<Grad<'_, F>>) -> F {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut total = F::zero();
    for (dx, dy) in [(1usize, 0usize), (0, 1)] {
        if w <= dx || h <= dy {
            continue;
        }
        let pairs = (w - dx) * (h - dy) * c;
        let norm = F::one() / F::lit(pairs as f64);
        let mut sum = F::zero();
        for y in 0..h - dy {
            for x in 0..w - dx {
                let a = (y * w + x) * c;
                let b = ((y + dy) * w + x + dx) * c;
                for k in 0..c {
                    let d = img.data[b + k] - img.data[a + k];
                    sum += d.abs();
                    if let Some(g) = grad.as_mut() {
                        let s = g.weight * norm * sign(d);
                        g.image.data[b + k] += s;
                        g.image.data[a + k] -= s;
                    }
                }
            }
        }
        total += sum * norm;
    }
    total
}

/// Spatial smoothness of the rendering: `TV(Ĉ) + TV(1/(D̂+ε))`.
pub fn loss_spatial_tv<F: Real>(
    color: &Image<F>,
    depth: &Image<F>,
    grads: Option<(Grad<'_, F>, Grad<'_, F>)>,
) -> Result<F> {
    if color.width != depth.width || color.height != depth.height || depth.channels != 1 {
        return Err(Error::Shape("color and depth renders disagree in size".into()));
    }
    let eps = F::lit(DEPTH_EPS);
    let inv = Image { data: depth.data.iter().map(|d| F::one() / (*d + eps)).collect(), ..depth.clone() };
    match grads {
        None => Ok(total_variation(color, None) + total_variation(&inv, None)),
        Some((gc, gd)) => {
            let tc = total_variation(color, Some(gc));
            let mut ginv = Image::new(inv.width, inv.height, 1);
            let tv = total_variation(&inv, Some(Grad { image: &mut ginv, weight: gd.weight }));
            for ((g, r), out) in ginv.data.iter().zip(&inv.data).zip(gd.image.data.iter_mut()) {
                *out -= *g * *r * *r;
            }
            Ok(tc + tv)
        }
    }
}

/// Temporal smoothness of an encoder's time planes.
pub fn loss_temporal_tv<F: Real>(field: &crate::deform::HexPlaneField<F>) -> F {
    field.temporal_tv()
}

/// Image-space losses of one render against one frame, with gradients.
pub struct FrameLoss<F> {
    pub terms: LossTerms,
    pub degenerate: bool,
    pub grad_color: Image<F>,
    pub grad_depth: Image<F>,
}

/// Color, depth and spatial TV terms for a rendered frame. Zero-weight
/// terms are still reported but contribute no gradient.
pub fn frame_losses<F: Real>(
    color: &Image<F>,
    depth: &Image<F>,
    target_color: &Image<F>,
    target_depth: &Image<F>,
    mask: &Mask,
    weights: &LossWeights,
) -> Result<FrameLoss<F>> {
    let mut grad_color = Image::new(color.width, color.height, 3);
    let mut grad_depth = Image::new(depth.width, depth.height, 1);
    let lc = loss_color(color, target_color, mask, Some(Grad { image: &mut grad_color, weight: F::lit(weights.color) }))?;
    // Pixels without a depth measurement (zero) still supervise color.
    let depth_mask = if mask.matches(target_depth) && mask.data.iter().zip(&target_depth.data).any(|(m, d)| *m && *d <= F::zero()) {
        let data = mask.data.iter().zip(&target_depth.data).map(|(m, d)| *m && *d > F::zero()).collect();
        std::borrow::Cow::Owned(Mask { width: mask.width, height: mask.height, data })
    } else {
        std::borrow::Cow::Borrowed(mask)
    };
    let dg = Some(Grad { image: &mut grad_depth, weight: F::lit(weights.depth) });
    let ld = match weights.depth_mode {
        DepthMode::Binocular => loss_depth_binocular(depth, target_depth, &depth_mask, dg)?,
        DepthMode::Monocular => loss_depth_monocular(depth, target_depth, &depth_mask, dg)?,
    };
    let w = F::lit(weights.spatial_tv);
    let tv = loss_spatial_tv(
        color,
        depth,
        Some((Grad { image: &mut grad_color, weight: w }, Grad { image: &mut grad_depth, weight: w })),
    )?;
    Ok(FrameLoss {
        terms: LossTerms { color: lc.value.as_f64(), depth: ld.value.as_f64(), spatial_tv: tv.as_f64(), temporal_tv: 0.0 },
        degenerate: lc.degenerate || ld.degenerate,
        grad_color,
        grad_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::{HexPlaneConfig, HexPlaneField};
    use crate::init::Aabb;
    use rand::SeedableRng;

    fn img(w: usize, h: usize, c: usize, data: Vec<f64>) -> Image<f64> {
        Image::from_vec(w, h, c, data).unwrap()
    }

    #[test]
    fn color_examples() {
        let a = Image::filled(4, 3, 3, 0.2f64);
        let m = Mask::all(4, 3);
        assert_eq!(loss_color(&a, &a, &m, None).unwrap().value, 0.0);
        let mut b = a.clone();
        *b.at_mut(1, 2, 1) += 0.5;
        let v = loss_color(&b, &a, &m, None).unwrap().value;
        assert!((v - 0.5 / 36.0).abs() < 1e-15);
        let none = Mask { width: 4, height: 3, data: vec![false; 12] };
        let t = loss_color(&b, &a, &none, None).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.degenerate);
    }

    #[test]
    fn binocular_examples() {
        let d = img(2, 1, 1, vec![2.0, 3.0]);
        let m = Mask::all(2, 1);
        assert_eq!(loss_depth_binocular(&d, &d, &m, None).unwrap().value, 0.0);
        let p = img(1, 1, 1, vec![1.0]);
        let t = img(1, 1, 1, vec![2.0]);
        let v = loss_depth_binocular(&p, &t, &Mask::all(1, 1), None).unwrap().value;
        assert!((v - 0.5).abs() < 1e-5);
        let mut m2 = Mask::all(2, 1);
        m2.data[0] = false;
        let p2 = img(2, 1, 1, vec![9.0, 3.0]);
        assert_eq!(loss_depth_binocular(&p2, &d, &m2, None).unwrap().value, 0.0);
        assert!(loss_depth_binocular(&img(1, 1, 1, vec![0.0]), &t, &Mask::all(1, 1), None).unwrap().value.is_finite());
    }

    #[test]
    fn monocular_examples() {
        let d = img(3, 2, 1, vec![1.0, 2.0, 4.0, 3.0, 0.5, 2.5]);
        let m = Mask::all(3, 2);
        assert!(loss_depth_monocular(&d, &d, &m, None).unwrap().value.abs() < 1e-6);
        let affine = img(3, 2, 1, d.data.iter().map(|v| 2.5 * v + 7.0).collect());
        assert!(loss_depth_monocular(&affine, &d, &m, None).unwrap().value.abs() < 1e-6);
        let neg = img(3, 2, 1, d.data.iter().map(|v| -v).collect());
        assert!((loss_depth_monocular(&neg, &d, &m, None).unwrap().value - 2.0).abs() < 1e-6);
        let flat = Image::filled(3, 2, 1, 4.0);
        let t = loss_depth_monocular(&flat, &d, &m, None).unwrap();
        assert_eq!((t.value, t.degenerate), (1.0, true));
        let mut one = Mask { width: 3, height: 2, data: vec![false; 6] };
        one.data[2] = true;
        assert!(loss_depth_monocular(&d, &d, &one, None).unwrap().degenerate);
    }

    #[test]
    fn tv_examples() {
        let flat = Image::filled(5, 4, 3, 0.7);
        let depth = Image::filled(5, 4, 1, 2.0);
        assert_eq!(loss_spatial_tv(&flat, &depth, None).unwrap(), 0.0);
        let two = img(2, 1, 3, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let d2 = Image::filled(2, 1, 1, 3.0);
        assert_eq!(loss_spatial_tv(&two, &d2, None).unwrap(), 1.0);
        let checker = img(4, 4, 1, (0..16).map(|i| ((i % 4 + i / 4) % 2) as f64).collect());
        assert!(total_variation(&checker, None) > total_variation(&Image::filled(4, 4, 1, 0.5), None));
        assert_eq!(total_variation(&Image::filled(1, 1, 3, 0.5), None), 0.0);
    }

    #[test]
    fn temporal_tv_examples() {
        let cfg = HexPlaneConfig { levels: 1, spatial_res: 2, time_res: 2, channels: 1, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut f: HexPlaneField<f64> = HexPlaneField::new(&cfg, Aabb::new([0.0; 3], [1.0; 3]), &mut rng).unwrap();
        assert_eq!(loss_temporal_tv(&f), 0.0);
        // Spatial planes never contribute.
        f.levels[0].planes[0].iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
        assert_eq!(loss_temporal_tv(&f), 0.0);
        // XT plane: time column 0 holds 0, column 1 holds 1.
        f.levels[0].planes[3] = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(loss_temporal_tv(&f), 1.0);
    }

    #[test]
    fn total_examples() {
        let terms = LossTerms { color: 0.1, depth: 0.2, spatial_tv: 1.0, temporal_tv: 2.0 };
        let zero = LossWeights { color: 0.0, depth: 0.0, spatial_tv: 0.0, temporal_tv: 0.0, ..Default::default() };
        assert_eq!(total_loss(terms, &zero).total, 0.0);
        let color_only = LossWeights { color: 1.0, ..zero.clone() };
        assert_eq!(total_loss(terms, &color_only).total, 0.1);
        assert!((total_loss(terms, &LossWeights::default()).total - 0.33).abs() < 1e-12);
        assert_eq!(LossWeights::for_mode(DepthMode::Monocular).depth, 0.1);
        assert!(LossWeights { spatial_tv: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Image::<f64>::new(3, 3, 3);
        let b = Image::<f64>::new(3, 2, 3);
        assert!(loss_color(&a, &b, &Mask::all(3, 3), None).is_err());
    }
}
