//! Image quality metrics on kept pixels.

use crate::image::{Image, Mask};
use crate::real::Real;

/// Reported when the error is exactly zero.
pub const PSNR_CAP: f64 = 100.0;

/// `10 log10(1 / MSE)` over kept pixels and channels, capped at 100 dB.
pub fn psnr<F: Real>(pred: &Image<F>, target: &Image<F>, mask: Option<&Mask>) -> f64 {
    let c = pred.channels;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.pixels() {
        if mask.is_some_and(|m| !m.data[i]) {
            continue;
        }
        for k in 0..c {
            let d = pred.data[i * c + k].as_f64() - target.data[i * c + k].as_f64();
            sum += d * d;
        }
        n += c;
    }
    if n == 0 || sum == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (n as f64 / sum).log10()).min(PSNR_CAP)
}

fn gaussian_window() -> [f64; 11] {
    let mut w = [0.0; 11];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * 1.5 * 1.5)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM over kept pixels and channels with an 11×11 Gaussian window
/// (σ = 1.5), `C1 = 0.01²` and `C2 = 0.03²` for a unit data range. The
/// window is truncated and renormalized at the image border.
pub fn ssim<F: Real>(pred: &Image<F>, target: &Image<F>, mask: Option<&Mask>) -> f64 {
    const C1: f64 = 0.01 * 0.01;
    const C2: f64 = 0.03 * 0.03;
    let (w, h, c) = (pred.width, pred.height, pred.channels);
    let win = gaussian_window();
    let mut total = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.is_some_and(|m| !m.get(x, y)) {
                continue;
            }
            for k in 0..c {
                let (mut sw, mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for (dy, wy) in win.iter().enumerate() {
                    let yy = y as isize + dy as isize - 5;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for (dx, wx) in win.iter().enumerate() {
                        let xx = x as isize + dx as isize - 5;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let i = (yy as usize * w + xx as usize) * c + k;
                        let (a, b) = (pred.data[i].as_f64(), target.data[i].as_f64());
                        let wt = wy * wx;
                        sw += wt;
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                }
                let (mx, my) = (mx / sw, my / sw);
                let vx = sxx / sw - mx * mx;
                let vy = syy / sw - my * my;
                let cxy = sxy / sw - mx * my;
                total += ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                n += 1;
            }
        }
    }
    if n == 0 {
        1.0
    } else {
        total / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image<f64> {
        let data = (0..20 * 15 * 3).map(|i| ((i * 37) % 101) as f64 / 100.0 * 0.8).collect();
        Image::from_vec(20, 15, 3, data).unwrap()
    }

    #[test]
    fn identical_images() {
        let a = ramp();
        assert_eq!(psnr(&a, &a, None), PSNR_CAP);
        assert_eq!(ssim(&a, &a, None), 1.0);
    }

    #[test]
    fn uniform_offset_gives_twenty_db() {
        let a = ramp();
        let b = Image { data: a.data.iter().map(|v| v + 0.1).collect(), ..a.clone() };
        assert!((psnr(&b, &a, None) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn masked_pixels_are_ignored() {
        let a = ramp();
        let mut b = a.clone();
        *b.at_mut(3, 4, 0) = 5.0;
        let mut m = Mask::all(20, 15);
        assert!(psnr(&b, &a, Some(&m)) < 50.0);
        m.data[4 * 20 + 3] = false;
        assert_eq!(psnr(&b, &a, Some(&m)), PSNR_CAP);
    }

    #[test]
    fn ssim_drops_with_noise() {
        let a = ramp();
        let b = Image { data: a.data.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.2 } else { -0.2 }).collect(), ..a.clone() };
        let s = ssim(&b, &a, None);
        assert!(s < 0.9 && s > -1.0);
    }
}
