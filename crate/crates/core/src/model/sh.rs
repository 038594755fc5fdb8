//! Real spherical harmonics up to degree 3, in the polynomial form used by
//! Gaussian splatting renderers.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::real::Real;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions `(L + 1)²` for degree `L`.
#[inline]
pub const fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// A validated SH degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShBasis {
    degree: usize,
}

impl ShBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > 3 {
            return Err(Error::Config(format!("SH degree {degree} outside 0..=3")));
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        sh_coeff_count(self.degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn evaluate<F: Real>(&self, dir: &Vec3<F>) -> [F; 16] {
        sh_basis(self.degree, dir)
    }
}

/// Basis values at unit direction `dir`; entries past `(L+1)²` are zero.
pub fn sh_basis<F: Real>(degree: usize, dir: &Vec3<F>) -> [F; 16] {
    let mut out = [F::zero(); 16];
    out[0] = F::lit(SH_C0);
    if degree == 0 {
        return out;
    }
    let [x, y, z] = *dir;
    let c1 = F::lit(SH_C1);
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = F::lit(2.0);
    out[4] = F::lit(SH_C2[0]) * xy;
    out[5] = F::lit(SH_C2[1]) * yz;
    out[6] = F::lit(SH_C2[2]) * (two * zz - xx - yy);
    out[7] = F::lit(SH_C2[3]) * xz;
    out[8] = F::lit(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return out;
    }
    let three = F::lit(3.0);
    let four = F::lit(4.0);
    out[9] = F::lit(SH_C3[0]) * y * (three * xx - yy);
    out[10] = F::lit(SH_C3[1]) * xy * z;
    out[11] = F::lit(SH_C3[2]) * y * (four * zz - xx - yy);
    out[12] = F::lit(SH_C3[3]) * z * (two * zz - three * xx - three * yy);
    out[13] = F::lit(SH_C3[4]) * x * (four * zz - xx - yy);
    out[14] = F::lit(SH_C3[5]) * z * (xx - yy);
    out[15] = F::lit(SH_C3[6]) * x * (xx - three * yy);
    out
}

/// Partial derivatives of each basis polynomial w.r.t. `(x, y, z)`, treating
/// the direction components as free variables.
pub fn sh_basis_grad<F: Real>(degree: usize, dir: &Vec3<F>) -> [Vec3<F>; 16] {
    let z0 = F::zero();
    let mut g = [[z0; 3]; 16];
    if degree == 0 {
        return g;
    }
    let [x, y, z] = *dir;
    let c1 = F::lit(SH_C1);
    g[1] = [z0, -c1, z0];
    g[2] = [z0, z0, c1];
    g[3] = [-c1, z0, z0];
    if degree == 1 {
        return g;
    }
    let two = F::lit(2.0);
    let c2 = SH_C2.map(F::lit);
    g[4] = [c2[0] * y, c2[0] * x, z0];
    g[5] = [z0, c2[1] * z, c2[1] * y];
    g[6] = [-two * c2[2] * x, -two * c2[2] * y, F::lit(4.0) * c2[2] * z];
    g[7] = [c2[3] * z, z0, c2[3] * x];
    g[8] = [two * c2[4] * x, -two * c2[4] * y, z0];
    if degree == 2 {
        return g;
    }
    let c3 = SH_C3.map(F::lit);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let three = F::lit(3.0);
    let four = F::lit(4.0);
    let six = F::lit(6.0);
    g[9] = [c3[0] * six * x * y, c3[0] * (three * xx - three * yy), z0];
    g[10] = [c3[1] * y * z, c3[1] * x * z, c3[1] * x * y];
    g[11] = [
        -c3[2] * two * x * y,
        c3[2] * (four * zz - xx - three * yy),
        c3[2] * F::lit(8.0) * y * z,
    ];
    g[12] = [
        -c3[3] * six * x * z,
        -c3[3] * six * y * z,
        c3[3] * (six * zz - three * xx - three * yy),
    ];
    g[13] = [
        c3[4] * (four * zz - three * xx - yy),
        -c3[4] * two * x * y,
        c3[4] * F::lit(8.0) * x * z,
    ];
    g[14] = [c3[5] * two * x * z, -c3[5] * two * y * z, c3[5] * (xx - yy)];
    g[15] = [c3[6] * (three * xx - three * yy), -c3[6] * six * x * y, z0];
    g
}

/// Basis contraction plus the +0.5 offset, before clamping.
pub fn eval_sh_raw<F: Real>(coeffs: &[F], dir: &Vec3<F>, degree: usize) -> [F; 3] {
    let basis = sh_basis(degree, dir);
    let mut c = [F::half(); 3];
    for (b, &yb) in basis.iter().enumerate().take(sh_coeff_count(degree)) {
        for ch in 0..3 {
            c[ch] += yb * coeffs[b * 3 + ch];
        }
    }
    c
}

/// View-dependent RGB color: `max(Σ_b Y_b(dir)·k_b + 0.5, 0)` per channel.
pub fn eval_sh<F: Real>(coeffs: &[F], dir: &Vec3<F>, degree: usize) -> Result<[F; 3]> {
    let basis = ShBasis::new(degree)?;
    if coeffs.len() != basis.len() * 3 {
        return Err(Error::Config(format!(
            "degree {degree} needs {} SH coefficients per channel, got {} values",
            basis.len(),
            coeffs.len()
        )));
    }
    Ok(eval_sh_raw(coeffs, dir, degree).map(|v| v.max(F::zero())))
}
