use crate::math::{quat_normalize, quat_normalize_vjp, quat_to_rotation, quat_to_rotation_vjp, Mat3, Sym2, Vec2, Vec3, Vec4};
use crate::real::Real;

/// World-space covariance `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
/// The quaternion is normalized here, so it may be stored unnormalized.
pub fn build_covariance<F: Real>(q: &Vec4<F>, log_scale: &Vec3<F>) -> Mat3<F> {
    let r = quat_to_rotation(&quat_normalize(q));
    let s = log_scale.map(|v| v.exp());
    let s2 = s.map(|v| v * v);
    let mut out = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = r[i][0] * r[j][0] * s2[0] + r[i][1] * r[j][1] * s2[1] + r[i][2] * r[j][2] * s2[2];
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Back-propagates `dL/dΣ` to the raw quaternion and the log-scales.
pub fn covariance_vjp<F: Real>(q: &Vec4<F>, log_scale: &Vec3<F>, grad: &Mat3<F>) -> (Vec4<F>, Vec3<F>) {
    let qn = quat_normalize(q);
    let r = quat_to_rotation(&qn);
    let s = log_scale.map(|v| v.exp());
    // N = R S, Σ = N Nᵀ  =>  dL/dN = (G + Gᵀ) N
    let mut n = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            n[i][j] = r[i][j] * s[j];
        }
    }
    let mut gn = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = F::zero();
            for k in 0..3 {
                acc += (grad[i][k] + grad[k][i]) * n[k][j];
            }
            gn[i][j] = acc;
        }
    }
    let mut gr = [[F::zero(); 3]; 3];
    let mut gls = [F::zero(); 3];
    for j in 0..3 {
        let mut ds = F::zero();
        for i in 0..3 {
            gr[i][j] = gn[i][j] * s[j];
            ds += gn[i][j] * r[i][j];
        }
        gls[j] = ds * s[j];
    }
    let gq_unit = quat_to_rotation_vjp(&qn, &gr);
    (quat_normalize_vjp(q, &gq_unit), gls)
}

/// Unnormalized 2D Gaussian `exp(-½ Δᵀ Σ′⁻¹ Δ)`; `None` when `Σ′` is not
/// invertible (such splats are skipped by the rasterizer).
pub fn gaussian_weight<F: Real>(cov: &Sym2<F>, delta: &Vec2<F>) -> Option<F> {
    let conic = cov.inverse()?;
    Some((-F::half() * conic.quad(delta)).exp())
}
