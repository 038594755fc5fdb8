//! Fixed-size vector and matrix helpers on plain arrays.
//!
//! Matrices are row-major `[[F; C]; R]`. Quaternions are `[w, x, y, z]`.

use crate::real::Real;

pub type Vec2<F> = [F; 2];
pub type Vec3<F> = [F; 3];
pub type Vec4<F> = [F; 4];
pub type Mat3<F> = [[F; 3]; 3];

#[inline]
pub fn dot3<F: Real>(a: &Vec3<F>, b: &Vec3<F>) -> F {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<F: Real>(a: &Vec3<F>) -> F {
    dot3(a, a).sqrt()
}

#[inline]
pub fn sub3<F: Real>(a: &Vec3<F>, b: &Vec3<F>) -> Vec3<F> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3<F: Real>(a: &Vec3<F>, b: &Vec3<F>) -> Vec3<F> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3<F: Real>(a: &Vec3<F>, s: F) -> Vec3<F> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn mat3_identity<F: Real>() -> Mat3<F> {
    let (o, z) = (F::one(), F::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

#[inline]
pub fn mat3_mul<F: Real>(a: &Mat3<F>, b: &Mat3<F>) -> Mat3<F> {
    let mut out = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
pub fn mat3_transpose<F: Real>(a: &Mat3<F>) -> Mat3<F> {
    [
        [a[0][0], a[1][0], a[2][0]],
        [a[0][1], a[1][1], a[2][1]],
        [a[0][2], a[1][2], a[2][2]],
    ]
}

#[inline]
pub fn mat3_vec<F: Real>(a: &Mat3<F>, v: &Vec3<F>) -> Vec3<F> {
    [dot3(&a[0], v), dot3(&a[1], v), dot3(&a[2], v)]
}

/// `aᵀ v`
#[inline]
pub fn mat3_tvec<F: Real>(a: &Mat3<F>, v: &Vec3<F>) -> Vec3<F> {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

pub fn mat3_det<F: Real>(a: &Mat3<F>) -> F {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

#[inline]
pub fn quat_norm<F: Real>(q: &Vec4<F>) -> F {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Normalizes a quaternion; the zero quaternion maps to identity.
#[inline]
pub fn quat_normalize<F: Real>(q: &Vec4<F>) -> Vec4<F> {
    let n = quat_norm(q);
    if n > F::zero() {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    } else {
        [F::one(), F::zero(), F::zero(), F::zero()]
    }
}

/// Back-propagates through `q / |q|`.
#[inline]
pub fn quat_normalize_vjp<F: Real>(q: &Vec4<F>, grad_unit: &Vec4<F>) -> Vec4<F> {
    let n = quat_norm(q);
    if n <= F::zero() {
        return [F::zero(); 4];
    }
    let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let d = u[0] * grad_unit[0] + u[1] * grad_unit[1] + u[2] * grad_unit[2] + u[3] * grad_unit[3];
    [
        (grad_unit[0] - u[0] * d) / n,
        (grad_unit[1] - u[1] * d) / n,
        (grad_unit[2] - u[2] * d) / n,
        (grad_unit[3] - u[3] * d) / n,
    ]
}

/// Hamilton product `a * b`.
pub fn quat_mul<F: Real>(a: &Vec4<F>, b: &Vec4<F>) -> Vec4<F> {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_rotation<F: Real>(q: &Vec4<F>) -> Mat3<F> {
    let [w, x, y, z] = *q;
    let two = F::lit(2.0);
    let one = F::one();
    [
        [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
        [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
        [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
    ]
}

/// Gradient of `L(R(q))` w.r.t. the (unit) quaternion components, given `dL/dR`.
pub fn quat_to_rotation_vjp<F: Real>(q: &Vec4<F>, g: &Mat3<F>) -> Vec4<F> {
    let [w, x, y, z] = *q;
    let two = F::lit(2.0);
    let dw = two
        * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = two
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - two * x * g[1][1] - w * g[1][2]
            + z * g[2][0]
            + w * g[2][1]
            - two * x * g[2][2]);
    let dy = two
        * (-two * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0]
            + z * g[2][1]
            - two * y * g[2][2]);
    let dz = two
        * (-two * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - two * z * g[1][1]
            + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    [dw, dx, dy, dz]
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2<F> {
    pub xx: F,
    pub xy: F,
    pub yy: F,
}

impl<F: Real> Sym2<F> {
    pub fn new(xx: F, xy: F, yy: F) -> Self {
        Self { xx, xy, yy }
    }

    pub fn zero() -> Self {
        Self::new(F::zero(), F::zero(), F::zero())
    }

    #[inline]
    pub fn det(&self) -> F {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Inverse, or `None` when the determinant is not strictly positive.
    #[inline]
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if !(det > F::zero()) || !det.is_finite() {
            return None;
        }
        let inv = F::one() / det;
        Some(Self::new(self.yy * inv, -self.xy * inv, self.xx * inv))
    }

    /// Quadratic form `dᵀ A d`.
    #[inline]
    pub fn quad(&self, d: &Vec2<F>) -> F {
        self.xx * d[0] * d[0] + F::lit(2.0) * self.xy * d[0] * d[1] + self.yy * d[1] * d[1]
    }

    #[inline]
    pub fn mul_vec(&self, d: &Vec2<F>) -> Vec2<F> {
        [self.xx * d[0] + self.xy * d[1], self.xy * d[0] + self.yy * d[1]]
    }

    /// `a * b * a` for symmetric `a`, `b`; the result is symmetric.
    pub fn sandwich(a: &Self, b: &Self) -> Self {
        // (a b)
        let ab00 = a.xx * b.xx + a.xy * b.xy;
        let ab01 = a.xx * b.xy + a.xy * b.yy;
        let ab10 = a.xy * b.xx + a.yy * b.xy;
        let ab11 = a.xy * b.xy + a.yy * b.yy;
        Self::new(
            ab00 * a.xx + ab01 * a.xy,
            ab00 * a.xy + ab01 * a.yy,
            ab10 * a.xy + ab11 * a.yy,
        )
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.xx += o.xx;
        self.xy += o.xy;
        self.yy += o.yy;
    }

    pub fn scaled(&self, s: F) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }
}
