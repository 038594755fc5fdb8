use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mat3_det, mat3_mul, mat3_transpose, mat3_tvec, mat3_vec, Mat3, Vec3};
use crate::real::Real;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<F> {
    pub fx: F,
    pub fy: F,
    pub cx: F,
    pub cy: F,
}

/// Pinhole camera with a rigid camera-to-world pose.
///
/// Pixel `(u, v)` samples the image plane at exactly `(u, v)`: integer
/// coordinates are pixel centers, and the principal point `(cx, cy)` is where
/// the optical axis lands.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<F> {
    pub intrinsics: Intrinsics<F>,
    /// Rotation block of the camera-to-world transform.
    pub rotation: Mat3<F>,
    /// Camera center in world coordinates.
    pub translation: Vec3<F>,
    pub width: usize,
    pub height: usize,
    pub near: F,
    pub far: F,
}

impl<F: Real> Camera<F> {
    pub fn new(
        intrinsics: Intrinsics<F>,
        cam_to_world: [[F; 4]; 4],
        width: usize,
        height: usize,
        near: F,
        far: F,
    ) -> Result<Self> {
        let rotation = [
            [cam_to_world[0][0], cam_to_world[0][1], cam_to_world[0][2]],
            [cam_to_world[1][0], cam_to_world[1][1], cam_to_world[1][2]],
            [cam_to_world[2][0], cam_to_world[2][1], cam_to_world[2][2]],
        ];
        let translation = [cam_to_world[0][3], cam_to_world[1][3], cam_to_world[2][3]];
        let bottom = cam_to_world[3];
        let tol = F::lit(1e-4);
        if (bottom[0].abs() + bottom[1].abs() + bottom[2].abs() + (bottom[3] - F::one()).abs()) > tol {
            return Err(Error::Camera("pose bottom row must be [0, 0, 0, 1]".into()));
        }
        let cam = Self { intrinsics, rotation, translation, width, height, near, far };
        cam.validate()?;
        Ok(cam)
    }

    /// A camera at the world origin looking down +z.
    pub fn identity_pose(intrinsics: Intrinsics<F>, width: usize, height: usize, near: F, far: F) -> Result<Self> {
        let (o, z) = (F::one(), F::zero());
        Self::new(
            intrinsics,
            [[o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]],
            width,
            height,
            near,
            far,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > F::zero() && k.fy > F::zero()) {
            return Err(Error::Camera("focal lengths must be positive".into()));
        }
        if !(self.near < self.far) || self.near < F::zero() {
            return Err(Error::Camera("require 0 <= near < far".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Camera("image size must be non-zero".into()));
        }
        let rtr = mat3_mul(&mat3_transpose(&self.rotation), &self.rotation);
        let tol = F::lit(1e-4);
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let e = if i == j { F::one() } else { F::zero() };
                if (*v - e).abs() > tol {
                    return Err(Error::Camera("pose rotation is not orthonormal".into()));
                }
            }
        }
        if (mat3_det(&self.rotation) - F::one()).abs() > tol {
            return Err(Error::Camera("pose rotation must have determinant +1".into()));
        }
        Ok(())
    }

    /// World-to-camera rotation `W` (the transpose of the pose rotation).
    #[inline]
    pub fn view_rotation(&self) -> Mat3<F> {
        mat3_transpose(&self.rotation)
    }

    #[inline]
    pub fn center(&self) -> Vec3<F> {
        self.translation
    }

    /// Maps a world point into camera coordinates.
    #[inline]
    pub fn world_to_camera(&self, p: &Vec3<F>) -> Vec3<F> {
        let d = [p[0] - self.translation[0], p[1] - self.translation[1], p[2] - self.translation[2]];
        mat3_tvec(&self.rotation, &d)
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vec3<F>) -> Vec3<F> {
        let r = mat3_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Perspective projection of a world point: `(u, v, depth)`.
    pub fn project(&self, p: &Vec3<F>) -> (F, F, F) {
        let c = self.world_to_camera(p);
        let k = &self.intrinsics;
        (k.fx * c[0] / c[2] + k.cx, k.fy * c[1] / c[2] + k.cy, c[2])
    }

    /// Back-projects pixel `(u, v)` at camera depth `depth`: `T · depth · K⁻¹ (u, v, 1)ᵀ`.
    pub fn unproject(&self, u: F, v: F, depth: F) -> Vec3<F> {
        let k = &self.intrinsics;
        let cam = [(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth];
        self.camera_to_world(&cam)
    }

    pub fn cam_to_world_matrix(&self) -> [[F; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        let (o, z) = (F::one(), F::zero());
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [z, z, z, o],
        ]
    }

    pub fn cast<G: Real>(&self) -> Camera<G> {
        let c = |v: F| G::lit(v.as_f64());
        Camera {
            intrinsics: Intrinsics {
                fx: c(self.intrinsics.fx),
                fy: c(self.intrinsics.fy),
                cx: c(self.intrinsics.cx),
                cy: c(self.intrinsics.cy),
            },
            rotation: self.rotation.map(|row| row.map(c)),
            translation: self.translation.map(c),
            width: self.width,
            height: self.height,
            near: c(self.near),
            far: c(self.far),
        }
    }
}
