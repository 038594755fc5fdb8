use crate::error::{Error, Result};
use crate::math::{quat_normalize, Vec3, Vec4};
use crate::real::{sigmoid, Real};

use super::sh::sh_coeff_count;

/// Optimizable per-Gaussian attributes.
///
/// Scales are stored as logs and opacities as logits; quaternions are stored
/// raw and normalized wherever a rotation is needed. SH coefficients are laid
/// out per Gaussian as `B × 3` (basis-major, RGB minor).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud<F> {
    pub positions: Vec<Vec3<F>>,
    pub rotations: Vec<Vec4<F>>,
    pub log_scales: Vec<Vec3<F>>,
    pub opacity_logits: Vec<F>,
    pub sh_coeffs: Vec<F>,
    pub sh_degree: usize,
}

impl<F: Real> GaussianCloud<F> {
    /// `n` Gaussians at the origin with unit scale, identity rotation,
    /// opacity 0.5 and zero SH.
    pub fn new(n: usize, sh_degree: usize) -> Self {
        let b = sh_coeff_count(sh_degree);
        Self {
            positions: vec![[F::zero(); 3]; n],
            rotations: vec![[F::one(), F::zero(), F::zero(), F::zero()]; n],
            log_scales: vec![[F::zero(); 3]; n],
            opacity_logits: vec![F::zero(); n],
            sh_coeffs: vec![F::zero(); n * b * 3],
            sh_degree,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn coeffs_per_gaussian(&self) -> usize {
        sh_coeff_count(self.sh_degree) * 3
    }

    #[inline]
    pub fn sh(&self, i: usize) -> &[F] {
        let s = self.coeffs_per_gaussian();
        &self.sh_coeffs[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn sh_mut(&mut self, i: usize) -> &mut [F] {
        let s = self.coeffs_per_gaussian();
        &mut self.sh_coeffs[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn opacity(&self, i: usize) -> F {
        sigmoid(self.opacity_logits[i])
    }

    #[inline]
    pub fn scale(&self, i: usize) -> Vec3<F> {
        self.log_scales[i].map(|s| s.exp())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Shape("Gaussian cloud must not be empty".into()));
        }
        if self.sh_degree > 3 {
            return Err(Error::Config(format!("SH degree {} outside 0..=3", self.sh_degree)));
        }
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.sh_coeffs.len() != n * self.coeffs_per_gaussian()
        {
            return Err(Error::Shape("Gaussian attribute arrays disagree in length".into()));
        }
        Ok(())
    }

    /// Renormalizes every quaternion to unit length.
    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            *q = quat_normalize(q);
        }
    }

    /// Keeps the Gaussians whose flag is `true`, in order.
    pub fn retain(&mut self, keep: &[bool]) {
        let s = self.coeffs_per_gaussian();
        let mut sh = Vec::with_capacity(self.sh_coeffs.len());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                sh.extend_from_slice(&self.sh_coeffs[i * s..(i + 1) * s]);
            }
        }
        self.sh_coeffs = sh;
        let mut it = keep.iter();
        self.positions.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.rotations.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.log_scales.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.opacity_logits.retain(|_| *it.next().unwrap());
    }

    /// Appends a copy of Gaussian `i` of `other`.
    pub fn push_from(&mut self, other: &Self, i: usize) {
        self.positions.push(other.positions[i]);
        self.rotations.push(other.rotations[i]);
        self.log_scales.push(other.log_scales[i]);
        self.opacity_logits.push(other.opacity_logits[i]);
        self.sh_coeffs.extend_from_slice(other.sh(i));
    }

    pub fn cast<G: Real>(&self) -> GaussianCloud<G> {
        let c = |v: &F| G::lit(v.as_f64());
        GaussianCloud {
            positions: self.positions.iter().map(|p| p.each_ref().map(c)).collect(),
            rotations: self.rotations.iter().map(|p| p.each_ref().map(c)).collect(),
            log_scales: self.log_scales.iter().map(|p| p.each_ref().map(c)).collect(),
            opacity_logits: self.opacity_logits.iter().map(c).collect(),
            sh_coeffs: self.sh_coeffs.iter().map(c).collect(),
            sh_degree: self.sh_degree,
        }
    }
}

/// Gradients with the same layout as [`GaussianCloud`].
#[derive(Debug, Clone, PartialEq)]
pub struct CloudGrad<F> {
    pub positions: Vec<Vec3<F>>,
    pub rotations: Vec<Vec4<F>>,
    pub log_scales: Vec<Vec3<F>>,
    pub opacity_logits: Vec<F>,
    pub sh_coeffs: Vec<F>,
}

impl<F: Real> CloudGrad<F> {
    pub fn zeros(n: usize, sh_degree: usize) -> Self {
        Self {
            positions: vec![[F::zero(); 3]; n],
            rotations: vec![[F::zero(); 4]; n],
            log_scales: vec![[F::zero(); 3]; n],
            opacity_logits: vec![F::zero(); n],
            sh_coeffs: vec![F::zero(); n * sh_coeff_count(sh_degree) * 3],
        }
    }

    pub fn zeros_like(cloud: &GaussianCloud<F>) -> Self {
        Self::zeros(cloud.len(), cloud.sh_degree)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// All entries in a fixed order: positions, rotations, log-scales,
    /// opacity logits, SH.
    pub fn flat(&self) -> Vec<F> {
        let mut v = Vec::new();
        v.extend(self.positions.as_flattened());
        v.extend(self.rotations.as_flattened());
        v.extend(self.log_scales.as_flattened());
        v.extend(&self.opacity_logits);
        v.extend(&self.sh_coeffs);
        v
    }

    pub fn is_all_zero(&self) -> bool {
        self.flat().iter().all(|v| *v == F::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}
