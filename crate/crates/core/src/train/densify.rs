//! Clone, split and prune driven by accumulated position gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::Aabb;
use crate::math::{mat3_vec, quat_to_rotation};
use crate::model::CloudGrad;
use crate::real::{sigmoid, Real};

use super::Trainer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// Iterations between passes (only after warmup).
    pub interval: usize,
    /// Mean position-gradient norm above which a Gaussian is densified.
    pub grad_threshold: f64,
    /// Gaussians below this opacity are removed.
    pub prune_opacity: f64,
    /// Largest scale, as a fraction of the scene extent, that is cloned
    /// rather than split.
    pub percent_dense: f64,
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            interval: 100,
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            percent_dense: 0.01,
            max_gaussians: 200_000,
        }
    }
}

/// Running mean of position-gradient norms per Gaussian.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self { sum: vec![0.0; n], count: vec![0; n] }
    }

    pub fn accumulate<F: Real>(&mut self, grad: &CloudGrad<F>) {
        if self.sum.len() != grad.len() {
            *self = Self::new(grad.len());
        }
        for (i, g) in grad.positions.iter().enumerate() {
            let n = g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            if n > 0.0 {
                self.sum[i] += n;
                self.count[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        if self.count.get(i).copied().unwrap_or(0) == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// One adaptive density pass. New Gaussians get zeroed optimizer moments.
/// Returns `(cloned, split, pruned)`.
pub fn densify_and_prune<F: Real>(trainer: &mut Trainer<F>) -> Result<(usize, usize, usize)> {
    let cfg = trainer.config.densify.clone();
    let n = trainer.cloud.len();
    let extent = Aabb::from_points(&trainer.cloud.positions)
        .map(|b| b.extent().iter().cloned().fold(0.0, f64::max))
        .unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(trainer.config.seed ^ (trainer.iteration as u64).rotate_left(17));
    let source = trainer.cloud.clone();
    let mut keep = vec![true; n];
    let (mut cloned, mut split) = (0, 0);
    for i in 0..n {
        if trainer.cloud.len() + 2 > cfg.max_gaussians || trainer.densify_stats.mean(i) < cfg.grad_threshold {
            continue;
        }
        let scale = source.scale(i);
        let largest = scale.iter().map(|s| s.as_f64()).fold(0.0, f64::max);
        if largest <= cfg.percent_dense * extent {
            trainer.cloud.push_from(&source, i);
            cloned += 1;
        } else {
            let rot = quat_to_rotation(&crate::math::quat_normalize(&source.rotations[i]));
            for _ in 0..2 {
                let z = [0, 1, 2].map(|a| scale[a] * F::lit(normal(&mut rng)));
                let off = mat3_vec(&rot, &z);
                trainer.cloud.push_from(&source, i);
                let last = trainer.cloud.len() - 1;
                for a in 0..3 {
                    trainer.cloud.positions[last][a] += off[a];
                    trainer.cloud.log_scales[last][a] -= F::lit(1.6f64.ln());
                }
            }
            keep[i] = false;
            split += 1;
        }
    }
    let added = trainer.cloud.len() - n;
    keep.resize(trainer.cloud.len(), true);
    let prune = F::lit(cfg.prune_opacity);
    let mut pruned = 0;
    for (i, k) in keep.iter_mut().enumerate() {
        if *k && sigmoid(trainer.cloud.opacity_logits[i]) < prune {
            *k = false;
            pruned += 1;
        }
    }
    if !keep.iter().any(|k| *k) {
        return Err(Error::Init("density control would remove every Gaussian".into()));
    }
    let rows = [3, 4, 3, 1, trainer.cloud.coeffs_per_gaussian()];
    for (g, row) in trainer.groups.iter_mut().zip(rows) {
        g.extend_zeros(added * row);
        g.retain_rows(&keep, row);
    }
    trainer.cloud.retain(&keep);
    trainer.densify_stats = DensifyStats::new(trainer.cloud.len());
    Ok((cloned, split, pruned))
}
