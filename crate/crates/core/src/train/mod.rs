//! Optimization loop: canonical warmup, joint training with the deformation
//! field, evaluation and checkpoints.

mod adam;
mod checkpoint;
mod densify;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deform::{DeformCache, DeformConfig, DeformationField};
use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::model::{Camera, CloudGrad, GaussianCloud};
use crate::objectives::{frame_losses, total_loss, LossReport, LossTerms, LossWeights};
use crate::raster::{self, Accumulation, RasterConfig, RenderOutput};
use crate::real::Real;

pub use adam::{Adam, AdamGroup};
pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use densify::{densify_and_prune, DensifyConfig, DensifyStats};
pub use metrics::{psnr, ssim, PSNR_CAP};

/// Learning-rate multipliers applied to the base rate, per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrMultipliers {
    /// Position multiplier at iteration 0, decaying exponentially to
    /// `position_final` at the last iteration.
    pub position: f64,
    pub position_final: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub sh: f64,
    pub encoder: f64,
    pub decoder: f64,
}

impl Default for LrMultipliers {
    fn default() -> Self {
        Self {
            position: 0.1,
            position_final: 0.01,
            rotation: 1.0,
            scale: 1.0,
            opacity: 1.0,
            sh: 1.0,
            encoder: 1.0,
            decoder: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub warmup_iters: usize,
    pub total_iters: usize,
    pub learning_rate: f64,
    pub lr: LrMultipliers,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Fixed-order gradient reductions; with a fixed thread count the whole
    /// run is bit-reproducible.
    pub deterministic: bool,
    pub densify: DensifyConfig,
    /// Evaluate on the test split every this many iterations (0 = never).
    pub eval_interval: usize,
    /// Save a checkpoint every this many iterations (0 = only at the end).
    pub checkpoint_interval: usize,
    pub loss: LossWeights,
    pub raster: RasterConfig,
    pub deform: DeformConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            total_iters: 4000,
            learning_rate: 1.6e-3,
            lr: LrMultipliers::default(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-15,
            seed: 0,
            deterministic: true,
            densify: DensifyConfig::default(),
            eval_interval: 0,
            checkpoint_interval: 0,
            loss: LossWeights::default(),
            raster: RasterConfig::default(),
            deform: DeformConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters >= self.total_iters {
            return Err(Error::Config(format!(
                "warmup_iters ({}) must be below total_iters ({})",
                self.warmup_iters, self.total_iters
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let l = &self.lr;
        let mults = [l.position, l.position_final, l.rotation, l.scale, l.opacity, l.sh, l.encoder, l.decoder];
        if mults.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::Config("learning-rate multipliers must be finite and non-negative".into()));
        }
        if (l.position == 0.0) != (l.position_final == 0.0) {
            return Err(Error::Config("position multipliers must both be zero or both positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        self.loss.validate()?;
        self.raster.validate()?;
        self.deform.hexplane.validate()
    }

    /// Raster settings with the accumulation mode implied by `deterministic`.
    pub fn raster_config(&self) -> RasterConfig {
        let mut r = self.raster.clone();
        r.accumulation = if self.deterministic { Accumulation::Deterministic } else { Accumulation::Fast };
        r
    }

    /// Position learning rate at `iteration` (log-linear decay).
    pub fn position_lr(&self, iteration: usize) -> f64 {
        let (a, b) = (self.lr.position, self.lr.position_final);
        if a == 0.0 {
            return 0.0;
        }
        let s = (iteration as f64 / self.total_iters as f64).clamp(0.0, 1.0);
        self.learning_rate * (a.ln() * (1.0 - s) + b.ln() * s).exp()
    }
}

/// Indices of a shuffled pass over `count` items, derived from the seed and
/// epoch alone.
pub fn epoch_order(seed: u64, epoch: u64, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}

pub const GROUP_NAMES: [&str; 7] = ["position", "rotation", "scale", "opacity", "sh", "encoder", "decoder"];

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<F> {
    pub config: TrainConfig,
    pub cloud: GaussianCloud<F>,
    pub field: DeformationField<F>,
    pub adam: Adam,
    /// One group per entry of [`GROUP_NAMES`].
    pub groups: Vec<AdamGroup<F>>,
    pub iteration: usize,
    pub densify_stats: DensifyStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub frame: usize,
    pub time: f64,
    pub loss: LossReport,
    pub gaussians: usize,
    pub deformed: bool,
}

impl StepReport {
    pub const CSV_HEADER: &'static str = "iter,frame,time,color,depth,spatial_tv,temporal_tv,total,gaussians,deformed";

    pub fn csv_row(&self) -> String {
        let t = &self.loss.terms;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.frame,
            self.time,
            t.color,
            t.depth,
            t.spatial_tv,
            t.temporal_tv,
            self.loss.total,
            self.gaussians,
            u8::from(self.deformed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub time: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_unmasked: f64,
    pub ssim_unmasked: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_psnr_unmasked: f64,
    pub mean_ssim_unmasked: f64,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let n = frames.len().max(1) as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
        Self {
            mean_psnr: mean(|m| m.psnr),
            mean_ssim: mean(|m| m.ssim),
            mean_psnr_unmasked: mean(|m| m.psnr_unmasked),
            mean_ssim_unmasked: mean(|m| m.ssim_unmasked),
            frames,
        }
    }
}

fn cloud_slices<F: Real>(c: &mut GaussianCloud<F>) -> [&mut [F]; 5] {
    [
        c.positions.as_flattened_mut(),
        c.rotations.as_flattened_mut(),
        c.log_scales.as_flattened_mut(),
        &mut c.opacity_logits,
        &mut c.sh_coeffs,
    ]
}

fn grad_slices<F: Real>(g: &CloudGrad<F>) -> [&[F]; 5] {
    [g.positions.as_flattened(), g.rotations.as_flattened(), g.log_scales.as_flattened(), &g.opacity_logits, &g.sh_coeffs]
}

impl<F: Real> Trainer<F> {
    /// Fresh optimizer state around an initialized cloud.
    pub fn new(config: TrainConfig, cloud: GaussianCloud<F>) -> Result<Self> {
        config.validate()?;
        cloud.validate()?;
        let field = DeformationField::for_cloud(&config.deform, &cloud, config.seed)?;
        Self::from_parts(config, cloud, field)
    }

    pub fn from_parts(config: TrainConfig, cloud: GaussianCloud<F>, field: DeformationField<F>) -> Result<Self> {
        config.validate()?;
        let n = cloud.len();
        let sizes = [
            3 * n,
            4 * n,
            3 * n,
            n,
            cloud.sh_coeffs.len(),
            field.encoder.param_count(),
            field.decoders.param_count(),
        ];
        let groups = GROUP_NAMES.iter().zip(sizes).map(|(name, len)| AdamGroup::new(name, len)).collect();
        let adam = Adam { beta1: config.adam_beta1, beta2: config.adam_beta2, eps: config.adam_eps };
        Ok(Self { config, cloud, field, adam, groups, iteration: 0, densify_stats: DensifyStats::new(n) })
    }

    pub fn in_warmup(&self) -> bool {
        self.iteration < self.config.warmup_iters
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.total_iters
    }

    /// Training frame used at the current iteration, as an index into `train`.
    pub fn next_frame(&self, train: &[usize]) -> usize {
        let n = train.len();
        let order = epoch_order(self.config.seed, (self.iteration / n) as u64, n);
        train[order[self.iteration % n]]
    }

    /// The cloud at time `t`, with the deformation applied.
    pub fn deformed(&self, t: F) -> Result<GaussianCloud<F>> {
        Ok(self.field.deform(&self.cloud, t)?.0)
    }

    pub fn render(&self, camera: &Camera<F>, t: F) -> Result<RenderOutput<F>> {
        let cloud = self.deformed(t)?;
        Ok(raster::forward(&cloud, camera, &self.config.raster_config()).0)
    }

    /// One optimization step on `frame`.
    pub fn train_step(&mut self, frame: &FrameRecord<F>) -> Result<StepReport> {
        let warm = self.in_warmup();
        let raster_cfg = self.config.raster_config();
        let (cloud_t, cache): (std::borrow::Cow<GaussianCloud<F>>, Option<DeformCache<F>>) = if warm {
            (std::borrow::Cow::Borrowed(&self.cloud), None)
        } else {
            let (c, cache) = self.field.deform(&self.cloud, frame.time)?;
            (std::borrow::Cow::Owned(c), Some(cache))
        };
        let (out, state) = raster::forward(&cloud_t, &frame.camera, &raster_cfg);
        let weights = &self.config.loss;
        let fl = frame_losses(&out.color, &out.depth, &frame.image, &frame.depth, &frame.mask, weights)?;
        let temporal = if warm { 0.0 } else { self.field.encoder.temporal_tv().as_f64() };
        let terms = LossTerms { temporal_tv: temporal, ..fl.terms };
        let mut report = total_loss(terms, weights);
        report.degenerate = fl.degenerate;
        if !report.total.is_finite() {
            return Err(Error::NonFinite { iteration: self.iteration, detail: format!("loss terms {terms:?}") });
        }
        let grad_t = raster::backward(&cloud_t, &frame.camera, &state, &fl.grad_color, &fl.grad_depth)?;
        let (grad, field_grad) = match cache {
            None => (grad_t, None),
            Some(cache) => {
                let mut fg = self.field.zeros_like();
                let g = self.field.backward(&cache, &grad_t, &mut fg)?;
                self.field.encoder.temporal_tv_backward(F::lit(weights.temporal_tv), &mut fg.encoder);
                (g, Some(fg))
            }
        };
        if !grad.is_finite() || field_grad.as_ref().is_some_and(|g| g.slices().iter().any(|s| s.iter().any(|v| !v.is_finite()))) {
            return Err(Error::NonFinite { iteration: self.iteration, detail: "non-finite gradient".into() });
        }
        if self.config.densify.enabled {
            self.densify_stats.accumulate(&grad);
        }
        self.apply_gradients(&grad, field_grad.as_ref());
        let result = StepReport {
            iteration: self.iteration,
            frame: frame.index,
            time: frame.time.as_f64(),
            loss: report,
            gaussians: self.cloud.len(),
            deformed: !warm,
        };
        self.iteration += 1;
        if self.config.densify.enabled && !self.in_warmup() && self.iteration.is_multiple_of(self.config.densify.interval) {
            densify_and_prune(self)?;
        }
        Ok(result)
    }

    fn apply_gradients(&mut self, grad: &CloudGrad<F>, field_grad: Option<&DeformationField<F>>) {
        let base = self.config.learning_rate;
        let l = &self.config.lr;
        let rates = [self.config.position_lr(self.iteration), base * l.rotation, base * l.scale, base * l.opacity, base * l.sh];
        let params = cloud_slices(&mut self.cloud);
        let grads = grad_slices(grad);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            self.adam.step(&mut self.groups[k], vec![p], vec![g], rates[k]);
        }
        self.cloud.normalize_rotations();
        if let Some(fg) = field_grad {
            let (enc_lr, dec_lr) = (base * l.encoder, base * l.decoder);
            self.adam.step(&mut self.groups[5], self.field.encoder.slices_mut(), fg.encoder.slices(), enc_lr);
            self.adam.step(&mut self.groups[6], self.field.decoders.slices_mut(), fg.decoders.slices(), dec_lr);
        }
    }

    /// Renders each listed frame at its time and scores it.
    pub fn evaluate(&self, frames: &[FrameRecord<F>], indices: &[usize]) -> Result<EvalReport> {
        if indices.is_empty() {
            return Err(Error::Config("evaluation split is empty".into()));
        }
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let f = &frames[i];
            let r = self.render(&f.camera, f.time)?;
            out.push(FrameMetrics {
                index: f.index,
                time: f.time.as_f64(),
                psnr: psnr(&r.color, &f.image, Some(&f.mask)),
                ssim: ssim(&r.color, &f.image, Some(&f.mask)),
                psnr_unmasked: psnr(&r.color, &f.image, None),
                ssim_unmasked: ssim(&r.color, &f.image, None),
            });
        }
        Ok(EvalReport::from_frames(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_rate_decays_log_linearly() {
        let c = TrainConfig::default();
        assert!((c.position_lr(0) - 1.6e-4).abs() < 1e-18);
        assert!((c.position_lr(4000) - 1.6e-5).abs() < 1e-18);
        assert!((c.position_lr(2000) - 1.6e-3 * (0.1f64 * 0.01).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { warmup_iters: 4000, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn epochs_are_permutations() {
        let a = epoch_order(7, 0, 21);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..21).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(7, 0, 21));
        assert_ne!(a, epoch_order(7, 1, 21));
    }
}
