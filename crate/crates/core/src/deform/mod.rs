//! Time-dependent deformation of canonical Gaussians.
//!
//! An encoder turns a canonical position and a time into a latent feature;
//! four decoder heads turn that feature into additive deltas for position,
//! rotation, log-scale and opacity logit. SH coefficients are not deformed.

mod decoders;
mod hexplane;
mod mlp;
mod positional;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::Aabb;
use crate::model::{CloudGrad, GaussianCloud};
use crate::real::Real;

pub use decoders::{DecodeCache, Decoders, DELTA_DIM, HEAD_OUTPUTS};
pub use hexplane::{HexCache, HexLevel, HexPlaneConfig, HexPlaneField, PLANE_AXES, PLANE_PAIRS};
pub use mlp::{Linear, Mlp, MlpCache};
pub use positional::{encoding_dim, PositionalCache, PositionalMlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Hexplane,
    /// Positional-encoding MLP sized to the HexPlane parameter budget.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformConfig {
    pub encoder: EncoderKind,
    pub hexplane: HexPlaneConfig,
    pub decoder_hidden: usize,
    pub decoder_layers: usize,
    pub shared_trunk: bool,
    /// Fraction of the largest extent added around the initial cloud.
    pub bounds_padding: f64,
    pub pe_frequencies: usize,
    pub pe_layers: usize,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Hexplane,
            hexplane: HexPlaneConfig::default(),
            decoder_hidden: 64,
            decoder_layers: 2,
            shared_trunk: false,
            bounds_padding: 0.1,
            pe_frequencies: 6,
            pe_layers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder<F> {
    Hexplane(HexPlaneField<F>),
    Mlp(PositionalMlp<F>),
}

pub enum EncoderCache<F> {
    Hexplane(HexCache<F>),
    Mlp(PositionalCache<F>),
}

impl<F: Real> Encoder<F> {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Self::Hexplane(_) => EncoderKind::Hexplane,
            Self::Mlp(_) => EncoderKind::Mlp,
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Self::Hexplane(h) => h.bounds,
            Self::Mlp(m) => m.bounds,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Self::Hexplane(h) => h.feature_dim(),
            Self::Mlp(m) => m.outputs(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Hexplane(h) => h.param_count(),
            Self::Mlp(m) => m.param_count(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Self::Hexplane(h) => Self::Hexplane(h.zeros_like()),
            Self::Mlp(m) => Self::Mlp(m.zeros_like()),
        }
    }

    pub fn slices(&self) -> Vec<&[F]> {
        match self {
            Self::Hexplane(h) => h.slices(),
            Self::Mlp(m) => m.net.slices(),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        match self {
            Self::Hexplane(h) => h.slices_mut(),
            Self::Mlp(m) => m.net.slices_mut(),
        }
    }

    pub fn query_batch(&self, positions: &[[F; 3]], t: F) -> (Array2<F>, EncoderCache<F>) {
        match self {
            Self::Hexplane(h) => {
                let (f, c) = h.query_batch(positions, t);
                (f, EncoderCache::Hexplane(c))
            }
            Self::Mlp(m) => {
                let (f, c) = m.query_batch(positions, t);
                (f, EncoderCache::Mlp(c))
            }
        }
    }

    pub fn backward(&self, cache: &EncoderCache<F>, dfeat: &Array2<F>, grad: &mut Self) -> Result<Vec<[F; 3]>> {
        match (self, cache, grad) {
            (Self::Hexplane(h), EncoderCache::Hexplane(c), Self::Hexplane(g)) => h.backward(c, dfeat, g),
            (Self::Mlp(m), EncoderCache::Mlp(c), Self::Mlp(g)) => m.backward(c, dfeat, g),
            _ => Err(Error::StateMismatch("encoder kind differs between model, cache and gradient".into())),
        }
    }

    /// Temporal smoothness of the time planes; zero for the MLP encoder.
    pub fn temporal_tv(&self) -> F {
        match self {
            Self::Hexplane(h) => h.temporal_tv(),
            Self::Mlp(_) => F::zero(),
        }
    }

    pub fn temporal_tv_backward(&self, weight: F, grad: &mut Self) {
        if let (Self::Hexplane(h), Self::Hexplane(g)) = (self, grad) {
            h.temporal_tv_backward(weight, g);
        }
    }
}

/// Encoder plus decoder heads.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField<F> {
    pub encoder: Encoder<F>,
    pub decoders: Decoders<F>,
}

/// Forward values needed by [`DeformationField::backward`].
pub struct DeformCache<F> {
    pub time: F,
    pub count: usize,
    encoder: EncoderCache<F>,
    decode: DecodeCache<F>,
}

impl<F: Real> DeformCache<F> {
    /// ReLU on/off state of every hidden unit, for detecting kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = self.decode.activation_pattern();
        if let EncoderCache::Mlp(c) = &self.encoder {
            out.extend(c.activation_pattern());
        }
        out
    }

    /// Number of queries whose time had to be clamped into `[0, 1]`.
    pub fn time_clamps(&self) -> usize {
        match &self.encoder {
            EncoderCache::Hexplane(c) => c.time_clamps,
            EncoderCache::Mlp(_) => 0,
        }
    }
}

impl<F: Real> DeformationField<F> {
    /// Builds a field around `bounds` (already padded by the caller or via
    /// [`DeformationField::for_cloud`]).
    pub fn new(config: &DeformConfig, bounds: Aabb, seed: u64) -> Result<Self> {
        config.hexplane.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = config.hexplane.feature_dim();
        let encoder = match config.encoder {
            EncoderKind::Hexplane => Encoder::Hexplane(HexPlaneField::new(&config.hexplane, bounds, &mut rng)?),
            EncoderKind::Mlp => {
                let width = PositionalMlp::<F>::width_for_budget(
                    config.pe_frequencies,
                    config.pe_layers,
                    dim,
                    config.hexplane.param_count(),
                );
                Encoder::Mlp(PositionalMlp::new(bounds, config.pe_frequencies, width, config.pe_layers, dim, &mut rng)?)
            }
        };
        let decoders = Decoders::new(dim, config.decoder_hidden, config.decoder_layers, config.shared_trunk, &mut rng);
        Ok(Self { encoder, decoders })
    }

    /// Field whose box is the cloud's bounding box grown by the configured padding.
    pub fn for_cloud(config: &DeformConfig, cloud: &GaussianCloud<F>, seed: u64) -> Result<Self> {
        let bounds = Aabb::from_points(&cloud.positions)
            .ok_or_else(|| Error::Init("cannot bound an empty cloud".into()))?
            .expanded(config.bounds_padding);
        let mut bounds = bounds;
        // A flat cloud still needs a non-degenerate box.
        let pad = bounds.extent().iter().cloned().fold(0.0, f64::max).max(1e-3) * 0.5;
        for a in 0..3 {
            if bounds.max[a] - bounds.min[a] <= 0.0 {
                bounds.min[a] -= pad;
                bounds.max[a] += pad;
            }
        }
        Self::new(config, bounds, seed)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoders.param_count()
    }

    pub fn zeros_like(&self) -> Self {
        Self { encoder: self.encoder.zeros_like(), decoders: self.decoders.zeros_like() }
    }

    pub fn slices(&self) -> Vec<&[F]> {
        let mut s = self.encoder.slices();
        s.extend(self.decoders.slices());
        s
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut s = self.encoder.slices_mut();
        s.extend(self.decoders.slices_mut());
        s
    }

    /// Per-Gaussian deltas at time `t`, `N × 11`.
    pub fn deltas(&self, cloud: &GaussianCloud<F>, t: F) -> Result<(Array2<F>, DeformCache<F>)> {
        let (features, encoder) = self.encoder.query_batch(&cloud.positions, t);
        let (deltas, decode) = self.decoders.decode(features)?;
        Ok((deltas, DeformCache { time: t, count: cloud.len(), encoder, decode }))
    }

    /// The cloud at time `t`. The rotation is stored as `q + Δq` and, like
    /// every stored rotation, normalized where it is used.
    pub fn deform(&self, cloud: &GaussianCloud<F>, t: F) -> Result<(GaussianCloud<F>, DeformCache<F>)> {
        let (d, cache) = self.deltas(cloud, t)?;
        let mut out = cloud.clone();
        for (i, row) in d.rows().into_iter().enumerate() {
            for a in 0..3 {
                out.positions[i][a] += row[a];
                out.log_scales[i][a] += row[7 + a];
            }
            for a in 0..4 {
                out.rotations[i][a] += row[3 + a];
            }
            out.opacity_logits[i] += row[10];
        }
        Ok((out, cache))
    }

    /// Chains gradients on the deformed cloud back to the canonical cloud and
    /// accumulates field gradients into `grad`.
    pub fn backward(&self, cache: &DeformCache<F>, upstream: &CloudGrad<F>, grad: &mut Self) -> Result<CloudGrad<F>> {
        let n = cache.count;
        if upstream.len() != n {
            return Err(Error::StateMismatch(format!("{} upstream gradients for {} Gaussians", upstream.len(), n)));
        }
        let mut dd = Array2::zeros((n, DELTA_DIM));
        for (i, mut row) in dd.rows_mut().into_iter().enumerate() {
            for a in 0..3 {
                row[a] = upstream.positions[i][a];
                row[7 + a] = upstream.log_scales[i][a];
            }
            for a in 0..4 {
                row[3 + a] = upstream.rotations[i][a];
            }
            row[10] = upstream.opacity_logits[i];
        }
        let dfeat = self.decoders.backward(&cache.decode, &dd, &mut grad.decoders)?;
        let dpos = self.encoder.backward(&cache.encoder, &dfeat, &mut grad.encoder)?;
        let mut out = upstream.clone();
        for (p, d) in out.positions.iter_mut().zip(dpos) {
            for a in 0..3 {
                p[a] += d[a];
            }
        }
        Ok(out)
    }
}

/// Deformed copy of `cloud` at time `t`.
pub fn deform<F: Real>(cloud: &GaussianCloud<F>, field: &DeformationField<F>, t: F) -> Result<GaussianCloud<F>> {
    Ok(field.deform(cloud, t)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::quat_normalize;

    fn cloud() -> GaussianCloud<f64> {
        let mut c = GaussianCloud::new(5, 1);
        for i in 0..5 {
            c.positions[i] = [i as f64 * 0.3, 0.1 * i as f64, 2.0 + 0.05 * i as f64];
            c.rotations[i] = quat_normalize(&[1.0, 0.1 * i as f64, -0.2, 0.3]);
            c.log_scales[i] = [-1.0 - 0.1 * i as f64; 3];
            c.opacity_logits[i] = 0.4 - 0.2 * i as f64;
        }
        c
    }

    fn small() -> DeformConfig {
        DeformConfig {
            hexplane: HexPlaneConfig { levels: 2, spatial_res: 4, time_res: 3, channels: 3, ..Default::default() },
            decoder_hidden: 5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_heads_are_the_identity() {
        let c = cloud();
        for encoder in [EncoderKind::Hexplane, EncoderKind::Mlp] {
            let f: DeformationField<f64> = DeformationField::for_cloud(&DeformConfig { encoder, ..small() }, &c, 1).unwrap();
            for t in [0.0, 0.5, 1.0] {
                assert_eq!(deform(&c, &f, t).unwrap(), c);
            }
        }
    }

    #[test]
    fn constant_position_head_shifts_everything() {
        let c = cloud();
        let mut f: DeformationField<f64> = DeformationField::for_cloud(&small(), &c, 1).unwrap();
        f.decoders.heads[0].layers.last_mut().unwrap().bias[0] = 0.1;
        let d = deform(&c, &f, 0.3).unwrap();
        for i in 0..c.len() {
            assert_eq!(d.positions[i][0], c.positions[i][0] + 0.1);
            assert_eq!(d.positions[i][1], c.positions[i][1]);
            assert_eq!(d.rotations[i], c.rotations[i]);
        }
    }

    #[test]
    fn mlp_encoder_matches_the_budget() {
        let c = cloud();
        let cfg = DeformConfig { encoder: EncoderKind::Mlp, ..DeformConfig::default() };
        let f: DeformationField<f32> = DeformationField::for_cloud(&cfg, &c.cast(), 1).unwrap();
        let budget = cfg.hexplane.param_count() as f64;
        let got = f.encoder.param_count() as f64;
        assert!((got - budget).abs() / budget < 0.01, "{got} vs {budget}");
        let again: DeformationField<f32> = DeformationField::for_cloud(&cfg, &c.cast(), 1).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let c = cloud();
        let f: DeformationField<f64> = DeformationField::for_cloud(&small(), &c, 2).unwrap();
        let (_, cache) = f.deform(&c, 0.4).unwrap();
        let mut g = f.zeros_like();
        let up = CloudGrad::zeros_like(&c);
        let out = f.backward(&cache, &up, &mut g).unwrap();
        assert!(out.is_all_zero());
        assert!(g.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
        let short = CloudGrad::zeros(2, 1);
        assert!(matches!(f.backward(&cache, &short, &mut g), Err(Error::StateMismatch(_))));
    }
}
