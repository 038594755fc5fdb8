use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;

use super::mlp::{Linear, Mlp, MlpCache};

/// Output widths of the position, rotation, log-scale and opacity heads.
pub const HEAD_OUTPUTS: [usize; 4] = [3, 4, 3, 1];
/// Total delta width: `Δμ (3) | Δq (4) | Δlog_scale (3) | Δopacity_logit (1)`.
pub const DELTA_DIM: usize = 11;

/// Four small heads mapping a latent feature to attribute deltas, with an
/// optional shared ReLU layer in front.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoders<F> {
    pub trunk: Option<Linear<F>>,
    pub heads: [Mlp<F>; 4],
}

pub struct DecodeCache<F> {
    trunk_input: Option<Array2<F>>,
    /// Head input (the trunk output when a trunk exists).
    head_input: Array2<F>,
    heads: Vec<MlpCache<F>>,
}

impl<F: Real> DecodeCache<F> {
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out: Vec<bool> = vec![];
        if self.trunk_input.is_some() {
            out.extend(self.head_input.iter().map(|v| *v > F::zero()));
        }
        for h in &self.heads {
            out.extend(h.activation_pattern());
        }
        out
    }
}

impl<F: Real> Decoders<F> {
    /// Heads with zero output layers, so every delta starts at exactly 0.
    pub fn new(inputs: usize, hidden: usize, hidden_layers: usize, shared_trunk: bool, rng: &mut ChaCha8Rng) -> Self {
        let trunk = shared_trunk.then(|| Linear::random(inputs, hidden, rng));
        let head_in = if shared_trunk { hidden } else { inputs };
        let heads = HEAD_OUTPUTS.map(|out| Mlp::new(head_in, hidden, hidden_layers, out, true, rng));
        Self { trunk, heads }
    }

    pub fn inputs(&self) -> usize {
        match &self.trunk {
            Some(t) => t.inputs(),
            None => self.heads[0].inputs(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.trunk.as_ref().map_or(0, Linear::param_count) + self.heads.iter().map(Mlp::param_count).sum::<usize>()
    }

    pub fn zeros_like(&self) -> Self {
        Self { trunk: self.trunk.as_ref().map(Linear::zeros_like), heads: self.heads.each_ref().map(Mlp::zeros_like) }
    }

    pub fn slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = self.trunk.iter().flat_map(Linear::slices).collect();
        out.extend(self.heads.iter().flat_map(Mlp::slices));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = self.trunk.iter_mut().flat_map(Linear::slices_mut).collect();
        out.extend(self.heads.iter_mut().flat_map(Mlp::slices_mut));
        out
    }

    /// Deltas for every feature row, `N × 11`.
    pub fn decode(&self, features: Array2<F>) -> Result<(Array2<F>, DecodeCache<F>)> {
        if features.ncols() != self.inputs() {
            return Err(Error::Config(format!(
                "latent feature has {} channels, decoders expect {}",
                features.ncols(),
                self.inputs()
            )));
        }
        let (trunk_input, head_input) = match &self.trunk {
            Some(t) => {
                let h = t.forward(&features).mapv_into(|v| v.max(F::zero()));
                (Some(features), h)
            }
            None => (None, features),
        };
        let mut deltas = Array2::zeros((head_input.nrows(), DELTA_DIM));
        let mut caches = Vec::with_capacity(4);
        let mut col = 0;
        for (head, &w) in self.heads.iter().zip(&HEAD_OUTPUTS) {
            let (y, cache) = head.forward(head_input.clone());
            deltas.slice_mut(s![.., col..col + w]).assign(&y);
            caches.push(cache);
            col += w;
        }
        Ok((deltas, DecodeCache { trunk_input, head_input, heads: caches }))
    }

    /// Accumulates parameter gradients and returns `∂L/∂features`.
    pub fn backward(&self, cache: &DecodeCache<F>, ddeltas: &Array2<F>, grad: &mut Decoders<F>) -> Result<Array2<F>> {
        if ddeltas.dim() != (cache.head_input.nrows(), DELTA_DIM) {
            return Err(Error::StateMismatch(format!("delta gradient has shape {:?}", ddeltas.dim())));
        }
        let mut dhead = Array2::zeros(cache.head_input.raw_dim());
        let mut col = 0;
        for (k, &w) in HEAD_OUTPUTS.iter().enumerate() {
            let dy = ddeltas.slice(s![.., col..col + w]).to_owned();
            dhead += &self.heads[k].backward(&cache.heads[k], dy, &mut grad.heads[k]);
            col += w;
        }
        match (&self.trunk, &cache.trunk_input, &mut grad.trunk) {
            (Some(t), Some(x), Some(gt)) => {
                ndarray::Zip::from(&mut dhead).and(&cache.head_input).for_each(|g, &a| {
                    if a <= F::zero() {
                        *g = F::zero();
                    }
                });
                Ok(t.backward(x, &dhead, gt))
            }
            (None, None, None) => Ok(dhead),
            _ => Err(Error::StateMismatch("trunk presence differs between model, cache and gradient".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_heads_give_zero_deltas() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trunk in [false, true] {
            let d: Decoders<f64> = Decoders::new(6, 8, 2, trunk, &mut rng);
            let f = Array2::from_shape_fn((5, 6), |_| rng.gen_range(-3.0..3.0));
            let (out, _) = d.decode(f).unwrap();
            assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn zero_feature_returns_output_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d: Decoders<f64> = Decoders::new(4, 6, 2, false, &mut rng);
        for (k, h) in d.heads.iter_mut().enumerate() {
            let last = h.layers.last_mut().unwrap();
            last.bias.iter_mut().enumerate().for_each(|(j, b)| *b = (k * 10 + j) as f64);
            last.weight.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
            // Zero hidden biases make the hidden activations vanish at f = 0.
            for l in &mut h.layers[..2] {
                l.bias.fill(0.0);
            }
        }
        let (out, _) = d.decode(Array2::zeros((1, 4))).unwrap();
        let expected = [0.0, 1.0, 2.0, 10.0, 11.0, 12.0, 13.0, 20.0, 21.0, 22.0, 30.0];
        assert_eq!(out.row(0).to_vec(), expected);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let d: Decoders<f32> = Decoders::new(4, 6, 2, false, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(d.decode(Array2::zeros((1, 5))), Err(Error::Config(_))));
    }
}
