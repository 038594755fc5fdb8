//! Positional-encoding MLP over `(x, y, z, t)`, the dense alternative to the
//! HexPlane encoder.

use std::f64::consts::PI;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::init::Aabb;
use crate::math::Vec3;
use crate::real::Real;

use super::mlp::{Mlp, MlpCache};

#[derive(Debug, Clone, PartialEq)]
pub struct PositionalMlp<F> {
    pub bounds: Aabb,
    pub frequencies: usize,
    pub net: Mlp<F>,
}

pub struct PositionalCache<F> {
    coords: Vec<[F; 4]>,
    clamped: Vec<[bool; 4]>,
    net: MlpCache<F>,
}

impl<F: Real> PositionalCache<F> {
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.net.activation_pattern()
    }
}

/// Encoded width for `frequencies` octaves over four coordinates.
pub fn encoding_dim(frequencies: usize) -> usize {
    4 * (1 + 2 * frequencies)
}

impl<F: Real> PositionalMlp<F> {
    pub fn new(
        bounds: Aabb,
        frequencies: usize,
        width: usize,
        hidden_layers: usize,
        outputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !bounds.extent().iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!("encoder bounds {bounds:?} have zero extent")));
        }
        let net = Mlp::new(encoding_dim(frequencies), width, hidden_layers, outputs, false, rng);
        Ok(Self { bounds, frequencies, net })
    }

    /// Width whose parameter count is closest to `budget`.
    pub fn width_for_budget(frequencies: usize, hidden_layers: usize, outputs: usize, budget: usize) -> usize {
        let count = |w| Mlp::<F>::count_for(encoding_dim(frequencies), w, hidden_layers, outputs);
        let mut best = 1;
        for w in 1..=4096 {
            if count(w).abs_diff(budget) < count(best).abs_diff(budget) {
                best = w;
            }
            if count(w) > budget {
                break;
            }
        }
        best
    }

    pub fn outputs(&self) -> usize {
        self.net.outputs()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn zeros_like(&self) -> Self {
        Self { bounds: self.bounds, frequencies: self.frequencies, net: self.net.zeros_like() }
    }

    fn normalize(&self, p: &Vec3<F>, t: F) -> ([F; 4], [bool; 4]) {
        let mut u = [F::zero(); 4];
        let mut clamped = [false; 4];
        let raw = [
            (p[0] - F::lit(self.bounds.min[0])) / F::lit(self.bounds.max[0] - self.bounds.min[0]),
            (p[1] - F::lit(self.bounds.min[1])) / F::lit(self.bounds.max[1] - self.bounds.min[1]),
            (p[2] - F::lit(self.bounds.min[2])) / F::lit(self.bounds.max[2] - self.bounds.min[2]),
            t,
        ];
        for a in 0..4 {
            clamped[a] = !(raw[a] >= F::zero() && raw[a] <= F::one());
            u[a] = raw[a].max(F::zero()).min(F::one());
        }
        (u, clamped)
    }

    pub fn query_batch(&self, positions: &[Vec3<F>], t: F) -> (Array2<F>, PositionalCache<F>) {
        let n = positions.len();
        let dim = encoding_dim(self.frequencies);
        let (coords, clamped): (Vec<_>, Vec<_>) = positions.iter().map(|p| self.normalize(p, t)).unzip();
        let mut enc = Array2::zeros((n, dim));
        for (i, u) in coords.iter().enumerate() {
            let mut row = enc.row_mut(i);
            for a in 0..4 {
                let base = a * (1 + 2 * self.frequencies);
                row[base] = u[a];
                for k in 0..self.frequencies {
                    let w = F::lit(PI * (1u64 << k) as f64);
                    row[base + 1 + 2 * k] = (w * u[a]).sin();
                    row[base + 2 + 2 * k] = (w * u[a]).cos();
                }
            }
        }
        let (features, net) = self.net.forward(enc);
        (features, PositionalCache { coords, clamped, net })
    }

    pub fn backward(&self, cache: &PositionalCache<F>, dfeat: &Array2<F>, grad: &mut PositionalMlp<F>) -> Result<Vec<Vec3<F>>> {
        if dfeat.dim() != (cache.coords.len(), self.outputs()) {
            return Err(Error::StateMismatch(format!("feature gradient has shape {:?}", dfeat.dim())));
        }
        let denc = self.net.backward(&cache.net, dfeat.clone(), &mut grad.net);
        let mut out = Vec::with_capacity(cache.coords.len());
        for (i, u) in cache.coords.iter().enumerate() {
            let row = denc.row(i);
            let mut g = [F::zero(); 3];
            for a in 0..3 {
                if cache.clamped[i][a] {
                    continue;
                }
                let base = a * (1 + 2 * self.frequencies);
                let mut du = row[base];
                for k in 0..self.frequencies {
                    let w = F::lit(PI * (1u64 << k) as f64);
                    du += row[base + 1 + 2 * k] * w * (w * u[a]).cos() - row[base + 2 + 2 * k] * w * (w * u[a]).sin();
                }
                g[a] = du / F::lit(self.bounds.max[a] - self.bounds.min[a]);
            }
            out.push(g);
        }
        Ok(out)
    }
}
