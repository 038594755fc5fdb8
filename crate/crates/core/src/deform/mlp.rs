//! Small fully connected networks with ReLU hidden layers.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `out × in`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    /// Uniform in `±1/√in` for weights and biases.
    pub fn random(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((outputs, inputs), |_| F::lit(rng.gen_range(-bound..bound))),
            bias: Array1::from_shape_fn(outputs, |_| F::lit(rng.gen_range(-bound..bound))),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &Array2<F>, dy: &Array2<F>, grad: &mut Linear<F>) -> Array2<F> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    pub fn slices(&self) -> [&[F]; 2] {
        [self.weight.as_slice().expect("standard layout"), self.bias.as_slice().expect("standard layout")]
    }

    pub fn slices_mut(&mut self) -> [&mut [F]; 2] {
        [self.weight.as_slice_mut().expect("standard layout"), self.bias.as_slice_mut().expect("standard layout")]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs())
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

/// Layer inputs recorded by [`Mlp::forward`]: `inputs[k]` feeds layer `k`.
#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    pub inputs: Vec<Array2<F>>,
}

impl<F: Real> MlpCache<F> {
    /// One bit per hidden unit and row: whether the ReLU was active.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.inputs.iter().skip(1).flat_map(|a| a.iter().map(|v| *v > F::zero()).collect::<Vec<_>>()).collect()
    }
}

impl<F: Real> Mlp<F> {
    /// `hidden_layers` hidden layers of width `hidden`; the output layer is
    /// zero when `zero_output` is set.
    pub fn new(
        inputs: usize,
        hidden: usize,
        hidden_layers: usize,
        outputs: usize,
        zero_output: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut width = inputs;
        for _ in 0..hidden_layers {
            layers.push(Linear::random(width, hidden, rng));
            width = hidden;
        }
        layers.push(if zero_output { Linear::zeros(width, outputs) } else { Linear::random(width, outputs, rng) });
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    /// Closed-form parameter count of [`Mlp::new`] with the same shape.
    pub fn count_for(inputs: usize, hidden: usize, hidden_layers: usize, outputs: usize) -> usize {
        if hidden_layers == 0 {
            return inputs * outputs + outputs;
        }
        (inputs + 1) * hidden + (hidden_layers - 1) * (hidden + 1) * hidden + (hidden + 1) * outputs
    }

    pub fn forward(&self, x: Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(&a);
            if k < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            inputs.push(a);
            a = z;
        }
        (a, MlpCache { inputs })
    }

    pub fn backward(&self, cache: &MlpCache<F>, dy: Array2<F>, grad: &mut Mlp<F>) -> Array2<F> {
        let mut d = dy;
        for k in (0..self.layers.len()).rev() {
            d = self.layers[k].backward(&cache.inputs[k], &d, &mut grad.layers[k]);
            if k > 0 {
                // The input of layer k is relu(z); its derivative is 1 where positive.
                ndarray::Zip::from(&mut d).and(&cache.inputs[k]).for_each(|g, &a| {
                    if a <= F::zero() {
                        *g = F::zero();
                    }
                });
            }
        }
        d
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(Linear::zeros_like).collect() }
    }

    pub fn slices(&self) -> Vec<&[F]> {
        self.layers.iter().flat_map(Linear::slices).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers.iter_mut().flat_map(Linear::slices_mut).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn single_neuron_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp: Mlp<f64> = Mlp::new(3, 4, 2, 1, false, &mut rng);
        let x = array![[0.3, -0.2, 0.9]];
        let (y, _) = mlp.forward(x.clone());
        let mut a: Vec<f64> = x.row(0).to_vec();
        for (k, layer) in mlp.layers.iter().enumerate() {
            let mut next = vec![];
            for o in 0..layer.outputs() {
                let mut s = layer.bias[o];
                for (i, v) in a.iter().enumerate() {
                    s += layer.weight[[o, i]] * v;
                }
                next.push(if k + 1 < mlp.layers.len() { s.max(0.0) } else { s });
            }
            a = next;
        }
        assert!((y[[0, 0]] - a[0]).abs() < 1e-12);
    }

    #[test]
    fn parameter_count_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (i, h, l, o) in [(16, 64, 2, 3), (5, 7, 1, 2), (4, 3, 3, 1), (6, 0, 0, 2)] {
            let mlp: Mlp<f32> = Mlp::new(i, h, l, o, true, &mut rng);
            assert_eq!(mlp.param_count(), Mlp::<f32>::count_for(i, h, l, o));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mlp: Mlp<f64> = Mlp::new(3, 5, 2, 2, false, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let dy = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let loss = |m: &Mlp<f64>, x: &Array2<f64>| (m.forward(x.clone()).0 * &dy).sum();
        let (_, cache) = mlp.forward(x.clone());
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, dy.clone(), &mut grad);
        let h = 1e-6;
        let analytic: Vec<f64> = grad.slices().concat();
        let mut k = 0;
        for s in 0..mlp.slices().len() {
            for j in 0..mlp.slices()[s].len() {
                let v0 = mlp.slices()[s][j];
                mlp.slices_mut()[s][j] = v0 + h;
                let p = loss(&mlp, &x);
                mlp.slices_mut()[s][j] = v0 - h;
                let m = loss(&mlp, &x);
                mlp.slices_mut()[s][j] = v0;
                assert!(((p - m) / (2.0 * h) - analytic[k]).abs() < 1e-7);
                k += 1;
            }
        }
        for i in 0..4 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                assert!(((loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h) - dx[[i, j]]).abs() < 1e-7);
            }
        }
    }
}
