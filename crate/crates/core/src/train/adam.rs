//! Adam with independent step counters per parameter group.

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamGroup<F> {
    pub name: String,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Real> AdamGroup<F> {
    pub fn new(name: &str, len: usize) -> Self {
        Self { name: name.to_string(), step: 0, m: vec![F::zero(); len], v: vec![F::zero(); len] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Keeps rows of `row` values whose flag is set.
    pub fn retain_rows(&mut self, keep: &[bool], row: usize) {
        let filter = |src: &[F]| -> Vec<F> {
            keep.iter().enumerate().filter(|(_, &k)| k).flat_map(|(i, _)| src[i * row..(i + 1) * row].to_vec()).collect()
        };
        self.m = filter(&self.m);
        self.v = filter(&self.v);
    }

    /// Appends zeroed moments for new rows.
    pub fn extend_zeros(&mut self, values: usize) {
        self.m.resize(self.m.len() + values, F::zero());
        self.v.resize(self.v.len() + values, F::zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    /// One update of the parameters spread over `params` (visited in order)
    /// using the matching gradient slices. A zero learning rate leaves both
    /// parameters and moments untouched.
    pub fn step<F: Real>(&self, group: &mut AdamGroup<F>, params: Vec<&mut [F]>, grads: Vec<&[F]>, lr: f64) {
        if lr == 0.0 {
            return;
        }
        group.step += 1;
        let t = group.step as i32;
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let c1 = F::lit(1.0 - self.beta1.powi(t));
        let c2 = F::lit(1.0 - self.beta2.powi(t));
        let lr = F::lit(lr);
        let eps = F::lit(self.eps);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            debug_assert_eq!(p.len(), g.len());
            for (x, &d) in p.iter_mut().zip(g) {
                let m = &mut group.m[k];
                let v = &mut group.v[k];
                *m = b1 * *m + (F::one() - b1) * d;
                *v = b2 * *v + (F::one() - b2) * d * d;
                let mh = *m / c1;
                let vh = *v / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
                k += 1;
            }
        }
        debug_assert_eq!(k, group.m.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let adam = Adam { beta1: 0.9, beta2: 0.999, eps: 1e-15 };
        let mut g = AdamGroup::new("x", 3);
        let mut p = vec![1.0f64, -2.0, 0.5];
        adam.step(&mut g, vec![&mut p], vec![&[0.3, -4.0, 0.0]], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-12);
        assert!((p[1] + 1.99).abs() < 1e-12);
        assert_eq!(p[2], 0.5);
        assert_eq!(g.step, 1);
    }

    #[test]
    fn zero_rate_freezes_everything() {
        let adam = Adam { beta1: 0.9, beta2: 0.999, eps: 1e-15 };
        let mut g = AdamGroup::new("x", 2);
        let mut p = vec![1.0f32, 2.0];
        adam.step(&mut g, vec![&mut p], vec![&[f32::NAN, 1.0]], 0.0);
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(g, AdamGroup::new("x", 2));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let adam = Adam { beta1: 0.9, beta2: 0.999, eps: 1e-15 };
        let mut g = AdamGroup::new("x", 1);
        let mut p = vec![3.0f64];
        for _ in 0..2000 {
            let grad = [2.0 * (p[0] - 1.0)];
            adam.step(&mut g, vec![&mut p], vec![&grad], 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn row_bookkeeping() {
        let mut g = AdamGroup::<f32>::new("x", 6);
        g.m = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        g.retain_rows(&[true, false, true], 2);
        assert_eq!(g.m, vec![1.0, 2.0, 5.0, 6.0]);
        g.extend_zeros(2);
        assert_eq!(g.m.len(), 6);
        assert_eq!(g.v.len(), 6);
    }
}
