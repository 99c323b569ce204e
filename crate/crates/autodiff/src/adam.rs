use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Bias-corrected Adam moments for every parameter of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || -> Vec<Tensor<T>> {
            store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect()
        };
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Applies one update. `grads` is aligned with the store's registration
    /// order (see [`Gradients::dense`](crate::Gradients::dense)).
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        let wd = T::from_f64(c.weight_decay);
        for ((id, g), (m, v)) in store
            .ids()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let p = store.get_mut(id);
            debug_assert_eq!(p.shape(), g.shape());
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gv = gv + wd * *pv;
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let mhat = *mv / corr1;
                let vhat = *vv / corr2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.register("p", Tensor::from_f64(&[1], &[value]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = single(0.7);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut s, &[Tensor::zeros(&[1])]);
        }
        assert_eq!(s.get(s.find("p").unwrap()).data()[0], 0.7);
        assert_eq!(adam.step, 3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so Δ = lr·g/(|g|+eps) = lr·1/(1+1e-8).
        let mut s = single(1.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        adam.step(&mut s, &[Tensor::from_f64(&[1], &[1.0]).unwrap()]);
        let expected = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((s.get(s.find("p").unwrap()).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn moments_follow_recurrence_over_two_steps() {
        let mut s = single(0.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        let g = Tensor::from_f64(&[1], &[2.0]).unwrap();
        adam.step(&mut s, std::slice::from_ref(&g));
        adam.step(&mut s, std::slice::from_ref(&g));
        // Hand-iterated: m1 = 0.2, m2 = 0.9·0.2 + 0.2 = 0.38;
        // v1 = 0.004, v2 = 0.999·0.004 + 0.004 = 0.007996.
        assert_eq!(adam.step, 2);
        assert!((adam.first[0].data()[0] - 0.38).abs() < 1e-12);
        assert!((adam.second[0].data()[0] - 0.007996).abs() < 1e-12);
        // Bias correction gives m̂ = 2, v̂ = 4 at both steps, so each step moves by ≈ lr.
        let expected = -2.0 * 1e-4 * 2.0 / (2.0 + 1e-8);
        assert!((s.get(s.find("p").unwrap()).data()[0] - expected).abs() < 1e-12);
    }
}
