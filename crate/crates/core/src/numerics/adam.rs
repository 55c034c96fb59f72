use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Adam with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::zeros(t.shape());
        Self {
            config,
            step: 0,
            first: params.iter().map(|(_, _, t)| zeros(t)).collect(),
            second: params.iter().map(|(_, _, t)| zeros(t)).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor<T>, &Tensor<T>) {
        (&self.first[id.0], &self.second[id.0])
    }

    /// Restore state saved by a previous run.
    pub fn restore(&mut self, step: u64, first: Vec<Tensor<T>>, second: Vec<Tensor<T>>) -> Result<()> {
        if first.len() != self.first.len() || second.len() != self.second.len() {
            return Err(Error::Checkpoint("optimizer moment count mismatch".into()));
        }
        for (a, b) in self.first.iter().zip(&first).chain(self.second.iter().zip(&second)) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint("optimizer moment shape mismatch".into()));
            }
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    /// One update. `grads` lists gradients by parameter; parameters absent
    /// from the list are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) -> Result<()> {
        for (id, g) in grads {
            if g.shape() != params.get(*id).shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "gradient {:?} vs parameter {} {:?}",
                        g.shape(),
                        params.name(*id),
                        params.get(*id).shape()
                    ),
                ));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", params.name(*id))));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, wd, eps) = (T::of(c.lr), T::of(c.weight_decay), T::of(c.eps));
        let (bc1, bc2) = (T::of(bc1), T::of(bc2));

        let mut dense: Vec<Option<&Tensor<T>>> = vec![None; params.len()];
        for (id, g) in grads {
            dense[id.0] = Some(g);
        }
        for id in params.ids().collect::<Vec<_>>() {
            let p = params.get_mut(id);
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let g = dense[id.0];
            for k in 0..p.len() {
                let gk = g.map_or(T::zero(), |g| g.data()[k]);
                let mk = b1 * m.data()[k] + (T::one() - b1) * gk;
                let vk = b2 * v.data()[k] + (T::one() - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                let pk = p.data()[k];
                p.data_mut()[k] = pk - lr * wd * pk - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (i, &v) in vals.iter().enumerate() {
            s.add(format!("p{i}"), Tensor::scalar(v));
        }
        s
    }

    #[test]
    fn zero_grad_no_decay_is_fixed_point() {
        let mut s = store(&[1.5, -2.0]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(cfg, &s);
        for _ in 0..10 {
            let grads = vec![(ParamId(0), Tensor::scalar(0.0)), (ParamId(1), Tensor::scalar(0.0))];
            opt.step(&mut s, &grads).unwrap();
        }
        assert_eq!(s.get(ParamId(0)).data()[0], 1.5);
        assert_eq!(s.get(ParamId(1)).data()[0], -2.0);
    }

    #[test]
    fn first_step_closed_form() {
        // m1 = (1-b1) g, v1 = (1-b2) g^2, mhat = g, vhat = g^2
        let (p0, g, lr, b1, b2, eps, wd) = (0.7, 1.0, 3e-5, 0.9, 0.99, 1e-8, 1e-2);
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let mhat = m1 / (1.0 - b1);
        let vhat: f64 = v1 / (1.0 - b2);
        let want = p0 - lr * wd * p0 - lr * mhat / (vhat.sqrt() + eps);

        let mut s = store(&[p0]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        opt.step(&mut s, &[(ParamId(0), Tensor::scalar(g))]).unwrap();
        assert!((s.get(ParamId(0)).data()[0] - want).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn identical_gradients_identical_updates() {
        let mut s = store(&[0.3, 0.3]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        for k in 0..5 {
            let g = 0.1 * (k as f64 + 1.0);
            opt.step(&mut s, &[(ParamId(0), Tensor::scalar(g)), (ParamId(1), Tensor::scalar(g))])
                .unwrap();
        }
        assert_eq!(s.get(ParamId(0)), s.get(ParamId(1)));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store(&[0.0, 0.0]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        let err = opt
            .step(&mut s, &[(ParamId(1), Tensor::scalar(f64::NAN))])
            .unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
        assert_eq!(opt.step_count(), 0);
    }
}
