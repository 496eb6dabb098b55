use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// `scale · min(step^-0.5, step · warmup^-1.5)`.
pub fn lr_at(step: u64, warmup_steps: u64, scale: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::InvalidInput("learning rate schedule starts at step 1".into()));
    }
    if warmup_steps == 0 {
        return Err(Error::InvalidInput("warmup_steps must be positive".into()));
    }
    let s = step as f64;
    let w = warmup_steps as f64;
    Ok(scale * s.powf(-0.5).min(s * w.powf(-1.5)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
    pub scale: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            warmup_steps: 16000,
            scale: 1.0,
        }
    }
}

/// Adam moments for every parameter of one store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update with `grads` multiplied by `grad_scale`; missing
    /// gradients count as zero. Returns the learning rate used.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], grad_scale: f64) -> Result<f64> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.step += 1;
        let lr = lr_at(self.step, self.cfg.warmup_steps, self.cfg.scale)?;
        let AdamConfig { beta1, beta2, eps, .. } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            match &grads[i] {
                Some(g) => {
                    for ((mj, vj), &gj) in m.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                        let gj = gj * grad_scale;
                        *mj = beta1 * *mj + (1.0 - beta1) * gj;
                        *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                    }
                }
                None => {
                    for (mj, vj) in m.iter_mut().zip(v.iter_mut()) {
                        *mj *= beta1;
                        *vj *= beta2;
                    }
                }
            }
            let p = store.get_mut(id).data_mut();
            for ((pj, &mj), &vj) in p.iter_mut().zip(self.m[i].data()).zip(self.v[i].data()) {
                *pj -= lr * (mj / c1) / ((vj / c2).sqrt() + eps);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_peak_and_shape() {
        let w = 16000;
        for scale in [1.0, 4.0] {
            let peak = lr_at(w, w, scale).unwrap();
            let expect = scale * (w as f64).powf(-0.5);
            assert!((peak - expect).abs() <= 4.0 * f64::EPSILON * expect);
            assert!(lr_at(1, w, scale).unwrap() < lr_at(2, w, scale).unwrap());
            assert!(lr_at(w - 1, w, scale).unwrap() < peak);
            assert!(lr_at(w + 1, w, scale).unwrap() < peak);
        }
        assert!(lr_at(0, w, 1.0).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first step is lr · g/(|g| + eps)
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap());
        let cfg = AdamConfig {
            warmup_steps: 1,
            scale: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        let g = Tensor::new(vec![2], vec![0.5, -2.0]).unwrap();
        let lr = adam.update(&mut store, &[Some(g)], 1.0).unwrap();
        assert_eq!(lr, 0.1);
        let x = store.get(id).data();
        assert!((x[0] - 0.9).abs() < 1e-8);
        assert!((x[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::new(vec![1], vec![3.0]).unwrap());
        let cfg = AdamConfig {
            warmup_steps: 10,
            scale: 0.5,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &store);
        for _ in 0..2000 {
            let x = store.get(id).data()[0];
            let g = Tensor::new(vec![1], vec![2.0 * (x - 1.0)]).unwrap();
            adam.update(&mut store, &[Some(g)], 1.0).unwrap();
        }
        assert!((store.get(id).data()[0] - 1.0).abs() < 1e-2);
    }
}
