//! Adaptive-moment optimizer with decoupled weight decay, linear
//! learning-rate warmup, and global-norm gradient clipping.

use ndarray::ArrayD;

use crate::autodiff::ParamSet;
use crate::config::TrainConfig;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    warmup_steps: u64,
    grad_clip: f64,
    t: u64,
    /// First and second moment estimates, in parameter order.
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl AdamW {
    pub fn new(cfg: &TrainConfig, params: &ParamSet) -> Self {
        let zeros: Vec<ArrayD<f64>> = params
            .iter()
            .map(|(_, p)| ArrayD::zeros(p.raw_dim()))
            .collect();
        Self {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            warmup_steps: cfg.warmup_steps as u64,
            grad_clip: cfg.grad_clip,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Learning rate for 0-based step `t`: linear ramp over the warmup
    /// window, then constant.
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.lr;
        }
        let ramp = ((t + 1) as f64 / self.warmup_steps as f64).min(1.0);
        self.lr * ramp
    }

    /// One update from gradients listed in parameter order. Returns the
    /// learning rate that was applied.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &[ArrayD<f64>]) -> f64 {
        assert_eq!(grads.len(), self.m.len(), "gradient list length");
        let lr = self.lr_at(self.t);
        self.t += 1;

        let norm2: f64 = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum();
        let scale = if self.grad_clip > 0.0 && norm2.sqrt() > self.grad_clip {
            self.grad_clip / norm2.sqrt()
        } else {
            1.0
        };

        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let g = &grads[i] * scale;
            self.m[i].zip_mut_with(&g, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            self.v[i].zip_mut_with(&g, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            ndarray::Zip::from(&mut *p)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|p, &m, &v| {
                    let mh = m / bc1;
                    let vh = v / bc2;
                    *p -= lr * (mh / (vh.sqrt() + ADAM_EPS) + self.weight_decay * *p);
                });
        }
        lr
    }

    pub(crate) fn state(&self) -> (u64, &[ArrayD<f64>], &[ArrayD<f64>]) {
        (self.t, &self.m, &self.v)
    }

    pub(crate) fn restore(&mut self, t: u64, m: Vec<ArrayD<f64>>, v: Vec<ArrayD<f64>>) {
        assert_eq!(m.len(), self.m.len(), "moment list length");
        assert_eq!(v.len(), self.v.len(), "moment list length");
        self.t = t;
        self.m = m;
        self.v = v;
    }
}
