use ndarray::{Array1, Array2};

use super::{lit, LayerGrad, Real, VaeGrads, VaeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one parameter block; `t` is the 1-based step.
pub fn adam_update<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let (b1, b2): (T, T) = (lit(cfg.beta1), lit(cfg.beta2));
    let c1: T = lit(1.0 - cfg.beta1.powi(t as i32));
    let c2: T = lit(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps): (T, T) = (lit(cfg.learning_rate), lit(cfg.eps));
    let one = T::one();
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Moment accumulators laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub step: u64,
    pub m: Vec<LayerGrad<T>>,
    pub v: Vec<LayerGrad<T>>,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &VaeModel<T>, config: AdamConfig) -> Self {
        let zeros: Vec<LayerGrad<T>> = model.layers().iter().map(LayerGrad::zeros_like).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            config,
        }
    }

    pub fn matches(&self, model: &VaeModel<T>) -> bool {
        self.m.len() == model.layers().len()
            && self.v.len() == model.layers().len()
            && model.layers().iter().zip(self.m.iter().zip(&self.v)).all(|(l, (m, v))| {
                m.weights.dim() == l.weights.dim()
                    && v.weights.dim() == l.weights.dim()
                    && m.bias.len() == l.bias.len()
                    && v.bias.len() == l.bias.len()
            })
    }

    /// Applies one update. Non-finite gradients leave the model untouched.
    pub fn step(&mut self, model: &mut VaeModel<T>, grads: &VaeGrads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        if grads.layers.len() != model.layers().len() || !self.matches(model) {
            return Err(Error::dims(
                format!("{} layer gradients", model.layers().len()),
                grads.layers.len(),
            ));
        }
        self.step += 1;
        let t = self.step;
        let cfg = self.config;
        for (((layer, g), m), v) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            update2(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, t, &cfg);
            update1(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, t, &cfg);
        }
        Ok(())
    }
}

fn update2<T: Real>(p: &mut Array2<T>, g: &Array2<T>, m: &mut Array2<T>, v: &mut Array2<T>, t: u64, cfg: &AdamConfig) {
    adam_update(
        p.as_slice_mut().expect("standard layout"),
        g.as_slice().expect("standard layout"),
        m.as_slice_mut().expect("standard layout"),
        v.as_slice_mut().expect("standard layout"),
        t,
        cfg,
    );
}

fn update1<T: Real>(p: &mut Array1<T>, g: &Array1<T>, m: &mut Array1<T>, v: &mut Array1<T>, t: u64, cfg: &AdamConfig) {
    adam_update(
        p.as_slice_mut().unwrap(),
        g.as_slice().unwrap(),
        m.as_slice_mut().unwrap(),
        v.as_slice_mut().unwrap(),
        t,
        cfg,
    );
}
