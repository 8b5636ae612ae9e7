use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{Classifier, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn plain(lr: f64) -> Self {
        Self { lr, momentum: 0.0, weight_decay: 0.0 }
    }
}

/// Stochastic gradient descent with optional heavy-ball momentum and L2
/// weight decay, matching the usual `v ← μv + g + λp; p ← p − lr·v` update.
#[derive(Debug, Clone)]
pub struct Sgd<F: Real> {
    pub config: SgdConfig,
    velocity: Vec<ArrayD<F>>,
}

impl<F: Real> Sgd<F> {
    pub fn new(config: SgdConfig) -> Self {
        Self { config, velocity: Vec::new() }
    }

    /// Applies the accumulated gradients, then clears them.
    pub fn step(&mut self, net: &mut Classifier<F>) {
        let lr = F::lit(self.config.lr);
        let mu = F::lit(self.config.momentum);
        let wd = F::lit(self.config.weight_decay);
        let use_momentum = self.config.momentum != 0.0;
        let velocity = &mut self.velocity;
        let mut i = 0;
        net.visit_params_mut(&mut |p| {
            if self.config.weight_decay != 0.0 {
                let value = p.value.clone();
                p.grad.zip_mut_with(&value, |g, &v| *g += wd * v);
            }
            if use_momentum {
                if velocity.len() <= i {
                    velocity.push(p.grad.clone());
                } else {
                    velocity[i].zip_mut_with(&p.grad, |v, &g| *v = mu * *v + g);
                }
                p.value.zip_mut_with(&velocity[i], |w, &v| *w = *w - lr * v);
            } else {
                p.value.zip_mut_with(&p.grad, |w, &g| *w = *w - lr * g);
            }
            p.zero_grad();
            i += 1;
        });
    }
}
