//! RMSProp: per-parameter moving average of squared gradients,
//! v <- rho*v + (1-rho)*g^2, theta <- theta - lr * g / (sqrt(v) + eps).

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};
use serde::{Deserialize, Serialize};

use super::{GradBuffer, ShallowCnn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig<T> {
    pub learning_rate: T,
    pub decay_rho: T,
    pub epsilon: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl<T: Real> RmsPropConfig<T> {
    /// rho 0.9, epsilon 1e-8, batch 32; learning rate and epochs are always
    /// protocol-specific.
    pub fn new(learning_rate: T, epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            decay_rho: cast(0.9),
            epsilon: cast(1e-8),
            batch_size: 32,
            epochs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.decay_rho > T::zero() && self.decay_rho < T::one()) {
            return Err(Error::InvalidConfig("need 0 < decay_rho < 1".into()));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// The core update on one flat parameter tensor.
pub fn rmsprop_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    v: &mut [T],
    learning_rate: T,
    rho: T,
    epsilon: T,
) {
    let one_minus_rho = T::one() - rho;
    for ((p, &g), vi) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *vi = rho * *vi + one_minus_rho * g * g;
        *p -= learning_rate * g / (vi.sqrt() + epsilon);
    }
}

/// Optimizer state for a whole model.
#[derive(Debug, Clone)]
pub struct RmsProp<T> {
    cfg: RmsPropConfig<T>,
    v: GradBuffer<T>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(cfg: RmsPropConfig<T>, model: &ShallowCnn<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            v: GradBuffer::zeros_like(model),
        })
    }

    pub fn step(&mut self, model: &mut ShallowCnn<T>, grads: &GradBuffer<T>) {
        let params = model.param_slices_mut();
        let g = grads.slices();
        let v = self.v.slices_mut();
        for ((p, g), v) in params.into_iter().zip(g).zip(v) {
            rmsprop_update(p, g, v, self.cfg.learning_rate, self.cfg.decay_rho, self.cfg.epsilon);
        }
    }
}
