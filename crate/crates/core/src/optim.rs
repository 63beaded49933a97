//! SGD with momentum and decoupled-from-nothing weight decay: the decay
//! term is folded into the gradient before the momentum update,
//!
//! ```text
//! v <- mu * v + (g + wd * p)
//! p <- p - lr * v
//! ```

use crate::error::TensorError;
use crate::tensor::Tensor;

/// Optimizer state: one velocity buffer per registered parameter.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    /// Register parameters by shape; velocities start at zero. A zero
    /// learning rate is allowed and makes every step a no-op on parameters.
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64, params: &[&Tensor]) -> Self {
        assert!(learning_rate >= 0.0, "learning rate must be non-negative");
        assert!((0.0..1.0).contains(&momentum), "momentum must be in [0, 1)");
        assert!(weight_decay >= 0.0, "weight decay must be non-negative");
        SgdState {
            learning_rate,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.velocity.len()
    }

    /// One update step over all registered parameters, in registration order.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Vec<f64>],
    ) -> Result<(), TensorError> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(TensorError::DimensionMismatch {
                op: "sgd_step (parameter count)",
                lhs: vec![params.len()],
                rhs: vec![self.velocity.len()],
            });
        }
        for ((param, grad), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if param.numel() != grad.len() || param.numel() != vel.len() {
                return Err(TensorError::DimensionMismatch {
                    op: "sgd_step (buffer size)",
                    lhs: param.shape().to_vec(),
                    rhs: vec![grad.len()],
                });
            }
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i] + self.weight_decay * data[i];
                vel[i] = self.momentum * vel[i] + g;
                data[i] -= self.learning_rate * vel[i];
            }
        }
        Ok(())
    }
}
