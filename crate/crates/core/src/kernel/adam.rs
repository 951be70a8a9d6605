use super::Tensor;
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(param_shape: &[usize], hyper: AdamHyper) -> Self {
        Self {
            step: 0,
            first_moment: Tensor::zeros(param_shape),
            second_moment: Tensor::zeros(param_shape),
            hyper,
        }
    }

    /// In-place bias-corrected Adam update.
    pub fn update(&mut self, params: &mut Tensor, grads: &Tensor) -> Result<()> {
        params.same_shape(grads)?;
        if self.first_moment.shape() != params.shape() {
            return Err(dim_err!(
                "optimizer state {:?} does not match parameters {:?}",
                self.first_moment.shape(),
                params.shape()
            ));
        }
        let AdamHyper {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m = self.first_moment.data_mut();
        let v = self.second_moment.data_mut();
        for (((p, &g), m), v) in params.data_mut().iter_mut().zip(grads.data()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(params: &Tensor, grads: &Tensor, state: &OptimizerState) -> Result<(Tensor, OptimizerState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.update(&mut p, grads)?;
    Ok((p, s))
}
