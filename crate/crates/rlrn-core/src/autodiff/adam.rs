use crate::autodiff::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are laid out per parameter in
/// registration order; frozen parameters keep their moments but are skipped.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f32) -> Self {
        let m = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        let v = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m, v }
    }

    /// One optimizer step. `grads[i]` pairs with the `i`-th registered
    /// parameter; `None` (unreachable or frozen) leaves it untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Vec<f32>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                detail: format!("{} grads for {} params", grads.len(), params.len()),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, grad) in grads.iter().enumerate() {
            let Some(g) = grad else { continue };
            let id = ParamId(i);
            if !params.get(id).requires_grad {
                continue;
            }
            if g.len() != params.get(id).numel() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    detail: format!(
                        "grad length {} for parameter {} of {} elements",
                        g.len(),
                        params.name(id),
                        params.get(id).numel()
                    ),
                });
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let data = params.get_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
