use crate::autodiff::matrix::Matrix;
use crate::autodiff::params::{ParamGrads, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Bias-corrected Adam over a fixed subset of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    targets: Vec<ParamId>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, targets: Vec<ParamId>, lr: f64) -> Self {
        let m: Vec<Matrix> = targets
            .iter()
            .map(|&id| {
                let (r, c) = store.get(id).shape();
                Matrix::zeros(r, c)
            })
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
            targets,
        }
    }

    pub fn for_all(store: &ParamStore, lr: f64) -> Self {
        Self::new(store, store.ids().collect(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Parameters without a gradient keep their moments and value
    /// but still count toward the shared step counter.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (slot, &id) in self.targets.iter().enumerate() {
            let Some(g) = grads.get(id) else { continue };
            let p = store.get_mut(id);
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameter {} after step {}",
                    store.name(id),
                    self.step
                )));
            }
        }
        Ok(())
    }
}
