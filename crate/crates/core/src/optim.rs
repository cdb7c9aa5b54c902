//! Bias-corrected Adam.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numcore::{Gradients, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, a)| alloc::vec![0.0; a.len()]).collect();
        AdamState { first_moment: zeros.clone(), second_moment: zeros, step_count: 0 }
    }

    pub fn matches(&self, params: &ParamStore) -> bool {
        self.first_moment.len() == params.len()
            && self.second_moment.len() == params.len()
            && params
                .iter()
                .zip(&self.first_moment)
                .zip(&self.second_moment)
                .all(|(((_, a), m), v)| a.len() == m.len() && a.len() == v.len())
    }

    /// One update of every parameter. Nothing is modified when any gradient
    /// is non-finite; the error names the first offending parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        if !self.matches(params) {
            return Err(Error::dim("adam_step", "optimizer state does not match the parameters"));
        }
        for id in params.ids() {
            if let Some(i) = grads.get(id).iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of `{}` at index {i}", params.name(id)),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let c1 = 1.0 - libm::pow(BETA1, t);
        let c2 = 1.0 - libm::pow(BETA2, t);
        for id in params.ids() {
            let k = id.index();
            let g = grads.get(id);
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (libm::sqrt(vh) + EPSILON);
            }
        }
        Ok(())
    }
}
