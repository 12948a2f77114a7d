//! ADAM over the flattened parameter vector.

use crate::error::{Error, Result};
use crate::network::{Gradients, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm gradient clip; `None` disables it.
    pub clip_norm: Option<f64>,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl AdamSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.beta1 > 0.0
            && self.beta2 > 0.0
            && self.epsilon > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid ADAM settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub settings: AdamSettings,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(settings: AdamSettings, param_count: usize) -> Self {
        Self {
            settings,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_params(settings: AdamSettings, params: &NetworkParams) -> Self {
        Self::new(settings, params.param_count())
    }

    /// One update on a flat parameter slice.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dims(format!(
                "adam: state for {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let clip = self.clip_factor(grads.iter().copied());
        self.step += 1;
        let s = self.settings;
        let t = self.step as i32;
        let corr1 = 1.0 - s.beta1.powi(t);
        let corr2 = 1.0 - s.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] * clip;
            self.m[i] = s.beta1 * self.m[i] + (1.0 - s.beta1) * g;
            self.v[i] = s.beta2 * self.v[i] + (1.0 - s.beta2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            params[i] -= s.rate * m_hat / (v_hat.sqrt() + s.epsilon);
        }
        Ok(())
    }

    /// One update of a network's parameters in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        grads.check_layout(params)?;
        let mut flat = params.to_flat();
        self.step_slice(&mut flat, &grads.to_flat())?;
        for (p, v) in params.values_mut().zip(flat) {
            *p = v;
        }
        Ok(())
    }

    fn clip_factor(&self, grads: impl Iterator<Item = f64>) -> f64 {
        match self.settings.clip_norm {
            Some(max) => {
                let norm = grads.map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }
}
