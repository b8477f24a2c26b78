//! Adam and RMSProp parameter updates, plus EMA weight tracking.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpParams, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Adam {
        alpha: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Rmsprop {
        alpha: f64,
        decay: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    /// Adam with the unstated moments left at beta2 = 0.999, eps = 1e-8.
    pub fn adam(alpha: f64, beta1: f64) -> Self {
        OptimizerKind::Adam {
            alpha,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(alpha: f64, decay: f64) -> Self {
        OptimizerKind::Rmsprop {
            alpha,
            decay,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Adam {
                alpha, beta1, beta2, ..
            } => alpha > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2),
            OptimizerKind::Rmsprop { alpha, decay, .. } => {
                alpha > 0.0 && (0.0..1.0).contains(&decay)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid optimizer: {self:?}")))
        }
    }
}

/// Moment accumulators shaped like the parameters they update.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    first: MlpParams,
    second: MlpParams,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, spec: &MlpSpec) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            first: MlpParams::zeros(spec),
            second: MlpParams::zeros(spec),
            step_count: 0,
        })
    }

    /// Applies one update in place. Errors on non-finite gradients.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("optimizer gradients".into()));
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Adam {
                alpha,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let mut update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= alpha * m_hat / (v_hat.sqrt() + eps);
                };
                for l in 0..params.weights.len() {
                    Zip::from(&mut params.weights[l])
                        .and(&mut self.first.weights[l])
                        .and(&mut self.second.weights[l])
                        .and(&grads.weights[l])
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                    Zip::from(&mut params.biases[l])
                        .and(&mut self.first.biases[l])
                        .and(&mut self.second.biases[l])
                        .and(&grads.biases[l])
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                }
            }
            OptimizerKind::Rmsprop { alpha, decay, eps } => {
                let mut update = |p: &mut f64, v: &mut f64, g: f64| {
                    *v = decay * *v + (1.0 - decay) * g * g;
                    *p -= alpha * g / (v.sqrt() + eps);
                };
                for l in 0..params.weights.len() {
                    Zip::from(&mut params.weights[l])
                        .and(&mut self.second.weights[l])
                        .and(&grads.weights[l])
                        .for_each(|p, v, &g| update(p, v, g));
                    Zip::from(&mut params.biases[l])
                        .and(&mut self.second.biases[l])
                        .and(&grads.biases[l])
                        .for_each(|p, v, &g| update(p, v, g));
                }
            }
        }
        Ok(())
    }
}

/// Exponential moving average of a parameter set.
///
/// `shadow <- decay * shadow + (1 - decay) * current` per update; classifiers
/// are evaluated through the shadow weights.
#[derive(Debug, Clone)]
pub struct EmaParams {
    pub shadow: MlpParams,
    pub decay: f64,
}

impl EmaParams {
    pub fn new(initial: MlpParams, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::InvalidSpec(format!(
                "ema decay must be in [0, 1], got {decay}"
            )));
        }
        Ok(Self {
            shadow: initial,
            decay,
        })
    }

    pub fn update(&mut self, current: &MlpParams) -> Result<()> {
        if self.shadow.weights.len() != current.weights.len()
            || self
                .shadow
                .weights
                .iter()
                .zip(&current.weights)
                .any(|(a, b)| a.dim() != b.dim())
        {
            return Err(Error::ShapeMismatch {
                context: "ema_update",
                expected: "shadow shaped like tracked params".into(),
                got: "mismatched shapes".into(),
            });
        }
        let d = self.decay;
        for (s, c) in self.shadow.weights.iter_mut().zip(&current.weights) {
            Zip::from(s).and(c).for_each(|s, &c| *s = d * *s + (1.0 - d) * c);
        }
        for (s, c) in self.shadow.biases.iter_mut().zip(&current.biases) {
            Zip::from(s).and(c).for_each(|s, &c| *s = d * *s + (1.0 - d) * c);
        }
        Ok(())
    }
}
