//! Per-matrix update rules applied to NGC weight deltas.
//!
//! Every rule *ascends* on the delta it is handed: the NGC learning rule
//! already produces the direction that lowers total discrepancy, so the
//! parameter moves by `+η·(rule-transformed delta)`.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Sgd,
    Adam,
    Rmsprop,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Sgd => "sgd",
            UpdateRule::Adam => "adam",
            UpdateRule::Rmsprop => "rmsprop",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(UpdateRule::Sgd),
            "adam" => Ok(UpdateRule::Adam),
            "rmsprop" => Ok(UpdateRule::Rmsprop),
            other => Err(format!("unknown update rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("optimizer shape mismatch: state {state:?}, param {param:?}, delta {delta:?}")]
pub struct ShapeMismatch {
    pub state: (usize, usize),
    pub param: (usize, usize),
    pub delta: (usize, usize),
}

/// Moment accumulators for one matrix.
///
/// Adam uses both `first` and `second`; RMSprop only `second`; SGD neither,
/// though the buffers are still allocated so that every state has the shape
/// of the matrix it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub rule: UpdateRule,
    pub eta: f64,
    pub first: Array2<f64>,
    pub second: Array2<f64>,
    pub steps: u64,
}

impl OptimState {
    pub fn new(rule: UpdateRule, eta: f64, shape: (usize, usize)) -> Self {
        Self {
            rule,
            eta,
            first: Array2::zeros(shape),
            second: Array2::zeros(shape),
            steps: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.first.dim()
    }

    /// Moves `param` along `delta` in place and advances the moments.
    pub fn step(&mut self, param: &mut Array2<f64>, delta: ArrayView2<f64>) -> Result<(), ShapeMismatch> {
        if param.dim() != self.shape() || delta.dim() != self.shape() {
            return Err(ShapeMismatch {
                state: self.shape(),
                param: param.dim(),
                delta: delta.dim(),
            });
        }
        self.steps += 1;
        let eta = self.eta;
        match self.rule {
            UpdateRule::Sgd => param.scaled_add(eta, &delta),
            UpdateRule::Adam => {
                let t = self.steps as i32;
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                Zip::from(param)
                    .and(&mut self.first)
                    .and(&mut self.second)
                    .and(&delta)
                    .for_each(|p, m, v, &d| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * d;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * d * d;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p += eta * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    });
            }
            UpdateRule::Rmsprop => {
                Zip::from(param)
                    .and(&mut self.second)
                    .and(&delta)
                    .for_each(|p, v, &d| {
                        *v = RMSPROP_DECAY * *v + (1.0 - RMSPROP_DECAY) * d * d;
                        *p += eta * d / (v.sqrt() + RMSPROP_EPS);
                    });
            }
        }
        Ok(())
    }
}
