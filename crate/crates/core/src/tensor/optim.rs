use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// First and second moment estimates for a list of parameters.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn check_pairs(params: &[&mut Tensor], grads: &[&Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Argument(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "optimizer",
                format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    hp: AdamParams,
) -> Result<()> {
    check_pairs(params, grads)?;
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() {
        return Err(Error::Argument("optimizer state tracks a different parameter list".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = hp.beta1 * *mi + (1.0 - hp.beta1) * gi;
            *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}

pub fn sgd_step(params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) -> Result<()> {
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, &gi) in p.data_mut().iter_mut().zip(g.data()) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}

/// Stateful wrapper choosing between the two update rules.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            adam: AdamState::default(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => adam_step(params, grads, &mut self.adam, AdamParams::with_lr(self.lr)),
            OptimizerKind::Sgd => sgd_step(params, grads, self.lr),
        }
    }
}
