//! Reference unlearning methods the learned deletion operator is compared against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{negative_sample, Edge, EdgeSplit, Graph};
use crate::model::{forward_on_tape, link_bce, train_base, GnnModel, GraphOperands, TrainConfig};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor, Var};

/// Trains a fresh model on the post-deletion graph.
pub fn baseline_retrain(g_r: &Graph, split: &EdgeSplit, cfg: &TrainConfig) -> Result<GnnModel> {
    train_base(g_r, split, cfg)
}

/// Runs `steps` optimizer steps on `loss_sign · BCE` over every weight of a
/// copy of `base`, message passing on `g`. With `negatives = Some(exclude)`
/// each step also scores a fresh set of non-edges avoiding `exclude`;
/// with `None` only `positives` enter the loss.
fn bce_steps(
    base: &GnnModel,
    g: &Graph,
    positives: &[Edge],
    negatives: Option<&[Edge]>,
    steps: usize,
    lr: f64,
    loss_sign: f64,
    seed: u64,
) -> Result<GnnModel> {
    let mut model = base.clone();
    if positives.is_empty() || steps == 0 {
        return Ok(model);
    }
    let ops = GraphOperands::new(g);
    let mut opt = Optimizer::new(OptimizerKind::Adam, lr);
    let mut tape = Tape::new();
    for step in 0..steps {
        tape.reset();
        let sampled = match negatives {
            Some(exclude) => negative_sample(g, positives.len(), exclude, seed.wrapping_add(step as u64))?,
            None => Vec::new(),
        };
        let ws: Vec<Var> = model.weights().iter().map(|w| tape.leaf(w.clone())).collect();
        let outs = forward_on_tape(&mut tape, &ops, &ws, |_, _, h| Ok(h))?;
        let z = *outs.last().expect("at least one layer");
        let bce = link_bce(&mut tape, z, positives, &sampled)?;
        let loss = tape.scale(bce, loss_sign);
        if !tape.value(loss).item().is_finite() {
            return Err(Error::Numeric(format!("baseline loss diverged at step {step}")));
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor> = ws
            .iter()
            .zip(model.weights())
            .map(|(&v, w)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(w.rows(), w.cols())))
            .collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let mut params: Vec<&mut Tensor> = model.weights_mut().iter_mut().collect();
        opt.step(&mut params, &grad_refs)?;
    }
    Ok(model)
}

/// Gradient ascent on the link loss of the deleted edges, treated as
/// positives, with message passing on the original graph `g`. No negatives
/// are scored.
pub fn baseline_grad_ascent(base: &GnnModel, g: &Graph, e_d: &[Edge], steps: usize, lr: f64) -> Result<GnnModel> {
    bce_steps(base, g, e_d, None, steps, lr, -1.0, 0)
}

/// Fine-tunes on the remaining edges for `steps` steps, then adds Gaussian
/// noise with standard deviation `noise_sigma` to every weight.
pub fn baseline_noisy_finetune(
    base: &GnnModel,
    g_r: &Graph,
    split: &EdgeSplit,
    steps: usize,
    lr: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<GnnModel> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::Argument(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    let mut held_out = split.validation.clone();
    held_out.extend_from_slice(&split.test);
    let mut model = bce_steps(base, g_r, &split.remaining, Some(&held_out), steps, lr, 1.0, seed)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0153);
        for w in model.weights_mut() {
            for x in w.data_mut() {
                *x += normal.sample(&mut rng);
            }
        }
    }
    Ok(model)
}
