//! Diagnostic for the bound on how far the deletion operator can move an
//! edge's dot-product score:
//!
//! ⟨z_u, z_v⟩ − ⟨z'_u, z'_v⟩ ≥ −(1 + ‖W_D‖₂²)/2 · ‖z_u − z_v‖²
//!
//! with `z' = normalize(σ(W_D z))` and both sides on unit-normalized vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-10;
const SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numeric("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn mat_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| dot(w.row(r), v)).collect()
}

fn mat_t_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &vr) in v.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(w.row(r)) {
            *o += x * vr;
        }
    }
    out
}

/// Largest singular value by power iteration on `WᵀW`.
pub fn spectral_norm(w: &Tensor) -> f64 {
    spectral_norm_with(w, POWER_ITERS, POWER_TOL)
}

pub fn spectral_norm_with(w: &Tensor, iters: usize, tol: f64) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    let n = w.cols();
    // Non-uniform start so it is not orthogonal to the leading singular vector
    // of structured matrices.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let wv = mat_vec(w, &v);
        let next_sigma = dot(&wv, &wv).sqrt();
        if next_sigma == 0.0 {
            return 0.0;
        }
        let wtwv = mat_t_vec(w, &wv);
        let len = dot(&wtwv, &wtwv).sqrt();
        if len == 0.0 {
            return next_sigma;
        }
        v = wtwv.into_iter().map(|x| x / len).collect();
        let converged = (next_sigma - sigma).abs() <= tol * next_sigma.max(1.0);
        sigma = next_sigma;
        if converged {
            break;
        }
    }
    let wv = mat_vec(w, &v);
    dot(&wv, &wv).sqrt().max(sigma)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Evaluates both sides of the bound for one pair of embeddings.
pub fn deletion_bound_check(z_u: &[f64], z_v: &[f64], w_d: &Tensor) -> Result<BoundCheck> {
    if z_u.len() != z_v.len() || w_d.cols() != z_u.len() {
        return Err(Error::shape(
            "deletion_bound_check",
            format!("z {} / {} with W_D {:?}", z_u.len(), z_v.len(), w_d.shape()),
        ));
    }
    if z_u.iter().chain(z_v).chain(w_d.data()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("inputs must be finite".into()));
    }
    let zu = normalize(z_u)?;
    let zv = normalize(z_v)?;
    let project = |z: &[f64]| -> Result<Vec<f64>> {
        let act: Vec<f64> = mat_vec(w_d, z).into_iter().map(sigmoid).collect();
        normalize(&act)
    };
    let zu2 = project(&zu)?;
    let zv2 = project(&zv)?;
    let lhs = dot(&zu, &zv) - dot(&zu2, &zv2);
    let diff_sq: f64 = zu.iter().zip(&zv).map(|(a, b)| (a - b) * (a - b)).sum();
    let s = spectral_norm(w_d);
    let rhs = -(1.0 + s * s) / 2.0 * diff_sq;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - SLACK,
    })
}
