use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Largest relative disagreement between the tape gradient of `f` at `x` and
/// central differences with step `eps`.
///
/// `f` receives a fresh tape and the trainable input and must return a scalar.
/// The relative error of each coordinate is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |point: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(point.clone());
        let out = f(&mut tape, v)?;
        tape.check_finite()?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = match tape.grad(v) {
        Some(g) => g.clone(),
        None => Tensor::zeros(x.rows(), x.cols()),
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.data()[i];
        if !numeric.is_finite() {
            return Err(Error::Numeric(format!("finite difference at coordinate {i}")));
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
