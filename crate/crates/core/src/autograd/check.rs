//! Finite-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between the tape gradient of a scalar function and
/// a central difference with step `eps`, over every entry of every input.
///
/// `f` builds the function on a fresh tape from the given parameter handles.
/// It is evaluated twice at the unperturbed point to confirm determinism.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {eps}")));
    }
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).item()?;
    tape.backward(out)?;
    if eval(inputs)?.to_bits() != base.to_bits() {
        return Err(Error::Numeric("function is not deterministic".into()));
    }

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let grad = tape.grad(*v).expect("parameter gradient");
        for i in 0..inputs[k].numel() {
            let x0 = inputs[k].data()[i];
            probe[k].data_mut()[i] = x0 + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = x0 - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|t, v| f(t, v[0]), std::slice::from_ref(x), eps)
}
