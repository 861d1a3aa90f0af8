//! Central finite-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of a gradient check for one input.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub input: usize,
    /// `max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12)`.
    pub rel_error: f64,
}

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;

/// Compares tape gradients of `f` with central differences for every input.
///
/// `f` builds a scalar loss from the leaves it receives. Returns the
/// per-input reports, or an error message naming the first input above `tol`.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    tol: f64,
    f: F,
) -> std::result::Result<Vec<GradReport>, String>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let l = f(&mut tape, &vars).expect("loss evaluation");
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars).map_err(|e| e.to_string())?;
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;

    let mut reports = Vec::with_capacity(inputs.len());
    for (idx, x) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[idx])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x.shape()));
        let mut vals = inputs.to_vec();
        let mut numeric = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let mut d = x.data().to_vec();
            d[j] = x.data()[j] + FD_STEP;
            vals[idx] = Tensor::new(x.shape(), d.clone()).unwrap();
            let up = eval(&vals);
            d[j] = x.data()[j] - FD_STEP;
            vals[idx] = Tensor::new(x.shape(), d).unwrap();
            let down = eval(&vals);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let numeric = Tensor::new(x.shape(), numeric).unwrap();
        let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-12);
        let rel = analytic.max_abs_diff(&numeric) / scale;
        if !(rel < tol) {
            return Err(format!(
                "input {idx}: relative gradient error {rel:e} exceeds {tol:e}"
            ));
        }
        reports.push(GradReport {
            input: idx,
            rel_error: rel,
        });
    }
    Ok(reports)
}
