//! Central finite-difference verification of tape gradients.

use super::{Result, Tape, Tensor, Var};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
}

/// Denominator floor for the relative error, so that entries whose true
/// gradient is zero are judged by absolute error instead of amplified
/// round-off.
pub const REL_FLOOR: f64 = 1e-3;

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with step `h`, for every entry of every input.
///
/// `f` receives a fresh tape and one variable per input, and must be a pure
/// function of the input values (seed any randomness inside the closure).
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (slot, &var) in vars.iter().enumerate() {
        let analytic = grads.wrt(var);
        for idx in 0..inputs[slot].len() {
            let orig = inputs[slot].data()[idx];
            probe[slot].data_mut()[idx] = orig + h;
            let plus = eval(&probe)?;
            probe[slot].data_mut()[idx] = orig - h;
            let minus = eval(&probe)?;
            probe[slot].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[idx];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
