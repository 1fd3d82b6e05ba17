//! Central finite-difference gradient oracle.
//!
//! Only forward values are used, so the result is independent of the
//! backward rules it is meant to check.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of a gradient comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest element-wise `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// `(input, element)` where the maximum occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares the tape gradient of `f` with the fourth-order central
/// difference `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
///
/// `f` builds a scalar loss from the inputs registered as trainable leaves.
pub fn check<F>(inputs: &[Tensor], f: F, h: f64, floor: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, v) in vars.iter().enumerate() {
        let g = grads.get(*v).expect("trainable leaf has a gradient").data().to_vec();
        for e in 0..inputs[ti].numel() {
            let orig = inputs[ti].data()[e];
            let mut at = |x: f64| -> Result<f64> {
                work[ti].data_mut()[e] = x;
                eval(&work)
            };
            let (p2, p1) = (at(orig + 2.0 * h)?, at(orig + h)?);
            let (m1, m2) = (at(orig - h)?, at(orig - 2.0 * h)?);
            work[ti].data_mut()[e] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let denom = g[e].abs().max(numeric.abs()).max(floor);
            let rel = (g[e] - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, e);
                report.analytic = g[e];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
