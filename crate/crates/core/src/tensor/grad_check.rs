//! Finite-difference verification of reverse-mode gradients.
//!
//! `grad_check` compares the analytic gradient of a scalar-valued function
//! against central differences, coordinate by coordinate. Coordinates whose
//! one-sided slopes disagree (a kink under the perturbation, e.g. a relu
//! input crossing zero) are excluded from the comparison and reported.

use super::Tensor;
use crate::error::{Error, Result};

/// Relative disagreement between the one-sided slopes beyond which a
/// coordinate is treated as sitting on a kink. Smooth functions at the step
/// sizes used here disagree by orders of magnitude less.
const KINK_SLOPE_TOL: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over the compared coordinates.
    pub max_rel_err: f64,
    /// Coordinate attaining `max_rel_err`.
    pub worst_coord: usize,
    /// Number of coordinates actually compared.
    pub checked: usize,
    /// Coordinates excluded because the function is non-smooth there.
    pub skipped_kinks: Vec<usize>,
    /// Whether every compared coordinate met the requested tolerance.
    pub pass: bool,
}

/// Check `f`'s gradient at `x0`. `f` must reduce to a `[1, 1]` tensor; its
/// analytic gradient is taken from one reverse sweep, the numeric one from
/// central differences with the given `step`. `tol` is the relative-error
/// bound recorded in the report's `pass` flag, with errors measured as
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: &F, x0: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if step <= 0.0 {
        return Err(Error::InvalidArgument {
            op: "grad_check",
            reason: format!("step must be positive, got {step}"),
        });
    }
    let (rows, cols) = (x0.rows(), x0.cols());
    let base = x0.data().to_vec();

    let leaf = Tensor::leaf(rows, cols, base.clone())?;
    let out = f(&leaf)?;
    let f0 = out.item()?;
    let grads = out.backward()?;
    // A gradient can be legitimately absent when f ignores its input.
    let analytic: Vec<f64> = match grads.get(&leaf) {
        Some(g) => g.to_vec(),
        None => vec![0.0; base.len()],
    };

    let eval = |data: Vec<f64>| -> Result<f64> { f(&Tensor::new(rows, cols, data)?)?.item() };

    let mut max_rel_err: f64 = 0.0;
    let mut worst_coord = 0;
    let mut checked = 0;
    let mut skipped_kinks = Vec::new();

    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let f_plus = eval(plus)?;
        let f_minus = eval(minus)?;

        let slope_plus = (f_plus - f0) / step;
        let slope_minus = (f0 - f_minus) / step;
        let slope_scale = slope_plus.abs().max(slope_minus.abs()).max(1.0);
        if (slope_plus - slope_minus).abs() > KINK_SLOPE_TOL * slope_scale {
            skipped_kinks.push(i);
            continue;
        }

        let numeric = (f_plus - f_minus) / (2.0 * step);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_coord = i;
        }
        checked += 1;
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst_coord,
        checked,
        skipped_kinks,
        pass: max_rel_err <= tol,
    })
}
