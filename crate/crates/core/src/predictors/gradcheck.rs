//! Central-difference check of analytic gradients.

use super::Trainable;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_error: f64,
    /// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
}

// Keeps parameters with vanishing gradients from dominating the relative error.
const REL_FLOOR: f64 = 1e-6;

/// Compare `loss_and_grad` against central differences with step `h` on
/// every `stride`-th parameter.
pub fn gradient_check<M: Trainable + Clone>(
    model: &M,
    batch: &M::Batch,
    h: f64,
    stride: usize,
) -> Result<GradCheckReport> {
    let (_, grad) = model.loss_and_grad(batch)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
    };
    for i in (0..grad.len()).step_by(stride.max(1)) {
        let orig = model.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus = probe.loss(batch)?;
        probe.params_mut()[i] = orig - h;
        let minus = probe.loss(batch)?;
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let abs = (grad[i] - numeric).abs();
        let rel = abs / grad[i].abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    Ok(report)
}
