//! Training objectives: slot cross-entropy and the content residual loss.

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&o| (o - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&o| (o - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&o| o - lse).collect()
}

fn check_target(len: usize, target_slot: usize) -> Result<()> {
    if target_slot == 0 || target_slot > len {
        return Err(Error::invalid(
            "target slot",
            format!("{target_slot} outside 1..={len}"),
        ));
    }
    Ok(())
}

/// Cross-entropy of the slot distribution; logit `j` scores slot `j + 1`.
pub fn location_loss(logits: &[f64], target_slot: usize) -> Result<f64> {
    check_target(logits.len(), target_slot)?;
    Ok(-log_softmax(logits)[target_slot - 1])
}

/// Loss and its gradient with respect to the logits (`p − y`).
pub fn location_loss_grad(logits: &[f64], target_slot: usize) -> Result<(f64, Vec<f64>)> {
    check_target(logits.len(), target_slot)?;
    let loss = -log_softmax(logits)[target_slot - 1];
    let mut g = softmax(logits);
    g[target_slot - 1] -= 1.0;
    Ok((loss, g))
}

/// `‖pred − target‖₁ + λ ‖pred − prior‖₂²`.
pub fn content_loss(pred: &[f64], target: &[f64], prior: &[f64], lambda_prior: f64) -> Result<f64> {
    Ok(content_loss_grad(pred, target, prior, lambda_prior)?.0)
}

/// Content loss with its gradient with respect to `pred`.
pub fn content_loss_grad(
    pred: &[f64],
    target: &[f64],
    prior: &[f64],
    lambda_prior: f64,
) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.len() != prior.len() {
        return Err(Error::invalid(
            "content loss",
            format!(
                "lengths {}, {}, {} differ",
                pred.len(),
                target.len(),
                prior.len()
            ),
        ));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((&p, &y), &m) in pred.iter().zip(target).zip(prior) {
        let r = p - y;
        let q = p - m;
        loss += r.abs() + lambda_prior * q * q;
        grad.push(sign(r) + 2.0 * lambda_prior * q);
    }
    Ok((loss, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
