//! Per-phone duration regression trained with mean squared error.
//!
//! Under a bimodal duration law the MSE minimiser collapses onto the mean,
//! which is the failure mode the jump sampler is compared against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRegressor {
    pub weights: Vec<f64>,
}

impl DurationRegressor {
    /// Gradient descent on the per-phone mean squared error; `data` yields
    /// `(phones, durations)` pairs.
    pub fn fit<'a, I>(num_phones: usize, data: I, cfg: &RegressionConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [u32], &'a [usize])>,
    {
        let mut sums = vec![0.0; num_phones];
        let mut counts = vec![0usize; num_phones];
        let mut sq = vec![0.0; num_phones];
        for (phones, durs) in data {
            if phones.len() != durs.len() {
                return Err(Error::invalid(
                    "shape",
                    format!("{} phones but {} durations", phones.len(), durs.len()),
                ));
            }
            for (&p, &d) in phones.iter().zip(durs) {
                let p = p as usize;
                if p >= num_phones {
                    return Err(Error::invalid("phone", format!("id {p} >= {num_phones}")));
                }
                sums[p] += d as f64;
                sq[p] += (d * d) as f64;
                counts[p] += 1;
            }
        }
        let mut weights = vec![1.0; num_phones];
        for epoch in 0..cfg.epochs {
            for p in 0..num_phones {
                if counts[p] == 0 {
                    continue;
                }
                let n = counts[p] as f64;
                // d/dw of mean (w − d)²
                let g = 2.0 * (weights[p] - sums[p] / n);
                weights[p] -= cfg.lr * g;
                let loss = weights[p] * weights[p] - 2.0 * weights[p] * sums[p] / n + sq[p] / n;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        what: "regression",
                    });
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn predict(&self, phone: u32) -> f64 {
        self.weights
            .get(phone as usize)
            .copied()
            .unwrap_or(1.0)
            .max(1.0)
    }

    /// Rounded frame counts, at least one per phone.
    pub fn predict_durations(&self, phones: &[u32]) -> Vec<usize> {
        phones
            .iter()
            .map(|&p| self.predict(p).round().max(1.0) as usize)
            .collect()
    }
}
