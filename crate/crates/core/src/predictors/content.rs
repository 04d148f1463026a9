//! Content predictors: clean content for a frame about to be inserted.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::content_loss_grad;
use super::nn::{Layout, Mlp};
use super::Trainable;
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::state::{check_slot, Spectrogram};

/// Predicts the clean column at index `slot` of `x_masked`, whose column
/// `slot` has been zeroed. `mu` has the same length, with the prior of the
/// new frame already in place at `slot`.
pub trait ContentModel {
    fn predict(
        &self,
        x_masked: &Spectrogram,
        mu: &Spectrogram,
        t: f64,
        slot: usize,
    ) -> Result<Vec<f32>>;
}

impl<M: ContentModel + ?Sized> ContentModel for &M {
    fn predict(
        &self,
        x_masked: &Spectrogram,
        mu: &Spectrogram,
        t: f64,
        slot: usize,
    ) -> Result<Vec<f32>> {
        (**self).predict(x_masked, mu, t, slot)
    }
}

/// Zero residual: the prediction is the prior column itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriorContent;

impl ContentModel for PriorContent {
    fn predict(
        &self,
        x_masked: &Spectrogram,
        mu: &Spectrogram,
        _t: f64,
        slot: usize,
    ) -> Result<Vec<f32>> {
        x_masked.check_same_shape(mu)?;
        check_slot(slot, mu.frames().saturating_sub(1))?;
        Ok(mu.column(slot).to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentNetConfig {
    pub bins: usize,
    pub hidden: usize,
    pub depth: usize,
}

impl ContentNetConfig {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            hidden: 32,
            depth: 1,
        }
    }
}

/// Kernel-3 window of masked state and prior around the slot, plus `t`,
/// through a tanh MLP to a residual added to the slot's prior column.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentNet {
    config: ContentNetConfig,
    layout: Layout,
    mlp: Mlp,
    params: Vec<f64>,
}

impl ContentNet {
    pub fn new<R: Rng + ?Sized>(config: ContentNetConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::uninit(config)?;
        net.mlp.init(&mut net.params, rng);
        Ok(net)
    }

    fn uninit(config: ContentNetConfig) -> Result<Self> {
        if config.bins == 0 || config.hidden == 0 {
            return Err(Error::invalid("content net", "sizes must be positive"));
        }
        let mut layout = Layout::default();
        let mlp = Mlp::new(
            &mut layout,
            "mlp",
            6 * config.bins + 1,
            config.hidden,
            config.depth,
            config.bins,
        );
        let params = vec![0.0; layout.total];
        Ok(Self {
            config,
            layout,
            mlp,
            params,
        })
    }

    pub fn config(&self) -> &ContentNetConfig {
        &self.config
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.layout.to_checkpoint("content", &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let first = ckpt.tensor("mlp.0.w")?;
        let depth = ckpt
            .tensors
            .iter()
            .filter(|t| t.name.ends_with(".w"))
            .count()
            - 1;
        let bins = (first.cols - 1) / 6;
        let config = ContentNetConfig {
            bins,
            hidden: if depth == 0 { 1 } else { first.rows },
            depth,
        };
        let mut net = Self::uninit(config)?;
        net.params = net.layout.load_checkpoint("content", ckpt)?;
        Ok(net)
    }

    fn features(
        &self,
        x_masked: &Spectrogram,
        mu: &Spectrogram,
        t: f64,
        slot: usize,
    ) -> Result<Vec<f64>> {
        x_masked.check_same_shape(mu)?;
        if x_masked.bins() != self.config.bins {
            return Err(Error::invalid(
                "bins",
                format!(
                    "model expects {}, state has {}",
                    self.config.bins,
                    x_masked.bins()
                ),
            ));
        }
        check_slot(slot, x_masked.frames().saturating_sub(1))?;
        let bins = self.config.bins;
        let len = x_masked.frames();
        let mut feat = vec![0.0; 6 * bins + 1];
        for (w, j) in [slot - 1, slot, slot + 1].into_iter().enumerate() {
            if j >= len {
                continue;
            }
            for b in 0..bins {
                feat[w * bins + b] = x_masked.column(j)[b] as f64;
                feat[(3 + w) * bins + b] = mu.column(j)[b] as f64;
            }
        }
        feat[6 * bins] = t;
        Ok(feat)
    }
}

impl ContentModel for ContentNet {
    fn predict(
        &self,
        x_masked: &Spectrogram,
        mu: &Spectrogram,
        t: f64,
        slot: usize,
    ) -> Result<Vec<f32>> {
        let feat = self.features(x_masked, mu, t, slot)?;
        let trace = self.mlp.forward(&self.params, feat);
        Ok(mu
            .column(slot)
            .iter()
            .zip(trace.output())
            .map(|(&m, &d)| (m as f64 + d) as f32)
            .collect())
    }
}

/// One content training example.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentExample {
    pub x_masked: Spectrogram,
    pub mu: Spectrogram,
    pub t: f64,
    pub slot: usize,
    pub target: Vec<f32>,
    pub prior: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentBatch {
    pub examples: Vec<ContentExample>,
    pub lambda_prior: f64,
}

impl Trainable for ContentNet {
    type Batch = ContentBatch;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_grad(&self, batch: &ContentBatch) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        if batch.examples.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / batch.examples.len() as f64;
        let mut total = 0.0;
        for ex in &batch.examples {
            let feat = self.features(&ex.x_masked, &ex.mu, ex.t, ex.slot)?;
            let trace = self.mlp.forward(&self.params, feat);
            let pred: Vec<f64> = ex
                .mu
                .column(ex.slot)
                .iter()
                .zip(trace.output())
                .map(|(&m, &d)| m as f64 + d)
                .collect();
            let target: Vec<f64> = ex.target.iter().map(|&v| v as f64).collect();
            let prior: Vec<f64> = ex.prior.iter().map(|&v| v as f64).collect();
            let (loss, mut dpred) = content_loss_grad(&pred, &target, &prior, batch.lambda_prior)?;
            total += loss;
            dpred.iter_mut().for_each(|d| *d *= scale);
            self.mlp.backward(&self.params, &mut grad, &trace, &dpred);
        }
        Ok((total * scale, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_jdmp, write_jdmp};
    use crate::rng::stream;

    fn state() -> (Spectrogram, Spectrogram) {
        let x = Spectrogram::from_columns(2, &[[0.1f32, 0.2], [0.0, 0.0], [1.0, 0.5]]).unwrap();
        let mu = Spectrogram::from_columns(2, &[[0.0f32, 0.5], [0.0, 0.5], [1.0, 1.0]]).unwrap();
        (x, mu)
    }

    #[test]
    fn prior_content_returns_prior_column() {
        let (x, mu) = state();
        assert_eq!(
            PriorContent.predict(&x, &mu, 0.5, 1).unwrap(),
            vec![0.0, 0.5]
        );
        assert!(PriorContent.predict(&x, &mu, 0.5, 0).is_err());
    }

    #[test]
    fn residual_is_anchored_on_prior() {
        let cfg = ContentNetConfig::new(2);
        let mut net = ContentNet::new(cfg, &mut stream(0, "c")).unwrap();
        net.params_mut().fill(0.0);
        let (x, mu) = state();
        assert_eq!(net.predict(&x, &mu, 0.5, 2).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ContentNetConfig {
            bins: 2,
            hidden: 4,
            depth: 2,
        };
        let net = ContentNet::new(cfg, &mut stream(1, "c")).unwrap();
        let mut buf = Vec::new();
        write_jdmp(&mut buf, &net.to_checkpoint()).unwrap();
        let back = ContentNet::from_checkpoint(&read_jdmp(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.config(), &cfg);
        let (x, mu) = state();
        let a = net.predict(&x, &mu, 0.1, 1).unwrap();
        let b = back.predict(&x, &mu, 0.1, 1).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-5);
        }
    }
}
