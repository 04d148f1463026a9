//! Location predictors: score every insertion slot of the current state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::location_loss_grad;
use super::nn::{Dense, Layout, Mlp, MlpTrace};
use super::Trainable;
use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::state::{prior_segments, Spectrogram};

/// Scores the `L` insertion slots of a length-`L` state.
///
/// Logit `j` belongs to slot `j + 1`, i.e. a new column placed right after
/// column `j`.
pub trait LocationModel {
    fn score_slots(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Vec<f64>>;
}

/// Equal logits everywhere: insertions spread uniformly over slots.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformLocation;

impl LocationModel for UniformLocation {
    fn score_slots(&self, x: &Spectrogram, _mu: &Spectrogram, _t: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.frames()])
    }
}

impl<M: LocationModel + ?Sized> LocationModel for &M {
    fn score_slots(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Vec<f64>> {
        (**self).score_slots(x, mu, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationNetConfig {
    pub bins: usize,
    pub conv_channels: usize,
    pub hidden: usize,
    pub depth: usize,
    /// Segment lengths get a one-hot code up to this length; longer ones
    /// share the last entry.
    pub max_segment: usize,
}

impl LocationNetConfig {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            conv_channels: 8,
            hidden: 16,
            depth: 1,
            max_segment: 24,
        }
    }

    fn head_inputs(&self) -> usize {
        2 * self.conv_channels + 2 + self.max_segment
    }
}

/// Trainable slot scorer.
///
/// A kernel-3 convolution over the stacked `(x, μ)` columns gives local
/// features; these are averaged over the prior segment (the run of identical
/// prior columns a frame belongs to) and joined with the segment length (log
/// and one-hot) and `t`; a tanh MLP maps each column's features to one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationNet {
    config: LocationNetConfig,
    layout: Layout,
    conv: Dense,
    head: Mlp,
    params: Vec<f64>,
}

const KERNEL: usize = 3;

struct Forward {
    windows: Vec<Vec<f64>>,
    conv: Vec<Vec<f64>>,
    seg_of: Vec<usize>,
    seg_len: Vec<usize>,
    heads: Vec<MlpTrace>,
}

impl LocationNet {
    pub fn new<R: Rng + ?Sized>(config: LocationNetConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::uninit(config)?;
        net.conv.init(&mut net.params, rng);
        net.head.init(&mut net.params, rng);
        Ok(net)
    }

    fn uninit(config: LocationNetConfig) -> Result<Self> {
        if config.bins == 0
            || config.conv_channels == 0
            || config.hidden == 0
            || config.max_segment == 0
        {
            return Err(Error::invalid("location net", "sizes must be positive"));
        }
        let mut layout = Layout::default();
        let c = config.conv_channels;
        let conv = Dense::new(&mut layout, "conv", 2 * KERNEL * config.bins, c);
        let head = Mlp::new(
            &mut layout,
            "head",
            config.head_inputs(),
            config.hidden,
            config.depth,
            1,
        );
        let params = vec![0.0; layout.total];
        Ok(Self {
            config,
            layout,
            conv,
            head,
            params,
        })
    }

    pub fn config(&self) -> &LocationNetConfig {
        &self.config
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.layout.to_checkpoint("location", &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let conv = ckpt.tensor("conv.w")?;
        let hidden = ckpt.tensor("head.0.w")?;
        let depth = ckpt
            .tensors
            .iter()
            .filter(|t| t.name.starts_with("head.") && t.name.ends_with(".w"))
            .count()
            - 1;
        let config = LocationNetConfig {
            bins: conv.cols / (2 * KERNEL),
            conv_channels: conv.rows,
            hidden: if depth == 0 { 1 } else { hidden.rows },
            depth,
            max_segment: hidden.cols.saturating_sub(2 * conv.rows + 2),
        };
        let mut net = Self::uninit(config)?;
        net.params = net.layout.load_checkpoint("location", ckpt)?;
        Ok(net)
    }

    fn forward(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Forward> {
        x.check_same_shape(mu)?;
        if x.bins() != self.config.bins {
            return Err(Error::invalid(
                "bins",
                format!("model expects {}, state has {}", self.config.bins, x.bins()),
            ));
        }
        let (bins, len) = x.shape();
        let c = self.config.conv_channels;
        let mut windows = Vec::with_capacity(len);
        let mut conv = Vec::with_capacity(len);
        for j in 0..len {
            let mut w = vec![0.0; 2 * KERNEL * bins];
            for (slot, dj) in [-1isize, 0, 1].iter().enumerate() {
                let src = j as isize + dj;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let src = src as usize;
                for b in 0..bins {
                    w[slot * bins + b] = x.column(src)[b] as f64;
                    w[(KERNEL + slot) * bins + b] = mu.column(src)[b] as f64;
                }
            }
            let mut out = vec![0.0; c];
            self.conv.forward(&self.params, &w, &mut out);
            out.iter_mut().for_each(|v| *v = v.tanh());
            windows.push(w);
            conv.push(out);
        }

        let segments = prior_segments(mu);
        let mut seg_of = vec![0; len];
        let mut pooled = Vec::with_capacity(segments.len());
        for (s, span) in segments.iter().enumerate() {
            let mut acc = vec![0.0; c];
            for (j, slot) in seg_of
                .iter_mut()
                .enumerate()
                .skip(span.start)
                .take(span.len)
            {
                *slot = s;
                for (a, v) in acc.iter_mut().zip(&conv[j]) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= span.len as f64);
            pooled.push(acc);
        }
        let seg_len: Vec<usize> = segments.iter().map(|s| s.len).collect();

        let heads = (0..len)
            .map(|j| {
                let s = seg_of[j];
                let mut feat = Vec::with_capacity(self.config.head_inputs());
                feat.extend_from_slice(&conv[j]);
                feat.extend_from_slice(&pooled[s]);
                feat.push((seg_len[s] as f64).ln());
                feat.push(t);
                let mut onehot = vec![0.0; self.config.max_segment];
                onehot[seg_len[s].min(self.config.max_segment) - 1] = 1.0;
                feat.extend(onehot);
                self.head.forward(&self.params, feat)
            })
            .collect();
        Ok(Forward {
            windows,
            conv,
            seg_of,
            seg_len,
            heads,
        })
    }

    fn backward(&self, fw: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let c = self.config.conv_channels;
        let len = fw.conv.len();
        let mut dconv = vec![vec![0.0; c]; len];
        let mut dpooled = vec![vec![0.0; c]; fw.seg_len.len()];
        for j in 0..len {
            if dlogits[j] == 0.0 {
                continue;
            }
            let dfeat = self
                .head
                .backward(&self.params, grad, &fw.heads[j], &[dlogits[j]]);
            for k in 0..c {
                dconv[j][k] += dfeat[k];
                dpooled[fw.seg_of[j]][k] += dfeat[c + k];
            }
        }
        for (j, dc) in dconv.iter().enumerate() {
            let s = fw.seg_of[j];
            let n = fw.seg_len[s] as f64;
            let dpre: Vec<f64> = (0..c)
                .map(|k| (dc[k] + dpooled[s][k] / n) * (1.0 - fw.conv[j][k] * fw.conv[j][k]))
                .collect();
            self.conv
                .backward(&self.params, grad, &fw.windows[j], &dpre, None);
        }
    }
}

impl LocationModel for LocationNet {
    fn score_slots(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Vec<f64>> {
        let fw = self.forward(x, mu, t)?;
        Ok(fw.heads.iter().map(|h| h.output()[0]).collect())
    }
}

/// One location training example: a state and the slot its missing frame came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationExample {
    pub x: Spectrogram,
    pub mu: Spectrogram,
    pub t: f64,
    pub target_slot: usize,
}

impl Trainable for LocationNet {
    type Batch = [LocationExample];

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_grad(&self, batch: &[LocationExample]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let fw = self.forward(&ex.x, &ex.mu, ex.t)?;
            let logits: Vec<f64> = fw.heads.iter().map(|h| h.output()[0]).collect();
            let (loss, mut dlogits) = location_loss_grad(&logits, ex.target_slot)?;
            total += loss;
            dlogits.iter_mut().for_each(|d| *d *= scale);
            self.backward(&fw, &dlogits, &mut grad);
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
        let x = Spectrogram::from_columns(2, &[[0.1f32, 0.2], [0.3, -0.4], [1.0, 0.5], [0.9, 0.6]])
            .unwrap();
        let mu = Spectrogram::from_columns(2, &[[0.0f32, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
            .unwrap();
        (x, mu)
    }

    #[test]
    fn one_logit_per_column() {
        let net = LocationNet::new(LocationNetConfig::new(2), &mut stream(0, "l")).unwrap();
        let (x, mu) = state();
        let logits = net.score_slots(&x, &mu, 0.5).unwrap();
        assert_eq!(logits.len(), 4);
        assert!(logits.iter().all(|v| v.is_finite()));
        assert!(net
            .score_slots(&x, &mu.delete_column(0).unwrap(), 0.5)
            .is_err());
    }

    #[test]
    fn uniform_scores_zero() {
        let (x, mu) = state();
        assert_eq!(
            UniformLocation.score_slots(&x, &mu, 0.3).unwrap(),
            vec![0.0; 4]
        );
    }

    #[test]
    fn checkpoint_round_trip_preserves_scores_to_f32() {
        let cfg = LocationNetConfig {
            bins: 2,
            conv_channels: 3,
            hidden: 5,
            depth: 2,
            max_segment: 5,
        };
        let net = LocationNet::new(cfg, &mut stream(0, "l")).unwrap();
        let mut buf = Vec::new();
        write_jdmp(&mut buf, &net.to_checkpoint()).unwrap();
        let back = LocationNet::from_checkpoint(&read_jdmp(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.config(), &cfg);
        let (x, mu) = state();
        let a = net.score_slots(&x, &mu, 0.2).unwrap();
        let b = back.score_slots(&x, &mu, 0.2).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-5);
        }
    }
}
