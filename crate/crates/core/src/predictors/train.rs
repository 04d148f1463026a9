//! Joint training of the location and content networks on forward draws.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::content::{ContentBatch, ContentExample, ContentNet, ContentNetConfig};
use super::location::{LocationExample, LocationNet, LocationNetConfig};
use super::nn::Adam;
use super::Trainable;
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::forward::forward_sample;
use crate::schedule::{NoiseSchedule, DEFAULT_T_MIN};
use crate::state::DiffusionTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_prior: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t_min: f64,
    pub schedule: NoiseSchedule,
    pub conv_channels: usize,
    pub location_hidden: usize,
    pub content_hidden: usize,
    pub depth: usize,
    pub max_segment: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 16,
            epochs: 10,
            lambda_prior: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t_min: DEFAULT_T_MIN,
            schedule: NoiseSchedule::default(),
            conv_channels: 8,
            location_hidden: 16,
            content_hidden: 32,
            depth: 1,
            max_segment: 24,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.lambda_prior >= 0.0 && self.lambda_prior.is_finite()) {
            return Err(Error::invalid("lambda_prior", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1", "Adam betas must lie in [0, 1)"));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return Err(Error::invalid("t_min", "must lie in (0, 1)"));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub location: f64,
    pub content: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loc_loss,cont_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.location, e.content));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub location: LocationNet,
    pub content: ContentNet,
    pub report: TrainReport,
}

// Resampling t gives up after this many draws without a deletable frame.
const MAX_T_DRAWS: usize = 64;

/// One location and one content example from a fresh forward draw.
pub fn training_pair<R: Rng + ?Sized>(
    u: &Utterance,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Option<(LocationExample, ContentExample)>> {
    for _ in 0..MAX_T_DRAWS {
        let t = DiffusionTime::new(rng.random::<f64>())?;
        let s = forward_sample(&u.x0, &u.mu, &u.alignment, t, &cfg.schedule, cfg.t_min, rng)?;
        let Some(j) = s.target else { continue };
        let k = j.s_target;
        // at sampling time a new column takes its left neighbour's prior
        let mu_c = j.mu_minus_k.insert_column(j.mu_minus_k.column(k - 1), k)?;
        let x_masked = j.x_minus_k.insert_column(&vec![0.0; u.x0.bins()], k)?;
        let loc = LocationExample {
            x: j.x_minus_k,
            mu: j.mu_minus_k,
            t: t.get(),
            target_slot: k,
        };
        let cont = ContentExample {
            x_masked,
            mu: mu_c,
            t: t.get(),
            slot: k,
            target: j.x0_k,
            prior: j.prior_k,
        };
        return Ok(Some((loc, cont)));
    }
    Ok(None)
}

/// Train fresh networks on `utterances` with Adam.
pub fn train<R: Rng + ?Sized>(
    utterances: &[Utterance],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainedModels> {
    cfg.validate()?;
    let bins = utterances
        .first()
        .ok_or_else(|| Error::invalid("corpus", "no utterances to train on"))?
        .x0
        .bins();
    let mut location = LocationNet::new(
        LocationNetConfig {
            bins,
            conv_channels: cfg.conv_channels,
            hidden: cfg.location_hidden,
            depth: cfg.depth,
            max_segment: cfg.max_segment,
        },
        rng,
    )?;
    let mut content = ContentNet::new(
        ContentNetConfig {
            bins,
            hidden: cfg.content_hidden,
            depth: cfg.depth,
        },
        rng,
    )?;
    let new_adam = |n| Adam::new(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut loc_opt = new_adam(location.params().len());
    let mut cont_opt = new_adam(content.params().len());
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..utterances.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut loc_sum, mut cont_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut loc_batch = Vec::with_capacity(chunk.len());
            let mut cont_batch = ContentBatch {
                examples: Vec::with_capacity(chunk.len()),
                lambda_prior: cfg.lambda_prior,
            };
            for &i in chunk {
                if let Some((l, c)) = training_pair(&utterances[i], cfg, rng)? {
                    loc_batch.push(l);
                    cont_batch.examples.push(c);
                }
            }
            if loc_batch.is_empty() {
                continue;
            }
            let (ll, lg) = location.loss_and_grad(loc_batch.as_slice())?;
            let (cl, cg) = content.loss_and_grad(&cont_batch)?;
            if !ll.is_finite() || lg.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    what: "location",
                });
            }
            if !cl.is_finite() || cg.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    what: "content",
                });
            }
            loc_opt.update(location.params_mut(), &lg);
            cont_opt.update(content.params_mut(), &cg);
            loc_sum += ll;
            cont_sum += cl;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        report.epochs.push(EpochLoss {
            epoch,
            location: loc_sum / n,
            content: cont_sum / n,
        });
    }
    Ok(TrainedModels {
        location,
        content,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_corpus, CorpusConfig};
    use crate::rng::stream;

    fn corpus() -> Vec<Utterance> {
        let cfg = CorpusConfig {
            bins: 4,
            num_utterances: 12,
            min_phones: 3,
            max_phones: 5,
            ..CorpusConfig::default()
        };
        gen_corpus(&cfg, 0, &mut stream(0, "corpus"))
            .unwrap()
            .utterances
    }

    #[test]
    fn pair_is_consistent() {
        let utts = corpus();
        let cfg = TrainConfig::default();
        let (l, c) = training_pair(&utts[0], &cfg, &mut stream(1, "t"))
            .unwrap()
            .unwrap();
        assert_eq!(l.x.frames() + 1, c.x_masked.frames());
        assert_eq!(l.target_slot, c.slot);
        assert!(c.x_masked.column(c.slot).iter().all(|&v| v == 0.0));
        assert_eq!(c.mu.column(c.slot), c.mu.column(c.slot - 1));
    }

    #[test]
    fn training_is_deterministic_and_reports_each_epoch() {
        let utts = corpus();
        let cfg = TrainConfig {
            epochs: 3,
            lr: 1e-2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(&utts, &cfg, &mut stream(2, "train")).unwrap();
        let b = train(&utts, &cfg, &mut stream(2, "train")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.epochs.len(), 3);
        let csv = a.report.to_csv();
        assert!(csv.starts_with("epoch,loc_loss,cont_loss\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_finite_loss() {
        let utts = corpus();
        let cfg = TrainConfig {
            epochs: 2,
            lr: f64::MAX,
            ..TrainConfig::default()
        };
        match train(&utts, &cfg, &mut stream(3, "train")) {
            Err(Error::Diverged { .. }) => {}
            Ok(m) => assert!(m.report.epochs.iter().all(|e| e.location.is_finite())),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let utts = corpus();
        let cfg = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&utts, &cfg, &mut stream(0, "t"))
            .unwrap_err()
            .is_validation());
        assert!(train(&[], &TrainConfig::default(), &mut stream(0, "t")).is_err());
    }
}
