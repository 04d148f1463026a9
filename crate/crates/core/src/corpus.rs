//! Synthetic "speech-like" corpora with known alignments.
//!
//! Every clean frame is drawn from `N(prototype, v·I)` of its phone, so the
//! score of the noised marginal is available in closed form and every
//! structural quantity has an exact ground truth.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_jdsp, save_jdsp};
use crate::state::{upsample_prior, Alignment, Spectrogram};

/// One mixture component; `sd == 0` is a point mass at `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationComponent {
    pub weight: f64,
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
}

/// Mixture of (rounded, clamped ≥ 1) Gaussians or point masses over frame counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationMixture(pub Vec<DurationComponent>);

impl DurationMixture {
    pub fn point_masses(values: &[f64]) -> Self {
        Self(
            values
                .iter()
                .map(|&mean| DurationComponent {
                    weight: 1.0,
                    mean,
                    sd: 0.0,
                })
                .collect(),
        )
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Self(vec![DurationComponent {
            weight: 1.0,
            mean,
            sd,
        }])
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::invalid(field, "mixture has no components"));
        }
        for (i, c) in self.0.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid(
                    format!("{field}[{i}].weight"),
                    "must be positive",
                ));
            }
            if !(c.mean >= 1.0 && c.mean.is_finite()) {
                return Err(Error::invalid(
                    format!("{field}[{i}].mean"),
                    format!("duration {} is not a positive frame count", c.mean),
                ));
            }
            if !(c.sd >= 0.0 && c.sd.is_finite()) {
                return Err(Error::invalid(
                    format!("{field}[{i}].sd"),
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.0.iter().map(|c| c.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = self.0[self.0.len() - 1];
        for c in &self.0 {
            if u < c.weight {
                chosen = *c;
                break;
            }
            u -= c.weight;
        }
        let v = if chosen.sd > 0.0 {
            chosen.mean + chosen.sd * rng.sample::<f64, _>(StandardNormal)
        } else {
            chosen.mean
        };
        v.round().max(1.0) as usize
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.0.iter().map(|c| c.weight).sum();
        self.0.iter().map(|c| c.weight * c.mean).sum::<f64>() / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub bins: usize,
    /// Non-silent phone types; the silence phone gets id `num_phones`.
    pub num_phones: usize,
    pub num_utterances: usize,
    /// Range of non-silent phones per utterance.
    pub min_phones: usize,
    pub max_phones: usize,
    /// Range of phones per word; silences only occur between words.
    pub min_word: usize,
    pub max_word: usize,
    pub silence_prob: f64,
    pub durations: DurationMixture,
    pub silence_durations: DurationMixture,
    pub frame_variance: f64,
    /// Prototype entries have magnitude in `[0.5, 1.5] · prototype_scale`.
    pub prototype_scale: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            num_phones: 8,
            num_utterances: 200,
            min_phones: 5,
            max_phones: 12,
            min_word: 2,
            max_word: 4,
            silence_prob: 0.3,
            durations: DurationMixture::point_masses(&[3.0, 9.0]),
            silence_durations: DurationMixture::gaussian(10.0, 3.0),
            frame_variance: 0.05,
            prototype_scale: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::invalid("bins", "must be positive"));
        }
        if self.num_phones < 2 {
            return Err(Error::invalid(
                "num_phones",
                "need at least two non-silent phones",
            ));
        }
        if self.min_phones == 0 || self.min_phones > self.max_phones {
            return Err(Error::invalid(
                "min_phones",
                "need 1 <= min_phones <= max_phones",
            ));
        }
        if self.min_word == 0 || self.min_word > self.max_word {
            return Err(Error::invalid("min_word", "need 1 <= min_word <= max_word"));
        }
        if !(0.0..=1.0).contains(&self.silence_prob) {
            return Err(Error::invalid("silence_prob", "must lie in [0, 1]"));
        }
        if !(self.frame_variance >= 0.0 && self.frame_variance.is_finite()) {
            return Err(Error::invalid("frame_variance", "must be non-negative"));
        }
        if !(self.prototype_scale > 0.0 && self.prototype_scale.is_finite()) {
            return Err(Error::invalid("prototype_scale", "must be positive"));
        }
        self.durations.validate("durations")?;
        self.silence_durations.validate("silence_durations")?;
        Ok(())
    }
}

/// Mean absolute amplitude of one frame.
pub fn frame_energy(col: &[f32]) -> f64 {
    col.iter().map(|v| v.abs() as f64).sum::<f64>() / col.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneInventory {
    pub prototypes: Vec<Vec<f32>>,
    pub silent: Vec<bool>,
    pub frame_variance: f64,
    /// Energy below which a frame counts as silent; by construction above
    /// every silence prototype and well below every other prototype.
    pub silence_threshold: f64,
}

impl PhoneInventory {
    pub fn generate<R: Rng + ?Sized>(cfg: &CorpusConfig, rng: &mut R) -> Self {
        let mut prototypes = Vec::with_capacity(cfg.num_phones + 1);
        for _ in 0..cfg.num_phones {
            let p: Vec<f32> = (0..cfg.bins)
                .map(|_| {
                    let mag = rng.random_range(0.5..1.5) * cfg.prototype_scale;
                    (if rng.random::<bool>() { mag } else { -mag }) as f32
                })
                .collect();
            prototypes.push(p);
        }
        prototypes.push(vec![0.0; cfg.bins]);
        let mut silent = vec![false; cfg.num_phones];
        silent.push(true);
        let min_energy = prototypes[..cfg.num_phones]
            .iter()
            .map(|p| frame_energy(p))
            .fold(f64::INFINITY, f64::min);
        Self {
            prototypes,
            silent,
            frame_variance: cfg.frame_variance,
            silence_threshold: 0.5 * min_energy,
        }
    }

    pub fn silence_id(&self) -> Option<u32> {
        self.silent.iter().position(|&s| s).map(|i| i as u32)
    }

    pub fn is_silent(&self, phone: u32) -> bool {
        self.silent.get(phone as usize).copied().unwrap_or(false)
    }

    /// `D × N` grid of prototypes for a phone sequence.
    pub fn phone_means(&self, phones: &[u32]) -> Result<Spectrogram> {
        let cols: Vec<&[f32]> = phones
            .iter()
            .map(|&p| {
                self.prototypes
                    .get(p as usize)
                    .map(|v| v.as_slice())
                    .ok_or_else(|| Error::invalid("phone", format!("unknown phone id {p}")))
            })
            .collect::<Result<_>>()?;
        let bins = self.prototypes.first().map_or(0, |p| p.len());
        Spectrogram::from_columns(bins, &cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: usize,
    pub phones: Vec<u32>,
    pub durations: Vec<usize>,
    pub x0: Spectrogram,
    pub mu: Spectrogram,
    pub alignment: Alignment,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.x0.frames()
    }
}

/// Ground-truth per-phone frame counts.
pub fn duration_ground_truth(u: &Utterance) -> Vec<usize> {
    u.durations.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub seed: u64,
    pub inventory: PhoneInventory,
    pub utterances: Vec<Utterance>,
}

fn sample_utterance<R: Rng + ?Sized>(
    id: usize,
    cfg: &CorpusConfig,
    inv: &PhoneInventory,
    rng: &mut R,
) -> Result<Utterance> {
    let silence = cfg.num_phones as u32;
    let n_speech = rng.random_range(cfg.min_phones..=cfg.max_phones);
    let mut phones = Vec::with_capacity(2 * n_speech);
    let mut word_left = rng.random_range(cfg.min_word..=cfg.max_word);
    let mut last: Option<u32> = None;
    for i in 0..n_speech {
        if word_left == 0 {
            word_left = rng.random_range(cfg.min_word..=cfg.max_word);
            if rng.random::<f64>() < cfg.silence_prob {
                phones.push(silence);
                last = Some(silence);
            }
        }
        // adjacent phones differ so their prior segments stay distinguishable
        let p = loop {
            let p = rng.random_range(0..cfg.num_phones as u32);
            if Some(p) != last {
                break p;
            }
        };
        phones.push(p);
        last = Some(p);
        word_left -= 1;
        debug_assert!(i < n_speech);
    }
    let durations: Vec<usize> = phones
        .iter()
        .map(|&p| {
            if p == silence {
                cfg.silence_durations.sample(rng)
            } else {
                cfg.durations.sample(rng)
            }
        })
        .collect();
    let means = inv.phone_means(&phones)?;
    let mu = upsample_prior(&means, &durations)?;
    let sd = cfg.frame_variance.sqrt();
    let data = mu
        .as_frame_major()
        .iter()
        .map(|&m| (m as f64 + sd * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    let x0 = Spectrogram::from_frame_major(cfg.bins, data)?;
    let alignment = Alignment::from_durations(phones.clone(), &durations)?;
    Ok(Utterance {
        id,
        phones,
        durations,
        x0,
        mu,
        alignment,
    })
}

/// Generate a corpus; identical `(cfg, seed)` give a bit-identical corpus.
pub fn gen_corpus<R: Rng + ?Sized>(cfg: &CorpusConfig, seed: u64, rng: &mut R) -> Result<Corpus> {
    cfg.validate()?;
    let inventory = PhoneInventory::generate(cfg, rng);
    let utterances = (0..cfg.num_utterances)
        .map(|i| sample_utterance(i, cfg, &inventory, rng))
        .collect::<Result<_>>()?;
    Ok(Corpus {
        config: cfg.clone(),
        seed,
        inventory,
        utterances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub phones: Vec<u32>,
    pub durations: Vec<usize>,
}

/// `manifest.json` of an on-disk corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: CorpusConfig,
    pub inventory: PhoneInventory,
    pub utterances: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn utterance_file(id: usize) -> String {
    format!("utt_{id:04}.jdsp")
}

impl Corpus {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.seed,
            config: self.config.clone(),
            inventory: self.inventory.clone(),
            utterances: self
                .utterances
                .iter()
                .map(|u| ManifestEntry {
                    id: u.id,
                    file: utterance_file(u.id),
                    phones: u.phones.clone(),
                    durations: u.durations.clone(),
                })
                .collect(),
        }
    }

    /// One JDSP file per utterance plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for u in &self.utterances {
            save_jdsp(dir.join(utterance_file(u.id)), &u.x0)?;
        }
        let json = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let inventory = manifest.inventory;
        let utterances = manifest
            .utterances
            .into_iter()
            .map(|e| {
                let x0 = load_jdsp(dir.join(&e.file))?;
                let mu = upsample_prior(&inventory.phone_means(&e.phones)?, &e.durations)?;
                x0.check_same_shape(&mu)?;
                let alignment = Alignment::from_durations(e.phones.clone(), &e.durations)?;
                Ok(Utterance {
                    id: e.id,
                    phones: e.phones,
                    durations: e.durations,
                    x0,
                    mu,
                    alignment,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: manifest.config,
            seed: manifest.seed,
            inventory,
            utterances,
        })
    }

    /// Non-silent and silent frame totals over the whole corpus.
    pub fn silence_fraction(&self) -> f64 {
        let (mut sil, mut total) = (0usize, 0usize);
        for u in &self.utterances {
            for (&p, &d) in u.phones.iter().zip(&u.durations) {
                total += d;
                if self.inventory.is_silent(p) {
                    sil += d;
                }
            }
        }
        sil as f64 / total.max(1) as f64
    }
}
