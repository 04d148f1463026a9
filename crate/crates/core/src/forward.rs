//! Forward jump diffusion: structural corruption (frame deletion), spectral
//! corruption (VP noising toward the prior) and single-step jump targets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{schedule_length, NoiseSchedule};
use crate::state::{protected_from_alignment, Alignment, DiffusionTime, ProtectedSet, Spectrogram};

/// Frames surviving structural corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionResult {
    /// Selected clean columns (noise not yet applied).
    pub x_sub: Spectrogram,
    pub mu_sub: Spectrogram,
    /// Original indices of the surviving columns, ascending.
    pub kept: Vec<usize>,
}

/// One training triplet: a state with one frame removed, the slot it came
/// from, and its clean content.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTarget {
    pub x_minus_k: Spectrogram,
    pub mu_minus_k: Spectrogram,
    pub s_target: usize,
    pub x0_k: Vec<f32>,
    /// Prior column of the removed frame.
    pub prior_k: Vec<f32>,
}

/// A random visiting order of the non-protected frames.
///
/// Keeping `P ∪ order[..m − |P|]` gives a uniformly random superset of `P` of
/// size `m`; prefixes of one order are nested, which is what a sequence of
/// single-frame deletions produces.
pub fn deletion_order<R: Rng + ?Sized>(
    protected: &ProtectedSet,
    l0: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut free: Vec<usize> = (0..l0).filter(|&i| !protected.contains(i)).collect();
    free.shuffle(rng);
    free
}

/// Kept indices (ascending) for a state of `len` frames under `order`.
pub fn kept_prefix(protected: &ProtectedSet, order: &[usize], len: usize) -> Vec<usize> {
    let extra = len.saturating_sub(protected.len()).min(order.len());
    let mut kept: Vec<usize> = protected
        .indices()
        .iter()
        .chain(&order[..extra])
        .copied()
        .collect();
    kept.sort_unstable();
    kept
}

pub fn structural_corrupt<R: Rng + ?Sized>(
    x0: &Spectrogram,
    mu: &Spectrogram,
    protected: &ProtectedSet,
    t: DiffusionTime,
    t_min: f64,
    rng: &mut R,
) -> Result<CorruptionResult> {
    x0.check_same_shape(mu)?;
    let l0 = x0.frames();
    if protected.indices().last().is_some_and(|&i| i >= l0) {
        return Err(Error::invalid(
            "protected set",
            "index beyond sequence length",
        ));
    }
    let len = schedule_length(l0, protected.len(), t, t_min)?;
    let kept = if len == l0 {
        (0..l0).collect()
    } else {
        let order = deletion_order(protected, l0, rng);
        kept_prefix(protected, &order, len)
    };
    Ok(CorruptionResult {
        x_sub: x0.select_columns(&kept)?,
        mu_sub: mu.select_columns(&kept)?,
        kept,
    })
}

/// Standard-normal grid of the given shape, drawn frame by frame.
pub fn standard_normal_grid<R: Rng + ?Sized>(
    bins: usize,
    frames: usize,
    rng: &mut R,
) -> Spectrogram {
    let data = (0..bins * frames)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    Spectrogram::from_parts_unchecked(bins, data)
}

/// `retain · x + prior · μ + sigma · noise`, entrywise.
pub fn spectral_corrupt_with_noise(
    x_sub: &Spectrogram,
    mu_sub: &Spectrogram,
    t: DiffusionTime,
    sched: &NoiseSchedule,
    noise: &Spectrogram,
) -> Result<Spectrogram> {
    x_sub.check_same_shape(mu_sub)?;
    x_sub.check_same_shape(noise)?;
    let c = sched.vp_coefficients(t);
    let data = x_sub
        .as_frame_major()
        .iter()
        .zip(mu_sub.as_frame_major())
        .zip(noise.as_frame_major())
        .map(|((&x, &m), &z)| {
            (c.retain * x as f64 + c.prior * m as f64 + c.sigma * z as f64) as f32
        })
        .collect();
    Ok(Spectrogram::from_parts_unchecked(x_sub.bins(), data))
}

pub fn spectral_corrupt<R: Rng + ?Sized>(
    x_sub: &Spectrogram,
    mu_sub: &Spectrogram,
    t: DiffusionTime,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Spectrogram> {
    x_sub.check_same_shape(mu_sub)?;
    let z = standard_normal_grid(x_sub.bins(), x_sub.frames(), rng);
    spectral_corrupt_with_noise(x_sub, mu_sub, t, sched, &z)
}

/// Remove one uniformly chosen non-protected column of `x_t`.
///
/// `protected_positions` are positions within `x_t` (not original indices).
/// The content target is taken from the clean `x_sub`.
pub fn make_jump_target<R: Rng + ?Sized>(
    x_t: &Spectrogram,
    x_sub: &Spectrogram,
    mu_sub: &Spectrogram,
    protected_positions: &[usize],
    rng: &mut R,
) -> Result<JumpTarget> {
    x_t.check_same_shape(x_sub)?;
    x_t.check_same_shape(mu_sub)?;
    let candidates: Vec<usize> = (1..x_t.frames())
        .filter(|k| protected_positions.binary_search(k).is_err())
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoDeletableFrame { len: x_t.frames() });
    }
    let k = candidates[rng.random_range(0..candidates.len())];
    Ok(JumpTarget {
        x_minus_k: x_t.delete_column(k)?,
        mu_minus_k: mu_sub.delete_column(k)?,
        s_target: k,
        x0_k: x_sub.column(k).to_vec(),
        prior_k: mu_sub.column(k).to_vec(),
    })
}

/// Everything one forward draw produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSample {
    pub t: DiffusionTime,
    /// Noised, structurally corrupted state.
    pub x_t: Spectrogram,
    pub x_sub: Spectrogram,
    pub mu_t: Spectrogram,
    pub kept: Vec<usize>,
    pub protected_positions: Vec<usize>,
    /// `None` when every surviving column is protected (e.g. at `t = 1`).
    pub target: Option<JumpTarget>,
}

/// JSON sidecar describing a forward draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSidecar {
    pub t: f64,
    pub kept: Vec<usize>,
    pub s_target: Option<usize>,
}

impl ForwardSample {
    pub fn sidecar(&self) -> ForwardSidecar {
        ForwardSidecar {
            t: self.t.get(),
            kept: self.kept.clone(),
            s_target: self.target.as_ref().map(|j| j.s_target),
        }
    }
}

pub fn forward_sample<R: Rng + ?Sized>(
    x0: &Spectrogram,
    mu: &Spectrogram,
    alignment: &Alignment,
    t: DiffusionTime,
    sched: &NoiseSchedule,
    t_min: f64,
    rng: &mut R,
) -> Result<ForwardSample> {
    if alignment.num_frames() != x0.frames() {
        return Err(Error::invalid(
            "alignment",
            format!(
                "covers {} frames, spectrogram has {}",
                alignment.num_frames(),
                x0.frames()
            ),
        ));
    }
    let protected = protected_from_alignment(alignment);
    let sub = structural_corrupt(x0, mu, &protected, t, t_min, rng)?;
    let x_t = spectral_corrupt(&sub.x_sub, &sub.mu_sub, t, sched, rng)?;
    let protected_positions: Vec<usize> = sub
        .kept
        .iter()
        .enumerate()
        .filter(|(_, &i)| protected.contains(i))
        .map(|(p, _)| p)
        .collect();
    let target = match make_jump_target(&x_t, &sub.x_sub, &sub.mu_sub, &protected_positions, rng) {
        Ok(j) => Some(j),
        Err(Error::NoDeletableFrame { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ForwardSample {
        t,
        x_t,
        x_sub: sub.x_sub,
        mu_t: sub.mu_sub,
        kept: sub.kept,
        protected_positions,
        target,
    })
}
