//! Reverse jump diffusion: score-driven denoising interleaved with frame
//! insertions, in one-shot, time-dependent (TDD) and upsample-then-denoise
//! (UDD) variants.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::standard_normal_grid;
use crate::predictors::{softmax, ContentModel, LocationModel};
use crate::schedule::{schedule_length, NoiseSchedule, DEFAULT_T_MIN};
use crate::state::{DiffusionTime, Provenance, Spectrogram};

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(Error::invalid(
                        stringify!($name).to_lowercase(),
                        format!("unknown value {s:?}, expected one of {}", [$($text),+].join(", ")),
                    )),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Insert every missing frame at `t = 1`, then only denoise.
    OneShot,
    /// Grow the length along the schedule while denoising.
    Tdd,
    /// Like TDD, but pad to the target length with temporary frames before
    /// each denoising step and drop them afterwards.
    Udd,
}

text_enum!(Mode { OneShot => "oneshot", Tdd => "tdd", Udd => "udd" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Ode,
    Sde,
}

text_enum!(Solver { Ode => "ode", Sde => "sde" });

/// How a batch of insertions is spread over slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// Independent categorical draws from the slot distribution.
    Sample,
    /// Deterministic largest-remainder apportionment of the expected counts.
    Argmax,
}

text_enum!(Allocation { Sample => "sample", Argmax => "argmax" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: Mode,
    pub solver: Solver,
    pub steps: usize,
    pub allocation: Allocation,
    pub temperature: f64,
    /// Re-score slots after every single insertion.
    pub sequential: bool,
    pub t_min: f64,
    pub schedule: NoiseSchedule,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tdd,
            solver: Solver::Ode,
            steps: 100,
            allocation: Allocation::Sample,
            temperature: 1.0,
            sequential: false,
            t_min: DEFAULT_T_MIN,
            schedule: NoiseSchedule::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return Err(Error::invalid("t_min", "must lie in (0, 1)"));
        }
        self.schedule.validate()
    }
}

/// Score of the noised marginal, `∇ₓ log p_t(x)`, column by column.
pub trait ScoreFunction {
    fn score(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Spectrogram>;
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for &S {
    fn score(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Spectrogram> {
        (**self).score(x, mu, t)
    }
}

/// Exact score when clean frames are `N(μ, v·I)`: the noised marginal is
/// `N(μ, (a²v + σ²)·I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticScore {
    variance: f64,
    schedule: NoiseSchedule,
}

impl AnalyticScore {
    pub fn new(variance: f64, schedule: NoiseSchedule) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(
                "variance",
                format!("{variance} is negative or not finite"),
            ));
        }
        Ok(Self { variance, schedule })
    }

    pub fn total_variance(&self, t: f64) -> Result<f64> {
        let c = self.schedule.vp_coefficients(DiffusionTime::new(t)?);
        Ok(c.retain * c.retain * self.variance + c.sigma * c.sigma)
    }
}

impl ScoreFunction for AnalyticScore {
    fn score(&self, x: &Spectrogram, mu: &Spectrogram, t: f64) -> Result<Spectrogram> {
        x.check_same_shape(mu)?;
        let var = self.total_variance(t)?;
        if var <= 0.0 {
            return Err(Error::invalid(
                "variance",
                format!("marginal variance vanishes at t = {t}"),
            ));
        }
        let data = x
            .as_frame_major()
            .iter()
            .zip(mu.as_frame_major())
            .map(|(&x, &m)| (-(x as f64 - m as f64) / var) as f32)
            .collect();
        Ok(Spectrogram::from_parts_unchecked(x.bins(), data))
    }
}

/// One Euler step from `t` to `t − h`.
///
/// ODE: `x − h[½β(μ − x) − ½β s]`; SDE: `x − h[½β(μ − x) − β s] + √(βh) z`.
#[allow(clippy::too_many_arguments)]
pub fn denoise_step<S: ScoreFunction + ?Sized, R: Rng + ?Sized>(
    x: &Spectrogram,
    mu: &Spectrogram,
    t: f64,
    h: f64,
    score: &S,
    schedule: &NoiseSchedule,
    solver: Solver,
    rng: &mut R,
) -> Result<Spectrogram> {
    let s = score.score(x, mu, t)?;
    s.check_same_shape(x)?;
    let beta = schedule.beta(t);
    let (w, noise) = match solver {
        Solver::Ode => (0.5, 0.0),
        Solver::Sde => (1.0, (beta * h).sqrt()),
    };
    let data = x
        .as_frame_major()
        .iter()
        .zip(mu.as_frame_major())
        .zip(s.as_frame_major())
        .map(|((&x, &m), &s)| {
            let (x, m, s) = (x as f64, m as f64, s as f64);
            let drift = 0.5 * beta * (m - x) - w * beta * s;
            let mut next = x - h * drift;
            if solver == Solver::Sde {
                next += noise * rng.sample::<f64, _>(StandardNormal);
            }
            next as f32
        })
        .collect();
    Spectrogram::from_frame_major(x.bins(), data)
}

/// Split `n` insertions over the logits' slots; entry `j` counts insertions
/// at slot `j + 1`.
pub fn allocate_insertions<R: Rng + ?Sized>(
    logits: &[f64],
    n: usize,
    temperature: f64,
    mode: Allocation,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if logits.is_empty() {
        return Err(Error::invalid("logits", "no slots to insert into"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid("temperature", "must be positive"));
    }
    if logits.iter().any(|l| l.is_nan()) {
        return Err(Error::invalid("logits", "contain NaN"));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let p = softmax(&scaled);
    let mut counts = vec![0usize; p.len()];
    if n == 0 {
        return Ok(counts);
    }
    match mode {
        Allocation::Sample => {
            let dist =
                WeightedIndex::new(&p).map_err(|e| Error::invalid("logits", e.to_string()))?;
            for _ in 0..n {
                counts[dist.sample(rng)] += 1;
            }
        }
        Allocation::Argmax => {
            let quotas: Vec<f64> = p.iter().map(|q| q * n as f64).collect();
            let mut given = 0;
            for (c, q) in counts.iter_mut().zip(&quotas) {
                *c = (q.floor() as usize).min(n);
                given += *c;
            }
            let mut order: Vec<usize> = (0..p.len()).collect();
            // stable sort keeps lower indices first among equal remainders
            order.sort_by(|&a, &b| {
                let ra = quotas[a] - quotas[a].floor();
                let rb = quotas[b] - quotas[b].floor();
                rb.total_cmp(&ra)
            });
            for &j in order.iter().cycle().take(n.saturating_sub(given)) {
                counts[j] += 1;
            }
            // floor round-off can overshoot by a frame in degenerate cases
            while counts.iter().sum::<usize>() > n {
                let j = (0..counts.len())
                    .rev()
                    .find(|&j| counts[j] > 0)
                    .unwrap_or(0);
                counts[j] -= 1;
            }
        }
    }
    Ok(counts)
}

/// A reverse-process state with per-column bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseState {
    pub x: Spectrogram,
    pub mu: Spectrogram,
    /// Phone (segment) index of every column.
    pub segment: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl ReverseState {
    /// One column per phone at `t = 1`: the prior plus full-strength noise.
    pub fn initial<R: Rng + ?Sized>(
        phone_means: &Spectrogram,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        if phone_means.is_empty() {
            return Err(Error::invalid("phone means", "need at least one phone"));
        }
        let sigma = schedule.vp_coefficients(DiffusionTime::ONE).sigma;
        let z = standard_normal_grid(phone_means.bins(), phone_means.frames(), rng);
        let data = phone_means
            .as_frame_major()
            .iter()
            .zip(z.as_frame_major())
            .map(|(&m, &z)| (m as f64 + sigma * z as f64) as f32)
            .collect();
        let p = phone_means.frames();
        Ok(Self {
            x: Spectrogram::from_frame_major(phone_means.bins(), data)?,
            mu: phone_means.clone(),
            segment: (0..p).collect(),
            provenance: vec![Provenance::Original; p],
        })
    }

    pub fn len(&self) -> usize {
        self.x.frames()
    }

    pub fn is_empty(&self) -> bool {
        self.x.frames() == 0
    }

    /// Insert one frame at `slot`: its prior duplicates the left neighbour,
    /// its clean content comes from `content`, and it is noised to level `t`.
    pub fn insert<C: ContentModel + ?Sized, R: Rng + ?Sized>(
        &mut self,
        slot: usize,
        t: DiffusionTime,
        schedule: &NoiseSchedule,
        content: &C,
        provenance: Provenance,
        rng: &mut R,
    ) -> Result<()> {
        if slot == 0 || slot > self.len() {
            return Err(Error::IndexOutOfRange {
                index: slot,
                valid: format!("1..={}", self.len()),
            });
        }
        let bins = self.x.bins();
        let prior = self.mu.column(slot - 1).to_vec();
        let mu = self.mu.insert_column(&prior, slot)?;
        let masked = self.x.insert_column(&vec![0.0; bins], slot)?;
        let x0_hat = content.predict(&masked, &mu, t.get(), slot)?;
        if x0_hat.len() != bins {
            return Err(Error::invalid(
                "shape",
                format!("expected {bins} bins, found {}", x0_hat.len()),
            ));
        }
        let c = schedule.vp_coefficients(t);
        let col: Vec<f32> = x0_hat
            .iter()
            .zip(&prior)
            .map(|(&x, &m)| {
                let z: f64 = rng.sample(StandardNormal);
                (c.retain * x as f64 + c.prior * m as f64 + c.sigma * z) as f32
            })
            .collect();
        self.x = self.x.insert_column(&col, slot)?;
        self.mu = mu;
        self.segment.insert(slot, self.segment[slot - 1]);
        self.provenance.insert(slot, provenance);
        Ok(())
    }

    fn keep(&mut self, keep: &[usize]) -> Result<()> {
        self.x = self.x.select_columns(keep)?;
        self.mu = self.mu.select_columns(keep)?;
        self.segment = keep.iter().map(|&j| self.segment[j]).collect();
        self.provenance = keep.iter().map(|&j| self.provenance[j]).collect();
        Ok(())
    }

    /// Frames per phone segment.
    pub fn durations(&self, num_phones: usize) -> Vec<usize> {
        let mut d = vec![0; num_phones];
        for &s in &self.segment {
            d[s] += 1;
        }
        d
    }
}

/// Insert `count` frames at time `t`; returns the slots in application order.
#[allow(clippy::too_many_arguments)]
pub fn jump_step<L, C, R>(
    state: &mut ReverseState,
    count: usize,
    t: DiffusionTime,
    location: &L,
    content: &C,
    cfg: &SamplerConfig,
    provenance: Provenance,
    rng: &mut R,
) -> Result<Vec<usize>>
where
    L: LocationModel + ?Sized,
    C: ContentModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut slots = Vec::with_capacity(count);
    if count == 0 {
        return Ok(slots);
    }
    if cfg.sequential {
        for _ in 0..count {
            let logits = location.score_slots(&state.x, &state.mu, t.get())?;
            let counts = allocate_insertions(&logits, 1, cfg.temperature, cfg.allocation, rng)?;
            let j = counts.iter().position(|&c| c == 1).unwrap_or(0);
            state.insert(j + 1, t, &cfg.schedule, content, provenance, rng)?;
            slots.push(j + 1);
        }
    } else {
        let logits = location.score_slots(&state.x, &state.mu, t.get())?;
        if logits.len() != state.len() {
            return Err(Error::invalid(
                "shape",
                format!("expected {} logits, found {}", state.len(), logits.len()),
            ));
        }
        let counts = allocate_insertions(&logits, count, cfg.temperature, cfg.allocation, rng)?;
        // descending slots leave the lower ones in place
        for (j, &c) in counts.iter().enumerate().rev() {
            for _ in 0..c {
                state.insert(j + 1, t, &cfg.schedule, content, provenance, rng)?;
                slots.push(j + 1);
            }
        }
    }
    Ok(slots)
}

/// What happened at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub t: f64,
    /// Persistent length after the jump.
    pub len: usize,
    /// Insertion slots, in the order they were applied.
    pub inserted: Vec<usize>,
    /// Temporary frames added for this step (UDD only).
    #[serde(skip_serializing_if = "is_zero", default)]
    pub padded: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTrace {
    pub mode: Mode,
    pub solver: Solver,
    pub allocation: Allocation,
    pub steps: usize,
    pub target_len: usize,
    pub durations: Vec<usize>,
    pub grid: Vec<StepTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub x: Spectrogram,
    pub mu: Spectrogram,
    pub durations: Vec<usize>,
    pub trace: SynthesisTrace,
}

/// Run the reverse process from one prior column per phone to `target_len`
/// frames.
///
/// For `i = 0..=N`, `t = 1 − i/N`: first jump to the length for `t`, then
/// (unless `i = N`) take a denoising step of size `1/N`.
pub fn synthesize<L, C, S, R>(
    cfg: &SamplerConfig,
    phone_means: &Spectrogram,
    target_len: usize,
    location: &L,
    content: &C,
    score: &S,
    rng: &mut R,
) -> Result<Synthesis>
where
    L: LocationModel + ?Sized,
    C: ContentModel + ?Sized,
    S: ScoreFunction + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let state = ReverseState::initial(phone_means, &cfg.schedule, rng)?;
    synthesize_from(cfg, state, target_len, location, content, score, rng)
}

/// [`synthesize`] from an explicit `t = 1` state.
pub fn synthesize_from<L, C, S, R>(
    cfg: &SamplerConfig,
    mut state: ReverseState,
    target_len: usize,
    location: &L,
    content: &C,
    score: &S,
    rng: &mut R,
) -> Result<Synthesis>
where
    L: LocationModel + ?Sized,
    C: ContentModel + ?Sized,
    S: ScoreFunction + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let p = state.len();
    let num_phones = state.segment.iter().max().map_or(0, |m| m + 1);
    if target_len < p {
        return Err(Error::invalid(
            "target length",
            format!("{target_len} is shorter than the {p} phones"),
        ));
    }
    let n = cfg.steps;
    let h = 1.0 / n as f64;
    let mut grid = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = DiffusionTime::new((n - i) as f64 / n as f64)?;
        let want = match cfg.mode {
            Mode::OneShot => target_len,
            Mode::Tdd | Mode::Udd => schedule_length(target_len, p, t, cfg.t_min)?,
        };
        let count = want.saturating_sub(state.len());
        let inserted = jump_step(
            &mut state,
            count,
            t,
            location,
            content,
            cfg,
            Provenance::Original,
            rng,
        )?;
        let mut step = StepTrace {
            step: i,
            t: t.get(),
            len: state.len(),
            inserted,
            padded: 0,
        };
        if i == n {
            grid.push(step);
            break;
        }
        if cfg.mode == Mode::Udd && state.len() < target_len {
            let pad = target_len - state.len();
            let mut padded = state.clone();
            jump_step(
                &mut padded,
                pad,
                t,
                location,
                content,
                cfg,
                Provenance::Inserted,
                rng,
            )?;
            padded.x = denoise_step(
                &padded.x,
                &padded.mu,
                t.get(),
                h,
                score,
                &cfg.schedule,
                cfg.solver,
                rng,
            )?;
            let keep: Vec<usize> = (0..padded.len())
                .filter(|&j| padded.provenance[j] == Provenance::Original)
                .collect();
            padded.keep(&keep)?;
            state = padded;
            step.padded = pad;
        } else {
            state.x = denoise_step(
                &state.x,
                &state.mu,
                t.get(),
                h,
                score,
                &cfg.schedule,
                cfg.solver,
                rng,
            )?;
        }
        grid.push(step);
    }
    let durations = state.durations(num_phones);
    Ok(Synthesis {
        trace: SynthesisTrace {
            mode: cfg.mode,
            solver: cfg.solver,
            allocation: cfg.allocation,
            steps: n,
            target_len,
            durations: durations.clone(),
            grid,
        },
        x: state.x,
        mu: state.mu,
        durations,
    })
}
