//! Alignment, silence and distribution metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::frame_energy;
use crate::error::{Error, Result};
use crate::forward::spectral_corrupt;
use crate::schedule::NoiseSchedule;
use crate::state::{DiffusionTime, Spectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    /// Monotone `(x, y)` index pairs from `(0, 0)` to `(Lx − 1, Ly − 1)`.
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| {
            let d = u as f64 - v as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Accumulated-cost matrix, row-major over `x` frames (`Lx × Ly`).
pub fn dtw_cost_matrix(x: &Spectrogram, y: &Spectrogram) -> Result<Vec<f64>> {
    if x.bins() != y.bins() {
        return Err(Error::invalid(
            "bins",
            format!("{} vs {}", x.bins(), y.bins()),
        ));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("dtw", "both sequences must be nonempty"));
    }
    let (n, m) = (x.frames(), y.frames());
    let mut acc = vec![0.0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = euclidean(x.column(i), y.column(j));
            let prev = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * m],
                _ => acc[(i - 1) * m + j - 1]
                    .min(acc[i * m + j - 1])
                    .min(acc[(i - 1) * m + j]),
            };
            acc[i * m + j] = d + prev;
        }
    }
    Ok(acc)
}

/// Dynamic time warping with Euclidean frame distance. Ties prefer the
/// diagonal step, then the vertical one (advancing `y`).
pub fn dtw_path(x: &Spectrogram, y: &Spectrogram) -> Result<DtwResult> {
    let acc = dtw_cost_matrix(x, y)?;
    let (n, m) = (x.frames(), y.frames());
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let vert = acc[i * m + j - 1];
            let horiz = acc[(i - 1) * m + j];
            if diag <= vert && diag <= horiz {
                (i - 1, j - 1)
            } else if vert <= horiz {
                (i, j - 1)
            } else {
                (i - 1, j)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        path,
        cost: acc[n * m - 1],
    })
}

/// R² of the least-squares fit of `y` on `x` along the path; 0 when `x`
/// never moves, 1 when `y` never moves but `x` does.
pub fn path_linearity(r: &DtwResult) -> Result<f64> {
    let n = r.path.len();
    if n < 2 {
        return Err(Error::invalid("path", "need at least two points"));
    }
    let mx = r.path.iter().map(|p| p.0 as f64).sum::<f64>() / n as f64;
    let my = r.path.iter().map(|p| p.1 as f64).sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &r.path {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Ok(0.0);
    }
    if syy == 0.0 {
        return Ok(1.0);
    }
    Ok((sxy * sxy / (sxx * syy)).clamp(0.0, 1.0))
}

/// Longest run of consecutive vertical steps (`y` advances, `x` stays).
pub fn max_vertical_run(r: &DtwResult) -> usize {
    let (mut best, mut cur) = (0, 0);
    for w in r.path.windows(2) {
        if w[0].0 == w[1].0 {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilenceStats {
    pub silent: usize,
    pub total: usize,
    pub ratio: f64,
}

/// Ratio of two durations (e.g. silent and total seconds).
pub fn ratio_of(silent: f64, total: f64) -> Result<f64> {
    if total.is_nan() || total <= 0.0 || !(0.0..=total).contains(&silent) {
        return Err(Error::invalid("silence", format!("{silent} of {total}")));
    }
    Ok(silent / total)
}

/// Frames whose mean absolute amplitude is below `threshold`.
pub fn silence_ratio(x: &Spectrogram, threshold: f64) -> SilenceStats {
    let silent = x.columns().filter(|c| frame_energy(c) < threshold).count();
    let total = x.frames();
    SilenceStats {
        silent,
        total,
        ratio: if total == 0 {
            0.0
        } else {
            silent as f64 / total as f64
        },
    }
}

/// Half the median frame energy over a reference set.
pub fn default_silence_threshold<'a>(
    reference: impl IntoIterator<Item = &'a Spectrogram>,
) -> Result<f64> {
    let mut energies: Vec<f64> = reference
        .into_iter()
        .flat_map(|x| x.columns().map(frame_energy).collect::<Vec<_>>())
        .collect();
    if energies.is_empty() {
        return Err(Error::invalid("reference", "no frames"));
    }
    energies.sort_by(f64::total_cmp);
    let n = energies.len();
    let median = if n % 2 == 1 {
        energies[n / 2]
    } else {
        0.5 * (energies[n / 2 - 1] + energies[n / 2])
    };
    Ok(0.5 * median)
}

/// Wasserstein-1 distance between two empirical distributions, integrating
/// the absolute CDF difference.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("samples", "both multisets must be nonempty"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", "must be finite"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub draws: usize,
    /// Largest `|sample mean − expected| / standard error` over entries.
    pub max_mean_dev_se: f64,
    pub min_var_ratio: f64,
    pub max_var_ratio: f64,
}

impl MarginalReport {
    pub fn passes(&self, se_tol: f64, var_tol: f64) -> bool {
        self.max_mean_dev_se <= se_tol
            && self.min_var_ratio >= 1.0 - var_tol
            && self.max_var_ratio <= 1.0 + var_tol
    }
}

/// Moments of `n_draws` outputs of `draw` against the closed-form kernel
/// `N(a x + m μ, σ²)`.
pub fn marginal_check_with<F>(
    x: &Spectrogram,
    mu: &Spectrogram,
    t: DiffusionTime,
    sched: &NoiseSchedule,
    n_draws: usize,
    mut draw: F,
) -> Result<MarginalReport>
where
    F: FnMut() -> Result<Spectrogram>,
{
    x.check_same_shape(mu)?;
    if n_draws < 2 {
        return Err(Error::invalid("n_draws", "need at least two draws"));
    }
    let size = x.as_frame_major().len();
    let mut sum = vec![0.0; size];
    let mut sq = vec![0.0; size];
    for _ in 0..n_draws {
        let s = draw()?;
        s.check_same_shape(x)?;
        for ((a, q), &v) in sum.iter_mut().zip(&mut sq).zip(s.as_frame_major()) {
            *a += v as f64;
            *q += v as f64 * v as f64;
        }
    }
    let c = sched.vp_coefficients(t);
    let var = c.sigma * c.sigma;
    let n = n_draws as f64;
    let mut report = MarginalReport {
        draws: n_draws,
        max_mean_dev_se: 0.0,
        min_var_ratio: f64::INFINITY,
        max_var_ratio: f64::NEG_INFINITY,
    };
    for e in 0..size {
        let expect =
            c.retain * x.as_frame_major()[e] as f64 + c.prior * mu.as_frame_major()[e] as f64;
        let mean = sum[e] / n;
        let sample_var = ((sq[e] - n * mean * mean) / (n - 1.0)).max(0.0);
        let dev = (mean - expect).abs();
        let (dev_se, ratio) = if var > 0.0 {
            (dev / (var / n).sqrt(), sample_var / var)
        } else {
            let tiny = 1e-6 * expect.abs().max(1.0);
            (
                if dev <= tiny { 0.0 } else { f64::INFINITY },
                if sample_var <= tiny {
                    1.0
                } else {
                    f64::INFINITY
                },
            )
        };
        report.max_mean_dev_se = report.max_mean_dev_se.max(dev_se);
        report.min_var_ratio = report.min_var_ratio.min(ratio);
        report.max_var_ratio = report.max_var_ratio.max(ratio);
    }
    Ok(report)
}

/// [`marginal_check_with`] on the library's own spectral corruption.
pub fn marginal_check<R: Rng + ?Sized>(
    x: &Spectrogram,
    mu: &Spectrogram,
    t: DiffusionTime,
    sched: &NoiseSchedule,
    n_draws: usize,
    rng: &mut R,
) -> Result<MarginalReport> {
    marginal_check_with(x, mu, t, sched, n_draws, || {
        spectral_corrupt(x, mu, t, sched, rng)
    })
}
