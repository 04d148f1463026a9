//! Variable-length spectrogram states and index-safe column editing.
//!
//! A [`Spectrogram`] is a `bins × frames` grid stored frame-major, so a
//! single time frame (a column) is a contiguous slice. All edits return new
//! values; nothing is mutated in place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `D × L` grid of spectral values, `L` possibly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: usize,
    frames: usize,
    data: Vec<f32>,
}

impl Spectrogram {
    pub fn zeros(bins: usize, frames: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bins", "must be positive"));
        }
        Ok(Self {
            bins,
            frames,
            data: vec![0.0; bins * frames],
        })
    }

    /// Build from frame-major data (column `j` is `data[j*bins..(j+1)*bins]`).
    pub fn from_frame_major(bins: usize, data: Vec<f32>) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bins", "must be positive"));
        }
        if !data.len().is_multiple_of(bins) {
            return Err(Error::invalid(
                "data",
                format!("length {} not a multiple of {bins} bins", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("data", format!("non-finite entry at {pos}")));
        }
        Ok(Self {
            bins,
            frames: data.len() / bins,
            data,
        })
    }

    /// Build from bin-major (row-major by frequency bin) data.
    pub fn from_bin_major(bins: usize, frames: usize, data: &[f32]) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::invalid(
                "data",
                format!("expected {} values, found {}", bins * frames, data.len()),
            ));
        }
        let mut out = vec![0.0; data.len()];
        for b in 0..bins {
            for j in 0..frames {
                out[j * bins + b] = data[b * frames + j];
            }
        }
        Self::from_frame_major(bins, out)
    }

    pub fn from_columns<C: AsRef<[f32]>>(bins: usize, columns: &[C]) -> Result<Self> {
        let mut data = Vec::with_capacity(bins * columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != bins {
                return Err(Error::invalid(
                    "column",
                    format!("column {j} has {} entries, expected {bins}", c.len()),
                ));
            }
            data.extend_from_slice(c);
        }
        Self::from_frame_major(bins, data)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.data[j * self.bins..(j + 1) * self.bins]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.bins)
    }

    pub fn as_frame_major(&self) -> &[f32] {
        &self.data
    }

    pub fn to_bin_major(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.data.len()];
        for j in 0..self.frames {
            for b in 0..self.bins {
                out[b * self.frames + j] = self.data[j * self.bins + b];
            }
        }
        out
    }

    pub(crate) fn from_parts_unchecked(bins: usize, data: Vec<f32>) -> Self {
        debug_assert!(bins > 0 && data.len().is_multiple_of(bins));
        Self {
            bins,
            frames: data.len() / bins,
            data,
        }
    }

    pub fn check_same_shape(&self, other: &Spectrogram) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// Gather the given columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Spectrogram> {
        let mut data = Vec::with_capacity(indices.len() * self.bins);
        for &j in indices {
            if j >= self.frames {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    valid: format!("0..{}", self.frames),
                });
            }
            data.extend_from_slice(self.column(j));
        }
        Ok(Self::from_parts_unchecked(self.bins, data))
    }

    /// Remove column `k`, preserving the order of the others.
    pub fn delete_column(&self, k: usize) -> Result<Spectrogram> {
        if k >= self.frames {
            return Err(Error::IndexOutOfRange {
                index: k,
                valid: format!("0..{}", self.frames),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() - self.bins);
        data.extend_from_slice(&self.data[..k * self.bins]);
        data.extend_from_slice(&self.data[(k + 1) * self.bins..]);
        Ok(Self::from_parts_unchecked(self.bins, data))
    }

    /// Insert `col` so that it ends up at index `slot`.
    ///
    /// Valid slots are `1..=L`: slot 0 is excluded because the new column must
    /// have a left neighbour.
    pub fn insert_column(&self, col: &[f32], slot: usize) -> Result<Spectrogram> {
        check_slot(slot, self.frames)?;
        if col.len() != self.bins {
            return Err(Error::invalid(
                "column",
                format!("{} entries, expected {}", col.len(), self.bins),
            ));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("column", "non-finite entry"));
        }
        let mut data = Vec::with_capacity(self.data.len() + self.bins);
        data.extend_from_slice(&self.data[..slot * self.bins]);
        data.extend_from_slice(col);
        data.extend_from_slice(&self.data[slot * self.bins..]);
        Ok(Self::from_parts_unchecked(self.bins, data))
    }

    /// Zero column `k` in place of a copy (the content model's input masking).
    pub fn mask_column(&self, k: usize) -> Result<Spectrogram> {
        if k >= self.frames {
            return Err(Error::IndexOutOfRange {
                index: k,
                valid: format!("0..{}", self.frames),
            });
        }
        let mut out = self.clone();
        out.data[k * self.bins..(k + 1) * self.bins].fill(0.0);
        Ok(out)
    }
}

pub(crate) fn check_slot(slot: usize, len: usize) -> Result<()> {
    if slot == 0 || slot > len {
        return Err(Error::IndexOutOfRange {
            index: slot,
            valid: format!("1..={len}"),
        });
    }
    Ok(())
}

/// Contiguous frame range covered by one phone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

/// Phone-to-frame mapping: contiguous, non-overlapping spans covering `[0, L0)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    phones: Vec<u32>,
    spans: Vec<Span>,
}

impl Alignment {
    pub fn new(phones: Vec<u32>, spans: Vec<Span>) -> Result<Self> {
        if phones.is_empty() {
            return Err(Error::invalid("alignment", "no phones"));
        }
        if phones.len() != spans.len() {
            return Err(Error::invalid(
                "alignment",
                format!("{} phones but {} spans", phones.len(), spans.len()),
            ));
        }
        let mut next = 0;
        for (i, s) in spans.iter().enumerate() {
            if s.len == 0 {
                return Err(Error::invalid(
                    "alignment",
                    format!("span {i} has zero length"),
                ));
            }
            if s.start != next {
                return Err(Error::invalid(
                    "alignment",
                    format!("span {i} starts at {}, expected {next}", s.start),
                ));
            }
            next += s.len;
        }
        Ok(Self { phones, spans })
    }

    pub fn from_durations(phones: Vec<u32>, durations: &[usize]) -> Result<Self> {
        let mut start = 0;
        let spans = durations
            .iter()
            .map(|&len| {
                let s = Span { start, len };
                start += len;
                s
            })
            .collect();
        Self::new(phones, spans)
    }

    pub fn phones(&self) -> &[u32] {
        &self.phones
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn num_phones(&self) -> usize {
        self.phones.len()
    }

    pub fn num_frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.start + s.len)
    }

    pub fn durations(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.len).collect()
    }
}

/// Frame indices that structural corruption may never delete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedSet {
    indices: Vec<usize>,
}

impl ProtectedSet {
    pub fn new(indices: Vec<usize>, len: usize) -> Result<Self> {
        if indices.first() != Some(&0) {
            return Err(Error::invalid("protected set", "must contain index 0"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "protected set",
                "indices not strictly increasing",
            ));
        }
        if indices.last().is_some_and(|&i| i >= len) {
            return Err(Error::invalid(
                "protected set",
                format!("index beyond length {len}"),
            ));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// First frame of every phone.
pub fn protected_from_alignment(a: &Alignment) -> ProtectedSet {
    ProtectedSet {
        indices: a.spans().iter().map(|s| s.start).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Inserted,
}

/// Per-column origin labels travelling alongside a state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProvenanceMask(pub Vec<Provenance>);

impl ProvenanceMask {
    pub fn all_original(len: usize) -> Self {
        Self(vec![Provenance::Original; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_original(&self) -> usize {
        self.0
            .iter()
            .filter(|&&p| p == Provenance::Original)
            .count()
    }

    pub fn original_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == Provenance::Original)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Diffusion time in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DiffusionTime(f64);

impl DiffusionTime {
    pub const ZERO: DiffusionTime = DiffusionTime(0.0);
    pub const ONE: DiffusionTime = DiffusionTime(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid("t", format!("{t} outside [0, 1]")));
        }
        Ok(Self(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for DiffusionTime {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        Self::new(t)
    }
}

/// Expand phone-level prototypes (`D × N_phone`) to frame level by repetition.
pub fn upsample_prior(phone_means: &Spectrogram, durations: &[usize]) -> Result<Spectrogram> {
    if durations.len() != phone_means.frames() {
        return Err(Error::invalid(
            "durations",
            format!(
                "{} durations for {} phones",
                durations.len(),
                phone_means.frames()
            ),
        ));
    }
    if let Some(i) = durations.iter().position(|&d| d == 0) {
        return Err(Error::invalid(
            "durations",
            format!("phone {i} has zero duration"),
        ));
    }
    let total: usize = durations.iter().sum();
    let mut data = Vec::with_capacity(total * phone_means.bins());
    for (col, &d) in phone_means.columns().zip(durations) {
        for _ in 0..d {
            data.extend_from_slice(col);
        }
    }
    Ok(Spectrogram::from_parts_unchecked(phone_means.bins(), data))
}

/// Maximal runs of bit-identical consecutive columns, as `(start, len)`.
///
/// On prior grids built by [`upsample_prior`] or by left-neighbour duplication
/// these runs are the phone segments, provided adjacent phones differ.
pub fn prior_segments(mu: &Spectrogram) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    for j in 0..mu.frames() {
        match out.last_mut() {
            Some(s) if mu.column(s.start) == mu.column(j) => s.len += 1,
            _ => out.push(Span { start: j, len: 1 }),
        }
    }
    out
}
