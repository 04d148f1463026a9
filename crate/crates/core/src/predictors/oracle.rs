//! Ground-truth predictors for synthetic data, used as test instrumentation.
//!
//! They read nothing from the state but its length (and, for the duration
//! oracle, its prior segments), so they stay stateless while the sampler
//! evolves.

use super::content::ContentModel;
use super::location::LocationModel;
use crate::error::{Error, Result};
use crate::forward::kept_prefix;
use crate::state::{prior_segments, ProtectedSet, Spectrogram};

/// Logit given to the single correct slot; every other slot gets 0.
pub const ORACLE_LOGIT: f64 = 1e3;
/// Logit for slots that must receive nothing.
pub const ORACLE_FLOOR: f64 = -1e3;

/// Order in which the non-protected frames of one utterance come back.
///
/// The state of length `m` holds `P ∪ order[..m − |P|]`, so any forward
/// deletion order (see [`crate::forward::deletion_order`]) read as a
/// restoration order reproduces the forward kept sets exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationPlan {
    protected: ProtectedSet,
    order: Vec<usize>,
    full_len: usize,
}

impl RestorationPlan {
    pub fn new(protected: ProtectedSet, order: Vec<usize>, full_len: usize) -> Result<Self> {
        let mut seen = vec![false; full_len];
        for &i in protected.indices() {
            if i >= full_len {
                return Err(Error::invalid(
                    "restoration plan",
                    "protected index out of range",
                ));
            }
            seen[i] = true;
        }
        for &i in &order {
            if i >= full_len || seen[i] {
                return Err(Error::invalid(
                    "restoration plan",
                    format!("frame {i} repeated or out of range"),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid(
                "restoration plan",
                "order does not cover every free frame",
            ));
        }
        Ok(Self {
            protected,
            order,
            full_len,
        })
    }

    /// Missing frames come back lowest index first.
    pub fn earliest_first(protected: ProtectedSet, full_len: usize) -> Result<Self> {
        let order = (0..full_len).filter(|&i| !protected.contains(i)).collect();
        Self::new(protected, order, full_len)
    }

    pub fn full_len(&self) -> usize {
        self.full_len
    }

    pub fn protected(&self) -> &ProtectedSet {
        &self.protected
    }

    /// Original indices present in a state of `len` frames.
    pub fn kept(&self, len: usize) -> Result<Vec<usize>> {
        if len < self.protected.len() || len > self.full_len {
            return Err(Error::Unsupported(format!(
                "state length {len} outside ground-truth range {}..={}",
                self.protected.len(),
                self.full_len
            )));
        }
        Ok(kept_prefix(&self.protected, &self.order, len))
    }

    /// Restoration slot of the next frame for a state of `len` frames.
    pub fn next_slot(&self, len: usize) -> Result<usize> {
        if len >= self.full_len {
            return Err(Error::Unsupported(
                "no missing frame left to restore".into(),
            ));
        }
        let kept = self.kept(len + 1)?;
        let frame = self.order[len - self.protected.len()];
        Ok(kept.binary_search(&frame).expect("restored frame is kept"))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Truth {
    Plan(RestorationPlan),
    Durations(Vec<usize>),
}

/// Location oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLocation {
    truth: Truth,
}

impl OracleLocation {
    /// Puts all mass on the slot of the next frame of `plan`.
    pub fn from_plan(plan: RestorationPlan) -> Self {
        Self {
            truth: Truth::Plan(plan),
        }
    }

    /// Puts each phone's mass on the slot after its last prior column, in
    /// proportion to its missing frames. Argmax allocation of any count then
    /// never overfills a phone, so it lands on the true durations.
    pub fn from_durations(durations: Vec<usize>) -> Self {
        Self {
            truth: Truth::Durations(durations),
        }
    }
}

impl LocationModel for OracleLocation {
    fn score_slots(&self, x: &Spectrogram, mu: &Spectrogram, _t: f64) -> Result<Vec<f64>> {
        let len = x.frames();
        match &self.truth {
            Truth::Plan(plan) => {
                let slot = plan.next_slot(len)?;
                let mut logits = vec![0.0; len];
                logits[slot - 1] = ORACLE_LOGIT;
                Ok(logits)
            }
            Truth::Durations(durations) => {
                let segments = prior_segments(mu);
                if segments.len() != durations.len() {
                    return Err(Error::Unsupported(format!(
                        "{} prior segments but {} ground-truth phones",
                        segments.len(),
                        durations.len()
                    )));
                }
                let mut logits = vec![ORACLE_FLOOR; len];
                let mut any = false;
                for (span, &d) in segments.iter().zip(durations) {
                    let missing = d.saturating_sub(span.len);
                    if missing > 0 {
                        any = true;
                        logits[span.start + span.len - 1] = (missing as f64).ln();
                    }
                }
                if !any {
                    return Err(Error::Unsupported(
                        "state already has every ground-truth frame".into(),
                    ));
                }
                Ok(logits)
            }
        }
    }
}

/// Content oracle: the true clean column of the frame restored at `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleContent {
    x0: Spectrogram,
    plan: RestorationPlan,
}

impl OracleContent {
    pub fn new(x0: Spectrogram, plan: RestorationPlan) -> Result<Self> {
        if x0.frames() != plan.full_len() {
            return Err(Error::invalid(
                "oracle content",
                "plan length does not match x0",
            ));
        }
        Ok(Self { x0, plan })
    }
}

impl ContentModel for OracleContent {
    fn predict(
        &self,
        x_masked: &Spectrogram,
        _mu: &Spectrogram,
        _t: f64,
        slot: usize,
    ) -> Result<Vec<f32>> {
        let kept = self.plan.kept(x_masked.frames())?;
        let frame = *kept.get(slot).ok_or_else(|| Error::IndexOutOfRange {
            index: slot,
            valid: format!("0..{}", kept.len()),
        })?;
        Ok(self.x0.column(frame).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{protected_from_alignment, upsample_prior, Alignment};

    fn fixture() -> (Spectrogram, ProtectedSet) {
        let a = Alignment::from_durations(vec![0, 1], &[3, 2]).unwrap();
        let x0 = Spectrogram::from_columns(1, &[[0.0f32], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        (x0, protected_from_alignment(&a))
    }

    #[test]
    fn earliest_first_slot_is_position_among_kept() {
        let (x0, p) = fixture();
        let plan = RestorationPlan::earliest_first(p, 5).unwrap();
        // state {0, 3}: next is frame 1, which sits at position 1 of {0, 1, 3}
        assert_eq!(plan.next_slot(2).unwrap(), 1);
        // state {0, 1, 3}: next is frame 2 -> {0, 1, 2, 3}
        assert_eq!(plan.next_slot(3).unwrap(), 2);
        // state {0, 1, 2, 3}: next is frame 4 -> position 4
        assert_eq!(plan.next_slot(4).unwrap(), 4);
        assert!(plan.next_slot(5).is_err());

        let loc = OracleLocation::from_plan(plan.clone());
        let x = x0.select_columns(&[0, 3]).unwrap();
        assert_eq!(
            loc.score_slots(&x, &x, 0.5).unwrap(),
            vec![ORACLE_LOGIT, 0.0]
        );

        let cont = OracleContent::new(x0.clone(), plan).unwrap();
        let masked = x0
            .select_columns(&[0, 1, 3])
            .unwrap()
            .mask_column(1)
            .unwrap();
        assert_eq!(
            cont.predict(&masked, &masked, 0.5, 1).unwrap(),
            x0.column(1)
        );
    }

    #[test]
    fn plan_rejects_bad_orders() {
        let (_, p) = fixture();
        assert!(RestorationPlan::new(p.clone(), vec![1, 2], 5).is_err());
        assert!(RestorationPlan::new(p.clone(), vec![1, 2, 4, 4], 5).is_err());
        assert!(RestorationPlan::new(p, vec![4, 2, 1], 5).is_ok());
    }

    #[test]
    fn duration_oracle_weights_missing_frames() {
        let means = Spectrogram::from_columns(1, &[[1.0f32], [2.0], [3.0]]).unwrap();
        let mu = upsample_prior(&means, &[1, 2, 1]).unwrap();
        let loc = OracleLocation::from_durations(vec![3, 2, 5]);
        let logits = loc.score_slots(&mu, &mu, 1.0).unwrap();
        assert!((logits[0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(logits[1], ORACLE_FLOOR);
        assert_eq!(logits[2], ORACLE_FLOOR);
        assert!((logits[3] - 4f64.ln()).abs() < 1e-12);
        let full = upsample_prior(&means, &[3, 2, 5]).unwrap();
        assert!(matches!(
            loc.score_slots(&full, &full, 0.0),
            Err(Error::Unsupported(_))
        ));
    }
}
