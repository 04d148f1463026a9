//! Length schedule and variance-preserving noise kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::DiffusionTime;

/// Default lower cut-off of the structural schedule.
pub const DEFAULT_T_MIN: f64 = 0.1;

// Absorbs round-off in (1 - t) / (1 - t_min) so exact products such as 0.5 * 80
// do not floor to 39.
const FLOOR_EPS: f64 = 1e-9;

/// Number of frames alive at time `t` when `l0` frames shrink linearly to the
/// `p_size` protected frames between `t_min` and 1.
pub fn schedule_length(l0: usize, p_size: usize, t: DiffusionTime, t_min: f64) -> Result<usize> {
    if p_size > l0 {
        return Err(Error::invalid(
            "protected set size",
            format!("{p_size} exceeds length {l0}"),
        ));
    }
    if !(t_min > 0.0 && t_min < 1.0) {
        return Err(Error::invalid("t_min", format!("{t_min} outside (0, 1)")));
    }
    let t = t.get();
    if t <= t_min {
        return Ok(l0);
    }
    let factor = (1.0 - t) / (1.0 - t_min);
    let extra = (factor * (l0 - p_size) as f64 + FLOOR_EPS).floor().max(0.0) as usize;
    Ok(p_size + extra.min(l0 - p_size))
}

/// Linear `β(t) = β₀ + t (β₁ − β₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub beta_0: f64,
    pub beta_1: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta_0: 0.05,
            beta_1: 20.0,
        }
    }
}

/// Closed-form kernel coefficients at one time:
/// `x_t = retain · x_0 + prior · μ + sigma · z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCoeffs {
    pub retain: f64,
    pub prior: f64,
    pub sigma: f64,
}

impl NoiseSchedule {
    pub fn new(beta_0: f64, beta_1: f64) -> Result<Self> {
        let s = Self { beta_0, beta_1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_0 > 0.0 && self.beta_0.is_finite()) {
            return Err(Error::invalid("beta_0", "must be positive"));
        }
        if !(self.beta_1 >= self.beta_0 && self.beta_1.is_finite()) {
            return Err(Error::invalid("beta_1", "must be at least beta_0"));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_0 + t * (self.beta_1 - self.beta_0)
    }

    /// `∫₀ᵗ β(s) ds`.
    pub fn cum_beta(&self, t: DiffusionTime) -> f64 {
        let t = t.get();
        self.beta_0 * t + 0.5 * (self.beta_1 - self.beta_0) * t * t
    }

    pub fn vp_coefficients(&self, t: DiffusionTime) -> KernelCoeffs {
        let b = self.cum_beta(t);
        let retain = (-0.5 * b).exp();
        KernelCoeffs {
            retain,
            prior: 1.0 - retain,
            sigma: (-(-b).exp_m1()).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn t(v: f64) -> DiffusionTime {
        DiffusionTime::new(v).unwrap()
    }

    #[test]
    fn schedule_worked_examples() {
        assert_eq!(schedule_length(100, 20, t(1.0), 0.1).unwrap(), 20);
        assert_eq!(schedule_length(100, 20, t(0.1), 0.1).unwrap(), 100);
        assert_eq!(schedule_length(100, 20, t(0.55), 0.1).unwrap(), 60);
        assert_eq!(schedule_length(73, 10, t(0.37), 0.1).unwrap(), 54);
        assert_eq!(schedule_length(100, 20, t(0.05), 0.1).unwrap(), 100);
    }

    #[test]
    fn schedule_rejects_bad_inputs() {
        assert!(schedule_length(5, 6, t(0.5), 0.1).is_err());
        assert!(schedule_length(5, 2, t(0.5), 0.0).is_err());
        assert!(schedule_length(5, 2, t(0.5), 1.0).is_err());
    }

    #[test]
    fn cum_beta_values() {
        let s = NoiseSchedule::default();
        assert_eq!(s.cum_beta(t(0.0)), 0.0);
        assert_abs_diff_eq!(s.cum_beta(t(1.0)), 10.025, epsilon = 1e-12);
        assert_abs_diff_eq!(s.cum_beta(t(0.5)), 2.51875, epsilon = 1e-12);
    }

    // composite Simpson on β, independent of the closed form
    fn simpson(s: &NoiseSchedule, upper: f64) -> f64 {
        let n = 1000;
        let h = upper / n as f64;
        let mut acc = s.beta(0.0) + s.beta(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * s.beta(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn cum_beta_matches_quadrature() {
        for sched in [
            NoiseSchedule::default(),
            NoiseSchedule::new(0.1, 3.0).unwrap(),
        ] {
            for i in 0..=20 {
                let tv = i as f64 / 20.0;
                assert_abs_diff_eq!(sched.cum_beta(t(tv)), simpson(&sched, tv), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn vp_coefficient_values() {
        let s = NoiseSchedule::default();
        let c0 = s.vp_coefficients(t(0.0));
        assert_eq!((c0.retain, c0.prior, c0.sigma), (1.0, 0.0, 0.0));
        let c1 = s.vp_coefficients(t(1.0));
        assert_abs_diff_eq!(c1.retain, 0.006654, epsilon = 1e-5);
        assert_abs_diff_eq!(c1.sigma, 0.99998, epsilon = 1e-5);
        let ch = s.vp_coefficients(t(0.5));
        assert_abs_diff_eq!(ch.retain, 0.2839, epsilon = 1e-4);
        assert_abs_diff_eq!(ch.sigma, 0.9589, epsilon = 1e-4);
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::new(0.0, 1.0).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0).is_err());
        assert!(NoiseSchedule::new(1.0, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn schedule_is_monotone_with_fixed_ends(
            l0 in 1usize..500, frac in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0,
        ) {
            let p = ((l0 as f64 * frac) as usize).clamp(1, l0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let l_lo = schedule_length(l0, p, t(lo), 0.1).unwrap();
            let l_hi = schedule_length(l0, p, t(hi), 0.1).unwrap();
            prop_assert!(l_hi <= l_lo);
            prop_assert!(l_hi >= p && l_lo <= l0);
            prop_assert_eq!(schedule_length(l0, p, t(1.0), 0.1).unwrap(), p);
            prop_assert_eq!(schedule_length(l0, p, t(lo * 0.1), 0.1).unwrap(), l0);
        }

        #[test]
        fn kernel_variance_identity(tv in 0.0f64..=1.0) {
            let s = NoiseSchedule::default();
            let c = s.vp_coefficients(t(tv));
            let decay = (-s.cum_beta(t(tv))).exp();
            prop_assert!((c.sigma * c.sigma + decay - 1.0).abs() < 1e-12);
            prop_assert!((c.retain + c.prior - 1.0).abs() < 1e-15);
            prop_assert!(c.retain > 0.0 && c.retain <= 1.0);
            prop_assert!((0.0..1.0).contains(&c.sigma));
        }

        #[test]
        fn kernel_monotone(a in 0.001f64..=1.0, b in 0.001f64..=1.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let s = NoiseSchedule::default();
            let (cl, ch) = (s.vp_coefficients(t(lo)), s.vp_coefficients(t(hi)));
            prop_assert!(ch.retain < cl.retain);
            prop_assert!(ch.sigma > cl.sigma);
        }
    }
}
