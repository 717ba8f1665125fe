//! Decaying step-size schedules for the parameter (`gamma`) and reputation
//! (`alpha`) updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `gamma(t) = gamma0 / (1 + beta * t^gamma_exponent)` and
/// `alpha(t) = alpha0 / (1 + beta_m * t^alpha_exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub gamma0: f64,
    pub beta: f64,
    pub alpha0: f64,
    pub beta_m: f64,
    #[serde(default = "default_gamma_exponent")]
    pub gamma_exponent: f64,
    #[serde(default = "default_alpha_exponent")]
    pub alpha_exponent: f64,
}

fn default_gamma_exponent() -> f64 {
    1.0
}

fn default_alpha_exponent() -> f64 {
    0.9
}

impl ScheduleSpec {
    pub fn new(gamma0: f64, beta: f64, alpha0: f64, beta_m: f64) -> Self {
        Self {
            gamma0,
            beta,
            alpha0,
            beta_m,
            gamma_exponent: default_gamma_exponent(),
            alpha_exponent: default_alpha_exponent(),
        }
    }

    pub fn with_exponents(mut self, gamma_exponent: f64, alpha_exponent: f64) -> Self {
        self.gamma_exponent = gamma_exponent;
        self.alpha_exponent = alpha_exponent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma0", self.gamma0),
            ("beta", self.beta),
            ("alpha0", self.alpha0),
            ("beta_m", self.beta_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("schedule.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("gamma_exponent", self.gamma_exponent),
            ("alpha_exponent", self.alpha_exponent),
        ] {
            // negative exponents would make the schedule increase
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("schedule.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Whether the schedules satisfy the diminishing-step conditions of the
    /// two-timescale convergence result: both exponents in (1/2, 1] and gamma
    /// decaying strictly faster than alpha.
    pub fn is_two_timescale(&self) -> bool {
        let in_range = |e: f64| e > 0.5 && e <= 1.0;
        in_range(self.gamma_exponent) && in_range(self.alpha_exponent) && self.gamma_exponent > self.alpha_exponent
    }
}

pub fn gamma_at(s: &ScheduleSpec, t: u64) -> f64 {
    s.gamma0 / (1.0 + s.beta * (t as f64).powf(s.gamma_exponent))
}

pub fn alpha_at(s: &ScheduleSpec, t: u64) -> f64 {
    s.alpha0 / (1.0 + s.beta_m * (t as f64).powf(s.alpha_exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        let s = ScheduleSpec::new(0.2, 0.9, 1.0, 1.0);
        assert_eq!(gamma_at(&s, 0), 0.2);
        assert_relative_eq!(gamma_at(&s, 10), 0.02, max_relative = 1e-15);
        let s = ScheduleSpec::new(0.05, 0.5, 1.0, 1.0);
        assert_relative_eq!(gamma_at(&s, 2), 0.025, max_relative = 1e-15);
    }

    #[test]
    fn alpha_examples() {
        let s = ScheduleSpec::new(1.0, 1.0, 0.2, 0.5);
        assert_eq!(alpha_at(&s, 0), 0.2);
        let s = ScheduleSpec::new(1.0, 1.0, 0.001, 0.1);
        assert_relative_eq!(alpha_at(&s, 1), 0.001 / 1.1, max_relative = 1e-15);
        let s = ScheduleSpec::new(1.0, 1.0, 0.05, 0.5);
        let expected = 0.05 / (1.0 + 0.5 * 1024f64.powf(0.9));
        assert_relative_eq!(alpha_at(&s, 1024), expected, max_relative = 1e-15);
        // 1024^0.9 = 2^9 = 512
        assert_relative_eq!(alpha_at(&s, 1024), 0.05 / 257.0, max_relative = 1e-12);
    }

    #[test]
    fn two_timescale_detection() {
        let s = ScheduleSpec::new(1.0, 1.0, 1.0, 1.0).with_exponents(1.0, 0.6);
        assert!(s.is_two_timescale());
        assert!(!s.with_exponents(0.6, 1.0).is_two_timescale());
        assert!(!s.with_exponents(1.0, 0.4).is_two_timescale());
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(ScheduleSpec::new(0.0, 1.0, 1.0, 1.0).validate().is_err());
        assert!(ScheduleSpec::new(1.0, 1.0, 1.0, -1.0).validate().is_err());
        assert!(ScheduleSpec::new(1.0, 1.0, 1.0, 1.0)
            .with_exponents(-0.1, 0.9)
            .validate()
            .is_err());
    }

    proptest! {
        #[test]
        fn schedules_positive_and_non_increasing(
            g0 in 1e-4f64..10.0, b in 1e-4f64..10.0,
            a0 in 1e-4f64..10.0, bm in 1e-4f64..10.0,
            ge in 0.0f64..2.0, ae in 0.0f64..2.0,
            t1 in 0u64..100_000, dt in 0u64..100_000,
        ) {
            let s = ScheduleSpec::new(g0, b, a0, bm).with_exponents(ge, ae);
            let t2 = t1 + dt;
            prop_assert!(gamma_at(&s, t1) > 0.0 && alpha_at(&s, t1) > 0.0);
            prop_assert!(gamma_at(&s, t2) <= gamma_at(&s, t1));
            prop_assert!(alpha_at(&s, t2) <= alpha_at(&s, t1));
        }
    }
}
