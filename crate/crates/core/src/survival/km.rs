use alloc::vec::Vec;

use super::check_lengths;
use crate::error::{Error, Result};

/// Right-continuous step distribution function.
///
/// `values[k]` is the CDF at and after `jump_times[k]` (until the next jump).
/// The last value may be below one when the largest observation is censored.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepCdf {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_lengths("step values", jump_times.len(), values.len())?;
        let times_ok =
            jump_times.iter().all(|t| *t > 0.0 && t.is_finite()) && jump_times.windows(2).all(|w| w[0] < w[1]);
        let values_ok = values.iter().all(|v| *v > 0.0 && *v <= 1.0) && values.windows(2).all(|w| w[0] < w[1]);
        if !(times_ok && values_ok) {
            return Err(Error::invalid(
                "step CDF needs increasing positive jump times and increasing values in (0, 1]",
            ));
        }
        Ok(Self { jump_times, values })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value after the last jump, zero when there are no jumps.
    pub fn terminal_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// No jumps at all (no events were observed).
    pub fn is_degenerate(&self) -> bool {
        self.jump_times.is_empty()
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    /// Generalised inverse: the smallest jump time whose value is at least `u`.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        let k = self.values.partition_point(|&v| v < u);
        self.jump_times.get(k).copied()
    }
}

/// Kaplan-Meier estimate of the distribution function, `1 - prod (1 - d_k / r_k)`
/// over distinct event times. Units censored at an event time count as still
/// at risk for that event.
pub fn km_cdf(times: &[f64], events: &[bool]) -> Result<StepCdf> {
    check_lengths("event indicators", times.len(), events.len())?;
    if let Some(index) = times.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::NonPositiveTime { index, value: times[index] });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_unstable_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = times.len();
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut tied = 0;
        let mut deaths = 0;
        while k + tied < order.len() && times[order[k + tied]] == t {
            deaths += events[order[k + tied]] as usize;
            tied += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            jump_times.push(t);
            values.push(1.0 - surv);
        }
        at_risk -= tied;
        k += tied;
    }
    Ok(StepCdf { jump_times, values })
}

/// Draw from `cdf` conditioned to exceed `lower`, with mass beyond `cap`
/// placed at `cap`.
///
/// `u` in (0, 1) is mapped to `u' = F(lower) + u (1 - F(lower))`; the result
/// is `F^-1(u')` when `u' <= F(cap)` and `cap` otherwise. If `F(lower) = 1`
/// there is no mass above `lower` and `cap` is returned.
pub fn sample_truncated(cdf: &StepCdf, lower: f64, cap: f64, u: f64) -> f64 {
    let f_lower = cdf.eval(lower);
    if f_lower >= 1.0 {
        return cap;
    }
    let target = f_lower + u * (1.0 - f_lower);
    if target > cdf.eval(cap) {
        return cap;
    }
    let start = cdf.jump_times.partition_point(|&s| s <= lower);
    let k = start + cdf.values[start..].partition_point(|&v| v < target);
    cdf.jump_times.get(k).copied().unwrap_or(cap)
}

/// Censoring-time distribution of one treatment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCensoring {
    /// KM CDF of the censoring times (indicators `1 - D`)
    pub cdf: StepCdf,
    /// Largest observed time in the arm
    pub y_max: f64,
    /// Whether that largest time is a censoring time
    pub y_max_censored: bool,
}

/// Per-arm censoring distributions, indexed by treatment (`[control, treated]`).
pub fn km_censoring_by_group(times: &[f64], events: &[bool], z: &[bool]) -> Result<[ArmCensoring; 2]> {
    check_lengths("event indicators", times.len(), events.len())?;
    check_lengths("treatment vector", times.len(), z.len())?;
    let arm = |flag: bool| -> Result<ArmCensoring> {
        let idx: Vec<usize> = (0..times.len()).filter(|&i| z[i] == flag).collect();
        if idx.is_empty() {
            return Err(Error::EmptyArm(flag as u8));
        }
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let c: Vec<bool> = idx.iter().map(|&i| !events[i]).collect();
        let cdf = km_cdf(&t, &c)?;
        let y_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y_max_censored = idx.iter().any(|&i| times[i] == y_max && !events[i]);
        Ok(ArmCensoring { cdf, y_max, y_max_censored })
    };
    Ok([arm(false)?, arm(true)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_product_limit() {
        let f = km_cdf(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(f.jump_times(), &[1.0, 3.0]);
        assert!((f.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.values()[1], 1.0);
        assert_eq!(f.eval(0.5), 0.0);
        assert!((f.eval(2.5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_censored_is_degenerate() {
        let f = km_cdf(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(f.is_degenerate());
        assert_eq!(f.terminal_value(), 0.0);
        assert_eq!(f.quantile(0.1), None);
    }

    #[test]
    fn tie_rule_events_before_censoring() {
        // at t=2 one event and one censoring: both at risk (r=3), F = 1 - (2/3)
        let f = km_cdf(&[2.0, 2.0, 5.0], &[true, false, true]).unwrap();
        assert!((f.eval(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval(5.0), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(km_cdf(&[1.0, -1.0], &[true, true]).is_err());
        assert!(km_cdf(&[1.0], &[true, true]).is_err());
    }

    #[test]
    fn truncated_sampler_cases() {
        let point = StepCdf::new(vec![5.0], vec![1.0]).unwrap();
        for u in [1e-9, 0.3, 0.999] {
            assert_eq!(sample_truncated(&point, 0.0, 10.0, u), 5.0);
        }
        let f = km_cdf(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(sample_truncated(&f, 4.0, 3.5, 0.5), 3.5);
        // lower sits on a jump: only mass strictly above remains
        assert_eq!(sample_truncated(&f, 1.0, 3.0, 0.1), 2.0);
        assert_eq!(sample_truncated(&f, 1.0, 3.0, 0.9), 3.0);
        // terminal value < 1: mass beyond the last jump goes to the cap
        let g = km_cdf(&[1.0, 2.0, 3.0], &[true, false, false]).unwrap();
        assert_eq!(sample_truncated(&g, 0.0, 3.0, 0.2), 1.0);
        assert_eq!(sample_truncated(&g, 0.0, 3.0, 0.5), 3.0);
    }

    #[test]
    fn censoring_by_group() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d = [true, true, true, false, true, false];
        let z = [false, false, false, true, true, true];
        let [c0, c1] = km_censoring_by_group(&y, &d, &z).unwrap();
        assert!(c0.cdf.is_degenerate());
        assert_eq!(c0.y_max, 3.0);
        assert!(!c0.y_max_censored);
        assert_eq!(c1.y_max, 6.0);
        assert!(c1.y_max_censored);
        assert_eq!(c1.cdf.eval(6.0), 1.0);
        // no censoring in arm 0: every draw lands on the cap
        assert_eq!(sample_truncated(&c0.cdf, 0.0, c0.y_max, 0.4), 3.0);

        assert_eq!(km_censoring_by_group(&y, &d, &[true; 6]), Err(Error::EmptyArm(0)));
    }

    proptest! {
        #[test]
        fn km_is_a_valid_step_cdf(
            data in proptest::collection::vec((1u32..20, any::<bool>()), 1..40)
        ) {
            let times: Vec<f64> = data.iter().map(|p| p.0 as f64).collect();
            let events: Vec<bool> = data.iter().map(|p| p.1).collect();
            let f = km_cdf(&times, &events).unwrap();
            prop_assert!(StepCdf::new(f.jump_times().to_vec(), f.values().to_vec()).is_ok());
            if events.iter().all(|&e| e) {
                for &t in &times {
                    let ecdf = times.iter().filter(|&&s| s <= t).count() as f64 / times.len() as f64;
                    prop_assert!((f.eval(t) - ecdf).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn truncated_sample_bounds(
            data in proptest::collection::vec((1u32..30, any::<bool>()), 1..30),
            lower in 0.0f64..35.0,
            cap in 1.0f64..35.0,
            u in 1e-9f64..1.0,
        ) {
            let times: Vec<f64> = data.iter().map(|p| p.0 as f64).collect();
            let events: Vec<bool> = data.iter().map(|p| p.1).collect();
            let f = km_cdf(&times, &events).unwrap();
            let x = sample_truncated(&f, lower, cap, u);
            prop_assert!(x <= cap);
            let above = f.jump_times().iter().copied().filter(|&t| t > lower).fold(f64::INFINITY, f64::min);
            prop_assert!(x >= above.min(cap));
        }
    }
}
