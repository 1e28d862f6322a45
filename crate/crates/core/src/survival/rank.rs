use alloc::vec::Vec;

use super::check_lengths;
use crate::error::{Error, Result};

/// Two-sample log-rank chi-square value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRank {
    pub statistic: f64,
    /// Observed minus expected events in the `group = true` arm.
    pub observed_minus_expected: f64,
    pub variance: f64,
    /// Zero total variance; the statistic is reported as 0.
    pub degenerate: bool,
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// `[sum_k (O_1k - E_1k)]^2 / sum_k V_k` over distinct event times, with the
/// hypergeometric variance for tied events.
pub fn logrank(times: &[f64], events: &[bool], group: &[bool]) -> Result<LogRank> {
    check_lengths("event indicators", times.len(), events.len())?;
    check_lengths("group labels", times.len(), group.len())?;
    let n1_total = group.iter().filter(|&&g| g).count();
    if n1_total == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n1_total == times.len() {
        return Err(Error::EmptyArm(0));
    }
    if times.iter().any(|t| t.is_nan()) {
        return Err(Error::NonFinite("log-rank input time"));
    }
    let order = sorted_order(times);
    let mut at_risk = times.len() as f64;
    let mut at_risk1 = n1_total as f64;
    let mut o_minus_e = 0.0;
    let mut variance = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let (mut tied, mut tied1, mut d, mut d1) = (0usize, 0usize, 0usize, 0usize);
        while k + tied < order.len() && times[order[k + tied]] == t {
            let i = order[k + tied];
            let g = group[i] as usize;
            tied1 += g;
            if events[i] {
                d += 1;
                d1 += g;
            }
            tied += 1;
        }
        if d > 0 {
            let d = d as f64;
            let share = at_risk1 / at_risk;
            o_minus_e += d1 as f64 - d * share;
            if at_risk > 1.0 {
                variance += d * share * (1.0 - share) * (at_risk - d) / (at_risk - 1.0);
            }
        }
        at_risk -= tied as f64;
        at_risk1 -= tied1 as f64;
        k += tied;
    }
    let degenerate = !(variance > 0.0);
    let statistic = if degenerate { 0.0 } else { o_minus_e * o_minus_e / variance };
    Ok(LogRank { statistic, observed_minus_expected: o_minus_e, variance, degenerate })
}

/// Largest vertical distance between the empirical CDFs of the two groups.
/// Only defined for fully observed data.
pub fn ks_stat(values: &[f64], events: &[bool], group: &[bool]) -> Result<f64> {
    check_lengths("event indicators", values.len(), events.len())?;
    check_lengths("group labels", values.len(), group.len())?;
    if events.iter().any(|&e| !e) {
        return Err(Error::CensoredInput);
    }
    let n1 = group.iter().filter(|&&g| g).count();
    let n0 = values.len() - n1;
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    if values.iter().any(|t| t.is_nan()) {
        return Err(Error::NonFinite("KS input value"));
    }
    let order = sorted_order(values);
    let (mut c0, mut c1) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    let mut k = 0;
    while k < order.len() {
        let v = values[order[k]];
        while k < order.len() && values[order[k]] == v {
            if group[order[k]] {
                c1 += 1;
            } else {
                c0 += 1;
            }
            k += 1;
        }
        let diff = (c0 as f64 / n0 as f64 - c1 as f64 / n1 as f64).abs();
        sup = sup.max(diff);
    }
    Ok(sup)
}
