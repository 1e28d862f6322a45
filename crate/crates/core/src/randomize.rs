//! The permutation engine.
//!
//! Two ways of building the reference distribution are provided:
//!
//! * [`test_fixed_censoring`] re-randomises treatment while keeping the
//!   observed failure indicators attached to each unit. It is exact when
//!   nothing is censored and is kept as a baseline otherwise.
//! * [`test_ipz`] lets censoring status change across re-assignments. Censored
//!   uniformity-trial failure times are imputed from the Kaplan-Meier estimate
//!   above their lower bound, censoring times are drawn from arm-specific
//!   Kaplan-Meier estimates, and each draw's data are pushed through the
//!   causal model before the statistic is recomputed.
//!
//! Draw `k` uses its own random stream keyed by `(seed, k)`, so a result is a
//! function of its inputs alone, whatever the executor.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::causal::{apply_shift, fill_exposure, validate_context, CausalModel, Theta};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::interference::InterferenceMatrix;
use crate::rng::{open_unit, stream, StreamRng};
use crate::survival::{
    km_cdf, km_censoring_by_group, ks_stat, logrank, lraft, lraft_difference, sample_truncated, ArmCensoring, StepCdf,
};

/// Default cap on `|Omega|` for exact enumeration.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Observed trial data: times, failure indicators, treatment and optional
/// participation denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    times: Vec<f64>,
    events: Vec<bool>,
    treated: Vec<bool>,
    denominators: Option<Vec<u32>>,
}

impl ObservedData {
    pub fn new(times: Vec<f64>, events: Vec<bool>, treated: Vec<bool>, denominators: Option<Vec<u32>>) -> Result<Self> {
        let n = times.len();
        for (what, len) in [("event indicators", events.len()), ("treatment vector", treated.len())] {
            if len != n {
                return Err(Error::LengthMismatch { what, expected: n, found: len });
            }
        }
        if let Some(b) = &denominators {
            if b.len() != n {
                return Err(Error::LengthMismatch { what: "denominators", expected: n, found: b.len() });
            }
        }
        if let Some(index) = times.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::NonPositiveTime { index, value: times[index] });
        }
        Ok(Self { times, events, treated, denominators })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn denominators(&self) -> Option<&[u32]> {
        self.denominators.as_deref()
    }

    /// `m`, the number of treated units.
    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&z| z).count()
    }

    /// Fraction of observed failures among units with treatment `arm`.
    pub fn failure_fraction(&self, arm: bool) -> f64 {
        let (mut k, mut f) = (0usize, 0usize);
        for (&z, &d) in self.treated.iter().zip(&self.events) {
            if z == arm {
                k += 1;
                f += d as usize;
            }
        }
        if k == 0 {
            0.0
        } else {
            f as f64 / k as f64
        }
    }

    fn check_arms(&self) -> Result<()> {
        let m = self.n_treated();
        if m == 0 {
            return Err(Error::EmptyArm(1));
        }
        if m == self.n() {
            return Err(Error::EmptyArm(0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StatKind {
    LogRank,
    Lraft,
    Ks,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::LogRank => "logr",
            StatKind::Lraft => "lraft",
            StatKind::Ks => "ks",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logr" | "logrank" => Ok(StatKind::LogRank),
            "lraft" => Ok(StatKind::Lraft),
            "ks" => Ok(StatKind::Ks),
            _ => Err(Error::invalid(alloc::format!("unknown statistic `{s}` (logr, lraft, ks)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    FixedCensoring,
    Ipz,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FixedCensoring => "fixed",
            Method::Ipz => "ipz",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "fixed-d" | "fixed_d" => Ok(Method::FixedCensoring),
            "ipz" => Ok(Method::Ipz),
            _ => Err(Error::invalid(alloc::format!("unknown method `{s}` (fixed, ipz)"))),
        }
    }
}

/// What to test and how many draws to use.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestPlan {
    pub theta0: Theta,
    pub stat: StatKind,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestResult {
    pub statistic_observed: f64,
    pub pvalue: f64,
    /// Draws that produced a statistic (`C`).
    pub draws_used: usize,
    pub extreme_count: usize,
    pub nonconverged_fits: usize,
    /// Draws whose statistic could not be computed; excluded from `C`.
    pub failed_draws: usize,
    pub observed_converged: bool,
    pub seed: u64,
    pub method: Method,
    pub stat: StatKind,
    pub theta0: Theta,
    pub exact: bool,
}

impl TestResult {
    /// More than 1% of the draws ended with an unconverged AFT fit.
    pub fn nonconvergence_warning(&self) -> bool {
        let total = self.draws_used + self.failed_draws;
        total > 0 && self.nonconverged_fits * 100 > total
    }
}

/// `(1 + #{draws >= observed}) / (C + 1)`.
pub fn pvalue_from_draws(observed: f64, draws: &[f64]) -> Result<f64> {
    if !observed.is_finite() {
        return Err(Error::NonFinite("observed statistic"));
    }
    if draws.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let extreme = draws.iter().filter(|&&d| d >= observed).count();
    Ok((1 + extreme) as f64 / (draws.len() + 1) as f64)
}

/// Uniform draw from the assignments with exactly `m` of `n` treated
/// (partial Fisher-Yates).
pub fn sample_assignment<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<bool>> {
    if !(0 < m && m < n) {
        return Err(Error::invalid("assignment needs 0 < m < n"));
    }
    Ok(sample_assignment_unchecked(n, m, rng))
}

fn sample_assignment_unchecked<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<bool> {
    let mut index: Vec<u32> = (0..n as u32).collect();
    let mut z = vec![false; n];
    for k in 0..m {
        let j = rng.random_range(k..n);
        index.swap(k, j);
        z[index[k] as usize] = true;
    }
    z
}

/// `C(n, m)`, or `None` on overflow.
pub fn binomial(n: usize, m: usize) -> Option<u128> {
    let m = m.min(n - m.min(n));
    let mut acc: u128 = 1;
    for k in 0..m {
        acc = acc.checked_mul((n - k) as u128)? / (k as u128 + 1);
    }
    Some(acc)
}

/// All assignments with `m` treated, in lexicographic order of the treated
/// index sets.
#[derive(Debug, Clone)]
pub struct Assignments {
    n: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for Assignments {
    type Item = Vec<bool>;

    fn next(&mut self) -> Option<Vec<bool>> {
        let current = self.next.take()?;
        let mut z = vec![false; self.n];
        for &i in &current {
            z[i] = true;
        }
        let m = current.len();
        let mut succ = current;
        let mut k = m;
        while k > 0 {
            k -= 1;
            if succ[k] < self.n - m + k {
                succ[k] += 1;
                for j in k + 1..m {
                    succ[j] = succ[j - 1] + 1;
                }
                self.next = Some(succ);
                break;
            }
        }
        Some(z)
    }
}

pub fn enumerate_assignments(n: usize, m: usize, budget: u128) -> Result<Assignments> {
    if !(0 < m && m < n) {
        return Err(Error::invalid("assignment needs 0 < m < n"));
    }
    let count = binomial(n, m).unwrap_or(u128::MAX);
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    Ok(Assignments { n, next: Some((0..m).collect()) })
}

/// The `rank`-th assignment in the order of [`enumerate_assignments`].
fn nth_assignment(n: usize, m: usize, mut rank: u128) -> Vec<bool> {
    let mut z = vec![false; n];
    let mut remaining = m;
    let mut i = 0;
    while remaining > 0 {
        // assignments whose next treated index is i
        let with_i = binomial(n - i - 1, remaining - 1).unwrap_or(u128::MAX);
        if rank < with_i {
            z[i] = true;
            remaining -= 1;
        } else {
            rank -= with_i;
        }
        i += 1;
    }
    z
}

/// Value of a statistic for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StatValue {
    value: f64,
    converged: bool,
}

/// With `difference` the AFT statistic is the full minus intercept-only
/// log-likelihood. Without it only the full fit is used, which ranks draws
/// the same way when times and events are shared by every draw.
fn evaluate(
    stat: StatKind,
    difference: bool,
    times: &[f64],
    events: &[bool],
    z: &[bool],
    exposure: &[f64],
    row_sums: &[usize],
) -> Result<StatValue> {
    let sv = match stat {
        StatKind::LogRank => StatValue { value: logrank(times, events, z)?.statistic, converged: true },
        StatKind::Ks => StatValue { value: ks_stat(times, events, z)?, converged: true },
        StatKind::Lraft if difference => {
            let (value, full, null) = lraft_difference(times, events, z, exposure, row_sums)?;
            StatValue { value, converged: full.converged && null.converged }
        }
        StatKind::Lraft => {
            let fit = lraft(times, events, z, exposure, row_sums)?;
            StatValue { value: fit.loglik, converged: fit.converged }
        }
    };
    if sv.value.is_finite() {
        Ok(sv)
    } else {
        Err(Error::NonFinite("test statistic"))
    }
}

/// Shared, read-only context for one hypothesis.
struct Context<'a, M: ?Sized> {
    a: &'a InterferenceMatrix,
    b: Option<&'a [u32]>,
    model: &'a M,
    theta0: Theta,
    row_sums: Vec<usize>,
}

impl<M: CausalModel + ?Sized> Context<'_, M> {
    fn exposure(&self, z: &[bool]) -> Vec<f64> {
        let counts = self.a.treated_counts(z);
        let mut e = vec![0.0; z.len()];
        fill_exposure(self.model.exposure_mode(), self.a, self.b, &counts, &mut e);
        e
    }
}

fn prepare<'a, M: CausalModel + ?Sized>(
    data: &'a ObservedData,
    a: &'a InterferenceMatrix,
    model: &'a M,
    theta0: Theta,
) -> Result<(Context<'a, M>, Vec<f64>, Vec<f64>)> {
    if !theta0.is_finite() {
        return Err(Error::NonFinite("theta0"));
    }
    validate_context(model.exposure_mode(), a, data.denominators(), data.treated())?;
    data.check_arms()?;
    let ctx = Context { a, b: data.denominators(), model, theta0, row_sums: a.row_sums() };
    let e = ctx.exposure(data.treated());
    let y0 = apply_shift(data.times(), data.treated(), &e, model, theta0, -1.0);
    Ok((ctx, y0, e))
}

#[derive(Default)]
struct Tally {
    used: usize,
    extreme: usize,
    nonconverged: usize,
    failed: usize,
}

fn tally(observed: f64, values: Vec<Result<StatValue>>) -> Tally {
    let mut t = Tally::default();
    for v in values {
        match v {
            Ok(sv) => {
                t.used += 1;
                t.extreme += (sv.value >= observed) as usize;
                t.nonconverged += (!sv.converged) as usize;
            }
            Err(_) => t.failed += 1,
        }
    }
    t
}

fn finish(observed: StatValue, t: Tally, plan: &TestPlan, method: Method, exact: bool) -> Result<TestResult> {
    if t.used == 0 {
        return Err(Error::invalid("every draw failed to produce a statistic"));
    }
    Ok(TestResult {
        statistic_observed: observed.value,
        pvalue: (1 + t.extreme) as f64 / (t.used + 1) as f64,
        draws_used: t.used,
        extreme_count: t.extreme,
        nonconverged_fits: t.nonconverged,
        failed_draws: t.failed,
        observed_converged: observed.converged,
        seed: plan.seed,
        method,
        stat: plan.stat,
        theta0: plan.theta0,
        exact,
    })
}

/// Permutation test holding each unit's failure indicator fixed.
///
/// With `exact`, every assignment in `Omega` other than the observed one is
/// evaluated (subject to [`ENUMERATION_BUDGET`]), so the p-value equals the
/// exact randomization p-value `#{z : T(z) >= T(Z)} / |Omega|`.
pub fn test_fixed_censoring<M, E>(
    data: &ObservedData,
    a: &InterferenceMatrix,
    model: &M,
    plan: &TestPlan,
    exact: bool,
    exec: &E,
) -> Result<TestResult>
where
    M: CausalModel + Sync + ?Sized,
    E: Executor,
{
    if !exact && plan.draws == 0 {
        return Err(Error::invalid("draws must be positive"));
    }
    let (ctx, y0, e_obs) = prepare(data, a, model, plan.theta0)?;
    let events = data.events();
    let observed = evaluate(plan.stat, false, &y0, events, data.treated(), &e_obs, &ctx.row_sums)?;
    let n = data.n();
    let m = data.n_treated();
    let needs_exposure = plan.stat == StatKind::Lraft;
    let stat_for = |z: &[bool]| {
        let e = if needs_exposure { ctx.exposure(z) } else { Vec::new() };
        evaluate(plan.stat, false, &y0, events, z, &e, &ctx.row_sums)
    };
    let values = if exact {
        let count = binomial(n, m).unwrap_or(u128::MAX);
        if count > ENUMERATION_BUDGET {
            return Err(Error::BudgetExceeded { count, budget: ENUMERATION_BUDGET });
        }
        let mut values = exec.map(count as usize, |r| {
            let z = nth_assignment(n, m, r as u128);
            (z == data.treated(), stat_for(&z))
        });
        let observed_rank = values.iter().position(|(is_obs, _)| *is_obs);
        if let Some(k) = observed_rank {
            let _ = values.remove(k);
        }
        values.into_iter().map(|(_, v)| v).collect()
    } else {
        exec.map(plan.draws, |k| {
            let mut rng = stream(plan.seed, &[k as u64]);
            let z = sample_assignment_unchecked(n, m, &mut rng);
            stat_for(&z)
        })
    };
    finish(observed, tally(observed.value, values), plan, Method::FixedCensoring, exact)
}

/// Precomputed state for the censoring-aware procedure under one hypothesis.
pub struct IpzPlan<'a, M: ?Sized> {
    ctx: Context<'a, M>,
    uniformity: Vec<f64>,
    events: &'a [bool],
    failure_cdf: StepCdf,
    failure_cap: f64,
    arms: [ArmCensoring; 2],
    m: usize,
}

/// Everything produced by one re-assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct IpzDraw {
    /// Uniformity-trial failure times after imputation of the censored ones.
    pub imputed_uniformity: Vec<f64>,
    /// Potential failure times under the drawn assignment.
    pub failure_times: Vec<f64>,
    pub censoring_times: Vec<f64>,
    /// Observed-scale times `min(failure, censoring)`.
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// Times mapped back to the uniformity trial under the drawn assignment.
    pub uniformity: Vec<f64>,
    pub exposure: Vec<f64>,
}

impl<'a, M: CausalModel + ?Sized> IpzPlan<'a, M> {
    pub fn new(data: &'a ObservedData, a: &'a InterferenceMatrix, model: &'a M, theta0: Theta) -> Result<Self> {
        let (ctx, uniformity, _) = prepare(data, a, model, theta0)?;
        let events = data.events();
        let failure_cap =
            uniformity.iter().zip(events).filter(|(_, &d)| d).map(|(&y, _)| y).fold(f64::NEG_INFINITY, f64::max);
        if failure_cap == f64::NEG_INFINITY {
            return Err(Error::NoEvents);
        }
        let failure_cdf = km_cdf(&uniformity, events)?;
        let arms = km_censoring_by_group(data.times(), events, data.treated())?;
        Ok(Self { ctx, uniformity, events, failure_cdf, failure_cap, arms, m: data.n_treated() })
    }

    /// `y(0)` under the hypothesis.
    pub fn uniformity(&self) -> &[f64] {
        &self.uniformity
    }

    /// Largest uniformity-trial failure time, the imputation cap.
    pub fn failure_cap(&self) -> f64 {
        self.failure_cap
    }

    pub fn failure_cdf(&self) -> &StepCdf {
        &self.failure_cdf
    }

    /// Censoring distributions, `[control, treated]`.
    pub fn arms(&self) -> &[ArmCensoring; 2] {
        &self.arms
    }

    pub fn sample_assignment<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        sample_assignment_unchecked(self.uniformity.len(), self.m, rng)
    }

    /// Impute, re-censor and map back for assignment `z`.
    pub fn draw<R: Rng + ?Sized>(&self, z: &[bool], rng: &mut R) -> IpzDraw {
        let n = self.uniformity.len();
        let theta = self.ctx.theta0;
        let model = self.ctx.model;
        let imputed: Vec<f64> = (0..n)
            .map(|i| {
                if self.events[i] {
                    self.uniformity[i]
                } else {
                    let u = open_unit(rng);
                    sample_truncated(&self.failure_cdf, self.uniformity[i], self.failure_cap, u)
                }
            })
            .collect();
        let exposure = self.ctx.exposure(z);
        let shifts: Vec<f64> = (0..n).map(|i| model.shift(theta, z[i], exposure[i])).collect();
        let failure_times: Vec<f64> = (0..n).map(|i| imputed[i] * libm::exp(shifts[i])).collect();
        let censoring_times: Vec<f64> = (0..n)
            .map(|i| {
                let arm = &self.arms[z[i] as usize];
                let v = open_unit(rng);
                sample_truncated(&arm.cdf, 0.0, arm.y_max, v)
            })
            .collect();
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        let mut uniformity = Vec::with_capacity(n);
        for i in 0..n {
            let failed = failure_times[i] <= censoring_times[i];
            events.push(failed);
            if failed {
                times.push(failure_times[i]);
                uniformity.push(imputed[i]);
            } else {
                times.push(censoring_times[i]);
                uniformity.push(censoring_times[i] * libm::exp(-shifts[i]));
            }
        }
        IpzDraw { imputed_uniformity: imputed, failure_times, censoring_times, times, events, uniformity, exposure }
    }
}

/// Censoring-aware permutation test.
pub fn test_ipz<M, E>(
    data: &ObservedData,
    a: &InterferenceMatrix,
    model: &M,
    plan: &TestPlan,
    exec: &E,
) -> Result<TestResult>
where
    M: CausalModel + Sync + ?Sized,
    E: Executor,
{
    if plan.draws == 0 {
        return Err(Error::invalid("draws must be positive"));
    }
    let ipz = IpzPlan::new(data, a, model, plan.theta0)?;
    let e_obs = ipz.ctx.exposure(data.treated());
    let observed =
        evaluate(plan.stat, true, &ipz.uniformity, data.events(), data.treated(), &e_obs, &ipz.ctx.row_sums)?;
    let values = exec.map(plan.draws, |k| {
        let mut rng: StreamRng = stream(plan.seed, &[k as u64]);
        let z = ipz.sample_assignment(&mut rng);
        let d = ipz.draw(&z, &mut rng);
        evaluate(plan.stat, true, &d.uniformity, &d.events, &z, &d.exposure, &ipz.ctx.row_sums)
    });
    finish(observed, tally(observed.value, values), plan, Method::Ipz, false)
}

/// Dispatch on `method`.
pub fn run_test<M, E>(
    method: Method,
    data: &ObservedData,
    a: &InterferenceMatrix,
    model: &M,
    plan: &TestPlan,
    exec: &E,
) -> Result<TestResult>
where
    M: CausalModel + Sync + ?Sized,
    E: Executor,
{
    match method {
        Method::FixedCensoring => test_fixed_censoring(data, a, model, plan, false, exec),
        Method::Ipz => test_ipz(data, a, model, plan, exec),
    }
}

impl fmt::Display for TestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} at ({}, {}): statistic {}, p = {} ({} draws)",
            self.method,
            self.stat,
            self.theta0.delta,
            self.theta0.tau,
            self.statistic_observed,
            self.pvalue,
            self.draws_used
        )
    }
}
