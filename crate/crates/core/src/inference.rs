//! Confidence sets by test inversion over a `(delta0, tau0)` grid.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::causal::{CausalModel, Theta};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::interference::InterferenceMatrix;
use crate::randomize::{run_test, Method, ObservedData, StatKind, TestPlan, TestResult};
use crate::rng::derive_seed;

/// Sorted, finite, duplicate-free axis values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridAxis(Vec<f64>);

impl GridAxis {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("grid axis is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid axis value"));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self(values))
    }

    /// `start, start + step, ...` up to and including `stop` (within 1e-9 steps).
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::NonFinite("grid range"));
        }
        if start == stop {
            return Self::new(alloc::vec![start]);
        }
        if !(step > 0.0) || stop < start {
            return Err(Error::invalid("grid range needs start <= stop and step > 0"));
        }
        let count = libm::floor((stop - start) / step + 1e-9) as usize + 1;
        if count > 1_000_000 {
            return Err(Error::invalid("grid axis has more than 10^6 points"));
        }
        let values = (0..count).map(|k| tidy(start + k as f64 * step)).collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Snap `start + k * step` accumulation noise (0.30000000000000004) to the
/// nearest 12-decimal value.
fn tidy(v: f64) -> f64 {
    if v.abs() < 1e6 {
        let r = libm::round(v * 1e12) / 1e12;
        if r == 0.0 {
            0.0
        } else {
            r
        }
    } else {
        v
    }
}

/// Parses `value`, `start:stop:step` or a comma-separated list.
impl FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| -> Result<f64> {
            t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad grid value `{}`", t.trim())))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [one] => Self::new(one.split(',').map(num).collect::<Result<Vec<_>>>()?),
            [a, b, c] => Self::range(num(a)?, num(b)?, num(c)?),
            _ => Err(Error::invalid(format!("grid `{s}`: expected start:stop:step or a list"))),
        }
    }
}

/// Outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridCell {
    pub theta: Theta,
    pub seed: u64,
    pub pvalue: Option<f64>,
    pub nonconverged_fits: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PvalueGrid {
    pub delta_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    /// Row-major: `cells[i * tau_values.len() + j]` is `(delta_i, tau_j)`.
    pub cells: Vec<GridCell>,
    pub alpha: f64,
    pub method: Method,
    pub stat: StatKind,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Delta,
    Tau,
}

impl PvalueGrid {
    pub fn cell(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.tau_values.len() + j]
    }

    pub fn pvalue(&self, i: usize, j: usize) -> Option<f64> {
        self.cell(i, j).pvalue
    }

    /// Grid points with `pvalue >= alpha`.
    pub fn confidence_set(&self, alpha: f64) -> Vec<Theta> {
        self.cells.iter().filter(|c| c.pvalue.is_some_and(|p| p >= alpha)).map(|c| c.theta).collect()
    }

    /// Every p-value is below the level: the model fits poorly.
    pub fn is_empty_set(&self) -> bool {
        self.confidence_set(self.alpha).is_empty()
    }

    pub fn failed_points(&self) -> usize {
        self.cells.iter().filter(|c| c.pvalue.is_none()).count()
    }

    pub fn nonconverged_fits(&self) -> usize {
        self.cells.iter().map(|c| c.nonconverged_fits).sum()
    }
}

/// Seed used at grid point `index` of a run with master seed `master`.
pub fn grid_point_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[index as u64])
}

/// Settings shared by every grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionPlan {
    pub method: Method,
    pub stat: StatKind,
    pub draws: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Test every `(delta0, tau0)` on the grid. Failures at individual points are
/// recorded in the grid.
pub fn invert<M, E>(
    data: &ObservedData,
    a: &InterferenceMatrix,
    model: &M,
    delta_axis: &GridAxis,
    tau_axis: &GridAxis,
    plan: &InversionPlan,
    exec: &E,
) -> Result<PvalueGrid>
where
    M: CausalModel + Sync + ?Sized,
    E: Executor,
{
    if !(plan.alpha > 0.0 && plan.alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    if plan.draws == 0 {
        return Err(Error::invalid("draws must be positive"));
    }
    let nt = tau_axis.len();
    let cells = exec.map(delta_axis.len() * nt, |k| {
        let theta = Theta::new(delta_axis.values()[k / nt], tau_axis.values()[k % nt]);
        let seed = grid_point_seed(plan.seed, k);
        let test = TestPlan { theta0: theta, stat: plan.stat, draws: plan.draws, seed };
        cell_from(theta, seed, run_test(plan.method, data, a, model, &test, exec))
    });
    Ok(PvalueGrid {
        delta_values: delta_axis.values().to_vec(),
        tau_values: tau_axis.values().to_vec(),
        cells,
        alpha: plan.alpha,
        method: plan.method,
        stat: plan.stat,
        draws: plan.draws,
        seed: plan.seed,
    })
}

fn cell_from(theta: Theta, seed: u64, r: Result<TestResult>) -> GridCell {
    match r {
        Ok(t) => GridCell { theta, seed, pvalue: Some(t.pvalue), nonconverged_fits: t.nonconverged_fits, error: None },
        Err(e) => GridCell { theta, seed, pvalue: None, nonconverged_fits: 0, error: Some(e.to_string()) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointEstimate {
    pub theta: Theta,
    pub max_pvalue: f64,
    /// Several grid points share the maximum p-value.
    pub tie: bool,
}

/// The grid point with the largest p-value; ties go to the smallest `delta0`,
/// then the smallest `tau0`. `None` when no point has a p-value.
pub fn point_estimate(grid: &PvalueGrid) -> Option<PointEstimate> {
    let mut best: Option<PointEstimate> = None;
    // cells are ordered by (delta, tau), so the first maximum wins ties
    for c in &grid.cells {
        let Some(p) = c.pvalue else { continue };
        match &mut best {
            Some(b) if p < b.max_pvalue => {}
            Some(b) if p == b.max_pvalue => b.tie = true,
            _ => best = Some(PointEstimate { theta: c.theta, max_pvalue: p, tie: false }),
        }
    }
    best
}

/// Projection of the confidence set on one axis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginalSet {
    pub values: Vec<f64>,
    pub hull: Option<(f64, f64)>,
}

/// Axis values with at least one point on their slice at `pvalue >= alpha`.
pub fn marginal_interval(grid: &PvalueGrid, axis: Axis, alpha: f64) -> MarginalSet {
    let (outer, inner) = match axis {
        Axis::Delta => (grid.delta_values.len(), grid.tau_values.len()),
        Axis::Tau => (grid.tau_values.len(), grid.delta_values.len()),
    };
    let mut values = Vec::new();
    for o in 0..outer {
        let hit = (0..inner).any(|k| {
            let (i, j) = match axis {
                Axis::Delta => (o, k),
                Axis::Tau => (k, o),
            };
            grid.pvalue(i, j).is_some_and(|p| p >= alpha)
        });
        if hit {
            values.push(match axis {
                Axis::Delta => grid.delta_values[o],
                Axis::Tau => grid.tau_values[o],
            });
        }
    }
    let hull = match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => Some((lo, hi)),
        _ => None,
    };
    MarginalSet { values, hull }
}

/// Multiplicative effects on failure time under the additive model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AddInterpretation {
    /// Own treatment, neighbours held fixed: `exp(delta)`.
    pub direct_ratio: f64,
    /// Every neighbour treated versus none: `exp(tau)`.
    pub spillover_ratio: f64,
    /// Everyone treated versus no one: `exp(delta + tau)`.
    pub total_ratio: f64,
}

pub fn interpret_add(theta: Theta) -> AddInterpretation {
    AddInterpretation {
        direct_ratio: libm::exp(theta.delta),
        spillover_ratio: libm::exp(theta.tau),
        total_ratio: libm::exp(theta.delta + theta.tau),
    }
}
