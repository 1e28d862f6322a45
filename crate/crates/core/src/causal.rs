//! Causal models and the multiplicative link.
//!
//! A model supplies `F(z; theta)` for one unit through [`CausalModel::shift`].
//! Potential times are `y_i(z) = y_i(0) * exp(F)`, so the uniformity-trial
//! times follow from the observed ones by dividing the shift back out. Both
//! directions are generic over the model.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::interference::{check_denominators, ratio, InterferenceMatrix};

/// Direct effect `delta` and spillover effect `tau`, both on the log-time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Theta {
    pub delta: f64,
    pub tau: f64,
}

impl Theta {
    pub const fn new(delta: f64, tau: f64) -> Self {
        Self { delta, tau }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.is_finite() && self.tau.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    /// `delta * z_i + tau * e_i`
    Additive,
    /// `delta + log[1 + (1 - z_i)(exp(-delta) - 1) exp(-tau^2 e_i)]`
    Bfp,
}

/// Which neighbour summary enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExposureMode {
    /// `G_i = T_i / A_i`
    Proportion,
    /// `G*_i = T_i / B_i`, needs participation denominators
    ProportionStar,
    /// `T_i`
    Count,
}

pub trait CausalModel {
    fn exposure_mode(&self) -> ExposureMode;

    /// `F(z; theta)` for a unit with own treatment `treated` and exposure `exposure`.
    fn shift(&self, theta: Theta, treated: bool, exposure: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub exposure: ExposureMode,
}

impl ModelSpec {
    pub const ADD_G: Self = Self::new(ModelKind::Additive, ExposureMode::Proportion);
    pub const BFP_T: Self = Self::new(ModelKind::Bfp, ExposureMode::Count);

    pub const fn new(kind: ModelKind, exposure: ExposureMode) -> Self {
        Self { kind, exposure }
    }

    /// The model with its customary exposure: proportions for the additive
    /// model, counts for BFP.
    pub const fn with_default_exposure(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Additive => Self::ADD_G,
            ModelKind::Bfp => Self::BFP_T,
        }
    }
}

impl CausalModel for ModelSpec {
    fn exposure_mode(&self) -> ExposureMode {
        self.exposure
    }

    #[inline]
    fn shift(&self, theta: Theta, treated: bool, exposure: f64) -> f64 {
        match self.kind {
            ModelKind::Additive => {
                let own = if treated { theta.delta } else { 0.0 };
                own + theta.tau * exposure
            }
            ModelKind::Bfp => {
                if treated {
                    return theta.delta;
                }
                let inner = 1.0 + libm::expm1(-theta.delta) * libm::exp(-theta.tau * theta.tau * exposure);
                assert!(
                    inner > 0.0,
                    "BFP shift left the domain of log: delta={}, tau={}, exposure={exposure}",
                    theta.delta,
                    theta.tau
                );
                theta.delta + libm::log(inner)
            }
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ModelKind::Additive => "add",
            ModelKind::Bfp => "bfp",
        };
        let exposure = match self.exposure {
            ExposureMode::Proportion => "G",
            ExposureMode::ProportionStar => "Gstar",
            ExposureMode::Count => "T",
        };
        write!(f, "{kind}-{exposure}")
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use ExposureMode::*;
        use ModelKind::*;
        let spec = match s {
            "add-G" => Self::new(Additive, Proportion),
            "add-Gstar" => Self::new(Additive, ProportionStar),
            "add-T" => Self::new(Additive, Count),
            "bfp-T" => Self::new(Bfp, Count),
            "bfp-G" => Self::new(Bfp, Proportion),
            "bfp-Gstar" => Self::new(Bfp, ProportionStar),
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        Ok(spec)
    }
}

/// Convert treated-neighbour counts to the exposure the model uses.
/// Denominators are assumed already validated against `a`.
pub(crate) fn fill_exposure(
    mode: ExposureMode,
    a: &InterferenceMatrix,
    b: Option<&[u32]>,
    counts: &[u32],
    out: &mut [f64],
) {
    match mode {
        ExposureMode::Proportion => {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = ratio(counts[i], a.row_sum(i));
            }
        }
        ExposureMode::ProportionStar => {
            let b = b.expect("G* exposure requires denominators");
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = ratio(counts[i], b[i] as usize);
            }
        }
        ExposureMode::Count => {
            for (slot, &t) in out.iter_mut().zip(counts) {
                *slot = t as f64;
            }
        }
    }
}

pub(crate) fn validate_context(
    mode: ExposureMode,
    a: &InterferenceMatrix,
    b: Option<&[u32]>,
    z: &[bool],
) -> Result<()> {
    if z.len() != a.n() {
        return Err(Error::LengthMismatch { what: "treatment vector", expected: a.n(), found: z.len() });
    }
    match (mode, b) {
        (ExposureMode::ProportionStar, None) => Err(Error::invalid("G* exposure requires participation denominators")),
        (_, Some(b)) => check_denominators(a, b),
        _ => Ok(()),
    }
}

/// Exposure values `e_i` for assignment `z` under the given mode.
pub fn exposure_values(mode: ExposureMode, a: &InterferenceMatrix, b: Option<&[u32]>, z: &[bool]) -> Result<Vec<f64>> {
    validate_context(mode, a, b, z)?;
    let counts = a.treated_counts(z);
    let mut out = vec![0.0; a.n()];
    fill_exposure(mode, a, b, &counts, &mut out);
    Ok(out)
}

fn check_times(times: &[f64]) -> Result<()> {
    match times.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
        Some(index) => Err(Error::NonPositiveTime { index, value: times[index] }),
        None => Ok(()),
    }
}

/// `times_i * exp(sign * F(z_i, e_i))` with precomputed exposures.
pub fn apply_shift<M: CausalModel + ?Sized>(
    times: &[f64],
    z: &[bool],
    exposures: &[f64],
    model: &M,
    theta: Theta,
    sign: f64,
) -> Vec<f64> {
    times.iter().zip(z).zip(exposures).map(|((&t, &zi), &e)| t * libm::exp(sign * model.shift(theta, zi, e))).collect()
}

/// Uniformity-trial times `y_i(0) = Y_i exp(-F(Z; theta))`.
pub fn to_uniformity<M: CausalModel + ?Sized>(
    times: &[f64],
    z: &[bool],
    a: &InterferenceMatrix,
    b: Option<&[u32]>,
    model: &M,
    theta: Theta,
) -> Result<Vec<f64>> {
    check_times(times)?;
    let e = exposure_values(model.exposure_mode(), a, b, z)?;
    if times.len() != z.len() {
        return Err(Error::LengthMismatch { what: "times", expected: z.len(), found: times.len() });
    }
    Ok(apply_shift(times, z, &e, model, theta, -1.0))
}

/// Potential times `y_i(z) = y_i(0) exp(F(z; theta))`.
pub fn from_uniformity<M: CausalModel + ?Sized>(
    uniformity: &[f64],
    z: &[bool],
    a: &InterferenceMatrix,
    b: Option<&[u32]>,
    model: &M,
    theta: Theta,
) -> Result<Vec<f64>> {
    check_times(uniformity)?;
    let e = exposure_values(model.exposure_mode(), a, b, z)?;
    if uniformity.len() != z.len() {
        return Err(Error::LengthMismatch { what: "uniformity times", expected: z.len(), found: uniformity.len() });
    }
    Ok(apply_shift(uniformity, z, &e, model, theta, 1.0))
}
