//! Censoring-aware statistics: Kaplan-Meier distribution functions and the
//! truncated sampler built on them, the two-sample log-rank and
//! Kolmogorov-Smirnov statistics, and the censored log-normal AFT working
//! model whose maximised log-likelihood serves as the LRaft statistic.

mod aft;
mod km;
pub mod normal;
mod rank;

pub use aft::{aft_gradient, aft_loglik, aft_mle, lraft, lraft_design, lraft_difference, AftFit, Design};
pub use km::{km_cdf, km_censoring_by_group, sample_truncated, ArmCensoring, StepCdf};
pub use rank::{ks_stat, logrank, LogRank};

use crate::error::{Error, Result};

pub(crate) fn check_lengths(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, found })
    }
}
