//! Censored log-normal accelerated failure time model.
//!
//! `log y_i = q_i beta + sigma eps_i` with standard normal errors. Failures
//! contribute `log{phi(eps_i) / (sigma y_i)}` and censored units
//! `log{1 - Phi(eps_i)}`. The fit is a damped Newton ascent in
//! `(beta, log sigma)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::check_lengths;
use super::normal::{inv_mills, ln_sf, LN_SQRT_2PI};
use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
const RIDGE: f64 = 1e-10;
const SIGMA_FLOOR: f64 = 1e-3;

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    ncols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(ncols: usize, data: Vec<f64>) -> Result<Self> {
        if ncols == 0 || !data.len().is_multiple_of(ncols) {
            return Err(Error::invalid("design data is not a whole number of rows"));
        }
        Ok(Self { ncols, data })
    }

    pub fn intercept(n: usize) -> Self {
        Self { ncols: 1, data: vec![1.0; n] }
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.ncols
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// First column only.
    pub fn intercept_only(&self) -> Self {
        Self { ncols: 1, data: (0..self.nrows()).map(|i| self.data[i * self.ncols]).collect() }
    }
}

/// `q_i = (1, Z_i, E_i, Z_i E_i, A_i)`.
pub fn lraft_design(z: &[bool], exposure: &[f64], row_sums: &[usize]) -> Result<Design> {
    check_lengths("exposures", z.len(), exposure.len())?;
    check_lengths("row sums", z.len(), row_sums.len())?;
    let mut data = Vec::with_capacity(5 * z.len());
    for ((&zi, &e), &a) in z.iter().zip(exposure).zip(row_sums) {
        let zf = zi as u8 as f64;
        data.extend_from_slice(&[1.0, zf, e, zf * e, a as f64]);
    }
    Ok(Design { ncols: 5, data })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AftFit {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// A ridge had to be added to the Newton system (rank-deficient design).
    pub ridged: bool,
}

fn check_inputs(y0: &[f64], events: &[bool], design: &Design) -> Result<()> {
    check_lengths("event indicators", y0.len(), events.len())?;
    check_lengths("design rows", y0.len(), design.nrows())?;
    if let Some(index) = y0.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::NonPositiveTime { index, value: y0[index] });
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-likelihood at `(beta, sigma)`. Non-finite values signal a degenerate
/// point and callers treat them as minus infinity.
pub fn aft_loglik(y0: &[f64], events: &[bool], design: &Design, beta: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(beta.len(), design.ncols());
    let log_sigma = libm::log(sigma);
    let mut ll = 0.0;
    for i in 0..y0.len() {
        let ly = libm::log(y0[i]);
        let eps = (ly - dot(design.row(i), beta)) / sigma;
        ll += if events[i] { -0.5 * eps * eps - LN_SQRT_2PI - log_sigma - ly } else { ln_sf(eps) };
    }
    ll
}

struct Local {
    loglik: f64,
    grad: Vec<f64>,
    /// Negative Hessian, row-major `(p + 1) x (p + 1)`.
    info: Vec<f64>,
}

/// Log-likelihood, gradient and negative Hessian in `(beta, log sigma)`.
fn local(y0: &[f64], events: &[bool], design: &Design, params: &[f64], with_info: bool) -> Local {
    let p = design.ncols();
    let dim = p + 1;
    let (beta, log_sigma) = (&params[..p], params[p]);
    let sigma = libm::exp(log_sigma);
    let inv_s = 1.0 / sigma;
    let mut ll = 0.0;
    let mut grad = vec![0.0; dim];
    let mut info = if with_info { vec![0.0; dim * dim] } else { Vec::new() };
    for i in 0..y0.len() {
        let q = design.row(i);
        let ly = libm::log(y0[i]);
        let eps = (ly - dot(q, beta)) * inv_s;
        // gb: d/d(beta) coefficient on q, gs: d/d(log sigma),
        // hbb, hbs, hss: minus the second derivatives
        let (gb, gs, hbb, hbs, hss);
        if events[i] {
            ll += -0.5 * eps * eps - LN_SQRT_2PI - log_sigma - ly;
            gb = eps * inv_s;
            gs = eps * eps - 1.0;
            hbb = inv_s * inv_s;
            hbs = 2.0 * eps * inv_s;
            hss = 2.0 * eps * eps;
        } else {
            ll += ln_sf(eps);
            let lam = inv_mills(eps);
            let w = lam * (lam - eps);
            gb = lam * inv_s;
            gs = lam * eps;
            hbb = w * inv_s * inv_s;
            hbs = (w * eps + lam) * inv_s;
            hss = w * eps * eps + lam * eps;
        }
        for a in 0..p {
            grad[a] += gb * q[a];
        }
        grad[p] += gs;
        if with_info {
            for a in 0..p {
                let row = a * dim;
                for b in a..p {
                    info[row + b] += hbb * q[a] * q[b];
                }
                info[row + p] += hbs * q[a];
            }
            info[p * dim + p] += hss;
        }
    }
    if with_info {
        for a in 0..dim {
            for b in 0..a {
                info[a * dim + b] = info[b * dim + a];
            }
        }
    }
    Local { loglik: ll, grad, info }
}

/// Analytic gradient of the log-likelihood in `(beta, log sigma)`.
pub fn aft_gradient(y0: &[f64], events: &[bool], design: &Design, beta: &[f64], sigma: f64) -> Vec<f64> {
    let mut params = beta.to_vec();
    params.push(libm::log(sigma));
    local(y0, events, design, &params, false).grad
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Solve `(info + ridge I) x = rhs`, escalating the ridge until the system is
/// positive definite. Returns the step and whether a ridge was needed.
fn newton_step(info: &[f64], rhs: &[f64]) -> Option<(Vec<f64>, bool)> {
    let dim = rhs.len();
    let scale = (0..dim).map(|a| info[a * dim + a].abs()).fold(1.0, f64::max);
    let b = DVector::from_column_slice(rhs);
    let mut ridge = 0.0;
    for _ in 0..40 {
        let mut m = DMatrix::from_row_slice(dim, dim, info);
        for a in 0..dim {
            m[(a, a)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(&b);
            if x.iter().all(|v| v.is_finite()) {
                return Some((x.iter().copied().collect(), ridge > 0.0));
            }
        }
        ridge = if ridge == 0.0 { RIDGE * scale } else { ridge * 10.0 };
    }
    None
}

/// Least squares on failures only, giving a starting point.
fn initial_params(y0: &[f64], events: &[bool], design: &Design) -> Vec<f64> {
    let p = design.ncols();
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    let mut count = 0usize;
    for i in (0..y0.len()).filter(|&i| events[i]) {
        let q = design.row(i);
        let ly = libm::log(y0[i]);
        for a in 0..p {
            xty[a] += q[a] * ly;
            for b in 0..p {
                xtx[a * p + b] += q[a] * q[b];
            }
        }
        count += 1;
    }
    let beta = newton_step(&xtx, &xty).map(|(b, _)| b).unwrap_or_else(|| vec![0.0; p]);
    let mut ss = 0.0;
    for i in (0..y0.len()).filter(|&i| events[i]) {
        let r = libm::log(y0[i]) - dot(design.row(i), &beta);
        ss += r * r;
    }
    let sd = if count > 0 { libm::sqrt(ss / count as f64) } else { 0.0 };
    let mut params = beta;
    params.push(libm::log(sd.max(SIGMA_FLOOR)));
    params
}

/// Maximum likelihood fit. With `restrict_to_intercept` only the first design
/// column is used (slopes fixed at zero, intercept free).
///
/// Non-convergence is reported through [`AftFit::converged`], with the best
/// point reached.
pub fn aft_mle(y0: &[f64], events: &[bool], design: &Design, restrict_to_intercept: bool) -> Result<AftFit> {
    check_inputs(y0, events, design)?;
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    let restricted;
    let design = if restrict_to_intercept && design.ncols() > 1 {
        restricted = design.intercept_only();
        &restricted
    } else {
        design
    };
    let p = design.ncols();
    let mut params = initial_params(y0, events, design);
    let mut state = local(y0, events, design, &params, true);
    let mut ridged = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if !state.loglik.is_finite() {
            break;
        }
        if max_abs(&state.grad) < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let Some((step, r)) = newton_step(&state.info, &state.grad) else {
            break;
        };
        ridged |= r;
        let slope = dot(&step, &state.grad);
        // Predicted gain below the rounding level of the loglik: Armijo cannot
        // discriminate any more, so take Newton steps that do not lose ground.
        let noise = 1e3 * f64::EPSILON * (1.0 + state.loglik.abs());
        let flat = slope <= noise;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(x, s)| x + t * s).collect();
            let ll = local(y0, events, design, &trial, false).loglik;
            if ll.is_finite() && (ll >= state.loglik + 1e-4 * t * slope || (flat && ll >= state.loglik - noise)) {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(trial) = accepted else {
            converged = flat;
            break;
        };
        let previous = max_abs(&state.grad);
        params = trial;
        state = local(y0, events, design, &params, true);
        if flat && max_abs(&state.grad) >= 0.5 * previous {
            // gradient has reached its floor at working precision
            converged = true;
            break;
        }
    }
    if !converged && state.loglik.is_finite() && max_abs(&state.grad) < GRAD_TOL {
        converged = true;
    }
    let sigma = libm::exp(params[p]);
    params.truncate(p);
    Ok(AftFit { beta: params, sigma, loglik: state.loglik, converged, iterations, ridged })
}

/// LRaft statistic: the maximised full-model log-likelihood for design
/// `(1, Z, E, Z E, A)`. The intercept-only term is constant over assignments
/// for a fixed hypothesis, so it is not subtracted.
pub fn lraft(y0: &[f64], events: &[bool], z: &[bool], exposure: &[f64], row_sums: &[usize]) -> Result<AftFit> {
    let design = lraft_design(z, exposure, row_sums)?;
    aft_mle(y0, events, &design, false)
}

/// `l(full) - l(intercept only)`, for diagnostics.
pub fn lraft_difference(
    y0: &[f64],
    events: &[bool],
    z: &[bool],
    exposure: &[f64],
    row_sums: &[usize],
) -> Result<(f64, AftFit, AftFit)> {
    let design = lraft_design(z, exposure, row_sums)?;
    let full = aft_mle(y0, events, &design, false)?;
    let null = aft_mle(y0, events, &design, true)?;
    Ok((full.loglik - null.loglik, full, null))
}
