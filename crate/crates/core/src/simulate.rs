//! Synthetic trials and Monte-Carlo study drivers.
//!
//! A study fixes a network and a set of uniformity-trial failure times once,
//! then repeatedly draws an assignment, generates censored outcomes and runs
//! the requested tests. Every random quantity comes from a stream keyed by the
//! master seed and its role, so a study is reproducible under any executor.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::causal::{ModelSpec, Theta};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::interference::{
    gen_poisson_neighbors, gen_preferential_attachment, ratio, DegreeSummary, InterferenceMatrix,
};
use crate::randomize::{run_test, sample_assignment, Method, ObservedData, StatKind, TestPlan};
use crate::rng::{derive_seed, stream};

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Log-normal uniformity-trial failure times, `log y ~ N(mu, sigma^2)`.
pub fn gen_uniformity_iid<R: Rng + ?Sized>(n: usize, mu: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(Error::invalid("need finite mu and sigma >= 0"));
    }
    Ok((0..n).map(|_| libm::exp(mu + sigma * std_normal(rng))).collect())
}

/// Correlation matrix built from an interference matrix, with its Cholesky
/// factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    n: usize,
    rho: Vec<f64>,
    factor: Vec<f64>,
    ridge_added: f64,
}

impl CorrelationSpec {
    /// Factorise a symmetric matrix given row-major. If it is not positive
    /// definite, the smallest ridge `1e-8 * 2^k` that makes `rho + r I`
    /// factorisable is added and the result rescaled to unit diagonal.
    pub fn from_matrix(n: usize, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != n * n {
            return Err(Error::LengthMismatch { what: "correlation matrix", expected: n * n, found: rho.len() });
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("correlation entry"));
        }
        for i in 0..n {
            for j in 0..i {
                if rho[i * n + j] != rho[j * n + i] {
                    return Err(Error::invalid("correlation matrix is not symmetric"));
                }
            }
        }
        let mut ridge = 0.0;
        for k in 0..=80 {
            let scale = 1.0 / (1.0 + ridge);
            let mut m = DMatrix::from_row_slice(n, n, &rho);
            if ridge > 0.0 {
                for i in 0..n {
                    m[(i, i)] += ridge;
                }
                m *= scale;
                for i in 0..n {
                    m[(i, i)] = 1.0;
                }
            }
            if let Some(chol) = m.clone().cholesky() {
                let l = chol.l();
                let mut factor = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        factor[i * n + j] = l[(i, j)];
                    }
                }
                let rho = (0..n * n).map(|x| m[(x / n, x % n)]).collect();
                return Ok(Self { n, rho, factor, ridge_added: ridge });
            }
            ridge = 1e-8 * libm::pow(2.0, k as f64);
        }
        Err(Error::NotPositiveDefinite)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.n + j]
    }

    /// Lower-triangular `L` with `L L^T = rho`.
    pub fn factor(&self, i: usize, j: usize) -> f64 {
        self.factor[i * self.n + j]
    }

    pub fn ridge_added(&self) -> f64 {
        self.ridge_added
    }

    /// `L xi` for a fresh standard normal vector `xi`.
    pub fn correlated_normals<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n;
        let xi: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
        (0..n)
            .map(|i| {
                let row = &self.factor[i * n..i * n + i + 1];
                row.iter().zip(&xi).map(|(l, x)| l * x).sum()
            })
            .collect()
    }
}

/// `rho_ij = U_ij / A_i + U_ji / A_j` over edges with `U ~ Uniform(0.9, 1)`,
/// unit diagonal, ridge-repaired when needed.
pub fn gen_correlation<R: Rng + ?Sized>(a: &InterferenceMatrix, rng: &mut R) -> Result<CorrelationSpec> {
    let n = a.n();
    let mut rho = vec![0.0; n * n];
    for i in 0..n {
        let row = a.row(i);
        for &j in row {
            let u: f64 = rng.random_range(0.9..1.0);
            let v = u / row.len() as f64;
            rho[i * n + j as usize] += v;
            rho[j as usize * n + i] += v;
        }
        rho[i * n + i] = 1.0;
    }
    CorrelationSpec::from_matrix(n, rho)
}

/// `exp(mu_i + scale * (L xi)_i)`.
pub fn gen_uniformity_correlated<R: Rng + ?Sized>(
    mu: &[f64],
    scale: f64,
    rho: &CorrelationSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mu.len() != rho.n() {
        return Err(Error::LengthMismatch { what: "mean vector", expected: rho.n(), found: mu.len() });
    }
    let e = rho.correlated_normals(rng);
    Ok(mu.iter().zip(&e).map(|(m, x)| libm::exp(m + scale * x)).collect())
}

/// Parameters of the data-generating process.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub mu: f64,
    pub sigma: f64,
    /// Standard deviation of log dropout times.
    pub omega: f64,
    pub delta_true: f64,
    pub tau_true: f64,
    /// Control-arm censoring time as a fraction of the administrative time.
    pub k: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self { mu: 4.5, sigma: 0.25, omega: libm::sqrt(1.0 - 0.25 * 0.25), delta_true: 0.7, tau_true: 2.8, k: 1.0 }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let finite =
            [self.mu, self.sigma, self.omega, self.delta_true, self.tau_true, self.k].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("scenario parameter"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(self.omega > 0.0) {
            return Err(Error::invalid("omega must be positive"));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(Error::invalid("k must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn truth(&self) -> Theta {
        Theta::new(self.delta_true, self.tau_true)
    }

    /// `exp(mu + 2 sigma + tau)`.
    pub fn administrative_time(&self) -> f64 {
        libm::exp(self.mu + 2.0 * self.sigma + self.tau_true)
    }
}

/// One synthetic trial with its latent quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: ObservedData,
    pub failure_times: Vec<f64>,
    pub censoring_times: Vec<f64>,
    pub exposure: Vec<f64>,
}

/// Failure times `y0 exp(delta z + tau G)`; treated units are censored at the
/// earlier of dropout and the administrative time, control units at `k` times
/// the administrative time.
pub fn gen_observed<R: Rng + ?Sized>(
    y0: &[f64],
    a: &InterferenceMatrix,
    z: &[bool],
    scenario: &Scenario,
    correlated_dropout: Option<&CorrelationSpec>,
    rng: &mut R,
) -> Result<Generated> {
    let n = y0.len();
    for (what, len) in [("interference matrix", a.n()), ("treatment vector", z.len())] {
        if len != n {
            return Err(Error::LengthMismatch { what, expected: n, found: len });
        }
    }
    scenario.validate()?;
    let counts = a.treated_counts(z);
    let exposure: Vec<f64> = (0..n).map(|i| ratio(counts[i], a.row_sum(i))).collect();
    let failure_times: Vec<f64> = (0..n)
        .map(|i| y0[i] * libm::exp(scenario.delta_true * z[i] as u8 as f64 + scenario.tau_true * exposure[i]))
        .collect();
    let noise = match correlated_dropout {
        Some(rho) => {
            if rho.n() != n {
                return Err(Error::LengthMismatch { what: "correlation matrix", expected: n, found: rho.n() });
            }
            rho.correlated_normals(rng)
        }
        None => (0..n).map(|_| std_normal(rng)).collect(),
    };
    let admin = scenario.administrative_time();
    let censoring_times: Vec<f64> = (0..n)
        .map(|i| {
            if z[i] {
                let dropout = libm::exp(scenario.mu + scenario.tau_true * exposure[i] + scenario.omega * noise[i]);
                admin.min(dropout)
            } else {
                scenario.k * admin
            }
        })
        .collect();
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let failed = failure_times[i] <= censoring_times[i];
        times.push(if failed { failure_times[i] } else { censoring_times[i] });
        events.push(failed);
    }
    let data = ObservedData::new(times, events, z.to_vec(), None)?;
    Ok(Generated { data, failure_times, censoring_times, exposure })
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSpec {
    Poisson { mean: f64 },
    PreferentialAttachment { m_edges: usize },
    Fixed(InterferenceMatrix),
}

impl NetworkSpec {
    pub fn build<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<InterferenceMatrix> {
        match self {
            NetworkSpec::Poisson { mean } => gen_poisson_neighbors(n, *mean, rng),
            NetworkSpec::PreferentialAttachment { m_edges } => gen_preferential_attachment(n, *m_edges, rng),
            NetworkSpec::Fixed(a) => {
                if a.n() != n {
                    return Err(Error::LengthMismatch { what: "network size", expected: n, found: a.n() });
                }
                Ok(a.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub network: NetworkSpec,
    pub scenario: Scenario,
    /// Correlated uniformity and dropout times.
    pub correlated: bool,
    pub replicates: usize,
    pub draws: usize,
    pub stats: Vec<StatKind>,
    pub methods: Vec<Method>,
    /// Hypotheses to test; empty means the generating values.
    pub theta0: Vec<Theta>,
    /// Model assumed by the tests.
    pub model: ModelSpec,
    pub alpha_levels: Vec<f64>,
    pub master_seed: u64,
    /// Draw a new network (and uniformity trial) for every replicate.
    pub regenerate_network: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 128,
            m: 96,
            network: NetworkSpec::Poisson { mean: 16.0 },
            scenario: Scenario::default(),
            correlated: false,
            replicates: 500,
            draws: 1000,
            stats: vec![StatKind::LogRank, StatKind::Lraft],
            methods: vec![Method::FixedCensoring, Method::Ipz],
            theta0: Vec::new(),
            model: ModelSpec::ADD_G,
            alpha_levels: vec![0.01, 0.05, 0.1],
            master_seed: 1,
            regenerate_network: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.m && self.m < self.n) {
            return Err(Error::invalid("need 0 < m < n"));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::invalid("n exceeds the supported range"));
        }
        self.scenario.validate()?;
        if self.replicates == 0 || self.draws == 0 {
            return Err(Error::invalid("replicates and draws must be positive"));
        }
        if self.stats.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("at least one statistic and one method are required"));
        }
        if self.alpha_levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("alpha levels must lie in (0, 1)"));
        }
        if self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("theta0"));
        }
        Ok(())
    }

    fn hypotheses(&self) -> Vec<Theta> {
        if self.theta0.is_empty() {
            vec![self.scenario.truth()]
        } else {
            self.theta0.clone()
        }
    }
}

/// One p-value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimRow {
    pub replicate: usize,
    pub method: Method,
    pub stat: StatKind,
    pub theta0: Theta,
    pub pvalue: f64,
    pub nonconverged_fits: usize,
}

/// A test that could not be carried out.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimFailure {
    pub replicate: usize,
    pub method: Option<Method>,
    pub stat: Option<StatKind>,
    pub theta0: Option<Theta>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub rows: Vec<SimRow>,
    pub failures: Vec<SimFailure>,
    /// Mean observed failure fraction among treated units.
    pub p1: f64,
    /// Mean observed failure fraction among control units.
    pub p0: f64,
    pub replicates: usize,
    pub network: DegreeSummary,
    pub ridge_added: Option<f64>,
    pub nonconverged_fits: usize,
}

struct Setup {
    a: InterferenceMatrix,
    y0: Vec<f64>,
    rho: Option<CorrelationSpec>,
}

fn setup(config: &SimConfig, path: &[u64]) -> Result<Setup> {
    let mut rng = stream(config.master_seed, path);
    let a = config.network.build(config.n, &mut rng)?;
    let s = &config.scenario;
    let (y0, rho) = if config.correlated {
        let rho = gen_correlation(&a, &mut rng)?;
        let y0 = gen_uniformity_correlated(&vec![s.mu; config.n], s.sigma, &rho, &mut rng)?;
        (y0, Some(rho))
    } else {
        (gen_uniformity_iid(config.n, s.mu, s.sigma, &mut rng)?, None)
    };
    Ok(Setup { a, y0, rho })
}

/// Outcome of one replicate.
struct Replicate {
    rows: Vec<SimRow>,
    failures: Vec<SimFailure>,
    fractions: Option<(f64, f64)>,
}

fn run_replicate<E: Executor>(
    config: &SimConfig,
    shared: Option<&Setup>,
    thetas: &[Theta],
    r: usize,
    exec: &E,
) -> Replicate {
    let fail = |e: Error| Replicate {
        rows: Vec::new(),
        failures: vec![SimFailure { replicate: r, method: None, stat: None, theta0: None, error: e.to_string() }],
        fractions: None,
    };
    let own;
    let setup = match shared {
        Some(s) => s,
        None => match setup(config, &[0, r as u64]) {
            Ok(s) => {
                own = s;
                &own
            }
            Err(e) => return fail(e),
        },
    };
    let mut rng = stream(config.master_seed, &[2, r as u64]);
    let generated = sample_assignment(config.n, config.m, &mut rng)
        .and_then(|z| gen_observed(&setup.y0, &setup.a, &z, &config.scenario, setup.rho.as_ref(), &mut rng));
    let g = match generated {
        Ok(g) => g,
        Err(e) => return fail(e),
    };
    let data = &g.data;
    let mut out = Replicate {
        rows: Vec::new(),
        failures: Vec::new(),
        fractions: Some((data.failure_fraction(true), data.failure_fraction(false))),
    };
    let mut index = 0u64;
    for &theta in thetas {
        for &method in &config.methods {
            for &stat in &config.stats {
                let plan = TestPlan {
                    theta0: theta,
                    stat,
                    draws: config.draws,
                    seed: derive_seed(config.master_seed, &[3, r as u64, index]),
                };
                index += 1;
                match run_test(method, data, &setup.a, &config.model, &plan, exec) {
                    Ok(t) => out.rows.push(SimRow {
                        replicate: r,
                        method,
                        stat,
                        theta0: theta,
                        pvalue: t.pvalue,
                        nonconverged_fits: t.nonconverged_fits,
                    }),
                    Err(e) => out.failures.push(SimFailure {
                        replicate: r,
                        method: Some(method),
                        stat: Some(stat),
                        theta0: Some(theta),
                        error: e.to_string(),
                    }),
                }
            }
        }
    }
    out
}

/// Generate `config.replicates` trials and test each hypothesis with every
/// requested method and statistic. Rows are ordered by replicate, hypothesis,
/// method and statistic.
pub fn run_study<E: Executor>(config: &SimConfig, exec: &E) -> Result<StudyOutput> {
    config.validate()?;
    let thetas = config.hypotheses();
    let shared = if config.regenerate_network { None } else { Some(setup(config, &[0])?) };
    let reps = exec.map(config.replicates, |r| run_replicate(config, shared.as_ref(), &thetas, r, exec));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let (mut p1, mut p0, mut generated) = (0.0, 0.0, 0usize);
    for rep in reps {
        if let Some((f1, f0)) = rep.fractions {
            p1 += f1;
            p0 += f0;
            generated += 1;
        }
        rows.extend(rep.rows);
        failures.extend(rep.failures);
    }
    let (network, ridge_added) = match &shared {
        Some(s) => (s.a.degree_summary(), s.rho.as_ref().map(|r| r.ridge_added())),
        None => {
            let s = setup(config, &[0, 0])?;
            (s.a.degree_summary(), s.rho.as_ref().map(|r| r.ridge_added()))
        }
    };
    let denom = generated.max(1) as f64;
    Ok(StudyOutput {
        nonconverged_fits: rows.iter().map(|r| r.nonconverged_fits).sum(),
        rows,
        failures,
        p1: p1 / denom,
        p0: p0 / denom,
        replicates: config.replicates,
        network,
        ridge_added,
    })
}

/// Tests at the generating values.
pub fn run_type1<E: Executor>(config: &SimConfig, exec: &E) -> Result<StudyOutput> {
    let mut c = config.clone();
    c.theta0 = vec![c.scenario.truth()];
    run_study(&c, exec)
}

/// Tests at every hypothesis in `config.theta0`.
pub fn run_power<E: Executor>(config: &SimConfig, exec: &E) -> Result<StudyOutput> {
    if config.theta0.is_empty() {
        return Err(Error::invalid("power study needs at least one theta0"));
    }
    run_study(config, exec)
}

/// Rejection rate of one `(method, stat, theta0)` at one level.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RejectionRate {
    pub method: Method,
    pub stat: StatKind,
    pub theta0: Theta,
    pub alpha: f64,
    pub rate: f64,
    pub replicates: usize,
}

fn groups(rows: &[SimRow]) -> Vec<(Method, StatKind, Theta, Vec<f64>)> {
    let mut out: Vec<(Method, StatKind, Theta, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, s, t, _)| *m == r.method && *s == r.stat && *t == r.theta0) {
            Some(g) => g.3.push(r.pvalue),
            None => out.push((r.method, r.stat, r.theta0, vec![r.pvalue])),
        }
    }
    out
}

/// `P(p <= alpha)` per group and level.
pub fn rejection_rates(rows: &[SimRow], alphas: &[f64]) -> Vec<RejectionRate> {
    let mut out = Vec::new();
    for (method, stat, theta0, p) in groups(rows) {
        for &alpha in alphas {
            let k = p.iter().filter(|&&v| v <= alpha).count();
            out.push(RejectionRate {
                method,
                stat,
                theta0,
                alpha,
                rate: k as f64 / p.len() as f64,
                replicates: p.len(),
            });
        }
    }
    out
}

/// Fraction of replicates whose `(1 - alpha)` set contains a grid point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Inclusion {
    pub method: Method,
    pub stat: StatKind,
    pub theta0: Theta,
    pub frequency: f64,
    pub replicates: usize,
}

pub fn inclusion_frequencies(rows: &[SimRow], alpha: f64) -> Vec<Inclusion> {
    groups(rows)
        .into_iter()
        .map(|(method, stat, theta0, p)| Inclusion {
            method,
            stat,
            theta0,
            frequency: p.iter().filter(|&&v| v >= alpha).count() as f64 / p.len() as f64,
            replicates: p.len(),
        })
        .collect()
}

/// Coverage study: every grid point is tested on every replicate.
pub fn run_coverage<E: Executor>(config: &SimConfig, alpha: f64, exec: &E) -> Result<(StudyOutput, Vec<Inclusion>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let out = run_power(config, exec)?;
    let inc = inclusion_frequencies(&out.rows, alpha);
    Ok((out, inc))
}

/// Sorted p-values with plotting positions `rank / count`.
pub fn ecdf(pvalues: &[f64]) -> Vec<(f64, f64)> {
    let mut p = pvalues.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.into_iter().enumerate().map(|(k, v)| (v, (k + 1) as f64 / n)).collect()
}

/// `sup_x |F_n(x) - x|` for p-values on `[0, 1]`.
pub fn uniform_sup_distance(pvalues: &[f64]) -> f64 {
    let mut p = pvalues.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let mut sup: f64 = 0.0;
    for (k, &v) in p.iter().enumerate() {
        sup = sup.max((k as f64 + 1.0) / n - v).max(v - k as f64 / n);
    }
    sup
}
