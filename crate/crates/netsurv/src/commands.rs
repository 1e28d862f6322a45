//! Command-line parsing and the subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use netsurv_core::causal::{ModelKind, ModelSpec, Theta};
use netsurv_core::inference::{
    interpret_add, invert, marginal_interval, point_estimate, Axis, GridAxis, InversionPlan, PvalueGrid,
};
use netsurv_core::interference::{gen_poisson_neighbors, gen_preferential_attachment, InterferenceMatrix};
use netsurv_core::randomize::{run_test, test_fixed_censoring, Method, StatKind, TestPlan, TestResult};
use netsurv_core::rng::stream;
use netsurv_core::simulate::{ecdf, inclusion_frequencies, rejection_rates, run_study, SimRow, StudyOutput};
use serde::Serialize;
use serde_json::json;

use crate::config::{StudyConfig, StudyKind};
use crate::error::CliError;
use crate::exec::{RayonExecutor, THREADS_ENV};
use crate::io::{read_data, read_edges, write_edges, write_json, DataFile};
use crate::manifest::ManifestBuilder;
use crate::num::fmt17;

#[derive(Debug, Parser)]
#[command(name = "netsurv", version, about = "Randomization tests for survival outcomes under interference")]
pub struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test one hypothesis (delta0, tau0)
    Test(TestArgs),
    /// Test every point of a (delta0, tau0) grid
    Invert(InvertArgs),
    /// Run a simulation study from a JSON config
    Simulate(SimulateArgs),
    /// Generate an interference network
    GenNetwork(GenNetworkArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with columns id,y,d,z[,b]
    #[arg(long)]
    pub data: PathBuf,
    /// Edge list, one `i j` per line (unit j may affect unit i)
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, default_value = "add-G")]
    pub model: String,
    #[arg(long, default_value = "logr")]
    pub stat: String,
    #[arg(long, default_value = "ipz")]
    pub method: String,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub delta0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub tau0: f64,
    /// Enumerate every assignment (fixed method only)
    #[arg(long)]
    pub exact: bool,
    /// Result JSON; the manifest goes to <out stem>.manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: DataArgs,
    /// `start:stop:step` or a comma-separated list
    #[arg(long, allow_hyphen_values = true)]
    pub delta_grid: String,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_grid: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory for grid.csv, summary.json and manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the study kind named in the config
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Use 2000 replicates and 10000 draws
    #[arg(long)]
    pub full_scale: bool,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Type1,
    Power,
    Coverage,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Poisson,
    Pa,
}

#[derive(Debug, Args)]
pub struct GenNetworkArgs {
    #[arg(long, value_enum)]
    pub kind: NetworkKind,
    #[arg(long)]
    pub n: usize,
    /// Mean interference-set size (poisson)
    #[arg(long, default_value_t = 16.0)]
    pub mean: f64,
    /// Edges added per new unit (pa)
    #[arg(long, default_value_t = 8)]
    pub m_edges: usize,
    /// Add the reverse of every edge (poisson)
    #[arg(long)]
    pub symmetrize: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Degree summary JSON (default: <out stem>.summary.json)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Parse `args` and run. Help and version requests print and succeed.
pub fn run_from<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::usage(e.render().to_string().trim_end().to_string()));
        }
    };
    let line: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    run(cli, line)
}

pub fn run(cli: Cli, command_line: Vec<String>) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let exec = RayonExecutor::new(cli.threads).map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Test(a) => cmd_test(&a, &exec, command_line),
        Command::Invert(a) => cmd_invert(&a, &exec, command_line),
        Command::Simulate(a) => cmd_simulate(&a, &exec, command_line),
        Command::GenNetwork(a) => cmd_gen_network(&a, command_line),
    }
}

/// `result.json` -> `result.manifest.json`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

struct Loaded {
    file: DataFile,
    a: InterferenceMatrix,
    model: ModelSpec,
    stat: StatKind,
    method: Method,
}

fn load(c: &DataArgs) -> Result<Loaded, CliError> {
    if c.draws == 0 {
        return Err(CliError::usage("--draws must be at least 1"));
    }
    let model: ModelSpec = c.model.parse()?;
    let stat: StatKind = c.stat.parse()?;
    let method: Method = c.method.parse()?;
    let file = read_data(&c.data)?;
    let a = read_edges(&c.edges, Some(file.data.n()))?;
    Ok(Loaded { file, a, model, stat, method })
}

fn common_json(c: &DataArgs, l: &Loaded) -> serde_json::Value {
    json!({
        "data": c.data.display().to_string(),
        "edges": c.edges.display().to_string(),
        "model": l.model.to_string(),
        "stat": l.stat.as_str(),
        "method": l.method.as_str(),
        "draws": c.draws,
        "seed": c.seed,
    })
}

fn nonconvergence_warning(m: &mut ManifestBuilder, nonconverged: usize, total: usize) {
    if total > 0 && nonconverged * 100 > total {
        m.warn(format!("AFT fit did not converge on {nonconverged} of {total} draws"));
    }
}

#[derive(Serialize)]
struct TestOutput<'a> {
    #[serde(flatten)]
    result: &'a TestResult,
    model: String,
    n: usize,
    m: usize,
}

fn cmd_test(a: &TestArgs, exec: &RayonExecutor, line: Vec<String>) -> Result<(), CliError> {
    let l = load(&a.common)?;
    let theta0 = Theta::new(a.delta0, a.tau0);
    let plan = TestPlan { theta0, stat: l.stat, draws: a.common.draws, seed: a.common.seed };
    let mut settings = common_json(&a.common, &l);
    settings["delta0"] = json!(a.delta0);
    settings["tau0"] = json!(a.tau0);
    settings["exact"] = json!(a.exact);
    let mut manifest = ManifestBuilder::new(line, &settings.to_string(), a.common.seed, exec.threads());
    let data = &l.file.data;
    let result = if a.exact {
        if l.method != Method::FixedCensoring {
            return Err(CliError::usage("--exact requires --method fixed"));
        }
        test_fixed_censoring(data, &l.a, &l.model, &plan, true, exec)?
    } else {
        run_test(l.method, data, &l.a, &l.model, &plan, exec)?
    };
    nonconvergence_warning(&mut manifest, result.nonconverged_fits, result.draws_used + result.failed_draws);
    if result.failed_draws > 0 {
        manifest.warn(format!("{} draws produced no statistic and were dropped", result.failed_draws));
    }
    if !result.observed_converged {
        manifest.warn("AFT fit on the observed data did not converge");
    }
    write_json(&a.out, &TestOutput { result: &result, model: l.model.to_string(), n: data.n(), m: data.n_treated() })?;
    manifest.write(&sibling(&a.out, "manifest.json"), settings)?;
    println!("{result}");
    Ok(())
}

fn grid_csv(grid: &PvalueGrid) -> String {
    let mut s = String::from("delta0,tau0,pvalue\n");
    for c in &grid.cells {
        let p = c.pvalue.map(fmt17).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", fmt17(c.theta.delta), fmt17(c.theta.tau), p));
    }
    s
}

fn cmd_invert(a: &InvertArgs, exec: &RayonExecutor, line: Vec<String>) -> Result<(), CliError> {
    let l = load(&a.common)?;
    let delta_axis: GridAxis = a.delta_grid.parse()?;
    let tau_axis: GridAxis = a.tau_grid.parse()?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::usage("--alpha must lie in (0, 1)"));
    }
    let mut settings = common_json(&a.common, &l);
    settings["delta_grid"] = json!(delta_axis.values());
    settings["tau_grid"] = json!(tau_axis.values());
    settings["alpha"] = json!(a.alpha);
    let mut manifest = ManifestBuilder::new(line, &settings.to_string(), a.common.seed, exec.threads());
    let plan =
        InversionPlan { method: l.method, stat: l.stat, draws: a.common.draws, alpha: a.alpha, seed: a.common.seed };
    let grid = invert(&l.file.data, &l.a, &l.model, &delta_axis, &tau_axis, &plan, exec)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("grid.csv"), grid_csv(&grid))?;

    let estimate = point_estimate(&grid);
    let set = grid.confidence_set(a.alpha);
    let poor_fit = set.is_empty();
    if poor_fit {
        manifest.warn(format!("no grid point has p >= {}: the assumed model fits poorly", a.alpha));
    }
    if grid.failed_points() > 0 {
        manifest.warn(format!("{} grid points failed", grid.failed_points()));
    }
    let total = grid.cells.len() * a.common.draws;
    nonconvergence_warning(&mut manifest, grid.nonconverged_fits(), total);
    let failures: Vec<_> = grid
        .cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| json!({"delta0": c.theta.delta, "tau0": c.theta.tau, "error": e})))
        .collect();
    let interpretation = match (l.model.kind, estimate) {
        (ModelKind::Additive, Some(e)) => Some(interpret_add(e.theta)),
        _ => None,
    };
    let summary = json!({
        "alpha": a.alpha,
        "model": l.model.to_string(),
        "stat": l.stat.as_str(),
        "method": l.method.as_str(),
        "draws": a.common.draws,
        "seed": a.common.seed,
        "grid_points": grid.cells.len(),
        "confidence_set_size": set.len(),
        "empty_set": poor_fit,
        "poor_fit": poor_fit,
        "point_estimate": estimate,
        "delta_marginal": marginal_interval(&grid, Axis::Delta, a.alpha),
        "tau_marginal": marginal_interval(&grid, Axis::Tau, a.alpha),
        "interpretation": interpretation,
        "failed_points": failures,
        "nonconverged_fits": grid.nonconverged_fits(),
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    manifest.write(&a.out.join("manifest.json"), settings)?;
    match estimate {
        Some(e) => println!(
            "point estimate ({}, {}) with p = {}; {} of {} points in the {}% set",
            e.theta.delta,
            e.theta.tau,
            e.max_pvalue,
            set.len(),
            grid.cells.len(),
            100.0 * (1.0 - a.alpha)
        ),
        None => println!("no grid point produced a p-value"),
    }
    Ok(())
}

fn pvalues_csv(rows: &[SimRow]) -> String {
    let mut s = String::from("replicate,method,stat,delta0,tau0,pvalue\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.replicate,
            r.method,
            r.stat,
            fmt17(r.theta0.delta),
            fmt17(r.theta0.tau),
            fmt17(r.pvalue)
        ));
    }
    s
}

fn ecdf_csv(rows: &[SimRow]) -> String {
    let mut keys: Vec<(Method, StatKind, Theta)> = Vec::new();
    for r in rows {
        let k = (r.method, r.stat, r.theta0);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut s = String::from("method,stat,delta0,tau0,rank,pvalue,ecdf\n");
    for (method, stat, theta) in keys {
        let p: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.stat == stat && r.theta0 == theta)
            .map(|r| r.pvalue)
            .collect();
        for (k, (v, f)) in ecdf(&p).into_iter().enumerate() {
            s.push_str(&format!(
                "{method},{stat},{},{},{},{},{}\n",
                fmt17(theta.delta),
                fmt17(theta.tau),
                k + 1,
                fmt17(v),
                fmt17(f)
            ));
        }
    }
    s
}

fn failures_csv(out: &StudyOutput) -> String {
    let mut s = String::from("replicate,method,stat,delta0,tau0,error\n");
    for f in &out.failures {
        let opt = |v: Option<String>| v.unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            f.replicate,
            opt(f.method.map(|m| m.to_string())),
            opt(f.stat.map(|m| m.to_string())),
            opt(f.theta0.map(|t| fmt17(t.delta))),
            opt(f.theta0.map(|t| fmt17(t.tau))),
            f.error.replace('"', "'")
        ));
    }
    s
}

/// Write the tables of a finished study into `dir`; returns the file names.
pub fn write_study_tables(
    dir: &Path,
    kind: StudyKind,
    out: &StudyOutput,
    alphas: &[f64],
    alpha: f64,
) -> Result<Vec<&'static str>, CliError> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["pvalues.csv", "ecdf.csv", "failures.csv"];
    fs::write(dir.join("pvalues.csv"), pvalues_csv(&out.rows))?;
    fs::write(dir.join("ecdf.csv"), ecdf_csv(&out.rows))?;
    fs::write(dir.join("failures.csv"), failures_csv(out))?;
    let mut levels = alphas.to_vec();
    if !levels.contains(&alpha) {
        levels.push(alpha);
    }
    let mut s = String::from("method,stat,delta0,tau0,alpha,rejection_rate,replicates\n");
    for r in rejection_rates(&out.rows, &levels) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.stat,
            fmt17(r.theta0.delta),
            fmt17(r.theta0.tau),
            fmt17(r.alpha),
            fmt17(r.rate),
            r.replicates
        ));
    }
    fs::write(dir.join("rejection.csv"), s)?;
    files.push("rejection.csv");
    if kind == StudyKind::Coverage {
        let mut s = String::from("method,stat,delta0,tau0,alpha,inclusion,replicates\n");
        for i in inclusion_frequencies(&out.rows, alpha) {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i.method,
                i.stat,
                fmt17(i.theta0.delta),
                fmt17(i.theta0.tau),
                fmt17(alpha),
                fmt17(i.frequency),
                i.replicates
            ));
        }
        fs::write(dir.join("coverage.csv"), s)?;
        files.push("coverage.csv");
    }
    Ok(files)
}

fn cmd_simulate(a: &SimulateArgs, exec: &RayonExecutor, line: Vec<String>) -> Result<(), CliError> {
    let mut config = StudyConfig::read(&a.config)?;
    if let Some(k) = a.kind {
        config.kind = match k {
            KindArg::Type1 => StudyKind::Type1,
            KindArg::Power => StudyKind::Power,
            KindArg::Coverage => StudyKind::Coverage,
        };
    }
    config.full_scale |= a.full_scale;
    let mut sim = config.to_sim(a.config.parent())?;
    if config.kind == StudyKind::Type1 {
        sim.theta0 = vec![sim.scenario.truth()];
    }
    let mut manifest = ManifestBuilder::new(line, &config.canonical_json(), config.master_seed, exec.threads());
    let out = run_study(&sim, exec)?;
    let files = write_study_tables(&a.out, config.kind, &out, &sim.alpha_levels, config.alpha)?;

    let tests = out.rows.len() + out.failures.len();
    if !out.failures.is_empty() {
        manifest.warn(format!("{} of {} tests failed; see failures.csv", out.failures.len(), tests));
    }
    nonconvergence_warning(&mut manifest, out.nonconverged_fits, out.rows.len() * sim.draws);
    if let Some(r) = out.ridge_added.filter(|r| *r > 0.0) {
        manifest.warn(format!("correlation matrix was not positive definite; ridge {r} added"));
    }
    let details = json!({
        "kind": config.kind,
        "config": config,
        "replicates": sim.replicates,
        "draws": sim.draws,
        "rows": out.rows.len(),
        "failures": out.failures.len(),
        "p1": out.p1,
        "p0": out.p0,
        "network": out.network,
        "ridge_added": out.ridge_added,
        "nonconverged_fits": out.nonconverged_fits,
        "files": files,
    });
    manifest.write(&a.out.join("manifest.json"), details)?;
    println!("{} rows, {} failures, p1 = {:.3}, p0 = {:.3}", out.rows.len(), out.failures.len(), out.p1, out.p0);
    Ok(())
}

fn cmd_gen_network(a: &GenNetworkArgs, line: Vec<String>) -> Result<(), CliError> {
    let mut rng = stream(a.seed, &[]);
    let net = match a.kind {
        NetworkKind::Poisson => {
            let g = gen_poisson_neighbors(a.n, a.mean, &mut rng)?;
            if a.symmetrize {
                g.symmetrized()
            } else {
                g
            }
        }
        NetworkKind::Pa => gen_preferential_attachment(a.n, a.m_edges, &mut rng)?,
    };
    let settings = json!({
        "kind": a.kind,
        "n": a.n,
        "mean": a.mean,
        "m_edges": a.m_edges,
        "symmetrize": a.symmetrize,
        "seed": a.seed,
    });
    let manifest = ManifestBuilder::new(line, &settings.to_string(), a.seed, 1);
    write_edges(&a.out, &net)?;
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "summary.json"));
    let summary = json!({
        "n": net.n(),
        "edges": net.nnz(),
        "symmetric": net.is_symmetric(),
        "degree": net.degree_summary(),
        "manifest": manifest.finish(settings),
    });
    write_json(&summary_path, &summary)?;
    let d = net.degree_summary();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{} units, {} edges, degree mean {:.2} (max {})", net.n(), net.nnz(), d.mean, d.max)?;
    Ok(())
}
