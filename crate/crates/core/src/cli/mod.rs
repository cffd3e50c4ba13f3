//! Command-line front end: `simulate`, `pde`, `averaging`, `gating`,
//! `xval` and `validate-config`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 numerical failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

pub use crate::stream::{derive_stream, Purpose, StreamId};

use crate::experiments::{
    averaging_sweep, cross_validate, gating_experiment, ExperimentError, GatingSettings, SweepSettings,
    XvalSettings,
};
use crate::functional::{
    annealed_estimate_times, averaged_estimate_times, quenched_estimate_times, EstimatorResult, FunctionalError,
    Mode, Seeding,
};
use crate::geometry::Domain;
use crate::pde::{solve_constant_robin, solve_coupled_robin, solve_quenched_robin, PdeError, PdeSolution};
use crate::rbm::{simulate_path, DiffusionPath, TimeGrid};
use config::{parse_config, ConfigError, SimConfig, SEED_ENV};
use output::{emit, point_cell, render_csv, render_json, Cell, Header, Table};

#[derive(Debug, Parser)]
#[command(name = "elastic-switch", version, about = "Heat equation with Markov-switched Robin boundary conditions")]
struct Cli {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file and the environment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for path simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write the first N diffusion paths next to the output.
    #[arg(long = "dump-paths", value_name = "N", global = true)]
    dump_paths: Option<u64>,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
    /// Record wall-clock time in JSON results (breaks byte-identical reruns).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Annealed,
    Quenched,
    Averaged,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Annealed => Mode::Annealed,
            ModeArg::Quenched => Mode::Quenched,
            ModeArg::Averaged => Mode::Averaged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PdeProblem {
    Coupled,
    Quenched,
    Constant,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo estimates on the configured grid.
    Simulate {
        #[arg(value_enum)]
        mode: ModeArg,
    },
    /// Finite-difference solution on [0, 1].
    Pde {
        #[arg(value_enum)]
        problem: PdeProblem,
    },
    /// Fast-switching averaging sweep over the eps ladder.
    Averaging,
    /// Gated-receptor experiment: switched Monte Carlo against the effective PDE.
    Gating {
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        lon: Option<f64>,
        #[arg(long)]
        loff: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Monte Carlo against finite differences with per-point z-scores.
    Xval {
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Parse and validate the configuration and print it resolved.
    ValidateConfig,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error:\n{e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<FunctionalError> for CliError {
    fn from(e: FunctionalError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(m) => CliError::Config(ConfigError::single(m)),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<crate::chain::ChainError> for CliError {
    fn from(e: crate::chain::ChainError) -> Self {
        CliError::Config(ConfigError::single(e.to_string()))
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match cli.threads {
        Some(0) => Err(ConfigError::single("--threads must be positive").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            pool.install(|| dispatch(cli, cfg))
        }
        None => dispatch(cli, cfg),
    }
}

fn load_config(cli: &Cli) -> Result<SimConfig, CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.sim.seed = s;
    } else if let Ok(v) = std::env::var(SEED_ENV) {
        let s = v
            .trim()
            .parse::<u64>()
            .map_err(|_| ConfigError::single(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        log::info!("seed {s} taken from {SEED_ENV} (config had {})", cfg.sim.seed);
        cfg.sim.seed = s;
    }
    Ok(cfg)
}

fn format_of(cli: &Cli) -> Format {
    cli.format.unwrap_or_else(|| match cli.out.as_ref().and_then(|p| p.extension()) {
        Some(e) if e == "json" => Format::Json,
        _ => Format::Csv,
    })
}

fn write(cli: &Cli, text: &str) -> Result<(), CliError> {
    emit(cli.out.as_deref(), text).map_err(|e| CliError::Io(e.to_string()))
}

fn header<'a>(command: &str, cfg: &'a SimConfig, summary: Option<serde_json::Value>) -> Header<'a> {
    Header { command: command.to_string(), seed: cfg.sim.seed, config: cfg, summary }
}

fn require_unit_interval(cfg: &SimConfig, what: &str) -> Result<(), CliError> {
    if cfg.domain != Domain::unit_interval() {
        return Err(ConfigError::single(format!("{what} needs the interval domain [0, 1]")).into());
    }
    Ok(())
}

fn require_abar(cfg: &SimConfig) -> Result<f64, CliError> {
    cfg.abar()
        .ok_or_else(|| ConfigError::single("averaged.abar is required when the chain is reducible").into())
}

fn dispatch(cli: &Cli, mut cfg: SimConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::ValidateConfig => {
            let mut text = output::to_json(&cfg);
            text.push('\n');
            write(cli, &text)
        }
        Command::Simulate { mode } => simulate(cli, &cfg, (*mode).into()),
        Command::Pde { problem } => pde(cli, &cfg, *problem),
        Command::Averaging => averaging(cli, &cfg),
        Command::Gating { kappa, lon, loff, eps } => {
            let g = &mut cfg.gating;
            g.kappa = kappa.unwrap_or(g.kappa);
            g.lambda_on = lon.unwrap_or(g.lambda_on);
            g.lambda_off = loff.unwrap_or(g.lambda_off);
            g.eps = eps.unwrap_or(g.eps);
            gating(cli, &cfg)
        }
        Command::Xval { mode } => xval(cli, &cfg, (*mode).into()),
    }
}

/// One estimator result as written to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub mode: Mode,
    pub t: f64,
    pub x: Vec<f64>,
    pub state: Option<String>,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: crate::rbm::Scheme,
    pub elapsed_s: Option<f64>,
}

impl ResultRecord {
    fn new(r: &EstimatorResult, elapsed_s: Option<f64>) -> Self {
        Self {
            mode: r.mode,
            t: r.t,
            x: r.x.clone(),
            state: r.state.clone(),
            mean: r.mean,
            stderr: r.stderr,
            n_paths: r.n_paths,
            dt: r.dt,
            seed: r.seed,
            scheme: r.scheme,
            elapsed_s,
        }
    }
}

fn simulate(cli: &Cli, cfg: &SimConfig, mode: Mode) -> Result<(), CliError> {
    let domain = cfg.domain.clone();
    let sim = cfg.sim_params();
    let (n, seed) = (cfg.sim.paths, cfg.sim.seed);
    let points = cfg.points();
    let mut records: Vec<ResultRecord> = Vec::new();
    let mut start = 0.0;
    let timed = |f: &mut dyn FnMut() -> Result<Vec<EstimatorResult>, FunctionalError>| {
        let clock = Instant::now();
        let r = f()?;
        let secs = cli.timing.then(|| clock.elapsed().as_secs_f64());
        Ok::<_, CliError>(r.iter().map(|e| ResultRecord::new(e, secs)).collect::<Vec<_>>())
    };
    match mode {
        Mode::Annealed => {
            let g = cfg.generator()?;
            let phi = cfg.switched_payoff();
            let m = g.len();
            for (j, p) in points.iter().enumerate() {
                for k in 0..m {
                    let seeding = Seeding::new(seed).with_slot((j * m + k) as u64);
                    records.extend(timed(&mut || {
                        annealed_estimate_times(&domain, &phi, p, k, &cfg.grid.t, &g, sim, n, seeding)
                    })?);
                }
            }
        }
        Mode::Quenched => {
            let g = cfg.generator()?;
            let alpha = cfg.quenched_path(&g)?;
            start = cfg.quenched.s;
            let times: Vec<f64> = cfg.grid.t.iter().copied().filter(|&t| t > start).collect();
            for (j, p) in points.iter().enumerate() {
                let seeding = Seeding::new(seed).with_slot(j as u64);
                records.extend(timed(&mut || {
                    quenched_estimate_times(&domain, &cfg.payoff, p, start, &times, &alpha, sim, n, seeding)
                })?);
            }
        }
        Mode::Averaged => {
            let abar = require_abar(cfg)?;
            for (j, p) in points.iter().enumerate() {
                let seeding = Seeding::new(seed).with_slot(j as u64);
                records.extend(timed(&mut || {
                    averaged_estimate_times(&domain, &cfg.payoff, p, &cfg.grid.t, abar, sim, n, seeding)
                })?);
            }
        }
    }
    records.sort_by(|a, b| a.t.total_cmp(&b.t));
    let command = format!("simulate {}", mode.as_str());
    let h = header(&command, cfg, None);
    let text = match format_of(cli) {
        Format::Json => render_json(&h, "results", &records),
        Format::Csv => {
            let mut t = Table::new(&["t", "x", "state", "mean", "stderr"]);
            for r in &records {
                t.push(vec![r.t.into(), point_cell(&r.x), r.state.as_deref().into(), r.mean.into(), r.stderr.into()]);
            }
            render_csv(&h, &t)
        }
    };
    write(cli, &text)?;
    if let Some(k) = cli.dump_paths {
        dump_paths(cli, cfg, &points[0], start, k)?;
    }
    Ok(())
}

fn dump_path_file(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".paths.csv");
            PathBuf::from(s)
        }
        None => PathBuf::from("paths.csv"),
    }
}

/// Writes diffusion paths `0..k` from the first grid point on the uniform
/// grid, with the same streams the estimators use for that point.
fn dump_paths(cli: &Cli, cfg: &SimConfig, x0: &[f64], start: f64, k: u64) -> Result<(), CliError> {
    let grid = TimeGrid::new(start, cfg.horizon(), cfg.sim.dt, &cfg.grid.t)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let seeding = Seeding::new(cfg.sim.seed);
    let mut path = DiffusionPath::empty(cfg.domain.dimension());
    let mut t = Table::new(&["path", "t", "x", "local_time"]);
    for i in 0..k {
        let mut stream = seeding.stream(Purpose::Diffusion, i);
        simulate_path(&cfg.domain, cfg.sim.scheme, x0, &grid, &mut stream, &mut path)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        for m in 0..path.len() {
            t.push(vec![i.into(), path.times[m].into(), point_cell(path.position(m)), path.local[m].into()]);
        }
    }
    let h = header("dump-paths", cfg, None);
    let file = dump_path_file(cli.out.as_deref());
    emit(Some(&file), &render_csv(&h, &t)).map_err(|e| CliError::Io(e.to_string()))
}

fn solution_json(s: &PdeSolution) -> serde_json::Value {
    json!({
        "method": s.method,
        "dx": s.dx,
        "dt": s.dt,
        "times": s.times,
        "nodes": s.nodes,
        "states": s.states,
        "values": s.values,
        "max_principle": s.satisfies_max_principle(),
    })
}

fn pde(cli: &Cli, cfg: &SimConfig, problem: PdeProblem) -> Result<(), CliError> {
    require_unit_interval(cfg, "the pde subcommand")?;
    let params = cfg.pde_params();
    let horizon = cfg.horizon();
    let (name, sol) = match problem {
        PdeProblem::Coupled => {
            let g = cfg.generator()?;
            ("pde coupled", solve_coupled_robin(&params, &g, &cfg.switched_payoff(), horizon, &cfg.grid.t)?)
        }
        PdeProblem::Quenched => {
            let g = cfg.generator()?;
            let alpha = cfg.quenched_path(&g)?;
            ("pde quenched", solve_quenched_robin(&params, &alpha, &cfg.payoff, horizon, &cfg.grid.t)?)
        }
        PdeProblem::Constant => {
            let abar = require_abar(cfg)?;
            ("pde constant", solve_constant_robin(&params, abar, &cfg.payoff, horizon, &cfg.grid.t)?)
        }
    };
    let summary = json!({ "max_principle": sol.satisfies_max_principle(), "method": sol.method });
    let h = header(name, cfg, Some(summary));
    let text = match format_of(cli) {
        Format::Json => render_json(&h, "solution", &solution_json(&sol)),
        Format::Csv => {
            let mut t = Table::new(&["t", "x", "state", "u"]);
            for (level, &time) in sol.times.iter().enumerate() {
                for (k, comp) in sol.values[level].iter().enumerate() {
                    let state = sol.states.as_ref().map(|s| s[k].as_str());
                    for (x, u) in sol.nodes.iter().zip(comp) {
                        t.push(vec![time.into(), (*x).into(), state.into(), (*u).into()]);
                    }
                }
            }
            render_csv(&h, &t)
        }
    };
    write(cli, &text)
}

fn one_d(cfg: &SimConfig, what: &str) -> Result<(), CliError> {
    if cfg.domain.dimension() != 1 || !cfg.domain.is_bounded() {
        return Err(ConfigError::single(format!("{what} needs a bounded 1-d domain")).into());
    }
    Ok(())
}

fn averaging(cli: &Cli, cfg: &SimConfig) -> Result<(), CliError> {
    one_d(cfg, "the averaging sweep")?;
    let g = cfg.generator()?;
    let settings = SweepSettings {
        x: cfg.grid.x.clone(),
        t: cfg.grid.t.clone(),
        eps: cfg.experiment.eps.clone(),
        replicas: cfg.experiment.replicas,
        start: cfg.chain_start(&g)?,
        sim: cfg.sim_params(),
        paths: cfg.sim.paths,
        seed: cfg.sim.seed,
    };
    let report = averaging_sweep(&cfg.domain, &cfg.payoff, &g, &settings)?;
    let summary = json!({
        "abar": report.abar,
        "monotone": report.is_monotone(),
        "mean_sup_error": report.levels.iter().map(|l| l.mean_sup_error).collect::<Vec<_>>(),
        "mean_exposure_error": report.levels.iter().map(|l| l.mean_exposure_error).collect::<Vec<_>>(),
    });
    let h = header("averaging", cfg, Some(summary));
    let text = match format_of(cli) {
        Format::Json => render_json(&h, "report", &report),
        Format::Csv => {
            let mut t = Table::new(&["kind", "eps", "replica", "t", "value", "stderr"]);
            for level in &report.levels {
                let eps = level.eps;
                for r in &level.replicas {
                    t.push(vec!["sup_error".into(), eps.into(), r.replica.into(), Cell::Empty, r.sup_error.into(), r.sup_error_stderr.into()]);
                    t.push(vec!["exposure_error".into(), eps.into(), r.replica.into(), Cell::Empty, r.exposure_error.into(), r.exposure_error_stderr.into()]);
                    for (&time, &e) in report.t.iter().zip(&r.error_by_t) {
                        t.push(vec!["error_t".into(), eps.into(), r.replica.into(), time.into(), e.into(), Cell::Empty]);
                    }
                }
                t.push(vec!["mean_sup_error".into(), eps.into(), Cell::Empty, Cell::Empty, level.mean_sup_error.into(), level.sup_error_spread.into()]);
                t.push(vec!["mean_exposure_error".into(), eps.into(), Cell::Empty, Cell::Empty, level.mean_exposure_error.into(), level.exposure_error_spread.into()]);
                for (&time, &e) in report.t.iter().zip(&level.error_curve) {
                    t.push(vec!["mean_error_t".into(), eps.into(), Cell::Empty, time.into(), e.into(), Cell::Empty]);
                }
            }
            render_csv(&h, &t)
        }
    };
    write(cli, &text)
}

fn gating(cli: &Cli, cfg: &SimConfig) -> Result<(), CliError> {
    require_unit_interval(cfg, "the gating experiment")?;
    let gs = &cfg.gating;
    if !(gs.kappa > 0.0 && gs.lambda_on > 0.0 && gs.lambda_off > 0.0 && gs.eps > 0.0)
        || ![gs.kappa, gs.lambda_on, gs.lambda_off, gs.eps].iter().all(|v| v.is_finite())
    {
        return Err(ConfigError::single("gating parameters must be positive and finite").into());
    }
    let settings = GatingSettings {
        kappa: gs.kappa,
        lambda_on: gs.lambda_on,
        lambda_off: gs.lambda_off,
        eps: gs.eps,
        f: cfg.payoff.clone(),
        x: cfg.grid.x.clone(),
        t: cfg.grid.t.clone(),
        sim: cfg.sim_params(),
        paths: cfg.sim.paths,
        seed: cfg.sim.seed,
        pde: cfg.pde_params(),
    };
    let report = gating_experiment(&settings)?;
    let summary = json!({
        "kappa": report.kappa,
        "lambda_on": report.lambda_on,
        "lambda_off": report.lambda_off,
        "eps": report.eps,
        "pi": report.pi,
        "abar": report.abar,
        "chain_jumps": report.chain_jumps,
        "max_discrepancy": report.max_discrepancy,
    });
    let h = header("gating", cfg, Some(summary));
    let text = match format_of(cli) {
        Format::Json => render_json(&h, "report", &report),
        Format::Csv => {
            let mut t = Table::new(&["t", "x", "mc", "mc_stderr", "pde", "diff"]);
            for r in &report.rows {
                t.push(vec![r.t.into(), r.x.into(), r.mc.into(), r.mc_stderr.into(), r.pde.into(), r.diff.into()]);
            }
            render_csv(&h, &t)
        }
    };
    write(cli, &text)
}

fn xval(cli: &Cli, cfg: &SimConfig, mode: Mode) -> Result<(), CliError> {
    require_unit_interval(cfg, "cross-validation")?;
    let g = cfg.generator()?;
    let (quenched_path, abar) = match mode {
        Mode::Quenched => (cfg.quenched_path(&g)?, 0.0),
        Mode::Averaged => (crate::chain::ReactivityPath::constant(0.0, cfg.horizon()), require_abar(cfg)?),
        Mode::Annealed => (crate::chain::ReactivityPath::constant(0.0, cfg.horizon()), 0.0),
    };
    let settings = XvalSettings {
        phi: cfg.switched_payoff(),
        g,
        f: cfg.payoff.clone(),
        x: cfg.grid.x.clone(),
        t: cfg.grid.t.clone(),
        sim: cfg.sim_params(),
        paths: cfg.sim.paths,
        seed: cfg.sim.seed,
        pde: cfg.pde_params(),
        quenched_start: cfg.quenched.s,
        quenched_path,
        abar,
        bias_allowance: cfg.xval.bias_allowance,
    };
    let report = cross_validate(mode, &settings)?;
    let summary = json!({
        "max_abs_z": report.max_abs_z,
        "fraction_within_3": report.fraction_within_3,
        "all_within": report.all_within,
        "bias_allowance": report.bias_allowance,
        "pde_max_principle": report.pde_max_principle,
    });
    let command = format!("xval {}", mode.as_str());
    let h = header(&command, cfg, Some(summary));
    let text = match format_of(cli) {
        Format::Json => render_json(&h, "report", &report),
        Format::Csv => {
            let mut t = Table::new(&["t", "x", "state", "mc", "stderr", "pde", "z", "z_adjusted", "within"]);
            for r in &report.rows {
                t.push(vec![
                    r.t.into(),
                    r.x.into(),
                    r.state.as_deref().into(),
                    r.mc.into(),
                    r.stderr.into(),
                    r.pde.into(),
                    r.z.into(),
                    r.z_adjusted.into(),
                    r.within.into(),
                ]);
            }
            render_csv(&h, &t)
        }
    };
    write(cli, &text)?;
    if cli.out.is_some() {
        println!(
            "{command}: {} points, max |z| = {:.3}, {:.1}% within 3 after allowance {}, all within tolerance: {}",
            report.rows.len(),
            report.max_abs_z,
            100.0 * report.fraction_within_3,
            report.bias_allowance,
            report.all_within
        );
    }
    Ok(())
}
