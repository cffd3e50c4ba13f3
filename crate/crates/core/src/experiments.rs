//! Numerical experiments: the fast-switching averaging sweep, the exposure
//! diagnostic, the gated-receptor comparison, Monte Carlo against
//! finite-difference cross-validation and the propagator composition check.

use serde::Serialize;
use thiserror::Error;

use crate::chain::{ChainError, ChainPath, GeneratorMatrix, ReactivityPath};
use crate::functional::{
    accumulate_exposure, annealed_estimate_times, averaged_estimate_times, exposure_integral,
    quenched_estimate_times, run_paths, FunctionalError, Mode, Payoff, RunningStats, Scratch,
    Seeding, SimParams, SwitchedPayoff,
};
use crate::geometry::Domain;
use crate::pde::{solve_constant_robin, solve_coupled_robin, solve_quenched_robin, PdeError, PdeParams};
use crate::rbm::{simulate_path, DiffusionPath, RbmError, TimeGrid};
use crate::stream::Purpose;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid(msg.into())
}

/// How the chain starts in sweeps and sampled quenched paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStart {
    Stationary,
    Fixed(usize),
}

/// `𝓔 = sup_{t ≤ T} |J(t) - ᾱ L_t|` over the grid times of `path`, where
/// `J = ∫ α dL` is built from the (rescaled) chain's reactivity path.
pub fn exposure_error(
    path: &DiffusionPath,
    alpha: &ReactivityPath,
    abar: f64,
    horizon: f64,
) -> Result<f64, ExperimentError> {
    let acc = exposure_integral(path, alpha)?;
    // ᾱL accumulated step by step like J, so a constant chain cancels exactly
    let mut sup = 0.0f64;
    let mut averaged = 0.0;
    for (m, (&t, &j)) in acc.times.iter().zip(&acc.exposure).enumerate() {
        if t > horizon {
            break;
        }
        if m > 0 {
            averaged += abar * path.local_increments[m - 1];
        }
        sup = sup.max((j - averaged).abs());
    }
    Ok(sup)
}

/// Samples a chain path for a quenched run. Replica `r` and slot `slot`
/// address the chain streams below `seed`.
pub fn sample_fixed_chain(
    g: &GeneratorMatrix,
    start: ChainStart,
    horizon: f64,
    seed: u64,
    replica: u64,
    slot: u64,
) -> Result<ChainPath, ExperimentError> {
    let seeding = Seeding::new(seed).with_replica(replica).with_slot(slot);
    let initial = match start {
        ChainStart::Stationary => {
            let pi = g.stationary_distribution()?;
            g.sample_state(&pi, &mut seeding.stream(Purpose::ChainInit, 0))
        }
        ChainStart::Fixed(k) => k,
    };
    Ok(g.sample_path(initial, horizon, &mut seeding.stream(Purpose::FixedChain, 0))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub eps: Vec<f64>,
    pub replicas: usize,
    pub start: ChainStart,
    pub sim: SimParams,
    pub paths: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaOutcome {
    pub replica: usize,
    pub jumps: usize,
    /// `sup_{t,x} |u^ε - u^0|` on the test grid.
    pub sup_error: f64,
    /// Standard error of the difference at the maximizing point.
    pub sup_error_stderr: f64,
    /// `sup_x |u^ε - u^0|` for each grid time.
    pub error_by_t: Vec<f64>,
    /// Path-mean of `𝓔`, averaged over the x grid.
    pub exposure_error: f64,
    pub exposure_error_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLevel {
    pub eps: f64,
    pub replicas: Vec<ReplicaOutcome>,
    pub mean_sup_error: f64,
    /// Standard error of the replica mean from the replica spread.
    pub sup_error_spread: f64,
    pub mean_exposure_error: f64,
    pub exposure_error_spread: f64,
    /// Replica mean of the Monte Carlo standard error at the sup point.
    pub mean_mc_stderr: f64,
    /// Replica mean of `sup_x |u^ε - u^0|` per grid time.
    pub error_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub abar: f64,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub paths: u64,
    pub dt: f64,
    /// `u^0` estimates on the grid, `reference[t][x] = (mean, stderr)`.
    pub reference: Vec<Vec<(f64, f64)>>,
    pub levels: Vec<SweepLevel>,
}

impl SweepReport {
    /// Replica-mean sup-error and exposure error nonincreasing in `ε`.
    pub fn is_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| {
            w[1].mean_sup_error <= w[0].mean_sup_error && w[1].mean_exposure_error <= w[0].mean_exposure_error
        })
    }
}

fn mean_and_spread(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut s = RunningStats::default();
    values.for_each(|v| s.push(v));
    (s.mean, s.stderr())
}

/// Compares `u^ε` for chains rescaled by each `ε` against `u^0` with the
/// stationary mean reactivity.
///
/// Each x point has its own diffusion streams, shared by every `ε` and
/// replica, and `u^ε - u^0` is averaged pathwise on the same paths. The
/// chain of replica `r` at ladder position `i` uses streams addressed by
/// `(r, i)`.
pub fn averaging_sweep(
    domain: &Domain,
    f: &Payoff,
    g: &GeneratorMatrix,
    settings: &SweepSettings,
) -> Result<SweepReport, ExperimentError> {
    let s = settings;
    if s.eps.is_empty() || s.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("eps values must be positive"));
    }
    if !s.eps.windows(2).all(|w| w[1] < w[0]) {
        return Err(invalid("eps values must be strictly decreasing"));
    }
    if s.replicas == 0 {
        return Err(invalid("replicas must be positive"));
    }
    if s.x.is_empty() || s.t.is_empty() {
        return Err(invalid("sweep grids must be nonempty"));
    }
    if !s.t.windows(2).all(|w| w[1] > w[0]) || s.t[0] <= 0.0 {
        return Err(invalid("t grid must be positive and strictly increasing"));
    }
    if !g.is_irreducible() {
        return Err(ChainError::Reducible.into());
    }
    for &x in &s.x {
        domain.contains(&[x]).map_err(RbmError::from)?;
    }
    let abar = g.effective_reactivity()?;
    let horizon = *s.t.last().unwrap();

    let mut reference = vec![vec![(0.0, 0.0); s.x.len()]; s.t.len()];
    for (j, &x) in s.x.iter().enumerate() {
        let r = averaged_estimate_times(domain, f, &[x], &s.t, abar, s.sim, s.paths, Seeding::new(s.seed).with_slot(j as u64))?;
        for (ti, e) in r.iter().enumerate() {
            reference[ti][j] = (e.mean, e.stderr);
        }
    }

    let mut levels = Vec::with_capacity(s.eps.len());
    for (level, &eps) in s.eps.iter().enumerate() {
        let ge = g.rescale(eps)?;
        let mut replicas = Vec::with_capacity(s.replicas);
        for r in 0..s.replicas {
            let chain = sample_fixed_chain(&ge, s.start, horizon, s.seed, r as u64, level as u64)?;
            let alpha = chain.reactivity(&ge);
            let mut out = sweep_replica(domain, f, &alpha, abar, s)?;
            out.replica = r;
            out.jumps = chain.num_jumps();
            replicas.push(out);
        }
        let (mean_sup_error, sup_error_spread) = mean_and_spread(replicas.iter().map(|o| o.sup_error));
        let (mean_exposure_error, exposure_error_spread) = mean_and_spread(replicas.iter().map(|o| o.exposure_error));
        let mean_mc_stderr = replicas.iter().map(|o| o.sup_error_stderr).sum::<f64>() / replicas.len() as f64;
        let error_curve = (0..s.t.len())
            .map(|ti| replicas.iter().map(|o| o.error_by_t[ti]).sum::<f64>() / replicas.len() as f64)
            .collect();
        levels.push(SweepLevel {
            eps,
            replicas,
            mean_sup_error,
            sup_error_spread,
            mean_exposure_error,
            exposure_error_spread,
            mean_mc_stderr,
            error_curve,
        });
    }
    Ok(SweepReport {
        abar,
        x: s.x.clone(),
        t: s.t.clone(),
        paths: s.paths,
        dt: s.sim.dt,
        reference,
        levels,
    })
}

fn sweep_replica(
    domain: &Domain,
    f: &Payoff,
    alpha: &ReactivityPath,
    abar: f64,
    s: &SweepSettings,
) -> Result<ReplicaOutcome, ExperimentError> {
    let horizon = *s.t.last().unwrap();
    let mut required = alpha.breaks_within(0.0, horizon).to_vec();
    required.extend_from_slice(&s.t);
    let grid = TimeGrid::new(0.0, horizon, s.sim.dt, &required)?;
    let idx: Vec<usize> = s.t.iter().map(|&t| grid.index_of(t).expect("grid time")).collect();
    let nt = s.t.len();

    let mut error_by_t = vec![0.0f64; nt];
    let (mut sup_error, mut sup_error_stderr) = (-1.0f64, 0.0);
    let mut exposure = RunningStats::default();
    for (j, &x) in s.x.iter().enumerate() {
        let seeding = Seeding::new(s.seed).with_slot(j as u64);
        let stats = run_paths(s.paths, nt + 1, || (Scratch::new(1), Vec::new()), |(scratch, averaged), i, out| {
            let mut stream = seeding.stream(Purpose::Diffusion, i);
            simulate_path(domain, s.sim.scheme, &[x], &grid, &mut stream, &mut scratch.path)?;
            accumulate_exposure(&scratch.path, alpha, &mut scratch.exposure);
            averaged.clear();
            averaged.push(0.0);
            let path = &scratch.path;
            let mut acc = 0.0;
            for &dl in &path.local_increments {
                acc += abar * dl;
                averaged.push(acc);
            }
            for (o, &m) in out.iter_mut().zip(&idx) {
                let fx = f.eval(path.position(m));
                *o = fx * ((-scratch.exposure[m]).exp() - (-averaged[m]).exp());
            }
            out[nt] = scratch
                .exposure
                .iter()
                .zip(averaged.iter())
                .fold(0.0f64, |a, (&jm, &am)| a.max((jm - am).abs()));
            Ok(())
        })?;
        for ti in 0..nt {
            let e = stats[ti].mean.abs();
            error_by_t[ti] = error_by_t[ti].max(e);
            if e > sup_error {
                sup_error = e;
                sup_error_stderr = stats[ti].stderr();
            }
        }
        exposure.merge(&stats[nt]);
    }
    Ok(ReplicaOutcome {
        replica: 0,
        jumps: 0,
        sup_error,
        sup_error_stderr,
        error_by_t,
        exposure_error: exposure.mean,
        exposure_error_stderr: exposure.stderr(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatingSettings {
    pub kappa: f64,
    pub lambda_on: f64,
    pub lambda_off: f64,
    pub eps: f64,
    pub f: Payoff,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub sim: SimParams,
    pub paths: u64,
    pub seed: u64,
    pub pde: PdeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingRow {
    pub t: f64,
    pub x: f64,
    pub mc: f64,
    pub mc_stderr: f64,
    pub pde: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingReport {
    pub kappa: f64,
    pub lambda_on: f64,
    pub lambda_off: f64,
    pub eps: f64,
    /// Stationary law over (closed, open).
    pub pi: [f64; 2],
    pub abar: f64,
    pub chain_jumps: usize,
    pub rows: Vec<GatingRow>,
    pub max_discrepancy: f64,
}

/// Stationary law and mean reactivity of the two-state gate, in closed
/// form.
pub fn gating_constants(kappa: f64, lambda_on: f64, lambda_off: f64) -> ([f64; 2], f64) {
    let total = lambda_on + lambda_off;
    let pi = [lambda_off / total, lambda_on / total];
    (pi, kappa * pi[1])
}

/// One fast-switching quenched Monte Carlo run of the gated boundary on
/// `[0, 1]` against the constant-`ᾱ` finite-difference solution.
pub fn gating_experiment(s: &GatingSettings) -> Result<GatingReport, ExperimentError> {
    if !(s.kappa > 0.0 && s.kappa.is_finite()) {
        return Err(invalid("kappa must be positive"));
    }
    if !(s.lambda_on > 0.0 && s.lambda_off > 0.0 && s.lambda_on.is_finite() && s.lambda_off.is_finite()) {
        return Err(invalid("switching rates must be positive"));
    }
    if s.t.is_empty() || s.x.is_empty() || !s.t.windows(2).all(|w| w[1] > w[0]) || s.t[0] <= 0.0 {
        return Err(invalid("gating grids must be nonempty with increasing positive times"));
    }
    let g = GeneratorMatrix::gated(s.kappa, s.lambda_on, s.lambda_off).map_err(ChainError::from)?;
    let (pi, abar) = gating_constants(s.kappa, s.lambda_on, s.lambda_off);
    let horizon = *s.t.last().unwrap();
    let ge = g.rescale(s.eps)?;
    let chain = sample_fixed_chain(&ge, ChainStart::Stationary, horizon, s.seed, 0, 0)?;
    let alpha = chain.reactivity(&ge);
    let domain = Domain::unit_interval();
    let pde = solve_constant_robin(&s.pde, abar, &s.f, horizon, &s.t)?;
    let mut rows = Vec::with_capacity(s.t.len() * s.x.len());
    let mut mc = Vec::with_capacity(s.x.len());
    for (j, &x) in s.x.iter().enumerate() {
        mc.push(quenched_estimate_times(&domain, &s.f, &[x], 0.0, &s.t, &alpha, s.sim, s.paths, Seeding::new(s.seed).with_slot(j as u64))?);
    }
    for (ti, &t) in s.t.iter().enumerate() {
        let level = pde.level_index(t).expect("stored level");
        for (j, &x) in s.x.iter().enumerate() {
            let e = &mc[j][ti];
            let u = pde.value_at(level, 0, x);
            rows.push(GatingRow { t, x, mc: e.mean, mc_stderr: e.stderr, pde: u, diff: e.mean - u });
        }
    }
    let max_discrepancy = rows.iter().fold(0.0f64, |m, r| m.max(r.diff.abs()));
    Ok(GatingReport {
        kappa: s.kappa,
        lambda_on: s.lambda_on,
        lambda_off: s.lambda_off,
        eps: s.eps,
        pi,
        abar,
        chain_jumps: chain.num_jumps(),
        rows,
        max_discrepancy,
    })
}

/// Inputs of a Monte Carlo against finite-difference comparison on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XvalSettings {
    pub g: GeneratorMatrix,
    /// Per-state payoff for annealed runs.
    pub phi: SwitchedPayoff,
    /// Payoff for quenched and averaged runs.
    pub f: Payoff,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub sim: SimParams,
    pub paths: u64,
    pub seed: u64,
    pub pde: PdeParams,
    /// Start time and reactivity path for quenched runs.
    pub quenched_start: f64,
    pub quenched_path: ReactivityPath,
    pub abar: f64,
    /// Deterministic bias budget of the Monte Carlo scheme; differences
    /// below it are not counted against the z-score.
    pub bias_allowance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XvalRow {
    pub t: f64,
    pub x: f64,
    pub state: Option<String>,
    pub mc: f64,
    pub stderr: f64,
    pub pde: f64,
    pub z: f64,
    /// z-score of the part of the difference exceeding the bias allowance.
    pub z_adjusted: f64,
    /// `|mc - pde| ≤ max(3 stderr, bias allowance)`.
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XvalReport {
    pub mode: Mode,
    pub bias_allowance: f64,
    pub rows: Vec<XvalRow>,
    pub max_abs_z: f64,
    /// Fraction of rows with `|z_adjusted| ≤ 3`.
    pub fraction_within_3: f64,
    pub all_within: bool,
    pub pde_max_principle: bool,
}

/// With a zero standard error, differences at rounding level count as
/// agreement.
fn z_score(diff: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn xval_row(t: f64, x: f64, state: Option<String>, mc: f64, stderr: f64, pde: f64, allowance: f64) -> XvalRow {
    let diff = mc - pde;
    let excess = (diff.abs() - allowance).max(0.0);
    XvalRow {
        t,
        x,
        state,
        mc,
        stderr,
        pde,
        z: z_score(diff, stderr),
        z_adjusted: z_score(diff.signum() * excess, stderr),
        within: diff.abs() <= (3.0 * stderr).max(allowance),
    }
}

/// Monte Carlo estimates against the matching finite-difference oracle at
/// every `(t, x)` grid point (and every state in annealed mode).
///
/// In quenched mode the estimate `E_{s,x}[f(X_t) exp(-∫_s^t α dL)]` is
/// compared with the forward solution driven by the time-reversed window
/// of `α` over `[s, t]`, one solve per grid time.
pub fn cross_validate(mode: Mode, s: &XvalSettings) -> Result<XvalReport, ExperimentError> {
    if s.x.is_empty() || s.t.is_empty() || !s.t.windows(2).all(|w| w[1] > w[0]) {
        return Err(invalid("cross-validation grids must be nonempty with increasing times"));
    }
    let domain = Domain::unit_interval();
    let a = s.bias_allowance;
    let mut rows = Vec::new();
    let mut max_principle = true;
    match mode {
        Mode::Annealed => {
            if s.t[0] <= 0.0 {
                return Err(invalid("annealed times must be positive"));
            }
            let sol = solve_coupled_robin(&s.pde, &s.g, &s.phi, *s.t.last().unwrap(), &s.t)?;
            max_principle &= sol.satisfies_max_principle();
            let m = s.g.len();
            let mut mc = Vec::with_capacity(s.x.len() * m);
            for (j, &x) in s.x.iter().enumerate() {
                for k in 0..m {
                    let seeding = Seeding::new(s.seed).with_slot((j * m + k) as u64);
                    mc.push(annealed_estimate_times(&domain, &s.phi, &[x], k, &s.t, &s.g, s.sim, s.paths, seeding)?);
                }
            }
            for (ti, &t) in s.t.iter().enumerate() {
                let level = sol.level_index(t).expect("stored level");
                for (j, &x) in s.x.iter().enumerate() {
                    for k in 0..m {
                        let e = &mc[j * m + k][ti];
                        let u = sol.value_at(level, k, x);
                        rows.push(xval_row(t, x, Some(s.g.label(k).to_string()), e.mean, e.stderr, u, a));
                    }
                }
            }
        }
        Mode::Quenched => {
            let start = s.quenched_start;
            let times: Vec<f64> = s.t.iter().copied().filter(|&t| t > start).collect();
            if times.is_empty() {
                return Err(invalid("no grid time lies after the quenched start time"));
            }
            let mut mc = Vec::with_capacity(s.x.len());
            for (j, &x) in s.x.iter().enumerate() {
                let seeding = Seeding::new(s.seed).with_slot(j as u64);
                mc.push(quenched_estimate_times(&domain, &s.f, &[x], start, &times, &s.quenched_path, s.sim, s.paths, seeding)?);
            }
            for (ti, &t) in times.iter().enumerate() {
                let reversed = s.quenched_path.reversed_window(start, t);
                let span = t - start;
                let sol = solve_quenched_robin(&s.pde, &reversed, &s.f, span, &[span])?;
                max_principle &= sol.satisfies_max_principle();
                let level = sol.times.len() - 1;
                for (j, &x) in s.x.iter().enumerate() {
                    let e = &mc[j][ti];
                    rows.push(xval_row(t, x, None, e.mean, e.stderr, sol.value_at(level, 0, x), a));
                }
            }
        }
        Mode::Averaged => {
            if s.t[0] <= 0.0 {
                return Err(invalid("averaged times must be positive"));
            }
            let sol = solve_constant_robin(&s.pde, s.abar, &s.f, *s.t.last().unwrap(), &s.t)?;
            max_principle &= sol.satisfies_max_principle();
            let mut mc = Vec::with_capacity(s.x.len());
            for (j, &x) in s.x.iter().enumerate() {
                let seeding = Seeding::new(s.seed).with_slot(j as u64);
                mc.push(averaged_estimate_times(&domain, &s.f, &[x], &s.t, s.abar, s.sim, s.paths, seeding)?);
            }
            for (ti, &t) in s.t.iter().enumerate() {
                let level = sol.level_index(t).expect("stored level");
                for (j, &x) in s.x.iter().enumerate() {
                    let e = &mc[j][ti];
                    rows.push(xval_row(t, x, None, e.mean, e.stderr, sol.value_at(level, 0, x), a));
                }
            }
        }
    }
    let max_abs_z = rows.iter().fold(0.0f64, |m, r| m.max(r.z.abs()));
    let fraction_within_3 = rows.iter().filter(|r| r.z_adjusted.abs() <= 3.0).count() as f64 / rows.len() as f64;
    let all_within = rows.iter().all(|r| r.within);
    Ok(XvalReport {
        mode,
        bias_allowance: a,
        rows,
        max_abs_z,
        fraction_within_3,
        all_within,
        pde_max_principle: max_principle,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionSettings {
    pub f: Payoff,
    pub x: Vec<f64>,
    pub s: f64,
    pub t: f64,
    /// Intermediate time `r` of `S_{s,t} = S_{s,r} S_{r,t}`.
    pub r: f64,
    pub alpha: ReactivityPath,
    /// Nodes on `[0, 1]` at which `S_{r,t} f` is tabulated.
    pub inner_nodes: usize,
    pub inner_paths: u64,
    pub sim: SimParams,
    pub paths: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub x: f64,
    pub direct: f64,
    pub direct_stderr: f64,
    pub nested: f64,
    /// Outer standard error combined with the largest inner one.
    pub nested_stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    pub rows: Vec<CompositionRow>,
    pub max_abs_z: f64,
}

/// `S_{s,t} f` against `S_{s,r}(S_{r,t} f)` on `[0, 1]`, with the inner
/// function tabulated by Monte Carlo and interpolated linearly.
pub fn composition_check(c: &CompositionSettings) -> Result<CompositionReport, ExperimentError> {
    if !(c.s < c.r && c.r < c.t) {
        return Err(invalid("composition needs s < r < t"));
    }
    if c.inner_nodes < 2 {
        return Err(invalid("at least two inner nodes are needed"));
    }
    let domain = Domain::unit_interval();
    let nodes: Vec<f64> = (0..c.inner_nodes).map(|i| i as f64 / (c.inner_nodes - 1) as f64).collect();
    let mut inner = Vec::with_capacity(nodes.len());
    let mut inner_se = 0.0f64;
    for (i, &y) in nodes.iter().enumerate() {
        let seeding = Seeding::new(c.seed).with_replica(1).with_slot(i as u64);
        let e = quenched_estimate_times(&domain, &c.f, &[y], c.r, &[c.t], &c.alpha, c.sim, c.inner_paths, seeding)?.remove(0);
        inner.push(e.mean);
        inner_se = inner_se.max(e.stderr);
    }
    let table = Payoff::Tabulated { x: nodes, values: inner };
    let mut rows = Vec::with_capacity(c.x.len());
    for (j, &x) in c.x.iter().enumerate() {
        let direct = quenched_estimate_times(&domain, &c.f, &[x], c.s, &[c.t], &c.alpha, c.sim, c.paths, Seeding::new(c.seed).with_replica(0).with_slot(j as u64))?.remove(0);
        let nested = quenched_estimate_times(&domain, &table, &[x], c.s, &[c.r], &c.alpha, c.sim, c.paths, Seeding::new(c.seed).with_replica(2).with_slot(j as u64))?.remove(0);
        let nested_stderr = nested.stderr.hypot(inner_se);
        let combined = direct.stderr.hypot(nested_stderr);
        rows.push(CompositionRow {
            x,
            direct: direct.mean,
            direct_stderr: direct.stderr,
            nested: nested.mean,
            nested_stderr,
            z: z_score(direct.mean - nested.mean, combined),
        });
    }
    let max_abs_z = rows.iter().fold(0.0f64, |m, r| m.max(r.z.abs()));
    Ok(CompositionReport { rows, max_abs_z })
}
