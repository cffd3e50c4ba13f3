//! Multiplicative functional `M_t = exp(-∫ α dL)` and the Feynman–Kac
//! estimators built on it.
//!
//! Killing is always carried as a weight on the path, never by stopping it.
//! Paths are processed in fixed blocks whose statistics are merged in
//! block order, so results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, ChainPath, GeneratorMatrix, ReactivityPath};
use crate::geometry::Domain;
use crate::rbm::{simulate_path, DiffusionPath, RbmError, Scheme, TimeGrid};
use crate::stream::{derive_stream, Purpose, StreamId};

/// Paths per accumulation block.
pub const BLOCK_PATHS: u64 = 1024;

/// Two-sided 95% normal quantile used for reported confidence intervals.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error(transparent)]
    Rbm(#[from] RbmError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("reactivity break at t = {0} is not a grid point of the diffusion path")]
    Misaligned(f64),
    #[error("start time {s} is after end time {t}")]
    BadWindow { s: f64, t: f64 },
    #[error("reactivity path ends at {horizon}, before the requested time {t}")]
    HorizonTooShort { horizon: f64, t: f64 },
    #[error("evaluation times must be nondecreasing and positive")]
    BadTimes,
    #[error("path count must be positive")]
    NoPaths,
    #[error("payoff is not bounded on the {0} domain")]
    UnboundedPayoff(&'static str),
    #[error("payoff has {got} per-state entries, chain has {expected} states")]
    PayoffStates { expected: usize, got: usize },
}

/// `J(t) = ∫ α dL` and `M(t) = exp(-J(t))` at every grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureAccumulator {
    pub times: Vec<f64>,
    pub exposure: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Riemann–Stieltjes sum of `α` against the path's local time. The state on
/// each step is the one at its left endpoint; every break of `alpha` inside
/// the path window must be a grid time.
pub fn exposure_integral(
    path: &DiffusionPath,
    alpha: &ReactivityPath,
) -> Result<ExposureAccumulator, FunctionalError> {
    let (start, end) = (path.times[0], *path.times.last().unwrap());
    for &b in alpha.breaks_within(start, end) {
        if path.times.binary_search_by(|t| t.total_cmp(&b)).is_err() {
            return Err(FunctionalError::Misaligned(b));
        }
    }
    if alpha.horizon < end {
        return Err(FunctionalError::HorizonTooShort { horizon: alpha.horizon, t: end });
    }
    let mut exposure = Vec::with_capacity(path.len());
    accumulate_exposure(path, alpha, &mut exposure);
    let weight = exposure.iter().map(|j| (-j).exp()).collect();
    Ok(ExposureAccumulator { times: path.times.clone(), exposure, weight })
}

/// Fills `out` with `J` at every grid time of `path`.
#[inline]
pub(crate) fn accumulate_exposure(path: &DiffusionPath, alpha: &ReactivityPath, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    let mut piece = alpha.breaks.partition_point(|&b| b <= path.times[0]);
    let mut j = 0.0;
    for (m, &dl) in path.local_increments.iter().enumerate() {
        let left = path.times[m];
        while piece < alpha.breaks.len() && alpha.breaks[piece] <= left {
            piece += 1;
        }
        j += alpha.values[piece] * dl;
        out.push(j);
    }
}

/// Bounded payoffs on the closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    Constant {
        value: f64,
    },
    /// `x ↦ x[axis]`.
    Coordinate {
        #[serde(default)]
        axis: usize,
    },
    /// `x ↦ cos(π x[axis])`.
    CosPi {
        #[serde(default)]
        axis: usize,
    },
    /// Piecewise-linear interpolation of `values` at nodes `x` along axis 0,
    /// held constant outside the node range.
    Tabulated { x: Vec<f64>, values: Vec<f64> },
}

impl Payoff {
    pub fn constant(value: f64) -> Self {
        Payoff::Constant { value }
    }

    pub fn cos_pi() -> Self {
        Payoff::CosPi { axis: 0 }
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Payoff::Constant { value } => *value,
            Payoff::Coordinate { axis } => p[*axis],
            Payoff::CosPi { axis } => (std::f64::consts::PI * p[*axis]).cos(),
            Payoff::Tabulated { x, values } => interpolate(x, values, p[0]),
        }
    }

    /// `sup |payoff|` over the closed domain.
    pub fn bound(&self, domain: &Domain) -> Result<f64, FunctionalError> {
        Ok(match self {
            Payoff::Constant { value } => value.abs(),
            Payoff::CosPi { .. } => 1.0,
            Payoff::Tabulated { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Payoff::Coordinate { axis } => match *domain {
                Domain::Interval { a, b } => a.abs().max(b.abs()),
                Domain::Rectangle { a, b, c, d } => {
                    if *axis == 0 {
                        a.abs().max(b.abs())
                    } else {
                        c.abs().max(d.abs())
                    }
                }
                Domain::Disk { center, radius } => center[*axis].abs() + radius,
                Domain::HalfLine => return Err(FunctionalError::UnboundedPayoff("half_line")),
            },
        })
    }

    pub fn validate(&self, domain: &Domain) -> Result<(), String> {
        let dim = domain.dimension();
        match self {
            Payoff::Constant { value } if !value.is_finite() => Err("payoff value must be finite".into()),
            Payoff::Coordinate { axis } | Payoff::CosPi { axis } if *axis >= dim => {
                Err(format!("payoff axis {axis} out of range for a {dim}-d domain"))
            }
            Payoff::Tabulated { x, values } => {
                if x.len() < 2 || x.len() != values.len() {
                    Err("tabulated payoff needs at least two nodes and one value per node".into())
                } else if !x.windows(2).all(|w| w[1] > w[0]) {
                    Err("tabulated payoff nodes must be strictly increasing".into())
                } else if !values.iter().all(|v| v.is_finite()) {
                    Err("tabulated payoff values must be finite".into())
                } else {
                    Ok(())
                }
            }
            _ => self.bound(domain).map(|_| ()).map_err(|e| e.to_string()),
        }
    }
}

/// Linear interpolation on sorted nodes, constant extrapolation.
pub fn interpolate(x: &[f64], v: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return v[0];
    }
    if at >= x[x.len() - 1] {
        return v[v.len() - 1];
    }
    let i = x.partition_point(|&s| s <= at);
    let w = (at - x[i - 1]) / (x[i] - x[i - 1]);
    v[i - 1] + w * (v[i] - v[i - 1])
}

/// Payoff on `D̄ × S`: one payoff per chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedPayoff {
    pub per_state: Vec<Payoff>,
}

impl SwitchedPayoff {
    pub fn uniform(payoff: Payoff, states: usize) -> Self {
        Self { per_state: vec![payoff; states] }
    }

    #[inline]
    pub fn eval(&self, p: &[f64], state: usize) -> f64 {
        self.per_state[state].eval(p)
    }

    pub fn bound(&self, domain: &Domain) -> Result<f64, FunctionalError> {
        self.per_state.iter().try_fold(0.0f64, |m, p| Ok(m.max(p.bound(domain)?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Annealed,
    Quenched,
    Averaged,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Annealed => "annealed",
            Mode::Quenched => "quenched",
            Mode::Averaged => "averaged",
        }
    }
}

/// Discretization settings shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub scheme: Scheme,
}

impl SimParams {
    pub fn projection(dt: f64) -> Self {
        Self { dt, scheme: Scheme::Projection }
    }
}

/// Master seed plus the stream coordinates reserved for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Seeding {
    pub seed: u64,
    pub replica: u64,
    pub slot: u64,
}

impl Seeding {
    pub fn new(seed: u64) -> Self {
        Self { seed, replica: 0, slot: 0 }
    }

    pub fn with_slot(self, slot: u64) -> Self {
        Self { slot, ..self }
    }

    pub fn with_replica(self, replica: u64) -> Self {
        Self { replica, ..self }
    }

    pub(crate) fn stream(&self, purpose: Purpose, path: u64) -> crate::stream::Stream {
        derive_stream(
            self.seed,
            StreamId::new(purpose).replica(self.replica).slot(self.slot).path(path),
        )
    }
}

impl From<u64> for Seeding {
    fn from(seed: u64) -> Self {
        Seeding::new(seed)
    }
}

/// Monte Carlo mean with its CLT standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub mode: Mode,
    pub t: f64,
    pub x: Vec<f64>,
    pub state: Option<String>,
    pub eps: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl EstimatorResult {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)
    }
}

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Runs `n` paths in blocks of [`BLOCK_PATHS`]. `work(state, i, out)` writes
/// `outputs` values for path `i`; the returned statistics are merged in
/// path order.
pub(crate) fn run_paths<S, I, W>(
    n: u64,
    outputs: usize,
    init: I,
    work: W,
) -> Result<Vec<RunningStats>, FunctionalError>
where
    I: Fn() -> S + Sync,
    W: Fn(&mut S, u64, &mut [f64]) -> Result<(), FunctionalError> + Sync,
{
    if n == 0 {
        return Err(FunctionalError::NoPaths);
    }
    let blocks = n.div_ceil(BLOCK_PATHS);
    let partial: Vec<Vec<RunningStats>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut state = init();
            let mut stats = vec![RunningStats::default(); outputs];
            let mut out = vec![0.0; outputs];
            for i in b * BLOCK_PATHS..((b + 1) * BLOCK_PATHS).min(n) {
                work(&mut state, i, &mut out)?;
                for (s, &v) in stats.iter_mut().zip(&out) {
                    s.push(v);
                }
            }
            Ok(stats)
        })
        .collect::<Result<_, FunctionalError>>()?;
    let mut total = vec![RunningStats::default(); outputs];
    for block in &partial {
        for (t, s) in total.iter_mut().zip(block) {
            t.merge(s);
        }
    }
    Ok(total)
}

fn check_times(start: f64, times: &[f64]) -> Result<(), FunctionalError> {
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        return Err(FunctionalError::BadTimes);
    }
    if times[0] < start {
        return Err(FunctionalError::BadWindow { s: start, t: times[0] });
    }
    if !times.windows(2).all(|w| w[1] >= w[0]) {
        return Err(FunctionalError::BadTimes);
    }
    Ok(())
}

/// Per-worker path buffers.
pub(crate) struct Scratch {
    pub path: DiffusionPath,
    pub exposure: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Self { path: DiffusionPath::empty(dim), exposure: Vec::new() }
    }
}

/// Annealed estimate `E_{x,k}[Φ(X_t, α_t) exp(-∫_0^t α dL)]` at one time.
#[allow(clippy::too_many_arguments)]
pub fn annealed_estimate(
    domain: &Domain,
    phi: &SwitchedPayoff,
    x: &[f64],
    k: usize,
    t: f64,
    g: &GeneratorMatrix,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<EstimatorResult, FunctionalError> {
    Ok(annealed_estimate_times(domain, phi, x, k, &[t], g, sim, n, seeding)?.remove(0))
}

/// Annealed estimates at several times from the same paths. The chain and
/// the diffusion of path `i` use separate streams.
#[allow(clippy::too_many_arguments)]
pub fn annealed_estimate_times(
    domain: &Domain,
    phi: &SwitchedPayoff,
    x: &[f64],
    k: usize,
    times: &[f64],
    g: &GeneratorMatrix,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<Vec<EstimatorResult>, FunctionalError> {
    check_times(0.0, times)?;
    if times[0] <= 0.0 {
        return Err(FunctionalError::BadTimes);
    }
    if phi.per_state.len() != g.len() {
        return Err(FunctionalError::PayoffStates { expected: g.len(), got: phi.per_state.len() });
    }
    if k >= g.len() {
        return Err(ChainError::StateIndex(k).into());
    }
    domain.contains(x).map_err(RbmError::from)?;
    let horizon = *times.last().unwrap();
    let kappas = g.kappas();
    let stats = run_paths(
        n,
        times.len(),
        || Scratch::new(domain.dimension()),
        |scratch, i, out| {
            let mut chain_stream = seeding.stream(Purpose::Chain, i);
            let chain = g.sample_path(k, horizon, &mut chain_stream)?;
            let mut required = chain.jump_times.clone();
            required.extend_from_slice(times);
            let grid = TimeGrid::new(0.0, horizon, sim.dt, &required)?;
            let mut diff_stream = seeding.stream(Purpose::Diffusion, i);
            simulate_path(domain, sim.scheme, x, &grid, &mut diff_stream, &mut scratch.path)?;
            let alpha = reactivity_of(&chain, &kappas);
            accumulate_exposure(&scratch.path, &alpha, &mut scratch.exposure);
            for (o, &t) in out.iter_mut().zip(times) {
                let m = grid.index_of(t).expect("report time on grid");
                let state = chain.state_at_unchecked(t);
                *o = phi.eval(scratch.path.position(m), state) * (-scratch.exposure[m]).exp();
            }
            Ok(())
        },
    )?;
    Ok(times
        .iter()
        .zip(stats)
        .map(|(&t, s)| EstimatorResult {
            mode: Mode::Annealed,
            t,
            x: x.to_vec(),
            state: Some(g.label(k).to_string()),
            eps: None,
            mean: s.mean,
            stderr: s.stderr(),
            n_paths: n,
            dt: sim.dt,
            seed: seeding.seed,
            scheme: sim.scheme,
        })
        .collect())
}

fn reactivity_of(chain: &ChainPath, kappas: &[f64]) -> ReactivityPath {
    ReactivityPath {
        breaks: chain.jump_times.clone(),
        values: std::iter::once(chain.initial)
            .chain(chain.states.iter().copied())
            .map(|s| kappas[s])
            .collect(),
        horizon: chain.horizon,
    }
}

/// Quenched estimate `E_{s,x}[f(X_t) exp(-∫_s^t α dL)]` for a fixed
/// reactivity path.
#[allow(clippy::too_many_arguments)]
pub fn quenched_estimate(
    domain: &Domain,
    f: &Payoff,
    x: &[f64],
    s: f64,
    t: f64,
    alpha: &ReactivityPath,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<EstimatorResult, FunctionalError> {
    if s > t {
        return Err(FunctionalError::BadWindow { s, t });
    }
    Ok(quenched_estimate_times(domain, f, x, s, &[t], alpha, sim, n, seeding)?.remove(0))
}

/// Quenched estimates at several end times `t ≥ s` from the same paths.
#[allow(clippy::too_many_arguments)]
pub fn quenched_estimate_times(
    domain: &Domain,
    f: &Payoff,
    x: &[f64],
    s: f64,
    times: &[f64],
    alpha: &ReactivityPath,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<Vec<EstimatorResult>, FunctionalError> {
    check_times(s, times)?;
    let horizon = *times.last().unwrap();
    if alpha.horizon < horizon {
        return Err(FunctionalError::HorizonTooShort { horizon: alpha.horizon, t: horizon });
    }
    domain.contains(x).map_err(RbmError::from)?;
    let result = |t: f64, mean: f64, stderr: f64| EstimatorResult {
        mode: Mode::Quenched,
        t,
        x: x.to_vec(),
        state: None,
        eps: None,
        mean,
        stderr,
        n_paths: n,
        dt: sim.dt,
        seed: seeding.seed,
        scheme: sim.scheme,
    };
    if horizon == s {
        // S_{t,t} = I
        let v = f.eval(x);
        return Ok(times.iter().map(|&t| result(t, v, 0.0)).collect());
    }
    let mut required: Vec<f64> = alpha.breaks_within(s, horizon).to_vec();
    required.extend_from_slice(times);
    let grid = TimeGrid::new(s, horizon, sim.dt, &required)?;
    let idx: Vec<usize> = times.iter().map(|&t| grid.index_of(t).expect("report time on grid")).collect();
    let stats = run_paths(
        n,
        times.len(),
        || Scratch::new(domain.dimension()),
        |scratch, i, out| {
            let mut stream = seeding.stream(Purpose::Diffusion, i);
            simulate_path(domain, sim.scheme, x, &grid, &mut stream, &mut scratch.path)?;
            accumulate_exposure(&scratch.path, alpha, &mut scratch.exposure);
            for (o, &m) in out.iter_mut().zip(&idx) {
                *o = f.eval(scratch.path.position(m)) * (-scratch.exposure[m]).exp();
            }
            Ok(())
        },
    )?;
    Ok(times.iter().zip(stats).map(|(&t, st)| result(t, st.mean, st.stderr())).collect())
}

/// Estimate of `E_x[f(X_t) exp(-ᾱ L_t)]`: the quenched estimate for the
/// constant path `α ≡ ᾱ`.
#[allow(clippy::too_many_arguments)]
pub fn averaged_estimate(
    domain: &Domain,
    f: &Payoff,
    x: &[f64],
    t: f64,
    abar: f64,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<EstimatorResult, FunctionalError> {
    Ok(averaged_estimate_times(domain, f, x, &[t], abar, sim, n, seeding)?.remove(0))
}

#[allow(clippy::too_many_arguments)]
pub fn averaged_estimate_times(
    domain: &Domain,
    f: &Payoff,
    x: &[f64],
    times: &[f64],
    abar: f64,
    sim: SimParams,
    n: u64,
    seeding: Seeding,
) -> Result<Vec<EstimatorResult>, FunctionalError> {
    check_times(0.0, times)?;
    let alpha = ReactivityPath::constant(abar, *times.last().unwrap());
    let mut out = quenched_estimate_times(domain, f, x, 0.0, times, &alpha, sim, n, seeding)?;
    for r in &mut out {
        r.mode = Mode::Averaged;
    }
    Ok(out)
}

/// Stationary mean reactivity of the chain.
pub fn effective_reactivity(g: &GeneratorMatrix) -> Result<f64, ChainError> {
    g.effective_reactivity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StateSpec;
    use crate::rbm::simulate_rbm;
    use crate::stream::derive_stream;

    fn unit() -> Domain {
        Domain::unit_interval()
    }

    fn gated() -> GeneratorMatrix {
        GeneratorMatrix::gated(2.0, 1.0, 3.0).unwrap()
    }

    fn path_with_single_contact(dl: f64) -> DiffusionPath {
        DiffusionPath {
            dim: 1,
            scheme: Scheme::Projection,
            times: vec![0.0, 0.1, 0.2, 0.3],
            positions: vec![0.2, 0.0, 0.1, 0.3],
            local_increments: vec![dl, 0.0, 0.0],
            local: vec![0.0, dl, dl, dl],
        }
    }

    #[test]
    fn exposure_examples() {
        let p = path_with_single_contact(0.2);
        let acc = exposure_integral(&p, &ReactivityPath::constant(0.0, 1.0)).unwrap();
        assert!(acc.exposure.iter().all(|&j| j == 0.0));
        assert!(acc.weight.iter().all(|&m| m == 1.0));

        let acc = exposure_integral(&p, &ReactivityPath::constant(2.0, 1.0)).unwrap();
        assert!((acc.exposure[3] - 0.4).abs() < 1e-15);
        assert!((acc.weight[3] - (-0.4f64).exp()).abs() < 1e-15);
        for (j, l) in acc.exposure.iter().zip(&p.local) {
            assert_eq!(*j, 2.0 * l);
        }
    }

    #[test]
    fn exposure_uses_left_endpoint_state() {
        let p = DiffusionPath {
            dim: 1,
            scheme: Scheme::Projection,
            times: vec![0.0, 0.1, 0.2],
            positions: vec![0.0, 0.0, 0.0],
            local_increments: vec![0.3, 0.5],
            local: vec![0.0, 0.3, 0.8],
        };
        let alpha = ReactivityPath { breaks: vec![0.1], values: vec![1.0, 4.0], horizon: 0.2 };
        let acc = exposure_integral(&p, &alpha).unwrap();
        assert!((acc.exposure[2] - (0.3 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn exposure_rejects_misaligned_break() {
        let p = path_with_single_contact(0.2);
        let alpha = ReactivityPath { breaks: vec![0.15], values: vec![0.0, 1.0], horizon: 1.0 };
        assert_eq!(exposure_integral(&p, &alpha), Err(FunctionalError::Misaligned(0.15)));
    }

    #[test]
    fn exposure_accumulator_invariants() {
        let g = gated().rescale(0.1).unwrap();
        for i in 0..200 {
            let mut cs = derive_stream(1, StreamId::new(Purpose::Chain).path(i));
            let chain = g.sample_path(0, 0.5, &mut cs).unwrap();
            let mut ds = derive_stream(1, StreamId::new(Purpose::Diffusion).path(i));
            let path = simulate_rbm(&unit(), &[0.05], 0.5, 1e-3, &chain.jump_times, &mut ds).unwrap();
            let acc = exposure_integral(&path, &chain.reactivity(&g)).unwrap();
            assert_eq!(acc.exposure[0], 0.0);
            assert_eq!(acc.weight[0], 1.0);
            for w in acc.weight.windows(2) {
                assert!(w[1] <= w[0] && w[1] > 0.0);
            }
        }
    }

    #[test]
    fn running_stats_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
    }

    #[test]
    fn zero_reactivity_unit_payoff_is_exact() {
        let g = GeneratorMatrix::new(
            vec![StateSpec::new("a", 0.0), StateSpec::new("b", 0.0)],
            vec![vec![-1.0, 1.0], vec![3.0, -3.0]],
        )
        .unwrap();
        let phi = SwitchedPayoff::uniform(Payoff::constant(1.0), 2);
        let r = annealed_estimate(&unit(), &phi, &[0.5], 0, 0.3, &g, SimParams::projection(1e-3), 3000, 0.into())
            .unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.stderr, 0.0);
        let r = averaged_estimate(&unit(), &Payoff::constant(1.0), &[0.0], 0.3, 0.0, SimParams::projection(1e-3), 3000, 0.into())
            .unwrap();
        assert_eq!((r.mean, r.stderr), (1.0, 0.0));
    }

    #[test]
    fn frozen_chain_annealed_equals_quenched_pathwise() {
        let g = GeneratorMatrix::new(
            vec![StateSpec::new("a", 0.5), StateSpec::new("b", 2.0)],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let phi = SwitchedPayoff::uniform(Payoff::cos_pi(), 2);
        let sim = SimParams::projection(1e-3);
        let times = [0.1, 0.25];
        let a = annealed_estimate_times(&unit(), &phi, &[0.1], 1, &times, &g, sim, 2000, 7.into()).unwrap();
        let q = quenched_estimate_times(
            &unit(),
            &Payoff::cos_pi(),
            &[0.1],
            0.0,
            &times,
            &ReactivityPath::constant(2.0, 0.25),
            sim,
            2000,
            7.into(),
        )
        .unwrap();
        for (a, q) in a.iter().zip(&q) {
            assert_eq!(a.mean, q.mean);
            assert_eq!(a.stderr, q.stderr);
        }
    }

    #[test]
    fn quenched_identity_at_equal_times() {
        let alpha = ReactivityPath::constant(1.0, 1.0);
        let r = quenched_estimate(&unit(), &Payoff::cos_pi(), &[0.3], 0.4, 0.4, &alpha, SimParams::projection(1e-3), 10, 0.into())
            .unwrap();
        assert_eq!(r.mean, (std::f64::consts::PI * 0.3).cos());
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn quenched_errors() {
        let alpha = ReactivityPath::constant(1.0, 0.5);
        let sim = SimParams::projection(1e-3);
        assert!(matches!(
            quenched_estimate(&unit(), &Payoff::cos_pi(), &[0.3], 0.4, 0.2, &alpha, sim, 10, 0.into()),
            Err(FunctionalError::BadWindow { .. })
        ));
        assert!(matches!(
            quenched_estimate(&unit(), &Payoff::cos_pi(), &[0.3], 0.0, 0.8, &alpha, sim, 10, 0.into()),
            Err(FunctionalError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn contraction_and_monotone_exposure() {
        let sim = SimParams::projection(1e-3);
        let low = GeneratorMatrix::gated(1.0, 2.0, 2.0).unwrap();
        let high = GeneratorMatrix::gated(3.0, 2.0, 2.0).unwrap();
        let phi = SwitchedPayoff::uniform(Payoff::constant(1.0), 2);
        for x in [0.0, 0.2, 0.5] {
            let a = annealed_estimate(&unit(), &phi, &[x], 1, 0.3, &low, sim, 2000, 3.into()).unwrap();
            let b = annealed_estimate(&unit(), &phi, &[x], 1, 0.3, &high, sim, 2000, 3.into()).unwrap();
            assert!(a.mean.abs() <= 1.0 && b.mean.abs() <= 1.0);
            assert!(b.mean <= a.mean);
        }
    }

    #[test]
    fn neumann_eigenfunction_is_recovered() {
        // E_x[cos(pi X_t)] = exp(-pi^2 t / 2) cos(pi x) for reflected motion on [0, 1]
        let (t, x) = (0.1, 0.3);
        let r = averaged_estimate(&unit(), &Payoff::cos_pi(), &[x], t, 0.0, SimParams::projection(1e-4), 20_000, 5.into())
            .unwrap();
        let exact = (-std::f64::consts::PI.powi(2) * t / 2.0).exp() * (std::f64::consts::PI * x).cos();
        assert!((r.mean - exact).abs() < 3.0 * r.stderr + 2e-2, "{} vs {exact}", r.mean);
    }

    #[test]
    fn half_line_elastic_average() {
        // E[exp(-L_1)] from 0 = e^{1/2} erfc(1/sqrt 2)
        let sim = SimParams { dt: 0.05, scheme: Scheme::HalflineExact };
        let r = averaged_estimate(&Domain::HalfLine, &Payoff::constant(1.0), &[0.0], 1.0, 1.0, sim, 100_000, 2.into())
            .unwrap();
        let exact = 0.5f64.exp() * statrs::function::erf::erfc(std::f64::consts::FRAC_1_SQRT_2);
        assert!((r.mean - exact).abs() < 3.0 * r.stderr, "{} vs {exact}", r.mean);
    }

    #[test]
    fn payoff_bounds_and_validation() {
        let d = unit();
        assert_eq!(Payoff::constant(-2.0).bound(&d).unwrap(), 2.0);
        assert_eq!(Payoff::cos_pi().bound(&d).unwrap(), 1.0);
        assert!(Payoff::Coordinate { axis: 0 }.bound(&Domain::HalfLine).is_err());
        assert!(Payoff::CosPi { axis: 1 }.validate(&d).is_err());
        let tab = Payoff::Tabulated { x: vec![0.0, 0.5, 1.0], values: vec![1.0, 3.0, 2.0] };
        tab.validate(&d).unwrap();
        assert_eq!(tab.eval(&[0.25]), 2.0);
        assert_eq!(tab.eval(&[2.0]), 2.0);
        assert_eq!(tab.bound(&d).unwrap(), 3.0);
    }

    #[test]
    fn effective_reactivity_of_gated_chain() {
        assert!((effective_reactivity(&gated()).unwrap() - 0.5).abs() < 1e-15);
    }
}
