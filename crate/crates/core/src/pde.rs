//! Finite-difference oracles for `∂_t u = ½ u_xx` on `[0, 1]` with Robin
//! conditions `∂_n u + κ u = 0`.
//!
//! Nodes include both endpoints; the Robin condition closes the boundary
//! rows through a ghost node and a centred difference. With the outward
//! normal, `∂_n = -∂_x` at `x = 0`, so the discrete condition there is
//! `-(u_1 - u_{-1}) / (2Δx) + κ u_0 = 0`, and symmetrically at `x = 1`.
//!
//! Time stepping is Crank–Nicolson. Right after the start and after every
//! change of the boundary coefficient the first two steps are each replaced
//! by two implicit Euler half-steps, which damps the oscillations CN
//! produces for data that are incompatible with the new boundary
//! condition. Both kinds of step share the matrix `I - (h/2)A`.
//!
//! The coupled problem for several chain states is block tridiagonal with
//! the generator acting inside each node block; it is solved directly by
//! block elimination.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::chain::{GeneratorMatrix, ReactivityPath};
use crate::functional::{Payoff, SwitchedPayoff};

pub const DEFAULT_INTERIOR_POINTS: usize = 399;
pub const DEFAULT_PDE_DT: f64 = 1e-4;
/// Full CN steps replaced by implicit Euler half-steps after each restart.
pub const SMOOTHING_STEPS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("grid needs at least 3 interior points, got {0}")]
    GridTooSmall(usize),
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("final time must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("output time {0} is outside [0, T]")]
    BadOutputTime(f64),
    #[error("reactivity must be nonnegative, got {0}")]
    NegativeKappa(f64),
    #[error("reactivity path ends at {horizon}, before T = {t}")]
    HorizonTooShort { horizon: f64, t: f64 },
    #[error("initial data has {got} components, expected {expected}")]
    InitialShape { expected: usize, got: usize },
    #[error("singular block in the linear solve at node {0}")]
    Singular(usize),
}

/// Uniform grid on `[0, 1]` with `n` interior points and both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    n_interior: usize,
}

impl SpaceGrid {
    pub fn new(n_interior: usize) -> Result<Self, PdeError> {
        if n_interior < 3 {
            return Err(PdeError::GridTooSmall(n_interior));
        }
        Ok(Self { n_interior })
    }

    pub fn interior_points(&self) -> usize {
        self.n_interior
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.n_interior + 1) as f64
    }

    /// Number of unknowns per state, endpoints included.
    pub fn len(&self) -> usize {
        self.n_interior + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.len()).map(|i| i as f64 * dx).collect()
    }

    /// Grid with half the spacing; every node of `self` is a node of it.
    pub fn refined(&self) -> Self {
        Self { n_interior: 2 * self.n_interior + 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeParams {
    pub grid: SpaceGrid,
    pub dt: f64,
}

impl PdeParams {
    pub fn new(n_interior: usize, dt: f64) -> Result<Self, PdeError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PdeError::BadStep(dt));
        }
        Ok(Self { grid: SpaceGrid::new(n_interior)?, dt })
    }
}

impl Default for PdeParams {
    fn default() -> Self {
        Self { grid: SpaceGrid { n_interior: DEFAULT_INTERIOR_POINTS }, dt: DEFAULT_PDE_DT }
    }
}

/// Stored time levels of a finite-difference solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub nodes: Vec<f64>,
    /// State labels for the coupled problem; `None` for scalar problems.
    pub states: Option<Vec<String>>,
    /// `values[level][state][node]`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub dx: f64,
    pub dt: f64,
    pub method: &'static str,
    pub initial_max_norm: f64,
    /// Largest max-norm over every computed level, stored or not.
    pub max_level_norm: f64,
}

impl PdeSolution {
    pub fn level_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn level(&self, t: f64) -> Option<&[Vec<f64>]> {
        self.level_index(t).map(|i| self.values[i].as_slice())
    }

    /// Linear interpolation in space at a stored level.
    pub fn value_at(&self, level: usize, state: usize, x: f64) -> f64 {
        crate::functional::interpolate(&self.nodes, &self.values[level][state], x)
    }

    /// Trapezoid-rule integral of one state component at a stored level.
    pub fn mass(&self, level: usize, state: usize) -> f64 {
        let v = &self.values[level][state];
        let inner: f64 = v[1..v.len() - 1].iter().sum();
        self.dx * (inner + 0.5 * (v[0] + v[v.len() - 1]))
    }

    /// Discrete maximum principle over every computed level.
    pub fn satisfies_max_principle(&self) -> bool {
        self.max_level_norm <= self.initial_max_norm * (1.0 + 1e-12) + 1e-14
    }
}

fn max_norm(u: &[Vec<f64>]) -> f64 {
    u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Factorized `I - c A` for one step size and boundary configuration.
struct Factorization {
    m: usize,
    c: f64,
    kappas: Vec<f64>,
    /// Inverse pivot blocks, `m*m` per node.
    inv: Vec<f64>,
}

/// Discrete ½∂_xx with Robin closure: (lower, diag, upper) at node `i`.
#[inline]
fn stencil(i: usize, len: usize, dx: f64, kappa: f64) -> (f64, f64, f64) {
    let r = 0.5 / (dx * dx);
    if i == 0 {
        (0.0, -r * (2.0 + 2.0 * dx * kappa), 2.0 * r)
    } else if i == len - 1 {
        (2.0 * r, -r * (2.0 + 2.0 * dx * kappa), 0.0)
    } else {
        (r, -2.0 * r, r)
    }
}

struct Problem<'a> {
    grid: SpaceGrid,
    m: usize,
    q: &'a [f64],
}

impl Problem<'_> {
    fn factorize(&self, c: f64, kappas: &[f64]) -> Result<Factorization, PdeError> {
        let (len, m, dx) = (self.grid.len(), self.m, self.grid.dx());
        let mut inv = vec![0.0; len * m * m];
        let mut prev: Option<DMatrix<f64>> = None;
        for i in 0..len {
            let mut b = DMatrix::<f64>::zeros(m, m);
            let mut lower = 0.0;
            for k in 0..m {
                let (l, d, _) = stencil(i, len, dx, kappas[k]);
                lower = l;
                b[(k, k)] += 1.0 - c * d;
                for j in 0..m {
                    b[(k, j)] -= c * self.q[k * m + j];
                }
            }
            if let Some(w_prev) = prev.as_ref() {
                // S_i = B_i - a_i C'_{i-1} with a_i = -c*lower and C'_{i-1} = c_{i-1} W_{i-1}
                let (_, _, upper_prev) = stencil(i - 1, len, dx, kappas[0]);
                let a = -c * lower;
                let cu = -c * upper_prev;
                b -= w_prev * (a * cu);
            }
            let w = b.try_inverse().ok_or(PdeError::Singular(i))?;
            if !w.iter().all(|v| v.is_finite()) {
                return Err(PdeError::Singular(i));
            }
            for r in 0..m {
                for s in 0..m {
                    inv[(i * m + r) * m + s] = w[(r, s)];
                }
            }
            prev = Some(w);
        }
        Ok(Factorization { m, c, kappas: kappas.to_vec(), inv })
    }

    /// `u + c' A u` into `out` (node-major, `m` values per node).
    fn apply_explicit(&self, c: f64, kappas: &[f64], u: &[f64], out: &mut [f64]) {
        let (len, m, dx) = (self.grid.len(), self.m, self.grid.dx());
        for i in 0..len {
            for k in 0..m {
                let (l, d, up) = stencil(i, len, dx, kappas[k]);
                let mut au = d * u[i * m + k];
                if i > 0 {
                    au += l * u[(i - 1) * m + k];
                }
                if i + 1 < len {
                    au += up * u[(i + 1) * m + k];
                }
                for j in 0..m {
                    au += self.q[k * m + j] * u[i * m + j];
                }
                out[i * m + k] = u[i * m + k] + c * au;
            }
        }
    }

    /// Solves `(I - cA) u = rhs` in place.
    fn solve(&self, f: &Factorization, rhs: &mut [f64], tmp: &mut [f64]) {
        let (len, m, dx) = (self.grid.len(), f.m, self.grid.dx());
        let c = f.c;
        let block = |i: usize| &f.inv[i * m * m..(i + 1) * m * m];
        let mul = |w: &[f64], v: &[f64], out: &mut [f64]| {
            for r in 0..m {
                out[r] = (0..m).map(|s| w[r * m + s] * v[s]).sum();
            }
        };
        // forward: y_i = W_i (d_i - a_i y_{i-1})
        for i in 0..len {
            let (l, _, _) = stencil(i, len, dx, f.kappas[0]);
            let a = -c * l;
            for k in 0..m {
                tmp[k] = rhs[i * m + k] - if i > 0 { a * rhs[(i - 1) * m + k] } else { 0.0 };
            }
            let (head, tail) = rhs.split_at_mut(i * m);
            let _ = head;
            mul(block(i), &tmp[..m], &mut tail[..m]);
        }
        // backward: u_i = y_i - c_i W_i u_{i+1}
        for i in (0..len - 1).rev() {
            let (_, _, up) = stencil(i, len, dx, f.kappas[0]);
            let cu = -c * up;
            let next: Vec<f64> = rhs[(i + 1) * m..(i + 2) * m].to_vec();
            let mut wn = vec![0.0; m];
            mul(block(i), &next, &mut wn);
            for k in 0..m {
                rhs[i * m + k] -= cu * wn[k];
            }
        }
    }
}

/// One constant-coefficient stretch of the time axis.
struct Stretch {
    start: f64,
    end: f64,
    kappas: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn march(
    params: &PdeParams,
    m: usize,
    q: &[f64],
    init: &[Vec<f64>],
    kappa_at: &dyn Fn(f64) -> Vec<f64>,
    switch_times: &[f64],
    t_end: f64,
    out_times: &[f64],
    states: Option<Vec<String>>,
    method: &'static str,
) -> Result<PdeSolution, PdeError> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(PdeError::BadHorizon(t_end));
    }
    if !(params.dt > 0.0 && params.dt.is_finite()) {
        return Err(PdeError::BadStep(params.dt));
    }
    let grid = params.grid;
    let len = grid.len();
    if init.len() != m || init.iter().any(|v| v.len() != len) {
        return Err(PdeError::InitialShape { expected: m, got: init.len() });
    }
    for &t in out_times {
        if !(t >= 0.0 && t <= t_end * (1.0 + 1e-12)) {
            return Err(PdeError::BadOutputTime(t));
        }
    }

    let eq = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut cuts: Vec<f64> = vec![0.0, t_end];
    cuts.extend(out_times.iter().copied().filter(|&t| t > 0.0 && t < t_end));
    cuts.extend(switch_times.iter().copied().filter(|&t| t > 0.0 && t < t_end));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| eq(*a, *b));
    let stretches: Vec<Stretch> = cuts
        .windows(2)
        .map(|w| Stretch { start: w[0], end: w[1], kappas: kappa_at(w[0]) })
        .collect();
    let mut want: Vec<f64> = out_times.to_vec();
    want.sort_by(f64::total_cmp);
    want.dedup_by(|a, b| eq(*a, *b));

    let problem = Problem { grid, m, q };
    let mut u = vec![0.0; len * m];
    for (k, comp) in init.iter().enumerate() {
        for i in 0..len {
            u[i * m + k] = comp[i];
        }
    }
    let unpack = |u: &[f64]| -> Vec<Vec<f64>> {
        (0..m).map(|k| (0..len).map(|i| u[i * m + k]).collect()).collect()
    };
    let initial_max_norm = max_norm(init);
    let mut max_level_norm = initial_max_norm;
    let mut times = vec![0.0];
    let mut values = vec![unpack(&u)];

    let mut rhs = vec![0.0; len * m];
    let mut tmp = vec![0.0; m];
    let mut fact: Option<Factorization> = None;
    let mut prev_kappas: Option<Vec<f64>> = None;
    let mut smoothing_left = 0usize;

    for s in &stretches {
        for &kp in &s.kappas {
            if !(kp >= 0.0) {
                return Err(PdeError::NegativeKappa(kp));
            }
        }
        if prev_kappas.as_ref() != Some(&s.kappas) {
            smoothing_left = SMOOTHING_STEPS;
        }
        let span = s.end - s.start;
        let steps = ((span / params.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let c = 0.5 * h;
        let stale = match &fact {
            Some(f) => f.c != c || f.kappas != s.kappas,
            None => true,
        };
        if stale {
            fact = Some(problem.factorize(c, &s.kappas)?);
        }
        let f = fact.as_ref().unwrap();
        for _ in 0..steps {
            if smoothing_left > 0 {
                for _ in 0..2 {
                    rhs.copy_from_slice(&u);
                    problem.solve(f, &mut rhs, &mut tmp);
                    std::mem::swap(&mut u, &mut rhs);
                    max_level_norm = max_level_norm.max(u.iter().fold(0.0f64, |a, v| a.max(v.abs())));
                }
                smoothing_left -= 1;
            } else {
                problem.apply_explicit(c, &s.kappas, &u, &mut rhs);
                problem.solve(f, &mut rhs, &mut tmp);
                std::mem::swap(&mut u, &mut rhs);
                max_level_norm = max_level_norm.max(u.iter().fold(0.0f64, |a, v| a.max(v.abs())));
            }
        }
        prev_kappas = Some(s.kappas.clone());
        if want.iter().any(|&t| eq(t, s.end)) {
            times.push(s.end);
            values.push(unpack(&u));
        }
    }
    if want.is_empty() {
        times.push(t_end);
        values.push(unpack(&u));
    }

    Ok(PdeSolution {
        times,
        nodes: grid.nodes(),
        states,
        values,
        dx: grid.dx(),
        dt: params.dt,
        method,
        initial_max_norm,
        max_level_norm,
    })
}

/// Constant-coefficient Robin problem, `∂_n u + κ u = 0` at both ends.
pub fn solve_constant_robin(
    params: &PdeParams,
    kappa: f64,
    f: &Payoff,
    t_end: f64,
    out_times: &[f64],
) -> Result<PdeSolution, PdeError> {
    if !(kappa >= 0.0) {
        return Err(PdeError::NegativeKappa(kappa));
    }
    solve_quenched_robin(params, &ReactivityPath::constant(kappa, t_end), f, t_end, out_times)
}

/// Forward problem with boundary coefficient `α_t` at time `t`, built by
/// restarting an autonomous Robin solve on each constant stretch of `α`.
pub fn solve_quenched_robin(
    params: &PdeParams,
    alpha: &ReactivityPath,
    f: &Payoff,
    t_end: f64,
    out_times: &[f64],
) -> Result<PdeSolution, PdeError> {
    let init = vec![params.grid.nodes().iter().map(|&x| f.eval(&[x])).collect()];
    solve_quenched_robin_with(params, alpha, &init, t_end, out_times)
}

pub fn solve_quenched_robin_with(
    params: &PdeParams,
    alpha: &ReactivityPath,
    init: &[Vec<f64>],
    t_end: f64,
    out_times: &[f64],
) -> Result<PdeSolution, PdeError> {
    if alpha.horizon < t_end * (1.0 - 1e-12) {
        return Err(PdeError::HorizonTooShort { horizon: alpha.horizon, t: t_end });
    }
    let method = if alpha.breaks.is_empty() { "crank_nicolson_robin" } else { "crank_nicolson_robin_piecewise" };
    march(
        params,
        1,
        &[0.0],
        init,
        &|t| vec![alpha.value_at(t)],
        &alpha.breaks,
        t_end,
        out_times,
        None,
        method,
    )
}

/// Coupled system `∂_t u_k = ½ u_k'' + Σ_j q_kj u_j` with the Robin
/// coefficient of state `k` on component `k`.
pub fn solve_coupled_robin(
    params: &PdeParams,
    g: &GeneratorMatrix,
    phi: &SwitchedPayoff,
    t_end: f64,
    out_times: &[f64],
) -> Result<PdeSolution, PdeError> {
    if phi.per_state.len() != g.len() {
        return Err(PdeError::InitialShape { expected: g.len(), got: phi.per_state.len() });
    }
    let nodes = params.grid.nodes();
    let init: Vec<Vec<f64>> = (0..g.len())
        .map(|k| nodes.iter().map(|&x| phi.eval(&[x], k)).collect())
        .collect();
    solve_coupled_robin_with(params, g, &init, t_end, out_times)
}

pub fn solve_coupled_robin_with(
    params: &PdeParams,
    g: &GeneratorMatrix,
    init: &[Vec<f64>],
    t_end: f64,
    out_times: &[f64],
) -> Result<PdeSolution, PdeError> {
    let q: Vec<f64> = g.rows().into_iter().flatten().collect();
    let kappas = g.kappas();
    march(
        params,
        g.len(),
        &q,
        init,
        &|_| kappas.clone(),
        &[],
        t_end,
        out_times,
        Some(g.states().iter().map(|s| s.label.clone()).collect()),
        "crank_nicolson_coupled_robin",
    )
}

/// Spatial self-convergence of the constant-Robin solver on three nested
/// grids sharing the time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub interior_points: [usize; 3],
    /// Max-norm differences `|u_h - u_{h/2}|` and `|u_{h/2} - u_{h/4}|` on
    /// the coarse nodes.
    pub differences: [f64; 2],
    pub observed_order: f64,
    /// Max-norm errors of the two coarser solutions against the
    /// Richardson-extrapolated reference.
    pub richardson_errors: [f64; 2],
}

pub fn spatial_convergence(
    n_coarse: usize,
    dt: f64,
    kappa: f64,
    f: &Payoff,
    t: f64,
) -> Result<ConvergenceReport, PdeError> {
    let p0 = PdeParams::new(n_coarse, dt)?;
    let p1 = PdeParams { grid: p0.grid.refined(), dt };
    let p2 = PdeParams { grid: p1.grid.refined(), dt };
    let sols = [p0, p1, p2]
        .iter()
        .map(|p| solve_constant_robin(p, kappa, f, t, &[t]))
        .collect::<Result<Vec<_>, _>>()?;
    let last = |s: &PdeSolution| s.values.last().unwrap()[0].clone();
    let (u0, u1, u2) = (last(&sols[0]), last(&sols[1]), last(&sols[2]));
    let coarse = p0.grid.len();
    let mut d = [0.0f64; 2];
    let mut e = [0.0f64; 2];
    for i in 0..coarse {
        let (a, b, c) = (u0[i], u1[2 * i], u2[4 * i]);
        let reference = c + (c - b) / 3.0;
        d[0] = d[0].max((a - b).abs());
        d[1] = d[1].max((b - c).abs());
        e[0] = e[0].max((a - reference).abs());
        e[1] = e[1].max((b - reference).abs());
    }
    Ok(ConvergenceReport {
        interior_points: [p0.grid.interior_points(), p1.grid.interior_points(), p2.grid.interior_points()],
        differences: d,
        observed_order: (d[0] / d[1]).log2(),
        richardson_errors: e,
    })
}
