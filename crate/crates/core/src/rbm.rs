//! Reflected Brownian motion with boundary local time.
//!
//! The projection scheme takes a Gaussian Euler step of the free motion
//! (generator `½Δ`) and maps it back onto the closed domain with the
//! nearest-point projection. The distance pushed is the local-time increment,
//! i.e. the size of the reflection term in the discrete decomposition
//! `X = x + W - ∫ n dL`. The half-line scheme is exact at grid times and is
//! used as an oracle for the projection scheme's bias.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, GeometryError};
use crate::stream::Stream;

/// Default diffusion time step.
pub const DEFAULT_DT: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbmError {
    #[error("starting point lies outside the closed domain")]
    StartOutside,
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("time window [{0}, {1}] is empty")]
    EmptyWindow(f64, f64),
    #[error("time {t} is outside the path window [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("the exact half-line scheme needs the half-line domain, got {0}")]
    NotHalfLine(&'static str),
    #[error("expected {expected} increments, got {got}")]
    IncrementCount { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Projection,
    HalflineExact,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Projection => "projection",
            Scheme::HalflineExact => "halfline_exact",
        }
    }
}

/// Simulation time grid: a uniform `dt` grid refined at required times
/// (chain jumps, report times) so that those are hit exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, dt: f64, required: &[f64]) -> Result<Self, RbmError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RbmError::BadStep(dt));
        }
        if !(end > start) {
            return Err(RbmError::EmptyWindow(start, end));
        }
        let tol = 1e-9 * dt;
        // priority: 0 uniform, 1 required, 2 window endpoint
        let mut pts: Vec<(f64, u8)> = Vec::with_capacity(((end - start) / dt) as usize + required.len() + 2);
        let mut k = 1u64;
        loop {
            let t = start + k as f64 * dt;
            if t >= end - tol {
                break;
            }
            pts.push((t, 0));
            k += 1;
        }
        pts.extend(required.iter().filter(|&&t| t > start && t < end).map(|&t| (t, 1)));
        pts.push((end, 2));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut times = Vec::with_capacity(pts.len() + 1);
        times.push(start);
        let mut last_priority = 2;
        for (t, pr) in pts {
            let last = *times.last().unwrap();
            if t - last <= tol {
                // keep the more exact value when two points coincide
                if pr > last_priority {
                    *times.last_mut().unwrap() = t;
                    last_priority = pr;
                }
                continue;
            }
            times.push(t);
            last_priority = pr;
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the grid point equal to `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t);
        (i < self.times.len() && self.times[i] == t).then_some(i)
    }
}

/// A simulated reflected path on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub dim: usize,
    pub scheme: Scheme,
    pub times: Vec<f64>,
    /// Row-major positions, `dim` entries per grid time.
    pub positions: Vec<f64>,
    /// Local-time increment of each step; `local_increments[m]` belongs to
    /// the step ending at `times[m + 1]`.
    pub local_increments: Vec<f64>,
    /// Cumulative local time at each grid time.
    pub local: Vec<f64>,
}

impl DiffusionPath {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            scheme: Scheme::Projection,
            times: Vec::new(),
            positions: Vec::new(),
            local_increments: Vec::new(),
            local: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, m: usize) -> &[f64] {
        &self.positions[m * self.dim..(m + 1) * self.dim]
    }

    pub fn final_position(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    /// `L_t`, linearly interpolated inside a step.
    pub fn local_time(&self, t: f64) -> Result<f64, RbmError> {
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        if !(t >= start && t <= end) {
            return Err(RbmError::OutOfRange { t, start, end });
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i >= self.times.len() {
            return Ok(*self.local.last().unwrap());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.local[i - 1] + w * self.local_increments[i - 1])
    }

    fn reset(&mut self, dim: usize, scheme: Scheme, grid: &TimeGrid) {
        let m = grid.times.len();
        self.dim = dim;
        self.scheme = scheme;
        self.times.clear();
        self.times.extend_from_slice(&grid.times);
        self.positions.clear();
        self.positions.reserve(m * dim);
        self.local_increments.clear();
        self.local_increments.reserve(m);
        self.local.clear();
        self.local.reserve(m);
    }

    /// Checks the pathwise invariants, returning a description of the first
    /// failure. For the projection scheme a positive increment requires the
    /// step to end on the boundary; the exact half-line scheme records
    /// contacts that happen between grid times, so only the running minimum
    /// reaching zero is required there.
    pub fn check_invariants(&self, domain: &Domain) -> Result<(), String> {
        if self.local.first() != Some(&0.0) {
            return Err("L_0 != 0".into());
        }
        for m in 0..self.len() {
            let p = self.position(m);
            if !domain.contains(p).map_err(|e| e.to_string())? {
                return Err(format!("position {p:?} at step {m} outside the domain"));
            }
        }
        for (m, &dl) in self.local_increments.iter().enumerate() {
            if !(dl >= 0.0) {
                return Err(format!("negative local-time increment {dl} at step {m}"));
            }
            if self.local[m + 1] < self.local[m] {
                return Err(format!("local time decreased at step {m}"));
            }
            if dl > 0.0 && self.scheme == Scheme::Projection && !domain.on_boundary(self.position(m + 1)) {
                return Err(format!("local time grew at step {m} away from the boundary"));
            }
        }
        Ok(())
    }
}

/// Simulates the projection scheme on `[0, horizon]`, refining the uniform
/// grid at `split_times`.
pub fn simulate_rbm(
    domain: &Domain,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    split_times: &[f64],
    stream: &mut Stream,
) -> Result<DiffusionPath, RbmError> {
    let grid = TimeGrid::new(0.0, horizon, dt, split_times)?;
    let mut path = DiffusionPath::empty(domain.dimension());
    simulate_rbm_on(domain, x0, &grid, stream, &mut path)?;
    Ok(path)
}

/// Projection scheme on an explicit grid, writing into `path`.
pub fn simulate_rbm_on(
    domain: &Domain,
    x0: &[f64],
    grid: &TimeGrid,
    stream: &mut Stream,
    path: &mut DiffusionPath,
) -> Result<(), RbmError> {
    project_steps(domain, x0, grid, path, |_, sd, _| sd * stream.gaussian())
}

/// Projection scheme driven by given Brownian increments, `dim` per step
/// in step order. Paths on different grids built from sums of the same
/// fine increments are coupled.
pub fn simulate_rbm_driven(
    domain: &Domain,
    x0: &[f64],
    grid: &TimeGrid,
    increments: &[f64],
    path: &mut DiffusionPath,
) -> Result<(), RbmError> {
    let dim = domain.dimension();
    if increments.len() != grid.steps() * dim {
        return Err(RbmError::IncrementCount { expected: grid.steps() * dim, got: increments.len() });
    }
    project_steps(domain, x0, grid, path, |step, _, axis| increments[step * dim + axis])
}

#[inline]
fn project_steps(
    domain: &Domain,
    x0: &[f64],
    grid: &TimeGrid,
    path: &mut DiffusionPath,
    mut increment: impl FnMut(usize, f64, usize) -> f64,
) -> Result<(), RbmError> {
    if !domain.contains(x0)? {
        return Err(RbmError::StartOutside);
    }
    let dim = domain.dimension();
    path.reset(dim, Scheme::Projection, grid);
    let mut x = [0.0f64; 2];
    x[..dim].copy_from_slice(x0);
    path.positions.extend_from_slice(&x[..dim]);
    path.local.push(0.0);
    let mut l = 0.0;
    for (step, w) in grid.times.windows(2).enumerate() {
        let sd = (w[1] - w[0]).sqrt();
        for (axis, xi) in x[..dim].iter_mut().enumerate() {
            *xi += increment(step, sd, axis);
        }
        let push = domain.project_in_place(&mut x[..dim]).push;
        l += push;
        path.positions.extend_from_slice(&x[..dim]);
        path.local_increments.push(push);
        path.local.push(l);
    }
    Ok(())
}

/// Exact half-line scheme on `[0, horizon]` with a uniform `dt` grid.
pub fn simulate_rbm_halfline_exact(
    x0: f64,
    horizon: f64,
    dt: f64,
    stream: &mut Stream,
) -> Result<DiffusionPath, RbmError> {
    let grid = TimeGrid::new(0.0, horizon, dt, &[])?;
    let mut path = DiffusionPath::empty(1);
    simulate_halfline_exact_on(x0, &grid, stream, &mut path)?;
    Ok(path)
}

/// Exact half-line scheme on an explicit grid.
///
/// With `Y = x0 + W`, the reflected path is `X = Y + L` where
/// `L_t = max(0, -min_{s≤t} Y_s)`. The minimum of `Y` over each step is
/// drawn from its Brownian-bridge law given the endpoints, so `(X, L)` is
/// exact in distribution at every grid time.
pub fn simulate_halfline_exact_on(
    x0: f64,
    grid: &TimeGrid,
    stream: &mut Stream,
    path: &mut DiffusionPath,
) -> Result<(), RbmError> {
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(RbmError::StartOutside);
    }
    path.reset(1, Scheme::HalflineExact, grid);
    path.positions.push(x0);
    path.local.push(0.0);
    let (mut y, mut run_min, mut l) = (x0, x0, 0.0f64);
    for w in grid.times.windows(2) {
        let h = w[1] - w[0];
        let y_next = y + h.sqrt() * stream.gaussian();
        let gap = y_next - y;
        let bridge_min = 0.5 * (y + y_next - (gap * gap - 2.0 * h * stream.open01().ln()).sqrt());
        run_min = run_min.min(bridge_min);
        let l_next = (-run_min).max(0.0);
        path.positions.push(y_next + l_next);
        path.local_increments.push(l_next - l);
        path.local.push(l_next);
        y = y_next;
        l = l_next;
    }
    Ok(())
}

/// Dispatches on `scheme`; the exact scheme requires the half-line.
pub fn simulate_path(
    domain: &Domain,
    scheme: Scheme,
    x0: &[f64],
    grid: &TimeGrid,
    stream: &mut Stream,
    path: &mut DiffusionPath,
) -> Result<(), RbmError> {
    match scheme {
        Scheme::Projection => simulate_rbm_on(domain, x0, grid, stream, path),
        Scheme::HalflineExact => {
            if *domain != Domain::HalfLine {
                return Err(RbmError::NotHalfLine(domain.kind()));
            }
            domain.contains(x0)?;
            simulate_halfline_exact_on(x0[0], grid, stream, path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{derive_stream, Purpose, StreamId};

    fn stream(i: u64) -> Stream {
        derive_stream(17, StreamId::new(Purpose::Diffusion).path(i))
    }

    #[test]
    fn grid_hits_required_times_exactly() {
        let g = TimeGrid::new(0.0, 1.0, 0.1, &[0.25, 0.3, 0.999_999_999_999]).unwrap();
        assert_eq!(g.start(), 0.0);
        assert_eq!(g.end(), 1.0);
        assert!(g.index_of(0.25).is_some());
        // 0.3 coincides with a uniform point up to rounding; the exact value wins
        assert!(g.index_of(0.3).is_some());
        assert!(g.times().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(0.0, 1.0, 0.0, &[]).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1, &[]).is_err());
    }

    #[test]
    fn grid_with_offset_start_matches_uniform_points() {
        let g = TimeGrid::new(0.25, 0.5, 1e-3, &[]).unwrap();
        assert_eq!(g.steps(), 250);
    }

    #[test]
    fn start_outside_is_rejected() {
        let d = Domain::unit_interval();
        assert_eq!(
            simulate_rbm(&d, &[1.5], 1.0, 0.01, &[], &mut stream(0)).unwrap_err(),
            RbmError::StartOutside
        );
        assert!(matches!(
            simulate_rbm(&d, &[0.5], 1.0, -0.01, &[], &mut stream(0)),
            Err(RbmError::BadStep(_))
        ));
    }

    #[test]
    fn exact_scheme_needs_half_line() {
        let g = TimeGrid::new(0.0, 1.0, 0.1, &[]).unwrap();
        let mut p = DiffusionPath::empty(1);
        let err = simulate_path(&Domain::unit_interval(), Scheme::HalflineExact, &[0.5], &g, &mut stream(0), &mut p);
        assert_eq!(err, Err(RbmError::NotHalfLine("interval")));
    }

    #[test]
    fn interior_start_short_horizon_has_no_local_time() {
        let d = Domain::unit_interval();
        for i in 0..200 {
            let p = simulate_rbm(&d, &[0.5], 1e-3, 1e-4, &[], &mut stream(i)).unwrap();
            assert_eq!(*p.local.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn local_time_interpolates_and_is_monotone() {
        let d = Domain::unit_interval();
        let p = simulate_rbm(&d, &[0.0], 0.5, 0.01, &[], &mut stream(3)).unwrap();
        assert_eq!(p.local_time(0.0).unwrap(), 0.0);
        let total: f64 = p.local_increments.iter().sum();
        assert!((p.local_time(0.5).unwrap() - total).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 0..=500 {
            let l = p.local_time(k as f64 * 1e-3).unwrap();
            assert!(l >= prev);
            prev = l;
        }
        assert!(p.local_time(0.6).is_err());
        p.check_invariants(&d).unwrap();
    }

    #[test]
    fn far_start_never_reaches_origin() {
        let hits = (0..100_000)
            .filter(|&i| {
                let p = simulate_rbm_halfline_exact(5.0, 0.01, 0.01, &mut stream(i)).unwrap();
                *p.local.last().unwrap() > 0.0
            })
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn exact_scheme_mean_local_time() {
        // E[L_1] from 0 equals E|N(0,1)| = sqrt(2/pi)
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let p = simulate_rbm_halfline_exact(0.0, 1.0, 0.25, &mut stream(i)).unwrap();
            let l = *p.local.last().unwrap();
            s1 += l;
            s2 += l * l;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn exact_scheme_invariants() {
        let g = TimeGrid::new(0.0, 1.0, 0.05, &[]).unwrap();
        let mut p = DiffusionPath::empty(1);
        for i in 0..1000 {
            simulate_halfline_exact_on(0.3, &g, &mut stream(i), &mut p).unwrap();
            p.check_invariants(&Domain::HalfLine).unwrap();
        }
    }

    #[test]
    fn same_stream_same_path() {
        let d = Domain::disk([0.0, 0.0], 1.0).unwrap();
        let a = simulate_rbm(&d, &[0.2, 0.1], 0.3, 1e-3, &[0.1234], &mut stream(8)).unwrap();
        let b = simulate_rbm(&d, &[0.2, 0.1], 0.3, 1e-3, &[0.1234], &mut stream(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn driven_path_matches_stream_path() {
        let d = Domain::unit_interval();
        let grid = TimeGrid::new(0.0, 0.3, 1e-2, &[]).unwrap();
        let mut a = DiffusionPath::empty(1);
        simulate_rbm_on(&d, &[0.2], &grid, &mut stream(4), &mut a).unwrap();
        let mut s = stream(4);
        let inc: Vec<f64> = grid.times().windows(2).map(|w| (w[1] - w[0]).sqrt() * s.gaussian()).collect();
        let mut b = DiffusionPath::empty(1);
        simulate_rbm_driven(&d, &[0.2], &grid, &inc, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(simulate_rbm_driven(&d, &[0.2], &grid, &inc[1..], &mut b).is_err());
    }
}
