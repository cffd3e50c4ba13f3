//! Finite-state continuous-time Markov chains for the boundary reactivity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::Stream;

/// Largest tolerated absolute row sum of a generator.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A constraint violated by a candidate generator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorViolation {
    #[error("generator has no states")]
    Empty,
    #[error("q has {rows} rows but {states} states are declared")]
    StateCountMismatch { rows: usize, states: usize },
    #[error("row {row} of q has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("entry q[{row}][{col}] is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("off-diagonal entry q[{row}][{col}] = {value} is negative")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("diagonal entry q[{row}][{row}] = {value} is positive")]
    PositiveDiagonal { row: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("reactivity must be nonnegative (state {label:?} has kappa = {kappa})")]
    NegativeReactivity { label: String, kappa: f64 },
    #[error("state label {0:?} is used twice")]
    DuplicateLabel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid generator: {0}")]
    Invalid(#[from] GeneratorViolation),
    #[error("chain is reducible; no unique stationary distribution")]
    Reducible,
    #[error("time {t} is outside the path horizon [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("time scale must be positive, got {0}")]
    BadScale(f64),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("state index {0} out of range")]
    StateIndex(usize),
    #[error("jump times must be strictly increasing in (0, horizon] with distinct consecutive states")]
    MalformedPath,
}

/// A chain state: a label and the Robin coefficient attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub label: String,
    pub kappa: f64,
}

impl StateSpec {
    pub fn new(label: impl Into<String>, kappa: f64) -> Self {
        Self { label: label.into(), kappa }
    }
}

/// Validated generator `Q` together with the per-state reactivities.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    states: Vec<StateSpec>,
    q: Vec<f64>,
}

/// Checks every generator invariant and reports the first one violated.
pub fn validate_generator(states: &[StateSpec], q: &[Vec<f64>]) -> Result<(), GeneratorViolation> {
    let n = states.len();
    if n == 0 {
        return Err(GeneratorViolation::Empty);
    }
    if q.len() != n {
        return Err(GeneratorViolation::StateCountMismatch { rows: q.len(), states: n });
    }
    for (i, row) in q.iter().enumerate() {
        if row.len() != n {
            return Err(GeneratorViolation::NotSquare { row: i, len: row.len(), expected: n });
        }
    }
    for (i, row) in q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(GeneratorViolation::NonFinite { row: i, col: j });
            }
            if i != j && v < 0.0 {
                return Err(GeneratorViolation::NegativeOffDiagonal { row: i, col: j, value: v });
            }
        }
        if row[i] > 0.0 {
            return Err(GeneratorViolation::PositiveDiagonal { row: i, value: row[i] });
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > ROW_SUM_TOL {
            return Err(GeneratorViolation::RowSum { row: i, sum });
        }
    }
    for (i, s) in states.iter().enumerate() {
        if !(s.kappa >= 0.0 && s.kappa.is_finite()) {
            return Err(GeneratorViolation::NegativeReactivity {
                label: s.label.clone(),
                kappa: s.kappa,
            });
        }
        if states[..i].iter().any(|o| o.label == s.label) {
            return Err(GeneratorViolation::DuplicateLabel(s.label.clone()));
        }
    }
    Ok(())
}

impl GeneratorMatrix {
    pub fn new(states: Vec<StateSpec>, q: Vec<Vec<f64>>) -> Result<Self, GeneratorViolation> {
        validate_generator(&states, &q)?;
        Ok(Self { states, q: q.into_iter().flatten().collect() })
    }

    /// The two-state gating chain: closed (κ = 0) and open (κ = `kappa`),
    /// opening at rate `lambda_on` and closing at rate `lambda_off`.
    pub fn gated(kappa: f64, lambda_on: f64, lambda_off: f64) -> Result<Self, GeneratorViolation> {
        Self::new(
            vec![StateSpec::new("closed", 0.0), StateSpec::new("open", kappa)],
            vec![vec![-lambda_on, lambda_on], vec![lambda_off, -lambda_off]],
        )
    }

    /// A single absorbing state with reactivity `kappa`.
    pub fn constant(kappa: f64) -> Result<Self, GeneratorViolation> {
        Self::new(vec![StateSpec::new("const", kappa)], vec![vec![0.0]])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateSpec] {
        &self.states
    }

    pub fn kappa(&self, state: usize) -> f64 {
        self.states[state].kappa
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.kappa).collect()
    }

    pub fn label(&self, state: usize) -> &str {
        &self.states[state].label
    }

    pub fn index_of(&self, label: &str) -> Result<usize, ChainError> {
        self.states
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| ChainError::UnknownState(label.to_string()))
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.len() + j]
    }

    /// Total exit rate `-q_ii`.
    #[inline]
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rate(i, i)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.len()).map(|r| r.to_vec()).collect()
    }

    /// Generator of the chain run `1/eps` times faster.
    pub fn rescale(&self, eps: f64) -> Result<Self, ChainError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ChainError::BadScale(eps));
        }
        Ok(Self { states: self.states.clone(), q: self.q.iter().map(|v| v / eps).collect() })
    }

    /// Strong connectivity of the transition graph on the support of `Q`.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let r = if forward { self.rate(i, j) } else { self.rate(j, i) };
                    if i != j && r > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Solves `πQ = 0`, `Σπ = 1` with the last balance equation replaced by
    /// the normalization.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, ChainError> {
        if !self.is_irreducible() {
            return Err(ChainError::Reducible);
        }
        let n = self.len();
        let mut a = DMatrix::from_fn(n, n, |i, j| self.rate(j, i));
        let mut b = DVector::zeros(n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        b[n - 1] = 1.0;
        let pi = a.lu().solve(&b).ok_or(ChainError::Reducible)?;
        if pi.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(ChainError::Reducible);
        }
        Ok(pi.iter().copied().collect())
    }

    /// Stationary mean of the reactivity, `Σ π_i κ_i`.
    pub fn effective_reactivity(&self) -> Result<f64, ChainError> {
        let pi = self.stationary_distribution()?;
        Ok(pi.iter().zip(&self.states).map(|(p, s)| p * s.kappa).sum())
    }

    /// Samples an exact path on `[0, horizon]` started in `initial`.
    pub fn sample_path(
        &self,
        initial: usize,
        horizon: f64,
        stream: &mut Stream,
    ) -> Result<ChainPath, ChainError> {
        if initial >= self.len() {
            return Err(ChainError::StateIndex(initial));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ChainError::BadHorizon(horizon));
        }
        let n = self.len();
        let mut weights = vec![0.0; n];
        let mut path = ChainPath {
            initial,
            jump_times: Vec::new(),
            states: Vec::new(),
            horizon,
        };
        let (mut t, mut state) = (0.0, initial);
        loop {
            t += stream.exponential(self.exit_rate(state));
            if t > horizon {
                break;
            }
            for (j, w) in weights.iter_mut().enumerate() {
                *w = if j == state { 0.0 } else { self.rate(state, j) };
            }
            state = stream.categorical(&weights);
            path.jump_times.push(t);
            path.states.push(state);
        }
        Ok(path)
    }

    /// Draws a state from a probability vector.
    pub fn sample_state(&self, probs: &[f64], stream: &mut Stream) -> usize {
        stream.categorical(probs)
    }
}

/// `sample_chain_path` in free-function form.
pub fn sample_chain_path(
    g: &GeneratorMatrix,
    initial: usize,
    horizon: f64,
    stream: &mut Stream,
) -> Result<ChainPath, ChainError> {
    g.sample_path(initial, horizon, stream)
}

/// Right-continuous piecewise-constant trajectory of the chain on
/// `[0, horizon]`, stored as state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub initial: usize,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl ChainPath {
    pub fn constant(state: usize, horizon: f64) -> Self {
        Self { initial: state, jump_times: Vec::new(), states: Vec::new(), horizon }
    }

    /// Builds a path from explicit `(time, state)` jumps, checking ordering.
    pub fn from_jumps(
        initial: usize,
        jumps: &[(f64, usize)],
        horizon: f64,
    ) -> Result<Self, ChainError> {
        let path = Self {
            initial,
            jump_times: jumps.iter().map(|j| j.0).collect(),
            states: jumps.iter().map(|j| j.1).collect(),
            horizon,
        };
        path.check()?;
        Ok(path)
    }

    pub fn check(&self) -> Result<(), ChainError> {
        if !(self.horizon > 0.0) {
            return Err(ChainError::BadHorizon(self.horizon));
        }
        let mut prev_t = 0.0;
        let mut prev_s = self.initial;
        for (&t, &s) in self.jump_times.iter().zip(&self.states) {
            if !(t > prev_t && t <= self.horizon) || s == prev_s {
                return Err(ChainError::MalformedPath);
            }
            prev_t = t;
            prev_s = s;
        }
        if self.jump_times.len() != self.states.len() {
            return Err(ChainError::MalformedPath);
        }
        Ok(())
    }

    /// State at time `t`; at a jump time the post-jump state.
    pub fn state_at(&self, t: f64) -> Result<usize, ChainError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(ChainError::OutOfRange { t, horizon: self.horizon });
        }
        Ok(self.state_at_unchecked(t))
    }

    #[inline]
    pub fn state_at_unchecked(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&tau| tau <= t);
        if k == 0 {
            self.initial
        } else {
            self.states[k - 1]
        }
    }

    pub fn num_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Translates state indices into reactivity values.
    pub fn reactivity(&self, g: &GeneratorMatrix) -> ReactivityPath {
        ReactivityPath {
            breaks: self.jump_times.clone(),
            values: std::iter::once(self.initial)
                .chain(self.states.iter().copied())
                .map(|s| g.kappa(s))
                .collect(),
            horizon: self.horizon,
        }
    }
}

/// Piecewise-constant, right-continuous reactivity `α_t ≥ 0` on
/// `[0, horizon]`; `values[k]` holds on `[breaks[k-1], breaks[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactivityPath {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
    pub horizon: f64,
}

impl ReactivityPath {
    pub fn constant(value: f64, horizon: f64) -> Self {
        Self { breaks: Vec::new(), values: vec![value], horizon }
    }

    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.breaks.partition_point(|&b| b <= t)]
    }

    /// Break points strictly inside `(from, to)`.
    pub fn breaks_within(&self, from: f64, to: f64) -> &[f64] {
        let lo = self.breaks.partition_point(|&b| b <= from);
        let hi = self.breaks.partition_point(|&b| b < to);
        &self.breaks[lo..hi.max(lo)]
    }

    /// The path read backwards over `[s, t]`: `σ ↦ α_{t-σ}` on `[0, t-s]`.
    ///
    /// Feynman–Kac averages `E_{s,x}[f(X_t) exp(-∫_s^t α dL)]` solve the
    /// forward heat equation whose Robin coefficient at time `σ` is
    /// `α_{t-σ}`, so this is the path to feed a forward PDE solver when
    /// checking such an average.
    pub fn reversed_window(&self, s: f64, t: f64) -> Self {
        let inner = self.breaks_within(s, t);
        let lo = self.breaks.partition_point(|&b| b <= s);
        let mut values: Vec<f64> = self.values[lo..=lo + inner.len()].to_vec();
        values.reverse();
        Self {
            breaks: inner.iter().rev().map(|&b| t - b).collect(),
            values,
            horizon: t - s,
        }
    }

    /// Merges consecutive pieces with equal value.
    pub fn simplified(&self) -> Self {
        let mut breaks = Vec::new();
        let mut values = vec![self.values[0]];
        for (b, &v) in self.breaks.iter().zip(&self.values[1..]) {
            if v != *values.last().unwrap() {
                breaks.push(*b);
                values.push(v);
            }
        }
        Self { breaks, values, horizon: self.horizon }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{derive_stream, Purpose, StreamId};

    fn two_state(q: [[f64; 2]; 2]) -> Result<GeneratorMatrix, GeneratorViolation> {
        GeneratorMatrix::new(
            vec![StateSpec::new("closed", 0.0), StateSpec::new("open", 2.0)],
            q.iter().map(|r| r.to_vec()).collect(),
        )
    }

    #[test]
    fn validation_examples() {
        assert!(two_state([[-1.0, 1.0], [3.0, -3.0]]).is_ok());
        assert_eq!(
            two_state([[-1.0, 2.0], [3.0, -3.0]]).unwrap_err(),
            GeneratorViolation::RowSum { row: 0, sum: 1.0 }
        );
        assert!(two_state([[0.0, 0.0], [0.0, 0.0]]).is_ok());
        assert!(matches!(
            two_state([[1.0, -1.0], [3.0, -3.0]]).unwrap_err(),
            GeneratorViolation::NegativeOffDiagonal { row: 0, col: 1, .. }
        ));
        let neg = GeneratorMatrix::new(vec![StateSpec::new("a", -1.0)], vec![vec![0.0]]);
        assert!(neg.unwrap_err().to_string().contains("reactivity must be nonnegative"));
    }

    #[test]
    fn zero_generator_never_jumps() {
        let g = two_state([[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let mut s = derive_stream(0, StreamId::new(Purpose::Chain));
        let p = g.sample_path(0, 5.0, &mut s).unwrap();
        assert_eq!(p.num_jumps(), 0);
        assert_eq!(p.state_at(5.0).unwrap(), 0);
    }

    #[test]
    fn state_at_is_right_continuous() {
        let p = ChainPath::from_jumps(0, &[(0.5, 1)], 1.0).unwrap();
        assert_eq!(p.state_at(0.5).unwrap(), 1);
        assert_eq!(p.state_at(0.499).unwrap(), 0);
        assert_eq!(ChainPath::constant(2, 3.0).state_at(1.0).unwrap(), 2);
        assert!(matches!(p.state_at(1.5), Err(ChainError::OutOfRange { .. })));
        assert!(ChainPath::from_jumps(0, &[(0.5, 0)], 1.0).is_err());
        assert!(ChainPath::from_jumps(0, &[(0.5, 1), (0.4, 0)], 1.0).is_err());
    }

    #[test]
    fn stationary_examples() {
        let sym = GeneratorMatrix::gated(2.0, 1.0, 1.0).unwrap();
        let pi = sym.stationary_distribution().unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        let g = GeneratorMatrix::gated(2.0, 1.0, 3.0).unwrap();
        let pi = g.stationary_distribution().unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-15 && (pi[1] - 0.25).abs() < 1e-15);

        // cycle 0 -> 1 -> 2 -> 0, all rates one
        let c = GeneratorMatrix::new(
            (0..3).map(|i| StateSpec::new(i.to_string(), 1.0)).collect(),
            vec![vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0]],
        )
        .unwrap();
        for p in c.stationary_distribution().unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reducible_chain_reported() {
        let g = two_state([[0.0, 0.0], [1.0, -1.0]]).unwrap();
        assert_eq!(g.stationary_distribution(), Err(ChainError::Reducible));
        assert_eq!(g.effective_reactivity(), Err(ChainError::Reducible));
    }

    #[test]
    fn effective_reactivity_examples() {
        assert_eq!(GeneratorMatrix::gated(2.0, 1.0, 1.0).unwrap().effective_reactivity().unwrap(), 1.0);
        assert!((GeneratorMatrix::gated(2.0, 1.0, 3.0).unwrap().effective_reactivity().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(GeneratorMatrix::constant(0.7).unwrap().effective_reactivity().unwrap(), 0.7);
    }

    #[test]
    fn rescale_examples() {
        let g = two_state([[-1.0, 1.0], [3.0, -3.0]]).unwrap();
        assert_eq!(g.rescale(1.0).unwrap(), g);
        assert_eq!(g.rescale(0.1).unwrap().rows(), vec![vec![-10.0, 10.0], vec![30.0, -30.0]]);
        assert!(g.rescale(0.0).is_err());
        assert!(g.rescale(-1.0).is_err());
        let pi = g.stationary_distribution().unwrap();
        for eps in [1e-3, 0.01, 0.37, 5.0] {
            let pe = g.rescale(eps).unwrap().stationary_distribution().unwrap();
            for (a, b) in pi.iter().zip(&pe) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_holding_time_matches_rate() {
        let (lon, loff) = (1.0, 3.0);
        let g = GeneratorMatrix::gated(2.0, lon, loff).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let mut s = derive_stream(5, StreamId::new(Purpose::Chain).path(i));
            let p = g.sample_path(0, 50.0, &mut s).unwrap();
            let h = p.jump_times[0];
            sum += h;
            sumsq += h * h;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0 / lon).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn long_run_open_fraction() {
        let (lon, loff) = (1.0, 3.0);
        let g = GeneratorMatrix::gated(2.0, lon, loff).unwrap();
        // batch means over independent long paths
        let (n, horizon) = (400, 200.0);
        let fractions: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = derive_stream(9, StreamId::new(Purpose::Chain).path(i));
                let p = g.sample_path(0, horizon, &mut s).unwrap();
                let mut open = 0.0;
                let mut t0 = 0.0;
                let mut st = p.initial;
                for (&t, &next) in p.jump_times.iter().zip(&p.states) {
                    if st == 1 {
                        open += t - t0;
                    }
                    t0 = t;
                    st = next;
                }
                if st == 1 {
                    open += horizon - t0;
                }
                open / horizon
            })
            .collect();
        let mean = fractions.iter().sum::<f64>() / n as f64;
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - lon / (lon + loff)).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn embedded_chain_transition_frequencies() {
        let g = GeneratorMatrix::new(
            (0..3).map(|i| StateSpec::new(i.to_string(), 0.0)).collect(),
            vec![vec![-3.0, 1.0, 2.0], vec![0.5, -1.0, 0.5], vec![4.0, 0.0, -4.0]],
        )
        .unwrap();
        let n = 50_000;
        let mut counts = [0usize; 3];
        for i in 0..n {
            let mut s = derive_stream(2, StreamId::new(Purpose::Chain).path(i));
            // exit rate 3: a horizon of 20 leaves state 0 with certainty in practice
            let p = g.sample_path(0, 20.0, &mut s).unwrap();
            counts[p.states[0]] += 1;
        }
        for (j, expected) in [(1, 1.0 / 3.0), (2, 2.0 / 3.0)] {
            let f = counts[j] as f64 / n as f64;
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((f - expected).abs() < 4.0 * se);
        }
        assert_eq!(counts[0], 0);
    }

    #[test]
    fn small_time_leave_probability_bound() {
        let g = GeneratorMatrix::gated(2.0, 1.0, 3.0).unwrap();
        let t = 0.05;
        let n = 20_000;
        let left = (0..n)
            .filter(|&i| {
                let mut s = derive_stream(4, StreamId::new(Purpose::Chain).path(i));
                g.sample_path(1, t, &mut s).unwrap().state_at(t).unwrap() != 1
            })
            .count();
        assert!((left as f64 / n as f64) <= g.exit_rate(1) * t);
    }

    #[test]
    fn sampled_paths_are_well_formed() {
        let g = GeneratorMatrix::gated(2.0, 5.0, 7.0).unwrap();
        for i in 0..500 {
            let mut s = derive_stream(3, StreamId::new(Purpose::Chain).path(i));
            let p = g.sample_path(0, 2.0, &mut s).unwrap();
            p.check().unwrap();
            assert_eq!(p.state_at(0.0).unwrap(), 0);
        }
    }

    #[test]
    fn reversed_window_reads_backwards() {
        let p = ReactivityPath { breaks: vec![0.2, 0.7], values: vec![0.0, 2.0, 1.0], horizon: 1.0 };
        let r = p.reversed_window(0.0, 1.0);
        assert_eq!(r.values, vec![1.0, 2.0, 0.0]);
        assert!((r.breaks[0] - 0.3).abs() < 1e-15 && (r.breaks[1] - 0.8).abs() < 1e-15);
        let w = p.reversed_window(0.1, 0.5);
        assert_eq!(w.values, vec![2.0, 0.0]);
        assert!((w.breaks[0] - 0.3).abs() < 1e-15);
        assert!((w.horizon - 0.4).abs() < 1e-15);
        for s in [0.05, 0.25, 0.9] {
            assert_eq!(r.value_at(s), p.value_at(1.0 - s));
        }
    }
}
