//! TOML run configuration: parsing, defaults and validation.
//!
//! Every section is optional. Parsing fills in defaults, so the resolved
//! [`SimConfig`] carries every value a run uses, and its JSON echo parses
//! back to the same value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainError, ChainPath, GeneratorMatrix, GeneratorViolation, ReactivityPath, StateSpec};
use crate::experiments::ChainStart;
use crate::functional::{Payoff, SimParams, SwitchedPayoff};
use crate::geometry::Domain;
use crate::pde::{PdeParams, DEFAULT_INTERIOR_POINTS, DEFAULT_PDE_DT};
use crate::rbm::{Scheme, DEFAULT_DT};

pub const SEED_ENV: &str = "ELASTIC_SWITCH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default = "default_payoff")]
    pub payoff: Payoff,
    /// Per-state payoff overrides for annealed runs, keyed by state label.
    #[serde(default)]
    pub payoff_states: BTreeMap<String, Payoff>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub quenched: QuenchedSection,
    #[serde(default)]
    pub averaged: AveragedSection,
    #[serde(default)]
    pub xval: XvalSection,
    #[serde(default)]
    pub gating: GatingSection,
}

fn default_domain() -> Domain {
    Domain::unit_interval()
}

fn default_payoff() -> Payoff {
    Payoff::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub states: Vec<StateSpec>,
    pub q: Vec<Vec<f64>>,
    /// Starting state of annealed runs.
    #[serde(default)]
    pub initial: Option<String>,
}

/// The gated two-state chain: closed (κ = 0) and open (κ = 2), opening at
/// rate 1 and closing at rate 3.
impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            states: vec![StateSpec::new("closed", 0.0), StateSpec::new("open", 2.0)],
            q: vec![vec![-1.0, 1.0], vec![3.0, -3.0]],
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, paths: 100_000, seed: 0, scheme: Scheme::Projection }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Evaluation points for 1-d domains.
    pub x: Vec<f64>,
    /// Evaluation points for 2-d domains; overrides `x` when nonempty.
    pub points: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x: (1..=9).map(|i| i as f64 / 10.0).collect(),
            points: Vec::new(),
            t: (1..=10).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub n: usize,
    pub dt: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self { n: DEFAULT_INTERIOR_POINTS, dt: DEFAULT_PDE_DT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub eps: Vec<f64>,
    pub replicas: usize,
    /// `"stationary"` or a state label.
    pub initial: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { eps: vec![1.0, 0.1, 0.01], replicas: 16, initial: "stationary".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub t: f64,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuenchedSection {
    pub s: f64,
    /// Initial state of a hand-written path.
    pub initial: Option<String>,
    /// Hand-written jumps; when absent a path is sampled from the chain.
    pub jumps: Option<Vec<JumpSpec>>,
}

impl Default for QuenchedSection {
    fn default() -> Self {
        Self { s: 0.0, initial: None, jumps: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragedSection {
    /// Defaults to the stationary mean reactivity of an irreducible chain.
    pub abar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XvalSection {
    pub bias_allowance: f64,
}

impl Default for XvalSection {
    fn default() -> Self {
        Self { bias_allowance: 2e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatingSection {
    pub kappa: f64,
    pub lambda_on: f64,
    pub lambda_off: f64,
    pub eps: f64,
}

impl Default for GatingSection {
    fn default() -> Self {
        Self { kappa: 2.0, lambda_on: 1.0, lambda_off: 3.0, eps: 0.01 }
    }
}

/// One validation problem, anchored to a line of the source when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn single(message: impl Into<String>) -> Self {
        Self { issues: vec![ConfigIssue { line: None, message: message.into() }] }
    }
}

/// Finds the line of `key` inside `[section]` (or a dotted
/// `section.key`), 1-based.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == format!("{section}.{key}")) {
            return Some(i + 1);
        }
        if current.is_empty() && lhs == section && key.is_empty() {
            return Some(i + 1);
        }
    }
    section_line
}

fn line_of(span: Option<std::ops::Range<usize>>, text: &str) -> Option<usize> {
    span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

struct Issues<'a> {
    text: &'a str,
    list: Vec<ConfigIssue>,
}

impl Issues<'_> {
    fn push(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let line = locate(self.text, section, key).or_else(|| locate(self.text, section, ""));
        self.list.push(ConfigIssue { line, message: format!("{section}.{key}: {}", message.into()) });
    }
}

/// Parses and validates a configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError {
        issues: vec![ConfigIssue { line: line_of(e.span(), text), message: e.message().to_string() }],
    })?;
    let mut issues = Issues { text, list: Vec::new() };
    validate(&mut cfg, &mut issues);
    if issues.list.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues: issues.list })
    }
}

/// Parses the JSON echo embedded in an output header.
pub fn parse_echo(json: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg: SimConfig = serde_json::from_str(json).map_err(|e| ConfigError::single(e.to_string()))?;
    let mut issues = Issues { text: "", list: Vec::new() };
    validate(&mut cfg, &mut issues);
    if issues.list.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { issues: issues.list })
    }
}

fn finite_in(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v > lo && v <= hi
}

fn validate(cfg: &mut SimConfig, is: &mut Issues) {
    if let Err(e) = cfg.domain.validate() {
        is.push("domain", "kind", e.to_string());
    }

    let chain_ok = match GeneratorMatrix::new(cfg.chain.states.clone(), cfg.chain.q.clone()) {
        Ok(g) => {
            let labels: Vec<&str> = cfg.chain.states.iter().map(|s| s.label.as_str()).collect();
            match cfg.chain.initial.clone() {
                Some(l) if !labels.contains(&l.as_str()) => is.push("chain", "initial", format!("unknown state {l:?}")),
                None => cfg.chain.initial = Some(labels[0].to_string()),
                _ => {}
            }
            Some(g)
        }
        Err(v) => {
            let key = match v {
                GeneratorViolation::NegativeReactivity { .. } | GeneratorViolation::DuplicateLabel(_) | GeneratorViolation::Empty => "states",
                _ => "q",
            };
            is.push("chain", key, v.to_string());
            None
        }
    };

    let s = &cfg.sim;
    if !finite_in(s.dt, 0.0, 0.1) {
        is.push("sim", "dt", format!("must lie in (0, 0.1], got {}", s.dt));
    }
    if s.paths == 0 || s.paths > 10_000_000_000 {
        is.push("sim", "paths", format!("must lie in [1, 1e10], got {}", s.paths));
    }
    match (s.scheme, cfg.domain == Domain::HalfLine) {
        (Scheme::HalflineExact, false) => is.push("sim", "scheme", "halfline_exact needs the half_line domain"),
        (Scheme::Projection, true) => is.push("sim", "scheme", "the half_line domain needs scheme halfline_exact"),
        _ => {}
    }

    if let Err(e) = cfg.payoff.validate(&cfg.domain) {
        is.push("payoff", "kind", e);
    }
    for (label, p) in &cfg.payoff_states {
        if !cfg.chain.states.iter().any(|s| &s.label == label) {
            is.push("payoff_states", label, format!("unknown state {label:?}"));
        }
        if let Err(e) = p.validate(&cfg.domain) {
            is.push("payoff_states", label, e);
        }
    }

    let dim = cfg.domain.dimension();
    if cfg.grid.points.is_empty() {
        if dim != 1 {
            is.push("grid", "points", format!("a {dim}-d domain needs grid.points"));
        } else if cfg.grid.x.is_empty() {
            is.push("grid", "x", "must not be empty");
        }
        for &x in &cfg.grid.x {
            if dim == 1 && !matches!(cfg.domain.contains(&[x]), Ok(true)) {
                is.push("grid", "x", format!("point {x} lies outside the domain"));
            }
        }
    } else {
        for p in &cfg.grid.points {
            if p.len() != dim || !matches!(cfg.domain.contains(p), Ok(true)) {
                is.push("grid", "points", format!("point {p:?} is not inside the {dim}-d domain"));
            }
        }
    }
    let t = &cfg.grid.t;
    if t.is_empty() || t.iter().any(|v| !finite_in(*v, 0.0, 1e3)) || !t.windows(2).all(|w| w[1] > w[0]) {
        is.push("grid", "t", "times must be nonempty, positive, at most 1e3 and strictly increasing");
    }

    if cfg.pde.n < 3 || cfg.pde.n > 100_000 {
        is.push("pde", "n", format!("must lie in [3, 100000], got {}", cfg.pde.n));
    }
    if !finite_in(cfg.pde.dt, 0.0, 0.1) {
        is.push("pde", "dt", format!("must lie in (0, 0.1], got {}", cfg.pde.dt));
    }

    let e = &cfg.experiment;
    if e.eps.is_empty() || e.eps.iter().any(|v| !finite_in(*v, 0.0, 1e6)) || !e.eps.windows(2).all(|w| w[1] < w[0]) {
        is.push("experiment", "eps", "must be nonempty, positive and strictly decreasing");
    }
    if e.replicas == 0 || e.replicas > 10_000 {
        is.push("experiment", "replicas", format!("must lie in [1, 10000], got {}", e.replicas));
    }
    if e.initial != "stationary" && !cfg.chain.states.iter().any(|s| s.label == e.initial) {
        is.push("experiment", "initial", format!("expected \"stationary\" or a state label, got {:?}", e.initial));
    }

    let q = &cfg.quenched;
    let t_max = t.last().copied().unwrap_or(0.0);
    if !(q.s >= 0.0 && q.s.is_finite()) || (t_max > 0.0 && q.s >= t_max) {
        is.push("quenched", "s", format!("must lie in [0, {t_max}), got {}", q.s));
    }
    let known = |l: &str| cfg.chain.states.iter().any(|s| s.label == l);
    if let Some(l) = &q.initial {
        if !known(l) {
            is.push("quenched", "initial", format!("unknown state {l:?}"));
        }
    }
    if let Some(jumps) = &q.jumps {
        if q.initial.is_none() {
            is.push("quenched", "initial", "a hand-written path needs an initial state");
        }
        let mut prev_t = 0.0;
        let mut prev_state = q.initial.clone();
        for j in jumps {
            if !(j.t > prev_t && j.t.is_finite()) {
                is.push("quenched", "jumps", format!("jump times must be positive and strictly increasing, got {}", j.t));
            }
            if !known(&j.state) {
                is.push("quenched", "jumps", format!("unknown state {:?}", j.state));
            }
            if prev_state.as_deref() == Some(j.state.as_str()) {
                is.push("quenched", "jumps", format!("jump at {} does not change state", j.t));
            }
            prev_t = j.t;
            prev_state = Some(j.state.clone());
        }
    }

    match (cfg.averaged.abar, &chain_ok) {
        (Some(a), _) if !(a >= 0.0 && a.is_finite()) => is.push("averaged", "abar", "reactivity must be nonnegative"),
        (None, Some(g)) if g.is_irreducible() => cfg.averaged.abar = g.effective_reactivity().ok(),
        _ => {}
    }

    if !(cfg.xval.bias_allowance >= 0.0 && cfg.xval.bias_allowance.is_finite()) {
        is.push("xval", "bias_allowance", "must be nonnegative");
    }
    let gs = &cfg.gating;
    if !finite_in(gs.kappa, 0.0, f64::MAX) {
        is.push("gating", "kappa", "must be positive");
    }
    if !finite_in(gs.lambda_on, 0.0, f64::MAX) || !finite_in(gs.lambda_off, 0.0, f64::MAX) {
        is.push("gating", "lambda_on", "switching rates must be positive");
    }
    if !finite_in(gs.eps, 0.0, 1e6) {
        is.push("gating", "eps", "must be positive");
    }
}

impl SimConfig {
    /// The generator; valid after [`parse_config`].
    pub fn generator(&self) -> Result<GeneratorMatrix, ChainError> {
        Ok(GeneratorMatrix::new(self.chain.states.clone(), self.chain.q.clone())?)
    }

    pub fn initial_state(&self, g: &GeneratorMatrix) -> Result<usize, ChainError> {
        match &self.chain.initial {
            Some(l) => g.index_of(l),
            None => Ok(0),
        }
    }

    pub fn switched_payoff(&self) -> SwitchedPayoff {
        SwitchedPayoff {
            per_state: self
                .chain
                .states
                .iter()
                .map(|s| self.payoff_states.get(&s.label).unwrap_or(&self.payoff).clone())
                .collect(),
        }
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams { dt: self.sim.dt, scheme: self.sim.scheme }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        if self.grid.points.is_empty() {
            self.grid.x.iter().map(|&x| vec![x]).collect()
        } else {
            self.grid.points.clone()
        }
    }

    pub fn pde_params(&self) -> PdeParams {
        PdeParams::new(self.pde.n, self.pde.dt).expect("validated pde section")
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.t.last().expect("validated t grid")
    }

    pub fn chain_start(&self, g: &GeneratorMatrix) -> Result<ChainStart, ChainError> {
        if self.experiment.initial == "stationary" {
            Ok(ChainStart::Stationary)
        } else {
            Ok(ChainStart::Fixed(g.index_of(&self.experiment.initial)?))
        }
    }

    /// The hand-written quenched chain path, if one is configured.
    pub fn written_chain(&self, g: &GeneratorMatrix, horizon: f64) -> Result<Option<ChainPath>, ChainError> {
        let Some(jumps) = &self.quenched.jumps else { return Ok(None) };
        let initial = g.index_of(self.quenched.initial.as_deref().unwrap_or(g.label(0)))?;
        let times: Vec<f64> = jumps.iter().map(|j| j.t).filter(|&t| t <= horizon).collect();
        let states = jumps
            .iter()
            .take(times.len())
            .map(|j| g.index_of(&j.state))
            .collect::<Result<Vec<_>, _>>()?;
        let path = ChainPath { initial, jump_times: times, states, horizon };
        path.check()?;
        Ok(Some(path))
    }

    pub fn abar(&self) -> Option<f64> {
        self.averaged.abar
    }

    /// The quenched reactivity path: the written one or a sampled one.
    pub fn quenched_path(&self, g: &GeneratorMatrix) -> Result<ReactivityPath, crate::experiments::ExperimentError> {
        let horizon = self.horizon();
        if let Some(p) = self.written_chain(g, horizon)? {
            return Ok(p.reactivity(g));
        }
        let start = self.chain_start(g)?;
        let chain = crate::experiments::sample_fixed_chain(g, start, horizon, self.sim.seed, 0, 0)?;
        Ok(chain.reactivity(g))
    }
}
