//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion (written straight to stdout so it shows without
//! `--nocapture`) and then asserts it.

use std::io::Write;
use std::process::Command;

use rayon::prelude::*;
use statrs::function::erf::{erf, erfc};

use elastic_switch::chain::{ChainPath, GeneratorMatrix, ReactivityPath};
use elastic_switch::experiments::{
    averaging_sweep, composition_check, cross_validate, gating_constants, gating_experiment, ChainStart,
    CompositionSettings, GatingSettings, SweepSettings, XvalSettings,
};
use elastic_switch::functional::{
    averaged_estimate, exposure_integral, Mode, Payoff, Seeding, SimParams, SwitchedPayoff,
};
use elastic_switch::geometry::Domain;
use elastic_switch::pde::{self, PdeParams};
use elastic_switch::rbm::{simulate_path, simulate_rbm_driven, simulate_rbm_halfline_exact, DiffusionPath, Scheme, TimeGrid};
use elastic_switch::stream::{derive_stream, Purpose, StreamId};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {id:>2} {verdict} {name}: {detail}").unwrap();
    out.flush().unwrap();
}

fn default_x() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn gated() -> GeneratorMatrix {
    GeneratorMatrix::gated(2.0, 1.0, 3.0).unwrap()
}

/// `P(K > d)` for the Kolmogorov limit law.
fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let x = d * (n as f64).sqrt();
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * if k as u32 % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * k * k * x * x).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn c01_half_line_elastic_oracle() {
    let exact = 0.5f64.exp() * erfc(1.0 / 2f64.sqrt());
    let sim = SimParams { dt: 0.1, scheme: Scheme::HalflineExact };
    let start = std::time::Instant::now();
    let r = averaged_estimate(&Domain::HalfLine, &Payoff::constant(1.0), &[0.0], 1.0, 1.0, sim, 1_000_000, Seeding::new(1))
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let diff = (r.mean - exact).abs();
    let pass = diff <= 3.0 * r.stderr && elapsed <= 120.0;
    report(
        1,
        "half-line E[exp(-L_1)]",
        pass,
        format!("mean {:.6} stderr {:.2e} exact {exact:.6} |diff| {diff:.2e} n 1e6 time {elapsed:.1}s", r.mean, r.stderr),
    );
    assert!(pass);
}

#[test]
fn c02_local_time_law() {
    let n = 100_000usize;
    let mut samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = derive_stream(2, StreamId::new(Purpose::Diffusion).path(i));
            let p = simulate_rbm_halfline_exact(0.0, 1.0, 1.0, &mut s).unwrap();
            *p.local.last().unwrap()
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    let cdf = |l: f64| erf(l / 2f64.sqrt());
    let d = samples
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let f = cdf(l);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_pvalue(d, n);
    let pass = p > 0.01;
    report(2, "L_1 against |N(0,1)|", pass, format!("KS D {d:.2e} p-value {p:.3} n {n}"));
    assert!(pass);
}

#[test]
fn c03_neumann_eigenfunction_ladder() {
    let (t, h, n) = (0.2f64, 5e-5f64, 40_000u64);
    let dts = [1e-3, 2.5e-4, 1e-4];
    let xs = [0.0, 0.1, 0.25, 0.75, 0.9, 1.0];
    let domain = Domain::unit_interval();
    let fine_steps = (t / h).round() as usize;
    let grids: Vec<TimeGrid> = dts.iter().map(|&dt| TimeGrid::new(0.0, t, dt, &[]).unwrap()).collect();
    // every level is driven by sums of the same fine increments
    let samples: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = derive_stream(3, StreamId::new(Purpose::Diffusion).path(i));
            let fine: Vec<f64> = (0..fine_steps).map(|_| h.sqrt() * s.gaussian()).collect();
            let mut path = DiffusionPath::empty(1);
            let mut out = Vec::with_capacity(dts.len() * xs.len());
            for grid in &grids {
                let chunk = fine_steps / grid.steps();
                let inc: Vec<f64> = fine.chunks(chunk).map(|c| c.iter().sum()).collect();
                for &x in &xs {
                    simulate_rbm_driven(&domain, &[x], grid, &inc, &mut path).unwrap();
                    out.push((std::f64::consts::PI * path.final_position()[0]).cos());
                }
            }
            out
        })
        .collect();
    let mut errors = Vec::new();
    for (l, dt) in dts.iter().enumerate() {
        let mut worst = (0.0f64, 0.0f64);
        for (k, &x) in xs.iter().enumerate() {
            let col = samples.iter().map(|v| v[l * xs.len() + k]);
            let mean = col.clone().sum::<f64>() / n as f64;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let exact = (-std::f64::consts::PI.powi(2) * t / 2.0).exp() * (std::f64::consts::PI * x).cos();
            let err = (mean - exact).abs();
            if err > worst.0 {
                worst = (err, (var / n as f64).sqrt());
            }
        }
        errors.push((*dt, worst.0, worst.1));
    }
    let monotone = errors.windows(2).all(|w| w[1].1 < w[0].1);
    let (_, fine_err, fine_se) = errors[2];
    let pass = monotone && fine_err <= 3.0 * fine_se + 2e-2;
    let detail = errors
        .iter()
        .map(|(dt, e, se)| format!("dt {dt:.1e}: sup err {e:.4} (se {se:.4})"))
        .collect::<Vec<_>>()
        .join("; ");
    report(3, "Neumann eigenfunction dt ladder", pass, format!("{detail}; n {n}"));
    assert!(pass);
}

#[test]
fn c04_annealed_against_coupled_fd() {
    let g = gated();
    let settings = XvalSettings {
        phi: SwitchedPayoff::uniform(Payoff::constant(1.0), 2),
        f: Payoff::constant(1.0),
        x: default_x(),
        t: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        sim: SimParams::projection(2.5e-4),
        paths: 10_000,
        seed: 4,
        pde: PdeParams::default(),
        quenched_start: 0.0,
        quenched_path: ReactivityPath::constant(0.0, 0.5),
        abar: g.effective_reactivity().unwrap(),
        bias_allowance: 2e-2,
        g,
    };
    let r = cross_validate(Mode::Annealed, &settings).unwrap();
    let at_half = r.rows.iter().filter(|row| row.t == 0.5).collect::<Vec<_>>();
    let pass = at_half.len() == 18 && r.all_within && r.fraction_within_3 >= 0.99 && r.pde_max_principle;
    let worst = r.rows.iter().map(|row| (row.mc - row.pde).abs()).fold(0.0, f64::max);
    report(
        4,
        "annealed MC against coupled FD",
        pass,
        format!(
            "{} points, all within max(3se, 2e-2) {}, fraction |z_adj|<=3 {:.3}, max |diff| {worst:.4}, max |z| {:.2}, dt 2.5e-4, n 1e4",
            r.rows.len(),
            r.all_within,
            r.fraction_within_3,
            r.max_abs_z
        ),
    );
    assert!(pass);
}

#[test]
fn c05_quenched_composition() {
    let g = gated();
    let chain = ChainPath::from_jumps(0, &[(0.12, 1), (0.31, 0), (0.42, 1)], 0.5).unwrap();
    let c = CompositionSettings {
        f: Payoff::cos_pi(),
        x: default_x(),
        s: 0.0,
        t: 0.5,
        r: 0.25,
        alpha: chain.reactivity(&g),
        inner_nodes: 41,
        inner_paths: 20_000,
        sim: SimParams::projection(1e-3),
        paths: 20_000,
        seed: 5,
    };
    let r = composition_check(&c).unwrap();
    let pass = r.max_abs_z <= 3.0;
    report(
        5,
        "S_{0,t} against S_{0,t/2} S_{t/2,t}",
        pass,
        format!("{} points, max |z| {:.2}, 3 jumps, dt 1e-3, n 2e4 (inner 2e4 at 41 nodes)", r.rows.len(), r.max_abs_z),
    );
    assert!(pass);
}

#[test]
fn c06_averaging_sweep() {
    let settings = SweepSettings {
        x: default_x(),
        t: (1..=10).map(|i| i as f64 * 0.05).collect(),
        eps: vec![1.0, 0.1, 0.01],
        replicas: 16,
        start: ChainStart::Stationary,
        sim: SimParams::projection(1e-3),
        paths: 2000,
        seed: 6,
    };
    let r = averaging_sweep(&Domain::unit_interval(), &Payoff::constant(1.0), &gated(), &settings).unwrap();
    let last = r.levels.last().unwrap();
    let pass = r.is_monotone() && last.mean_sup_error <= 5e-2;
    let detail = r
        .levels
        .iter()
        .map(|l| {
            format!(
                "eps {}: sup err {:.4} (mc se {:.4}), exposure err {:.4}",
                l.eps, l.mean_sup_error, l.mean_mc_stderr, l.mean_exposure_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(6, "averaging sweep", pass, format!("{detail}; 16 replicas, dt 1e-3, n {}", r.paths));
    assert!(pass);
}

#[test]
fn c07_gating_constants() {
    let mut s = derive_stream(7, StreamId::new(Purpose::Chain));
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (kappa, lon, loff) = (0.1 + 10.0 * s.open01(), 0.1 + 10.0 * s.open01(), 0.1 + 10.0 * s.open01());
        let oracle_pi = [loff / (lon + loff), lon / (lon + loff)];
        let oracle_abar = kappa * lon / (lon + loff);
        let (pi, abar) = gating_constants(kappa, lon, loff);
        let g = GeneratorMatrix::gated(kappa, lon, loff).unwrap();
        let stationary = g.stationary_distribution().unwrap();
        let report = gating_experiment(&GatingSettings {
            kappa,
            lambda_on: lon,
            lambda_off: loff,
            eps: 0.5,
            f: Payoff::constant(1.0),
            x: vec![0.5],
            t: vec![0.05],
            sim: SimParams::projection(1e-2),
            paths: 16,
            seed: 7,
            pde: PdeParams::new(9, 1e-2).unwrap(),
        })
        .unwrap();
        for k in 0..2 {
            worst = worst.max((pi[k] - oracle_pi[k]).abs());
            worst = worst.max((report.pi[k] - oracle_pi[k]).abs());
            worst = worst.max((stationary[k] - oracle_pi[k]).abs());
        }
        worst = worst.max((abar - oracle_abar).abs());
        worst = worst.max((report.abar - oracle_abar).abs());
        worst = worst.max((g.effective_reactivity().unwrap() - oracle_abar).abs());
    }
    let pass = worst <= 1e-12;
    report(7, "gating pi and abar", pass, format!("5 random rate triples, max deviation {worst:.1e}"));
    assert!(pass);
}

#[test]
fn c08_pathwise_invariants() {
    let domains = [
        Domain::unit_interval(),
        Domain::Interval { a: -1.0, b: 2.0 },
        Domain::Rectangle { a: 0.0, b: 1.0, c: -0.5, d: 0.5 },
        Domain::Disk { center: [0.5, -0.5], radius: 0.75 },
        Domain::HalfLine,
    ];
    let n = 12_000u64;
    let failures: Vec<String> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let mut s = derive_stream(8, StreamId::new(Purpose::Diffusion).path(i));
            let domain = &domains[(i % domains.len() as u64) as usize];
            let x0 = match domain {
                Domain::Interval { a, b } => vec![a + (b - a) * s.open01()],
                Domain::Rectangle { a, b, c, d } => vec![a + (b - a) * s.open01(), c + (d - c) * s.open01()],
                Domain::Disk { center, radius } => loop {
                    let p = [2.0 * s.open01() - 1.0, 2.0 * s.open01() - 1.0];
                    if p[0].hypot(p[1]) <= 1.0 {
                        break vec![center[0] + radius * p[0], center[1] + radius * p[1]];
                    }
                },
                Domain::HalfLine => vec![s.exponential(4.0)],
            };
            let scheme = if matches!(domain, Domain::HalfLine) && i % 2 == 0 { Scheme::HalflineExact } else { Scheme::Projection };
            let dt = if i % 3 == 0 { 1e-2 } else { 1e-3 };
            let g = GeneratorMatrix::gated(5.0 * s.open01(), 20.0 * s.open01() + 0.1, 20.0 * s.open01() + 0.1).unwrap();
            let chain = g.sample_path((i % 2) as usize, 0.5, &mut s).unwrap();
            let grid = TimeGrid::new(0.0, 0.5, dt, &chain.jump_times).unwrap();
            let mut path = DiffusionPath::empty(domain.dimension());
            simulate_path(domain, scheme, &x0, &grid, &mut s, &mut path).unwrap();
            if let Err(e) = path.check_invariants(domain) {
                return Some(format!("path {i}: {e}"));
            }
            let acc = exposure_integral(&path, &chain.reactivity(&g)).unwrap();
            if !acc.weight.iter().all(|&m| m > 0.0 && m <= 1.0) || acc.weight.windows(2).any(|w| w[1] > w[0]) {
                return Some(format!("path {i}: weight outside (0, 1] or increasing"));
            }
            let f = if i % 4 == 1 && domain.is_bounded() { Payoff::Coordinate { axis: 0 } } else { Payoff::cos_pi() };
            let bound = f.bound(domain).unwrap();
            let last = path.len() - 1;
            if (f.eval(path.position(last)) * acc.weight[last]).abs() > bound {
                return Some(format!("path {i}: |payoff M| exceeds the payoff bound"));
            }
            None
        })
        .collect();
    let pass = failures.is_empty();
    report(
        8,
        "pathwise invariants",
        pass,
        format!("{n} random paths over 5 domains, {} failures {:?}", failures.len(), failures.first()),
    );
    assert!(pass);
}

#[test]
fn c09_pde_self_convergence() {
    let conv = pde::spatial_convergence(49, 1e-4, 1.0, &Payoff::cos_pi(), 0.2).unwrap();
    let params = PdeParams::default();
    let neumann = pde::solve_constant_robin(&params, 0.0, &Payoff::Coordinate { axis: 0 }, 0.5, &[0.1, 0.25, 0.5]).unwrap();
    let mass_drift = (0..neumann.times.len()).map(|l| (neumann.mass(l, 0) - 0.5).abs()).fold(0.0, f64::max);
    let g = gated();
    let robin = pde::solve_constant_robin(&params, 2.0, &Payoff::constant(1.0), 0.5, &[0.1, 0.5]).unwrap();
    let coupled = pde::solve_coupled_robin(&params, &g, &SwitchedPayoff::uniform(Payoff::constant(1.0), 2), 0.5, &[0.1, 0.5])
        .unwrap();
    let chain = ChainPath::from_jumps(0, &[(0.12, 1), (0.31, 0), (0.42, 1)], 0.5).unwrap();
    let quenched = pde::solve_quenched_robin(&params, &chain.reactivity(&g), &Payoff::cos_pi(), 0.5, &[0.25, 0.5]).unwrap();
    let max_principle = [&neumann, &robin, &coupled, &quenched].iter().all(|s| s.satisfies_max_principle());
    let pass = conv.observed_order >= 1.9 && mass_drift <= 1e-8 && max_principle;
    report(
        9,
        "PDE self-convergence",
        pass,
        format!(
            "observed order {:.3} (n {:?}), Neumann mass drift {mass_drift:.1e}, max principle {max_principle}",
            conv.observed_order, conv.interior_points
        ),
    );
    assert!(pass);
}

#[test]
fn c10_thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[sim]
dt = 1e-3
paths = 4000
seed = 10

[pde]
n = 99
dt = 1e-3

[experiment]
eps = [1.0, 0.1, 0.01]
replicas = 4
";
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    let runs: [&[&str]; 3] = [&["xval", "--mode", "annealed"], &["averaging"], &["simulate", "quenched"]];
    let mut identical = true;
    for args in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("{}-{threads}.csv", args[0]));
            let status = Command::new(env!("CARGO_BIN_EXE_elastic-switch"))
                .args(args)
                .args(["--config", "run.toml", "--threads", threads, "--out"])
                .arg(&out)
                .current_dir(dir.path())
                .env_remove("ELASTIC_SWITCH_SEED")
                .output()
                .unwrap();
            assert!(status.status.success(), "{args:?} with {threads} threads");
            outputs.push(std::fs::read(out).unwrap());
        }
        identical &= outputs[0] == outputs[1];
    }
    report(10, "determinism across --threads", identical, "xval annealed, averaging, simulate quenched at 1 and 8 threads".into());
    assert!(identical);
}
