//! The acceptance suite behind `klflow check`.
//!
//! Every criterion compares library output against an independent reference
//! (closed forms, quadrature, finite differences, exhaustive search) and has
//! a wall-clock budget; exceeding it counts as a failure.

use std::fmt::Write as _;
use std::fs;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::cli::{cmd_run, METRICS_FILE};
use crate::discrepancy::{kernelized_force, ksd2, mmd2, mmd_witness};
use crate::flow::{
    fr_exact_solution, jko_step, ksd_wgf_step, mirror_step, mmd_wgf_step, nw_witness, wfr_ift_step,
    FlowConfig, FlowKind, JKO_TOL,
};
use crate::kernel::{KernelSpec, SteinKernel};
use crate::measure::{ensemble_from_sampler, DensityRatioTable, DiscreteMeasure, Ensemble, Target};
use crate::oracle::{finite_diff_grad, quad_integral, simplex_grid_argmin, QuadratureGrid};
use crate::points::Points;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Kernels,
    Flows,
    Oracles,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Bandwidth of the Gaussian kernel used throughout.
    pub sigma: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

type CheckResult = std::result::Result<String, String>;

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub scope: Scope,
    pub budget: Duration,
    run: fn(&CheckOptions) -> CheckResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub elapsed: Duration,
    pub detail: String,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub static CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "kernelized force equals MMD witness",
        scope: Scope::Kernels,
        budget: secs(1),
        run: force_equals_witness,
    },
    Criterion {
        id: 2,
        name: "birth-death solution decays MMD as e^-2t",
        scope: Scope::Flows,
        budget: secs(1),
        run: birth_death_decay,
    },
    Criterion {
        id: 3,
        name: "log MMD slope -1 along birth-death solution",
        scope: Scope::Flows,
        budget: secs(1),
        run: birth_death_slope,
    },
    Criterion {
        id: 4,
        name: "WFR-IFT reaction decays MMD at rate beta",
        scope: Scope::Flows,
        budget: secs(10),
        run: ift_decay,
    },
    Criterion {
        id: 5,
        name: "KSD descent samples a standard Gaussian",
        scope: Scope::Flows,
        budget: secs(60),
        run: ksd_sampling,
    },
    Criterion {
        id: 6,
        name: "MMD flow is monotone and converges",
        scope: Scope::Flows,
        budget: secs(30),
        run: mmd_monotone,
    },
    Criterion {
        id: 7,
        name: "JKO step matches simplex grid search",
        scope: Scope::Oracles,
        budget: secs(10),
        run: jko_grid,
    },
    Criterion {
        id: 8,
        name: "Stein kernel has zero target mean",
        scope: Scope::Kernels,
        budget: secs(1),
        run: stein_zero_mean,
    },
    Criterion {
        id: 9,
        name: "kernel gradients match finite differences",
        scope: Scope::Kernels,
        budget: secs(5),
        run: gradients,
    },
    Criterion {
        id: 10,
        name: "mirror step fixed point and scalar oracle",
        scope: Scope::Oracles,
        budget: secs(1),
        run: mirror_oracle,
    },
    Criterion {
        id: 11,
        name: "NW and MMD witnesses agree in sign",
        scope: Scope::Kernels,
        budget: secs(5),
        run: nw_sign,
    },
    Criterion {
        id: 12,
        name: "identical runs give identical metrics",
        scope: Scope::Flows,
        budget: secs(60),
        run: determinism,
    },
];

pub fn run_criterion(c: &Criterion, opts: &CheckOptions) -> Outcome {
    let start = Instant::now();
    let result = (c.run)(opts);
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(d) if elapsed <= c.budget => (true, d),
        Ok(d) => (
            false,
            format!(
                "{d}; took {:.2} s, budget {} s",
                elapsed.as_secs_f64(),
                c.budget.as_secs()
            ),
        ),
        Err(d) => (false, d),
    };
    Outcome {
        id: c.id,
        name: c.name,
        passed,
        elapsed,
        detail,
    }
}

pub fn run_scope(scope: Scope, opts: &CheckOptions) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter(|c| scope == Scope::All || c.scope == scope)
        .map(|c| run_criterion(c, opts))
        .collect()
}

pub fn format_outcome(o: &Outcome) -> String {
    format!(
        "{} {:>2}  {:<44} {:>8.3} s  {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.elapsed.as_secs_f64(),
        o.detail
    )
}

pub fn format_table(outcomes: &[Outcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let _ = writeln!(out, "{}", format_outcome(o));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(out, "{passed}/{} criteria passed", outcomes.len());
    out
}

fn lib<T>(r: crate::error::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian_points(rng: &mut Rng, n: usize, d: usize, center: f64, scale: f64) -> Points {
    let data = (0..n * d)
        .map(|_| center + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Points::from_flat(data, d).expect("positive dimension")
}

fn random_simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Least-squares slope of `y` against `t`.
fn fitted_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, my) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let var: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    cov / var
}

fn standard_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn force_equals_witness(opts: &CheckOptions) -> CheckResult {
    let mut r = rng::stream(101, 0);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let k = if i % 2 == 0 {
            lib(KernelSpec::gaussian(opts.sigma))?
        } else {
            lib(KernelSpec::inverse_multiquadric(1.0, 0.5))?
        };
        let d = 1 + i % 3;
        let m = r.random_range(1..=50);
        let atoms = gaussian_points(&mut r, m, d, 0.0, 1.5);
        let mut mu: Vec<f64> = (0..m)
            .map(|j| {
                if j > 0 && r.random_bool(0.2) {
                    0.0
                } else {
                    r.random_range(0.05..1.0)
                }
            })
            .collect();
        let mut pi: Vec<f64> = mu
            .iter()
            .map(|w| {
                if *w > 0.0 {
                    r.random_range(0.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        pi[0] += 0.1;
        for v in [&mut mu, &mut pi] {
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
        }
        let table = lib(DensityRatioTable::new(
            atoms.clone(),
            mu.clone(),
            pi.clone(),
        ))?;
        let mu_m = lib(DiscreteMeasure::new(atoms.clone(), mu))?;
        let pi_m = lib(DiscreteMeasure::new(atoms, pi))?;
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let diff = (lib(kernelized_force(&k, &table, &x))?
                - lib(mmd_witness(&k, &mu_m, &pi_m, &x))?)
            .abs();
            worst = worst.max(diff);
        }
    }
    ensure(worst < 1e-13, || {
        format!("max |force - witness| = {worst:e}")
    })?;
    Ok(format!("max abs error {worst:.1e}"))
}

fn decay_instance(r: &mut Rng, d: usize) -> (Ensemble, DiscreteMeasure) {
    let n = r.random_range(5..30);
    let m = r.random_range(5..30);
    let e0 = Ensemble::new(gaussian_points(r, n, d, 2.0, 1.0), random_simplex(r, n))
        .expect("simplex weights");
    let target = DiscreteMeasure::new(gaussian_points(r, m, d, 0.0, 1.0), random_simplex(r, m))
        .expect("positive masses");
    (e0, target)
}

fn birth_death_decay(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(102, 0);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let (e0, target) = decay_instance(&mut r, 1 + i % 3);
        let pi = lib(target.normalized())?;
        let m0 = lib(mmd2(&k, &e0.to_measure(), &pi))?;
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let mt = lib(mmd2(&k, &lib(fr_exact_solution(&e0, &target, t))?, &pi))?;
            let expected = (-2.0 * t).exp() * m0;
            worst = worst.max((mt - expected).abs() / expected);
        }
    }
    ensure(worst < 1e-10, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn birth_death_slope(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(103, 0);
    let (e0, target) = decay_instance(&mut r, 2);
    let pi = lib(target.normalized())?;
    let times: Vec<f64> = (0..20).map(|i| 0.25 * i as f64).collect();
    let logs = times
        .iter()
        .map(|t| Ok(0.5 * lib(mmd2(&k, &lib(fr_exact_solution(&e0, &target, *t))?, &pi))?.ln()))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let slope = fitted_slope(&times, &logs);
    ensure((slope + 1.0).abs() <= 1e-6, || format!("slope {slope}"))?;
    Ok(format!("slope {slope:.9}"))
}

fn ift_decay(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(104, 0);
    let target = DiscreteMeasure::uniform(gaussian_points(&mut r, 20, 1, 0.0, 1.0));
    let init = lib(Ensemble::uniform(gaussian_points(&mut r, 50, 1, 3.0, 1.0)))?;
    let mut rates = Vec::new();
    for beta in [0.5, 1.0] {
        let mut cfg = FlowConfig::new(FlowKind::WfrIft, k, 0.05, 100);
        cfg.alpha = 0.0;
        cfg.beta = beta;
        cfg.injection = 20;
        lib(cfg.validate())?;
        let mut flow_rng = rng::stream(cfg.seed, rng::STREAM_FLOW);
        let mut e = init.clone();
        let mut times = vec![0.0];
        let mut logs = vec![0.5 * lib(mmd2(&k, &e.to_measure(), &target))?.ln()];
        for n in 1..=cfg.steps {
            e = lib(wfr_ift_step(&e, &target, &cfg, &mut flow_rng))?;
            times.push(n as f64 * cfg.tau);
            logs.push(0.5 * lib(mmd2(&k, &e.to_measure(), &target))?.ln());
        }
        let rate = -fitted_slope(&times, &logs);
        ensure((rate - beta).abs() <= 0.1 * beta, || {
            format!("beta {beta}: fitted rate {rate}")
        })?;
        rates.push(format!("beta {beta} -> {rate:.4}"));
    }
    Ok(rates.join(", "))
}

fn ksd_sampling(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let target = lib(Target::gaussian(vec![0.0], vec![vec![1.0]]))?;
    let start = lib(Target::gaussian(vec![5.0], vec![vec![1.0]]))?;
    let s = lib(SteinKernel::new(k, &target))?;
    let mut e = lib(ensemble_from_sampler(&start, 200, 5))?;
    let ksd0 = lib(ksd2(&s, &e.to_measure()))?;
    for _ in 0..2000 {
        e = lib(ksd_wgf_step(&e, &s, 0.1))?;
    }
    let ksd_end = lib(ksd2(&s, &e.to_measure()))?;
    let (mean, cov) = lib(e.moments())?;
    let (mean, var) = (mean[0], cov[(0, 0)]);
    let detail = format!("mean {mean:.4}, variance {var:.4}, ksd2 {ksd0:.3e} -> {ksd_end:.3e}");
    ensure(
        mean.abs() < 0.1 && (var - 1.0).abs() < 0.15 && ksd_end * 10.0 <= ksd0,
        || detail.clone(),
    )?;
    Ok(detail)
}

/// Target: 200 draws of N(0, 1). Particles: 100 draws of N(2, 1).
/// τ = 0.1 is below the stability threshold `1/L` for the σ = 1 Gaussian
/// kernel, whose second derivative is bounded by 1.
fn mmd_monotone(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(106, 0);
    let target = DiscreteMeasure::uniform(gaussian_points(&mut r, 200, 1, 0.0, 1.0));
    let mut e = lib(Ensemble::uniform(gaussian_points(&mut r, 100, 1, 2.0, 1.0)))?;
    let mut prev = lib(mmd2(&k, &e.to_measure(), &target))?;
    let initial = prev;
    let mut non_increasing = 0;
    for _ in 0..500 {
        e = lib(mmd_wgf_step(&e, &target, &k, 0.1))?;
        let cur = lib(mmd2(&k, &e.to_measure(), &target))?;
        if cur <= prev {
            non_increasing += 1;
        }
        prev = cur;
    }
    let frac = non_increasing as f64 / 500.0;
    let detail = format!(
        "non-increasing on {:.1}% of steps, mmd2 {initial:.3e} -> {prev:.3e}",
        100.0 * frac
    );
    ensure(frac >= 0.95 && prev < 0.1 * initial, || detail.clone())?;
    Ok(detail)
}

fn jko_grid(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(107, 0);
    let mut worst_gap = 0.0f64;
    let mut worst_residual = 0.0f64;
    for _ in 0..20 {
        let xs: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
        let support = lib(Points::from_scalars(&xs))?;
        let prev = random_simplex(&mut r, 3);
        let pi = random_simplex(&mut r, 3);
        let eta = r.random_range(0.1..10.0);
        let target = lib(DiscreteMeasure::new(support.clone(), pi.clone()))?;
        let sol = lib(jko_step(&support, &prev, &target, &k, eta))?;

        // objective from raw kernel values
        let s2 = opts.sigma * opts.sigma;
        let gram: Vec<f64> = (0..9)
            .map(|ij| (-(xs[ij / 3] - xs[ij % 3]).powi(2) / (2.0 * s2)).exp())
            .collect();
        let quad = |a: &[f64], b: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += (a[i] - b[i]) * gram[i * 3 + j] * (a[j] - b[j]);
                }
            }
            acc
        };
        let objective = |w: &[f64]| 0.5 * quad(w, &pi) + quad(w, &prev) / (2.0 * eta);
        let grid = lib(simplex_grid_argmin(objective, 3, 1e-3))?;
        let (f_jko, f_grid) = (objective(&sol.weights), objective(&grid));
        ensure(f_jko <= f_grid + 1e-12, || {
            format!("grid beats solver: {f_grid} < {f_jko}")
        })?;
        ensure(f_grid - f_jko <= 1e-3, || {
            format!("objective gap {} exceeds grid resolution", f_grid - f_jko)
        })?;
        ensure(sol.residual < JKO_TOL, || {
            format!("KKT residual {:e}", sol.residual)
        })?;
        worst_gap = worst_gap.max(f_grid - f_jko);
        worst_residual = worst_residual.max(sol.residual);
    }
    Ok(format!(
        "max grid gap {worst_gap:.1e}, max KKT residual {worst_residual:.1e}"
    ))
}

fn stein_zero_mean(opts: &CheckOptions) -> CheckResult {
    let target = lib(Target::gaussian(vec![0.0], vec![vec![1.0]]))?;
    let s = lib(SteinKernel::new(
        lib(KernelSpec::gaussian(opts.sigma))?,
        &target,
    ))?;
    let grid = lib(QuadratureGrid::new(-10.0, 10.0, 10_000))?;
    let mut worst = 0.0f64;
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let v = lib(quad_integral(
            |y| s.eval(&[x], &[y]).expect("1D") * standard_normal_pdf(y),
            &grid,
        ))?;
        worst = worst.max(v.abs());
    }
    ensure(worst < 1e-6, || format!("max |integral| {worst:e}"))?;
    Ok(format!("max |integral| {worst:.1e}"))
}

fn gradients(opts: &CheckOptions) -> CheckResult {
    let mut r = rng::stream(109, 0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let rel = |g: &[f64], fd: &[f64]| {
        let num: f64 = g
            .iter()
            .zip(fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        num / den.max(1e-8)
    };
    for d in [1, 2, 5] {
        let eye = |s: f64| {
            (0..d)
                .map(|a| (0..d).map(|b| if a == b { s } else { 0.0 }).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let mixture = lib(Target::mixture(
            vec![(vec![-1.0; d], eye(1.0)), (vec![1.5; d], eye(0.5))],
            vec![0.3, 0.7],
        ))?;
        let kernels = [
            lib(KernelSpec::gaussian(opts.sigma))?,
            lib(KernelSpec::inverse_multiquadric(1.0, 0.5))?,
        ];
        for k in &kernels {
            let s = lib(SteinKernel::new(*k, &mixture))?;
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let y: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                let g = lib(k.grad2(&x, &y))?;
                let fd = finite_diff_grad(|p| k.eval(&x, p).expect("same dimension"), &y, h);
                worst = worst.max(rel(&g, &fd));
                let g = lib(s.grad2(&x, &y))?;
                let fd = finite_diff_grad(|p| s.eval(&x, p).expect("same dimension"), &y, h);
                worst = worst.max(rel(&g, &fd));
            }
        }
    }
    ensure(worst < 1e-6, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn mirror_oracle(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(110, 0);
    let atoms = gaussian_points(&mut r, 10, 2, 0.0, 1.0);
    let pi = random_simplex(&mut r, 10);
    let target = lib(DiscreteMeasure::new(atoms.clone(), pi.clone()))?;
    let e = lib(Ensemble::new(atoms, pi))?;
    let out = lib(mirror_step(&e, &target, &k, 0.5))?;
    let drift = out
        .weights()
        .iter()
        .zip(e.weights())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(drift <= 1e-12, || format!("fixed point moved by {drift:e}"))?;

    // two atoms at 0 and 1, μ = (0.8, 0.2), π = (0.5, 0.5), τ = 1
    let kv = (-1.0 / (2.0 * opts.sigma * opts.sigma)).exp();
    let f0 = 0.3 - 0.3 * kv;
    let f1 = 0.3 * kv - 0.3;
    let (u0, u1) = (0.8 * (-f0).exp(), 0.2 * (-f1).exp());
    let oracle = [u0 / (u0 + u1), u1 / (u0 + u1)];
    let two = lib(Points::from_scalars(&[0.0, 1.0]))?;
    let e = lib(Ensemble::new(two.clone(), vec![0.8, 0.2]))?;
    let out = lib(mirror_step(&e, &DiscreteMeasure::uniform(two), &k, 1.0))?;
    let err = out
        .weights()
        .iter()
        .zip(oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(err <= 1e-12, || format!("scalar oracle mismatch {err:e}"))?;
    Ok(format!(
        "fixed-point drift {drift:.1e}, oracle error {err:.1e}"
    ))
}

fn nw_sign(opts: &CheckOptions) -> CheckResult {
    let k = lib(KernelSpec::gaussian(opts.sigma))?;
    let mut r = rng::stream(111, 0);
    let mut compared = 0;
    for i in 0..20 {
        let d = 1 + i % 2;
        let n = r.random_range(5..40);
        let m = r.random_range(5..40);
        let e = lib(Ensemble::new(
            gaussian_points(&mut r, n, d, 0.5, 1.0),
            random_simplex(&mut r, n),
        ))?;
        let target = DiscreteMeasure::uniform(gaussian_points(&mut r, m, d, -0.5, 1.2));
        let pi = lib(target.normalized())?;
        let mu = e.to_measure();
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-4.0..4.0)).collect();
            let nw = lib(nw_witness(&e, &target, &k, &x))?;
            let w = lib(mmd_witness(&k, &mu, &pi, &x))?;
            if nw.degenerate || nw.value.abs() <= 1e-10 || w.abs() <= 1e-10 {
                continue;
            }
            compared += 1;
            ensure(nw.value.signum() == w.signum(), || {
                format!("sign mismatch at {x:?}: {} vs {w}", nw.value)
            })?;
        }
    }
    Ok(format!("{compared} probe points agree"))
}

const DETERMINISM_CONFIG: &str = r#"
[flow]
kind = "wfr_ift"
tau = 0.1
steps = 100
seed = 7
beta = 0.5
injection = 5

[kernel]
family = "gaussian"
sigma = SIGMA

[target]
kind = "empirical"
path = "target.csv"

[init]
kind = "gaussian"
n = 100
mean = [2.0]
covariance = [[1.0]]
"#;

fn determinism(opts: &CheckOptions) -> CheckResult {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng::stream(112, 0);
    let mut csv = String::from("x_1\n");
    for _ in 0..100 {
        let _ = writeln!(csv, "{}", r.sample::<f64, _>(StandardNormal));
    }
    fs::write(dir.path().join("target.csv"), csv).map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    let text = DETERMINISM_CONFIG.replace("SIGMA", &format!("{:?}", opts.sigma));
    fs::write(&config, text).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        lib(cmd_run(&config, &out))?;
        outputs.push(fs::read(out.join(METRICS_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || {
        "metrics.csv differs between identical runs".into()
    })?;
    Ok(format!("{} identical bytes", outputs[0].len()))
}
