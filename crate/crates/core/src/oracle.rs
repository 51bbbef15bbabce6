//! Randomized checks of the solver, norms and schedules against closed forms.
//! Used by `oplearn oracle-check` and the acceptance tests.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimators::{
    analytic_bias, fit_rowwise_ridge, population_regularized, EmpiricalCovariances, LambdaMap,
};
use crate::schedules::{level_count_bound, multilevel_schedule, ContourKind};
use crate::spectral::{
    bg_norm, bg_norm_via_embedding, operator_from_source, powf, EigenDecay, OperatorMatrix,
    ProblemConfig, SourceCoefficients,
};
use crate::synth::{packing_operator, random_omega, sub_seed, PackingBlock};

/// Outcome of one randomized check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    /// Largest relative discrepancy seen (or largest `L - bound` for bound checks).
    pub worst: f64,
    pub tolerance: f64,
    pub elapsed: Duration,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} instances, worst {:.3e} (tolerance {:.0e}), {:.1} ms{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.tolerance,
            self.elapsed.as_secs_f64() * 1e3,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" [{}]", self.detail)
            }
        )
    }
}

struct Tracker {
    worst: f64,
    detail: String,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst: 0.0,
            detail: String::new(),
        }
    }

    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        if err > self.worst || err.is_nan() {
            self.worst = if err.is_nan() { f64::INFINITY } else { err };
            self.detail = what();
        }
    }

    fn finish(
        self,
        name: &'static str,
        instances: usize,
        tolerance: f64,
        start: Instant,
    ) -> CheckResult {
        let passed = self.worst <= tolerance;
        CheckResult {
            name,
            passed,
            instances,
            worst: self.worst,
            tolerance,
            elapsed: start.elapsed(),
            detail: if passed { String::new() } else { self.detail },
        }
    }
}

/// `|a-b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Which side of `u = 1` a random config should fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `u ≥ 1.5`.
    InputLimited,
    /// `u ≤ 2/3`.
    OutputLimited,
    /// `u = 1` exactly (up to rounding).
    Balanced,
}

fn random_exponents(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> ProblemConfig {
    let beta = rng.random_range(0.3..0.95);
    let gamma = rng.random_range(0.0..0.6);
    ProblemConfig {
        p: rng.random_range(0.2..0.8),
        q: rng.random_range(0.2..0.8),
        alpha: rng.random_range(0.2..0.95),
        beta,
        beta_prime: beta * rng.random_range(0.05..0.9),
        gamma,
        gamma_prime: gamma + (1.0 - gamma) * rng.random_range(0.05..0.95),
        b: 1.0,
        sigma: 0.1,
        c0: 1.0,
        d_in,
        d_out,
        seed: 0,
    }
}

/// A random valid config on the requested branch.
pub fn random_branch_config(rng: &mut ChaCha8Rng, branch: Branch) -> ProblemConfig {
    loop {
        let mut cfg = random_exponents(rng, 256, 512);
        if branch == Branch::Balanced {
            let input_rate = (cfg.beta - cfg.beta_prime) / cfg.input_scale();
            cfg.gamma_prime = cfg.gamma + (1.0 - cfg.gamma) * input_rate;
        }
        let u = cfg.rates().u;
        let ok = match branch {
            Branch::InputLimited => u >= 1.5,
            Branch::OutputLimited => u <= 2.0 / 3.0,
            Branch::Balanced => (u - 1.0).abs() <= 1e-12,
        };
        if ok && cfg.validate().is_ok() {
            return cfg;
        }
    }
}

fn random_source(rng: &mut ChaCha8Rng, cfg: &ProblemConfig) -> SourceCoefficients {
    SourceCoefficients {
        a: DMatrix::from_fn(cfg.d_out, cfg.d_in, |_, _| rng.random_range(-1.0..1.0)),
        beta: cfg.beta,
        gamma: cfg.gamma,
    }
}

/// Log-uniform λ in `[1e-4, 1]`, with about one row in five left unlearned
/// when `allow_unlearned`.
fn random_lambda_map(rng: &mut ChaCha8Rng, d_out: usize, allow_unlearned: bool) -> LambdaMap {
    let rows = (0..d_out)
        .map(|_| {
            if allow_unlearned && rng.random_range(0..5) == 0 {
                None
            } else {
                Some(10f64.powf(rng.random_range(-4.0..0.0)))
            }
        })
        .collect();
    LambdaMap::new(rows).expect("positive lambdas")
}

fn random_small_instance(
    rng: &mut ChaCha8Rng,
) -> Result<(ProblemConfig, SourceCoefficients, OperatorMatrix)> {
    let d_in = rng.random_range(2..=64);
    let d_out = rng.random_range(2..=64);
    let cfg = random_exponents(rng, d_in, d_out);
    let src = random_source(rng, &cfg);
    let op = operator_from_source(
        &src,
        Arc::new(cfg.input_decay()?),
        Arc::new(cfg.output_decay()?),
    )?;
    Ok((cfg, src, op))
}

/// Closed-form bias against the norm of the population-regularized difference.
pub fn check_bias_oracle(instances: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 11));
    let mut t = Tracker::new();
    for k in 0..instances {
        let (cfg, src, a0) = random_small_instance(&mut rng)?;
        let lmap = random_lambda_map(&mut rng, cfg.d_out, true);
        let closed = analytic_bias(&src, &lmap, a0.input_decay(), a0.output_decay(), &cfg)?;
        let diff = population_regularized(&a0, &lmap)?.difference(&a0)?;
        let direct = bg_norm(&diff, cfg.beta_prime, cfg.gamma_prime);
        t.record(rel_err(closed, direct), || {
            format!("instance {k}: {closed} vs {direct}")
        });
    }
    Ok(t.finish("bias oracle", instances, 1e-10, start))
}

/// Ridge solve on population moments against the diagonal closed form.
pub fn check_solver_oracle(instances: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 12));
    let mut t = Tracker::new();
    for k in 0..instances {
        let (cfg, _, a0) = random_small_instance(&mut rng)?;
        let lmap = random_lambda_map(&mut rng, cfg.d_out, true);
        let fitted = fit_rowwise_ridge(&EmpiricalCovariances::population(&a0), &lmap)?;
        let exact = population_regularized(&a0, &lmap)?;
        let err = (&fitted - exact.matrix()).norm() / exact.matrix().norm().max(f64::MIN_POSITIVE);
        t.record(err, || format!("instance {k}"));
    }
    Ok(t.finish("solver oracle", instances, 1e-10, start))
}

/// Weighted-sum norm against the embedded Hilbert-Schmidt route.
pub fn check_norm_equivalence(instances: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 13));
    let mut t = Tracker::new();
    for k in 0..instances {
        let (_, _, op) = random_small_instance(&mut rng)?;
        let b = rng.random_range(0.0..1.0);
        let g = rng.random_range(0.0..1.0);
        let (x, y) = (bg_norm(&op, b, g), bg_norm_via_embedding(&op, b, g));
        t.record(rel_err(x, y), || format!("instance {k}: {x} vs {y}"));
    }
    Ok(t.finish("norm equivalence", instances, 1e-12, start))
}

/// Sample sizes of the schedule grid.
pub const SCHEDULE_NS: [usize; 4] = [1_000, 10_000, 100_000, 1_000_000];

/// The worked staircase configuration (`u = 6`).
pub fn worked_example_config() -> ProblemConfig {
    ProblemConfig {
        p: 0.5,
        q: 0.5,
        alpha: 0.5,
        beta: 0.9,
        beta_prime: 0.1,
        gamma: 0.1,
        gamma_prime: 0.9,
        b: 1.0,
        sigma: 0.0,
        c0: 1.0,
        d_in: 256,
        d_out: 512,
        seed: 0,
    }
}

fn contour_value(kind: ContourKind, cfg: &ProblemConfig, x: f64, y: f64) -> f64 {
    let (ex, ey) = kind.exponents(cfg);
    powf(x, ex) * powf(y, ey)
}

/// Recursion identities between consecutive staircase levels and the contour
/// equations each corner satisfies.
pub fn check_schedule_recursion(configs_per_branch: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 14));
    let mut t = Tracker::new();
    let mut instances = 0;
    for branch in [Branch::InputLimited, Branch::OutputLimited] {
        for c in 0..configs_per_branch {
            let cfg = random_branch_config(&mut rng, branch);
            let rates = cfg.rates();
            let k = cfg.p / cfg.input_scale();
            for &n in &SCHEDULE_NS {
                instances += 1;
                let nf = n as f64;
                let sched = multilevel_schedule(&cfg, n)?;
                let tag = |what: &str| format!("{branch:?} config {c}, N={n}: {what}");
                for l in &sched.levels {
                    let lhs = contour_value(ContourKind::Variance, &cfg, l.x, l.y);
                    t.record(rel_err(lhs, powf(nf, rates.eta2)), || {
                        tag("variance contour")
                    });
                }
                for w in sched.levels.windows(2) {
                    let (x0, y0, x1) = (w[0].x, w[0].y, w[1].x);
                    let lhs = contour_value(ContourKind::Bias, &cfg, x1, y0);
                    t.record(rel_err(lhs, powf(nf, rates.eta1)), || tag("bias contour"));
                    let (lhs, rhs) = match branch {
                        Branch::InputLimited => {
                            (powf(nf, -k) * x1, powf(powf(nf, -k) * x0, rates.u))
                        }
                        _ => (x1, powf(x0, rates.u)),
                    };
                    t.record(rel_err(lhs, rhs), || tag("recursion"));
                }
            }
        }
    }
    Ok(t.finish("schedule recursion", instances, 1e-9, start))
}

/// The worked staircase at `N = 2^14`: `x₀ = 16`, `y₀ = 64`, `x₁ = 0.5`.
pub fn check_worked_example() -> Result<CheckResult> {
    let start = Instant::now();
    let mut t = Tracker::new();
    let ex = multilevel_schedule(&worked_example_config(), 1 << 14)?;
    let (x0, y0) = (ex.levels[0].x, ex.levels[0].y);
    let x1 = ex.levels.get(1).map_or(f64::NAN, |l| l.x);
    let err = rel_err(x0, 16.0)
        .max(rel_err(y0, 64.0))
        .max(rel_err(x1, 0.5));
    t.record(err, || format!("x0={x0}, y0={y0}, x1={x1}"));
    Ok(t.finish("worked staircase", 1, 1e-12, start))
}

/// Level counts against `⌊3 log₂log₂N + 3⌋` (`u ≠ 1`) and `⌊2 log₂N + 3⌋` (`u = 1`).
pub fn check_level_bounds(configs_per_branch: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 14));
    let ns: Vec<usize> = SCHEDULE_NS
        .iter()
        .copied()
        .chain((8..=20).map(|k| 1usize << k))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    let mut instances = 0;
    for branch in [
        Branch::InputLimited,
        Branch::OutputLimited,
        Branch::Balanced,
    ] {
        for c in 0..configs_per_branch {
            let cfg = random_branch_config(&mut rng, branch);
            for &n in &ns {
                instances += 1;
                let (levels, bound) = level_count_bound(&cfg, n)?;
                let excess = levels as f64 - bound as f64;
                if excess > worst {
                    worst = excess;
                    detail = format!("{branch:?} config {c}, N={n}: L={levels}, bound={bound}");
                }
            }
        }
    }
    let passed = worst <= 0.0;
    Ok(CheckResult {
        name: "level-count bounds",
        passed,
        instances,
        worst,
        tolerance: 0.0,
        elapsed: start.elapsed(),
        detail: if passed { String::new() } else { detail },
    })
}

/// `‖A_ω - A_ω'‖²_{β',γ'} = (32ε/(m₁K)) ‖ω - ω'‖²` on random pairs.
pub fn check_packing_separation(pairs: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 15));
    let mut t = Tracker::new();
    for k in 0..pairs {
        let cfg = random_exponents(&mut rng, 64, 64);
        let m1 = rng.random_range(1..=32);
        let kk = rng.random_range(1..=32);
        let block = PackingBlock {
            m1,
            m2: rng.random_range(0..=64 - kk),
            k: kk,
            eps: 10f64.powf(rng.random_range(-3.0..0.0)),
        };
        let w1 = random_omega(m1, kk, rng.random());
        let w2 = random_omega(m1, kk, rng.random());
        let in_decay: Arc<EigenDecay> = Arc::new(cfg.input_decay()?);
        let out_decay: Arc<EigenDecay> = Arc::new(cfg.output_decay()?);
        let build = |w: &DMatrix<u8>| {
            packing_operator(
                &block,
                w,
                in_decay.clone(),
                out_decay.clone(),
                cfg.beta_prime,
                cfg.gamma_prime,
            )
        };
        let diff = build(&w1)?.difference(&build(&w2)?)?;
        let lhs = bg_norm(&diff, cfg.beta_prime, cfg.gamma_prime).powi(2);
        let hamming = w1.iter().zip(w2.iter()).filter(|(a, b)| a != b).count() as f64;
        let rhs = 32.0 * block.eps / (m1 * kk) as f64 * hamming;
        t.record(rel_err(lhs, rhs), || format!("pair {k}: {lhs} vs {rhs}"));
    }
    Ok(t.finish("packing separation", pairs, 1e-12, start))
}

/// Every check at its standard size.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_bias_oracle(50, seed)?,
        check_solver_oracle(50, seed)?,
        check_norm_equivalence(100, seed)?,
        check_schedule_recursion(20, seed)?,
        check_worked_example()?,
        check_level_bounds(20, seed)?,
        check_packing_separation(50, seed)?,
    ])
}
