//! Regularization schedules: per-row contour λ's and the multilevel staircase.
//!
//! Points `(x, y)` live in the (input frequency, output frequency) plane. An
//! input frequency `x` corresponds to the ridge strength `λ = x^{-1/p}`, the
//! eigenvalue of the `x`-th input direction. The variance contour at level `C`
//! is `x^{(β'+max{α-β,p})/p} y^{(1-γ')/q} = C`; the bias contour is
//! `x^{(β-β')/p} y^{(γ'-γ)/q} = C`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{theoretical_rate, ProblemConfig};

/// Relative tolerance under which `u` is treated as exactly 1.
pub const SPECIAL_CASE_TOL: f64 = 1e-9;

const MAX_LEVELS: usize = 10_000;

/// `⌈x⌉`, except that values within `1e-9` relative of an integer snap to it,
/// so `N^{1/2} = 128` computed as `128.00000000000003` still yields 128.
pub fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `c0 (N / ln N)^{-1/α}`.
pub fn lambda_floor(cfg: &ProblemConfig, n: usize) -> f64 {
    let nf = n as f64;
    cfg.c0 * (-(nf / nf.ln()).ln() / cfg.alpha).exp()
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::arg(
            "n",
            format!("sample count must be at least 2, got {n}"),
        ));
    }
    Ok(())
}

/// Per-row ridge strengths for rows `1..=y_max` (stored 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub y_max: usize,
    pub lambdas: Vec<f64>,
    pub clamped: bool,
}

/// Learned output rows of the contour schedules: `⌈N^{(q/(1-γ')) η₂}⌉`, clamped to `d_out`.
fn contour_row_count(cfg: &ProblemConfig, n: usize) -> (usize, bool) {
    let eta2 = theoretical_rate(cfg).eta2;
    let y = snap_ceil(((cfg.q / (1.0 - cfg.gamma_prime)) * eta2 * (n as f64).ln()).exp());
    if y > cfg.d_out as f64 {
        (cfg.d_out, true)
    } else {
        (y.max(1.0) as usize, false)
    }
}

/// `λ_j = max{(j^{-(1-γ')/q} N^{η₂})^{-1/(β'+max{α-β,p})}, floor}`.
pub fn variance_lambdas(cfg: &ProblemConfig, n: usize) -> Result<LambdaSchedule> {
    check_n(n)?;
    let rates = theoretical_rate(cfg);
    let (y_max, clamped) = contour_row_count(cfg, n);
    let floor = lambda_floor(cfg, n);
    let ln_n = (n as f64).ln();
    let ve = cfg.variance_exponent();
    let lambdas = (1..=y_max)
        .map(|j| {
            let ln_inner = -(1.0 - cfg.gamma_prime) / cfg.q * (j as f64).ln() + rates.eta2 * ln_n;
            (-ln_inner / ve).exp().max(floor)
        })
        .collect();
    Ok(LambdaSchedule {
        y_max,
        lambdas,
        clamped,
    })
}

/// `λ_j = max{(j^{-(γ'-γ)/q} N^{η₁})^{-1/(β-β')}, floor}` over the same rows.
pub fn bias_lambdas(cfg: &ProblemConfig, n: usize) -> Result<LambdaSchedule> {
    check_n(n)?;
    let rates = theoretical_rate(cfg);
    let (y_max, clamped) = contour_row_count(cfg, n);
    let floor = lambda_floor(cfg, n);
    let ln_n = (n as f64).ln();
    let lambdas = (1..=y_max)
        .map(|j| {
            let ln_inner =
                -(cfg.gamma_prime - cfg.gamma) / cfg.q * (j as f64).ln() + rates.eta1 * ln_n;
            (-ln_inner / (cfg.beta - cfg.beta_prime)).exp().max(floor)
        })
        .collect();
    Ok(LambdaSchedule {
        y_max,
        lambdas,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContourKind {
    Bias,
    Variance,
}

impl ContourKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContourKind::Bias => "bias",
            ContourKind::Variance => "variance",
        }
    }

    /// `(e_x, e_y)` of the contour `x^{e_x} y^{e_y} = C`.
    pub fn exponents(self, cfg: &ProblemConfig) -> (f64, f64) {
        match self {
            ContourKind::Variance => (
                cfg.variance_exponent() / cfg.p,
                (1.0 - cfg.gamma_prime) / cfg.q,
            ),
            ContourKind::Bias => (
                (cfg.beta - cfg.beta_prime) / cfg.p,
                (cfg.gamma_prime - cfg.gamma) / cfg.q,
            ),
        }
    }

    /// `y` solving the contour equation at `x`, given `ln C`.
    fn solve_y(self, cfg: &ProblemConfig, ln_level: f64, x: f64) -> f64 {
        let (ex, ey) = self.exponents(cfg);
        ((ln_level - ex * x.ln()) / ey).exp()
    }

    /// `x` solving the contour equation at `y`, given `ln C`.
    fn solve_x(self, cfg: &ProblemConfig, ln_level: f64, y: f64) -> f64 {
        let (ex, ey) = self.exponents(cfg);
        ((ln_level - ey * y.ln()) / ex).exp()
    }
}

/// `samples` log-spaced points on the contour `x^{e_x} y^{e_y} = level`.
pub fn contour_points(
    kind: ContourKind,
    level: f64,
    cfg: &ProblemConfig,
    x_range: (f64, f64),
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(level.is_finite() && level > 0.0) {
        return Err(Error::arg(
            "level",
            format!("must be positive, got {level}"),
        ));
    }
    let (lo, hi) = x_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::arg(
            "x_range",
            format!("need 0 < lo <= hi, got ({lo}, {hi})"),
        ));
    }
    if samples == 0 {
        return Err(Error::arg("samples", "must be at least 1"));
    }
    let ln_level = level.ln();
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    Ok((0..samples)
        .map(|s| {
            let x = if samples == 1 {
                lo
            } else {
                (ln_lo + (ln_hi - ln_lo) * s as f64 / (samples - 1) as f64).exp()
            };
            (x, kind.solve_y(cfg, ln_level, x))
        })
        .collect())
}

/// One rectangle of the staircase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Input frequency; the level's ridge strength before flooring is `x^{-1/p}`.
    pub x: f64,
    /// Output frequency bound (real, before clamping).
    pub y: f64,
    pub lambda: f64,
    /// 1-based half-open output row range `[⌈y_{i-1}⌉, ⌈y_i⌉)`, clamped to the grid.
    pub rows: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub levels: Vec<Level>,
    pub eta1: f64,
    pub eta2: f64,
    pub u: f64,
    /// `u = 1`: bias and variance contours coincide; `x` halves per level.
    pub special_case: bool,
    /// The last `y` exceeded `d_out`.
    pub clamped: bool,
}

impl LevelSchedule {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of output rows covered by some level.
    pub fn learned_rows(&self) -> usize {
        self.levels.last().map_or(0, |l| l.rows.end - 1)
    }
}

/// Builds the multilevel staircase for `N = n` samples.
///
/// For `u ≠ 1`, `y_n` solves the variance contour at level `N^{η₂}` through
/// `x_n` and `x_{n+1}` the bias contour at level `N^{η₁}` through `y_n`,
/// stopping at the first `x_L ≤ 2`. For `u = 1` the `x_n` halve and `y_n`
/// follows the bias contour, stopping at the first `x_L < 1`. The start point
/// `x_0 = ½ N^{p η₂ / (β'+max{α-β,p})}` is where the variance contour crosses
/// `y = 1`, halved.
pub fn multilevel_schedule(cfg: &ProblemConfig, n: usize) -> Result<LevelSchedule> {
    check_n(n)?;
    let rates = theoretical_rate(cfg);
    let ln_n = (n as f64).ln();
    let floor = lambda_floor(cfg, n);
    let special_case = (rates.u - 1.0).abs() <= SPECIAL_CASE_TOL;
    let var_level = rates.eta2 * ln_n;
    let bias_level = rates.eta1 * ln_n;

    let mut x = 0.5 * (cfg.p / cfg.variance_exponent() * rates.eta2 * ln_n).exp();
    let mut points = Vec::new();
    loop {
        if points.len() >= MAX_LEVELS {
            return Err(Error::arg(
                "cfg",
                format!(
                    "multilevel schedule exceeded {MAX_LEVELS} levels (u = {})",
                    rates.u
                ),
            ));
        }
        if special_case {
            let y = ContourKind::Bias.solve_y(cfg, bias_level, x);
            points.push((x, y));
            if x < 1.0 {
                break;
            }
            x *= 0.5;
        } else {
            let y = ContourKind::Variance.solve_y(cfg, var_level, x);
            points.push((x, y));
            if x <= 2.0 {
                break;
            }
            x = ContourKind::Bias.solve_x(cfg, bias_level, y);
        }
    }

    let row_cap = cfg.d_out + 1;
    let mut start = 1usize;
    let levels = points
        .into_iter()
        .map(|(x, y)| {
            let end = (snap_ceil(y).min(row_cap as f64) as usize).max(start);
            let level = Level {
                x,
                y,
                lambda: (-x.ln() / cfg.p).exp().max(floor),
                rows: start..end,
            };
            start = end;
            level
        })
        .collect::<Vec<_>>();
    let clamped = levels.last().is_some_and(|l| l.y > cfg.d_out as f64);
    Ok(LevelSchedule {
        levels,
        eta1: rates.eta1,
        eta2: rates.eta2,
        u: rates.u,
        special_case,
        clamped,
    })
}

/// Realized level count and its ceiling: `⌊3 log₂log₂N + 3⌋` for `u ≠ 1`,
/// `⌊2 log₂N + 3⌋` for `u = 1`.
pub fn level_count_bound(cfg: &ProblemConfig, n: usize) -> Result<(usize, usize)> {
    let schedule = multilevel_schedule(cfg, n)?;
    let log2n = (n as f64).log2();
    let bound = if schedule.special_case {
        2.0 * log2n + 3.0
    } else {
        3.0 * log2n.log2() + 3.0
    };
    Ok((schedule.len(), bound.floor() as usize))
}
