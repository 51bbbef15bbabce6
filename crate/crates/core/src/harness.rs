//! Trials, N-sweeps and rate fitting.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TruthInstance};
use crate::error::{Error, Result};
use crate::estimators::{
    default_single_exponent, fit_rowwise_ridge, streamed_covariances, EmpiricalCovariances,
    EstimatorKind, LambdaMap, DEFAULT_CHUNK_ROWS,
};
use crate::spectral::{bg_norm, OperatorMatrix, ProblemConfig};
use crate::synth::mix64;

/// Dataset seed of trial `trial` at sample size `n`.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    seed ^ mix64(mix64(n as u64) ^ trial as u64)
}

/// A config with its realized ground truth, ready to run trials.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub truth: TruthInstance,
    /// Baseline rule `λ = N^{-single_exponent}`.
    pub single_exponent: f64,
    pub chunk_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub estimator: EstimatorKind,
    pub error_sq: f64,
    pub elapsed: Duration,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let truth = config.ground_truth.build(&config.problem)?;
        let single_exponent = default_single_exponent(&config.problem);
        Ok(Self {
            config,
            truth,
            single_exponent,
            chunk_rows: DEFAULT_CHUNK_ROWS,
        })
    }

    pub fn with_single_exponent(mut self, exponent: f64) -> Result<Self> {
        if !exponent.is_finite() {
            return Err(Error::arg(
                "single_exponent",
                format!("must be finite, got {exponent}"),
            ));
        }
        self.single_exponent = exponent;
        Ok(self)
    }

    pub fn cfg(&self) -> &ProblemConfig {
        &self.config.problem
    }

    pub fn a0(&self) -> &OperatorMatrix {
        &self.truth.operator
    }

    /// Second moments of the dataset for cell `(n, trial)`.
    pub fn covariances(&self, n: usize, trial: usize) -> Result<EmpiricalCovariances> {
        streamed_covariances(
            self.a0(),
            n,
            &self.config.noise,
            trial_seed(self.cfg().seed, n, trial),
            self.chunk_rows,
        )
    }

    pub fn fit(&self, cov: &EmpiricalCovariances, lmap: &LambdaMap) -> Result<OperatorMatrix> {
        let m = fit_rowwise_ridge(cov, lmap)?;
        OperatorMatrix::new(
            m,
            Arc::clone(self.a0().input_decay()),
            Arc::clone(self.a0().output_decay()),
        )
    }

    /// `‖Â - A₀‖²` in the `(β', γ')` norm.
    pub fn error_sq(&self, a_hat: &OperatorMatrix) -> Result<f64> {
        let diff = a_hat.difference(self.a0())?;
        Ok(bg_norm(&diff, self.cfg().beta_prime, self.cfg().gamma_prime).powi(2))
    }

    pub fn lambda_map(&self, estimator: EstimatorKind, n: usize) -> Result<LambdaMap> {
        estimator.lambda_map(self.cfg(), n, self.single_exponent)
    }

    pub fn run_trial(
        &self,
        n: usize,
        trial: usize,
        estimator: EstimatorKind,
    ) -> Result<TrialOutcome> {
        Ok(self.run_cell(n, trial, &[estimator])?[0])
    }

    /// Runs a trial with an explicit λ assignment.
    pub fn run_trial_with_map(&self, n: usize, trial: usize, lmap: &LambdaMap) -> Result<f64> {
        let cov = self.covariances(n, trial)?;
        self.error_sq(&self.fit(&cov, lmap)?)
    }

    /// Runs several estimators on the same dataset; each result equals the
    /// corresponding [`run_trial`](Self::run_trial).
    pub fn run_cell(
        &self,
        n: usize,
        trial: usize,
        estimators: &[EstimatorKind],
    ) -> Result<Vec<TrialOutcome>> {
        let start = Instant::now();
        let cov = self.covariances(n, trial)?;
        let shared = start.elapsed();
        estimators
            .iter()
            .map(|&estimator| {
                let start = Instant::now();
                let a_hat = self.fit(&cov, &self.lambda_map(estimator, n)?)?;
                let error_sq = self.error_sq(&a_hat)?;
                Ok(TrialOutcome {
                    estimator,
                    error_sq,
                    elapsed: shared + start.elapsed(),
                })
            })
            .collect()
    }
}

/// An N-sweep.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub config: ExperimentConfig,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Baseline exponent; `1/(β+p)` when `None`.
    pub single_exponent: Option<f64>,
    pub workers: usize,
    /// Keep wall-clock timings in the report. Off by default so reports are reproducible.
    pub record_timings: bool,
}

impl ExperimentPlan {
    pub fn new(config: ExperimentConfig, n_list: Vec<usize>, trials: usize) -> Self {
        Self {
            config,
            n_list,
            trials,
            estimators: EstimatorKind::ALL.to_vec(),
            single_exponent: None,
            workers: 1,
            record_timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.len() < 3 {
            return Err(Error::InsufficientPoints(self.n_list.len()));
        }
        if self.n_list[0] < 2 {
            return Err(Error::arg("n_list", "sample counts must be at least 2"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("n_list", "must be strictly increasing"));
        }
        if self.trials == 0 {
            return Err(Error::arg("trials", "must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::arg("estimators", "need at least one estimator"));
        }
        if self.workers == 0 {
            return Err(Error::arg("workers", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub trial: usize,
    pub error_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub median_error_sq: f64,
    /// First quartile.
    pub iqr_low: f64,
    /// Third quartile.
    pub iqr_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorFit {
    pub estimator: EstimatorKind,
    #[serde(flatten)]
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: serde_json::Value,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub single_exponent: f64,
    pub theoretical_eta1: f64,
    /// `-eta1`, the slope the fits are compared against.
    pub theoretical_slope: f64,
    pub fits: Vec<EstimatorFit>,
    pub summaries: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

impl RateReport {
    pub fn summary(&self, estimator: EstimatorKind, n: usize) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|s| s.estimator == estimator && s.n == n)
    }

    pub fn fit(&self, estimator: EstimatorKind) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|f| f.estimator == estimator)
            .map(|f| &f.fit)
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n-1) prob`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least squares line through `(ln n, ln err_sq)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    if points
        .iter()
        .any(|&(n, e)| !(n > 0.0 && e > 0.0 && n.is_finite() && e.is_finite()))
    {
        return Err(Error::DegenerateFit(
            "sample counts and errors must be positive and finite",
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::DegenerateFit("all sample counts are equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Runs every `(estimator, N, trial)` cell and fits one rate per estimator.
/// Results do not depend on `plan.workers`.
pub fn run_convergence(plan: &ExperimentPlan) -> Result<RateReport> {
    plan.validate()?;
    let mut experiment = Experiment::new(plan.config.clone())?;
    if let Some(e) = plan.single_exponent {
        experiment = experiment.with_single_exponent(e)?;
    }
    // Largest N first so the slowest cells start early.
    let cells: Vec<(usize, usize)> = plan
        .n_list
        .iter()
        .rev()
        .flat_map(|&n| (0..plan.trials).map(move |t| (n, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::arg("workers", e.to_string()))?;
    let outcomes: Vec<Vec<TrialOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, t)| experiment.run_cell(n, t, &plan.estimators))
            .collect::<Result<_>>()
    })?;

    let mut runs = Vec::with_capacity(cells.len() * plan.estimators.len());
    for (&(n, trial), cell) in cells.iter().zip(&outcomes) {
        for o in cell {
            runs.push(RunRecord {
                estimator: o.estimator,
                n,
                trial,
                error_sq: o.error_sq,
                elapsed_ms: plan.record_timings.then_some(o.elapsed.as_secs_f64() * 1e3),
            });
        }
    }
    let order = |e: EstimatorKind| plan.estimators.iter().position(|&x| x == e);
    runs.sort_by_key(|r| (order(r.estimator), r.n, r.trial));

    let mut summaries = Vec::new();
    let mut fits = Vec::new();
    for &estimator in &plan.estimators {
        let mut points = Vec::new();
        for &n in &plan.n_list {
            let mut errs: Vec<f64> = runs
                .iter()
                .filter(|r| r.estimator == estimator && r.n == n)
                .map(|r| r.error_sq)
                .collect();
            errs.sort_by(f64::total_cmp);
            let median = quantile(&errs, 0.5);
            summaries.push(CellSummary {
                estimator,
                n,
                median_error_sq: median,
                iqr_low: quantile(&errs, 0.25),
                iqr_high: quantile(&errs, 0.75),
            });
            points.push((n as f64, median));
        }
        fits.push(EstimatorFit {
            estimator,
            fit: fit_rate(&points)?,
        });
    }

    let eta1 = plan.config.problem.rates().eta1;
    Ok(RateReport {
        config: plan.config.to_value(),
        n_list: plan.n_list.clone(),
        trials: plan.trials,
        single_exponent: experiment.single_exponent,
        theoretical_eta1: eta1,
        theoretical_slope: -eta1,
        fits,
        summaries,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fit_rate_exact_lines() {
        let f = fit_rate(&[(2.0, 4.0), (4.0, 2.0), (8.0, 1.0)]).unwrap();
        assert_relative_eq!(f.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);

        let pts: Vec<(f64, f64)> = (10..17)
            .map(|k| {
                let n = 2f64.powi(k);
                (n, 3.0 * n.powf(-0.5))
            })
            .collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope + 0.5).abs() <= 1e-12);
        assert_relative_eq!(f.intercept, 3f64.ln(), epsilon = 1e-10);

        let f = fit_rate(&[(2.0, 5.0), (4.0, 5.0), (8.0, 5.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn fit_rate_errors() {
        assert!(matches!(
            fit_rate(&[(2.0, 1.0), (4.0, 1.0)]),
            Err(Error::InsufficientPoints(2))
        ));
        assert!(matches!(
            fit_rate(&[(4.0, 1.0), (4.0, 2.0), (4.0, 3.0)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_rate(&[(2.0, 1.0), (4.0, 0.0), (8.0, 3.0)]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[7.0], 0.5), 7.0);
    }

    #[test]
    fn trial_seeds_differ_across_cells() {
        let a = trial_seed(1, 1024, 0);
        assert_ne!(a, trial_seed(1, 1024, 1));
        assert_ne!(a, trial_seed(1, 2048, 0));
        assert_ne!(a, trial_seed(2, 1024, 0));
        assert_eq!(a, trial_seed(1, 1024, 0));
    }

    #[test]
    fn plan_validation() {
        let cfg = ExperimentConfig::template();
        assert!(ExperimentPlan::new(cfg.clone(), vec![4, 8, 16], 1)
            .validate()
            .is_ok());
        assert!(matches!(
            ExperimentPlan::new(cfg.clone(), vec![4, 8], 1).validate(),
            Err(Error::InsufficientPoints(2))
        ));
        assert!(ExperimentPlan::new(cfg.clone(), vec![4, 16, 8], 1)
            .validate()
            .is_err());
        assert!(ExperimentPlan::new(cfg.clone(), vec![4, 8, 16], 0)
            .validate()
            .is_err());
        let mut plan = ExperimentPlan::new(cfg, vec![4, 8, 16], 1);
        plan.workers = 0;
        assert!(plan.validate().is_err());
    }
}
