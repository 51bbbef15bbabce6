//! Coordinate conventions, eigenvalue decays, operators and their norms.
//!
//! Every operator is stored in orthonormal coordinates: column `i` is the
//! input direction `φ_i = μ_i^{1/2} e_i` and row `j` the output direction
//! `φ'_j = ρ_j^{1/2} f_j`, both 0-based in memory while eigenvalue indices are
//! 1-based (`values[0]` is `μ_1`). In these frames an interpolation-space norm
//! is a diagonally weighted Frobenius norm, so nothing here needs quadrature.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `base^exponent` evaluated as `exp(exponent * ln(base))`.
#[inline]
pub fn powf(base: f64, exponent: f64) -> f64 {
    (exponent * base.ln()).exp()
}

fn default_c0() -> f64 {
    1.0
}

/// Problem exponents, scales and truncation sizes for one simulated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Input eigendecay exponent, `μ_i = i^{-1/p}`.
    pub p: f64,
    /// Output eigendecay exponent, `ρ_j = j^{-1/q}`.
    pub q: f64,
    /// Embedding exponent of the input space.
    pub alpha: f64,
    /// Input source exponent of the ground truth.
    pub beta: f64,
    /// Input exponent of the error norm.
    pub beta_prime: f64,
    /// Output source exponent of the ground truth.
    pub gamma: f64,
    /// Output exponent of the error norm.
    pub gamma_prime: f64,
    /// Bound on the `(β,γ)`-norm of the ground truth.
    #[serde(rename = "B")]
    pub b: f64,
    /// Noise trace scale.
    pub sigma: f64,
    /// Constant in the regularization floor `c0 (N / ln N)^{-1/α}`.
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub d_in: usize,
    pub d_out: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Exponents derived from a [`ProblemConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    /// Squared-error decay exponent, `min{input_rate, output_rate}`.
    pub eta1: f64,
    /// `1 - eta1`.
    pub eta2: f64,
    /// Ratio driving the multilevel recursion; `u > 1` iff the input side limits the rate.
    pub u: f64,
    /// `(β-β')/max{α,β+p}`.
    pub input_rate: f64,
    /// `(γ'-γ)/(1-γ)`.
    pub output_rate: f64,
}

impl ProblemConfig {
    /// Checks every range constraint, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        fn open_unit(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must lie in (0,1), got {v}")))
            }
        }
        open_unit("p", self.p)?;
        open_unit("q", self.q)?;
        open_unit("alpha", self.alpha)?;
        if !(self.beta.is_finite() && (0.0..1.0).contains(&self.beta)) {
            return Err(Error::config(
                "beta",
                format!("must lie in [0,1), got {}", self.beta),
            ));
        }
        if !(self.gamma.is_finite() && (0.0..1.0).contains(&self.gamma)) {
            return Err(Error::config(
                "gamma",
                format!("must lie in [0,1), got {}", self.gamma),
            ));
        }
        if !(self.beta_prime > 0.0 && self.beta_prime < self.beta) {
            return Err(Error::config(
                "beta_prime",
                format!(
                    "must lie in (0, beta={}), got {}",
                    self.beta, self.beta_prime
                ),
            ));
        }
        if !(self.gamma_prime > self.gamma && self.gamma_prime < 1.0) {
            return Err(Error::config(
                "gamma_prime",
                format!(
                    "must lie in (gamma={}, 1), got {}",
                    self.gamma, self.gamma_prime
                ),
            ));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::config(
                "B",
                format!("must be finite and nonnegative, got {}", self.b),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config(
                "sigma",
                format!("must be finite and nonnegative, got {}", self.sigma),
            ));
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(Error::config(
                "c0",
                format!("must be positive, got {}", self.c0),
            ));
        }
        if self.d_in == 0 {
            return Err(Error::config("d_in", "must be at least 1"));
        }
        if self.d_out == 0 {
            return Err(Error::config("d_out", "must be at least 1"));
        }
        Ok(())
    }

    /// `β' + max{α-β, p}`: the variance exponent of one input-regularized row,
    /// covering the hard regime `α > β + p`.
    pub fn variance_exponent(&self) -> f64 {
        self.beta_prime + (self.alpha - self.beta).max(self.p)
    }

    /// `max{α, β+p}`.
    pub fn input_scale(&self) -> f64 {
        self.alpha.max(self.beta + self.p)
    }

    pub fn rates(&self) -> RateExponents {
        theoretical_rate(self)
    }

    pub fn input_decay(&self) -> Result<EigenDecay> {
        make_decay(self.d_in, self.p)
    }

    pub fn output_decay(&self) -> Result<EigenDecay> {
        make_decay(self.d_out, self.q)
    }
}

/// Eigenvalues `values[i] = (i+1)^{-1/exponent}` of a truncated covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecay {
    values: Vec<f64>,
    exponent: f64,
}

impl EigenDecay {
    /// Power-law decay for any positive exponent. [`make_decay`] is the
    /// checked entry point for the `(0,1)` capacity range.
    pub fn power_law(dim: usize, exponent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dim", "must be at least 1"));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::arg(
                "exponent",
                format!("must be positive, got {exponent}"),
            ));
        }
        let values = (1..=dim).map(|i| powf(i as f64, -1.0 / exponent)).collect();
        Ok(Self { values, exponent })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds `μ_i = i^{-1/exponent}` for `i = 1..=dim`.
pub fn make_decay(dim: usize, exponent: f64) -> Result<EigenDecay> {
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::arg(
            "exponent",
            format!("must lie in (0,1), got {exponent}"),
        ));
    }
    EigenDecay::power_law(dim, exponent)
}

/// Spectral coefficients `a[j][i]` of an operator relative to the
/// `(β,γ)` source frame (`D_out × D_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCoefficients {
    pub a: DMatrix<f64>,
    pub beta: f64,
    pub gamma: f64,
}

impl SourceCoefficients {
    pub fn frobenius_norm(&self) -> f64 {
        self.a.norm()
    }
}

/// A `D_out × D_in` operator in orthonormal coordinates `⟨φ'_j, A φ_i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    m: DMatrix<f64>,
    input_decay: Arc<EigenDecay>,
    output_decay: Arc<EigenDecay>,
}

impl OperatorMatrix {
    pub fn new(
        m: DMatrix<f64>,
        input_decay: Arc<EigenDecay>,
        output_decay: Arc<EigenDecay>,
    ) -> Result<Self> {
        if m.ncols() != input_decay.len() {
            return Err(Error::DimensionMismatch {
                context: "operator columns vs input decay",
                expected: input_decay.len(),
                found: m.ncols(),
            });
        }
        if m.nrows() != output_decay.len() {
            return Err(Error::DimensionMismatch {
                context: "operator rows vs output decay",
                expected: output_decay.len(),
                found: m.nrows(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("m", "operator entries must be finite"));
        }
        Ok(Self {
            m,
            input_decay,
            output_decay,
        })
    }

    pub fn zeros(input_decay: Arc<EigenDecay>, output_decay: Arc<EigenDecay>) -> Self {
        let m = DMatrix::zeros(output_decay.len(), input_decay.len());
        Self {
            m,
            input_decay,
            output_decay,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn input_decay(&self) -> &Arc<EigenDecay> {
        &self.input_decay
    }

    pub fn output_decay(&self) -> &Arc<EigenDecay> {
        &self.output_decay
    }

    pub fn d_in(&self) -> usize {
        self.m.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.m.nrows()
    }

    /// `self - other`; both operands must live on the same spectral grid.
    pub fn difference(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        if self.m.shape() != other.m.shape() {
            return Err(Error::DimensionMismatch {
                context: "operator difference",
                expected: self.m.len(),
                found: other.m.len(),
            });
        }
        if self.input_decay.values() != other.input_decay.values()
            || self.output_decay.values() != other.output_decay.values()
        {
            return Err(Error::arg("other", "operators use different eigendecays"));
        }
        Ok(OperatorMatrix {
            m: &self.m - &other.m,
            input_decay: Arc::clone(&self.input_decay),
            output_decay: Arc::clone(&self.output_decay),
        })
    }

    /// Same decays, scaled entries.
    pub fn scaled(&self, c: f64) -> OperatorMatrix {
        OperatorMatrix {
            m: &self.m * c,
            input_decay: Arc::clone(&self.input_decay),
            output_decay: Arc::clone(&self.output_decay),
        }
    }
}

/// Maps source coefficients to orthonormal coordinates:
/// `m[j][i] = a[j][i] μ_i^{(β-1)/2} ρ_j^{(1-γ)/2}`.
pub fn operator_from_source(
    src: &SourceCoefficients,
    in_decay: Arc<EigenDecay>,
    out_decay: Arc<EigenDecay>,
) -> Result<OperatorMatrix> {
    if src.a.ncols() != in_decay.len() {
        return Err(Error::DimensionMismatch {
            context: "source columns vs input decay",
            expected: in_decay.len(),
            found: src.a.ncols(),
        });
    }
    if src.a.nrows() != out_decay.len() {
        return Err(Error::DimensionMismatch {
            context: "source rows vs output decay",
            expected: out_decay.len(),
            found: src.a.nrows(),
        });
    }
    let col_w: Vec<f64> = in_decay
        .values()
        .iter()
        .map(|&mu| powf(mu, (src.beta - 1.0) / 2.0))
        .collect();
    let row_w: Vec<f64> = out_decay
        .values()
        .iter()
        .map(|&rho| powf(rho, (1.0 - src.gamma) / 2.0))
        .collect();
    let m = DMatrix::from_fn(src.a.nrows(), src.a.ncols(), |j, i| {
        src.a[(j, i)] * col_w[i] * row_w[j]
    });
    OperatorMatrix::new(m, in_decay, out_decay)
}

/// The `(b,g)`-norm: `sqrt(Σ μ_i^{1-b} ρ_j^{-(1-g)} m[j][i]²)`.
pub fn bg_norm(op: &OperatorMatrix, b: f64, g: f64) -> f64 {
    let col_w: Vec<f64> = op
        .input_decay
        .values()
        .iter()
        .map(|&mu| powf(mu, 1.0 - b))
        .collect();
    let row_w: Vec<f64> = op
        .output_decay
        .values()
        .iter()
        .map(|&rho| powf(rho, -(1.0 - g)))
        .collect();
    let mut acc = 0.0;
    for (i, &cw) in col_w.iter().enumerate() {
        let col = op.m.column(i);
        let mut s = 0.0;
        for (j, &v) in col.iter().enumerate() {
            s += row_w[j] * v * v;
        }
        acc += cw * s;
    }
    acc.sqrt()
}

/// The same norm through the embedding route: `‖C_L^{-(1-g)/2} T C_K^{(1-b)/2}‖_HS`,
/// rescaling columns and rows explicitly before a plain Frobenius norm.
pub fn bg_norm_via_embedding(op: &OperatorMatrix, b: f64, g: f64) -> f64 {
    let mut t = op.m.clone();
    for (i, &mu) in op.input_decay.values().iter().enumerate() {
        t.column_mut(i).scale_mut(powf(mu, (1.0 - b) / 2.0));
    }
    for (j, &rho) in op.output_decay.values().iter().enumerate() {
        t.row_mut(j).scale_mut(powf(rho, -(1.0 - g) / 2.0));
    }
    t.norm()
}

/// Optimal rate exponents and the multilevel recursion ratio `u`.
pub fn theoretical_rate(cfg: &ProblemConfig) -> RateExponents {
    let input_rate = (cfg.beta - cfg.beta_prime) / cfg.input_scale();
    let output_rate = (cfg.gamma_prime - cfg.gamma) / (1.0 - cfg.gamma);
    let eta1 = input_rate.min(output_rate);
    let u = cfg.variance_exponent() / (cfg.beta - cfg.beta_prime) * (cfg.gamma_prime - cfg.gamma)
        / (1.0 - cfg.gamma_prime);
    RateExponents {
        eta1,
        eta2: 1.0 - eta1,
        u,
        input_rate,
        output_rate,
    }
}
