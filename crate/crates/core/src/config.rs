//! JSON experiment configuration: problem exponents, ground truth and noise.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::spectral::{OperatorMatrix, ProblemConfig, SourceCoefficients};
use crate::synth::{
    laplacian_operator, packing_operator, random_omega, random_source_operator_with_taper,
    sub_seed, NoiseKind, NoiseProfile, PackingBlock, DEFAULT_TAPER,
};

/// Sub-seed stream for the ground-truth draw.
const TRUTH_STREAM: u64 = 3;
/// Sub-seed stream for a random packing pattern.
const OMEGA_STREAM: u64 = 4;

fn default_taper() -> f64 {
    DEFAULT_TAPER
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomParams {
    #[serde(default = "default_taper")]
    pub taper: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            taper: DEFAULT_TAPER,
        }
    }
}

/// Diagonal Laplacian-power truth; the smoothness orders are `s = 1/(2p)`, `m = 1/(2q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplacianParams {
    pub t: i32,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingParams {
    pub m1: usize,
    #[serde(default)]
    pub m2: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub eps: f64,
    /// Explicit `m1 × K` pattern; drawn from the config seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<u8>>>,
}

impl PackingParams {
    pub fn block(&self) -> PackingBlock {
        PackingBlock {
            m1: self.m1,
            m2: self.m2,
            k: self.k,
            eps: self.eps,
        }
    }

    pub fn omega(&self, seed: u64) -> Result<DMatrix<u8>> {
        match &self.omega {
            None => Ok(random_omega(self.m1, self.k, sub_seed(seed, OMEGA_STREAM))),
            Some(rows) => {
                if rows.len() != self.m1 || rows.iter().any(|r| r.len() != self.k) {
                    return Err(Error::config(
                        "ground_truth.params.omega",
                        format!("must be an {} x {} array", self.m1, self.k),
                    ));
                }
                if rows.iter().flatten().any(|&w| w > 1) {
                    return Err(Error::config(
                        "ground_truth.params.omega",
                        "entries must be 0 or 1",
                    ));
                }
                Ok(DMatrix::from_fn(self.m1, self.k, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum GroundTruth {
    Random(RandomParams),
    Laplacian(LaplacianParams),
    Packing(PackingParams),
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth::Random(RandomParams::default())
    }
}

/// A realized ground truth.
#[derive(Debug, Clone)]
pub struct TruthInstance {
    pub operator: OperatorMatrix,
    /// Source coefficients for `(β, γ)`, when the construction provides them.
    pub source: Option<SourceCoefficients>,
}

impl GroundTruth {
    pub fn kind(&self) -> &'static str {
        match self {
            GroundTruth::Random(_) => "random",
            GroundTruth::Laplacian(_) => "laplacian",
            GroundTruth::Packing(_) => "packing",
        }
    }

    pub fn build(&self, cfg: &ProblemConfig) -> Result<TruthInstance> {
        match self {
            GroundTruth::Random(params) => {
                let (src, op) = random_source_operator_with_taper(
                    cfg,
                    params.taper,
                    sub_seed(cfg.seed, TRUTH_STREAM),
                )?;
                Ok(TruthInstance {
                    operator: op,
                    source: Some(src),
                })
            }
            GroundTruth::Laplacian(params) => {
                let truth = laplacian_operator(
                    1.0 / (2.0 * cfg.p),
                    1.0 / (2.0 * cfg.q),
                    params.t,
                    cfg.d_in,
                    cfg.d_out,
                    params.scale,
                    cfg.beta,
                    cfg.gamma,
                )?;
                Ok(TruthInstance {
                    operator: truth.operator,
                    source: Some(truth.source),
                })
            }
            GroundTruth::Packing(params) => {
                let omega = params.omega(cfg.seed)?;
                let op = packing_operator(
                    &params.block(),
                    &omega,
                    Arc::new(cfg.input_decay()?),
                    Arc::new(cfg.output_decay()?),
                    cfg.beta_prime,
                    cfg.gamma_prime,
                )?;
                Ok(TruthInstance {
                    operator: op,
                    source: None,
                })
            }
        }
    }

    fn validate(&self, cfg: &ProblemConfig) -> Result<()> {
        match self {
            GroundTruth::Random(p) if !(p.taper.is_finite() && p.taper >= 0.0) => {
                Err(Error::config(
                    "ground_truth.params.taper",
                    format!("must be nonnegative, got {}", p.taper),
                ))
            }
            GroundTruth::Laplacian(p) => {
                if !(p.scale.is_finite() && p.scale > 0.0) {
                    return Err(Error::config(
                        "ground_truth.params.scale",
                        format!("must be positive, got {}", p.scale),
                    ));
                }
                if cfg.d_in != cfg.d_out {
                    return Err(Error::config(
                        "d_out",
                        format!(
                            "laplacian ground truth needs d_in = d_out, got {} and {}",
                            cfg.d_in, cfg.d_out
                        ),
                    ));
                }
                Ok(())
            }
            GroundTruth::Packing(p) => {
                if p.m1 == 0 || p.k == 0 {
                    return Err(Error::config(
                        "ground_truth.params",
                        "m1 and K must be at least 1",
                    ));
                }
                if !(p.eps.is_finite() && p.eps > 0.0) {
                    return Err(Error::config(
                        "ground_truth.params.eps",
                        format!("must be positive, got {}", p.eps),
                    ));
                }
                if 2 * p.m1 > cfg.d_in {
                    return Err(Error::config(
                        "ground_truth.params.m1",
                        format!("2 m1 = {} exceeds d_in = {}", 2 * p.m1, cfg.d_in),
                    ));
                }
                if p.k + p.m2 > cfg.d_out {
                    return Err(Error::config(
                        "ground_truth.params.m2",
                        format!("K + m2 = {} exceeds d_out = {}", p.k + p.m2, cfg.d_out),
                    ));
                }
                p.omega(cfg.seed).map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default)]
    profile: NoiseKind,
}

/// Everything a run needs besides the sweep itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub ground_truth: GroundTruth,
    pub noise: NoiseProfile,
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = match (prefix.is_empty(), path.as_str()) {
            (true, p) => p.to_string(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        Error::config(field, e.into_inner().to_string())
    })
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, ground_truth: GroundTruth) -> Result<Self> {
        let noise = NoiseProfile::polynomial(problem.sigma);
        let cfg = Self {
            problem,
            ground_truth,
            noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(mut map) = value else {
            return Err(Error::config(".", "config must be a JSON object"));
        };
        let ground_truth = match map.remove("ground_truth") {
            None => GroundTruth::default(),
            Some(Value::Object(mut gt)) => {
                gt.entry("params")
                    .or_insert_with(|| Value::Object(Map::new()));
                typed(Value::Object(gt), "ground_truth")?
            }
            Some(_) => return Err(Error::config("ground_truth", "must be an object")),
        };
        let noise_block: Option<NoiseBlock> = match map.remove("noise") {
            None => None,
            Some(v) => Some(typed(v, "noise")?),
        };
        let problem: ProblemConfig = typed(Value::Object(map), "")?;
        let mut noise = NoiseProfile::polynomial(problem.sigma);
        if let Some(block) = noise_block {
            if let Some(s) = block.sigma {
                if s != problem.sigma {
                    return Err(Error::config(
                        "noise.sigma",
                        format!("disagrees with top-level sigma ({s} vs {})", problem.sigma),
                    ));
                }
            }
            noise.kind = block.profile;
        }
        let cfg = Self {
            problem,
            ground_truth,
            noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.ground_truth.validate(&self.problem)
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.problem.seed = seed;
        self
    }

    pub fn to_value(&self) -> Value {
        let mut map = match serde_json::to_value(&self.problem) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("ProblemConfig serializes to an object"),
        };
        map.insert(
            "ground_truth".into(),
            serde_json::to_value(&self.ground_truth).expect("ground truth serializes"),
        );
        let block = NoiseBlock {
            sigma: Some(self.noise.sigma),
            profile: self.noise.kind,
        };
        map.insert(
            "noise".into(),
            serde_json::to_value(block).expect("noise serializes"),
        );
        Value::Object(map)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes")
    }

    /// Output-rate-limited default problem (`η₁ = 0.5`, `u = 0.75`).
    pub fn template() -> Self {
        let problem = ProblemConfig {
            p: 0.5,
            q: 0.5,
            alpha: 0.4,
            beta: 0.9,
            beta_prime: 0.1,
            gamma: 0.0,
            gamma_prime: 0.5,
            b: 1.0,
            sigma: 0.1,
            c0: 1.0,
            d_in: 256,
            d_out: 512,
            seed: 0,
        };
        Self::new(problem, GroundTruth::default()).expect("template is valid")
    }
}
