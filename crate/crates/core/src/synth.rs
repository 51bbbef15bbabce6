//! Synthetic data from the model `v = A₀ u + ε` and ground-truth operators.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    operator_from_source, powf, EigenDecay, OperatorMatrix, ProblemConfig, SourceCoefficients,
};

/// Half-width of the unit-variance uniform law.
pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Default taper exponent of [`random_source_operator`].
pub const DEFAULT_TAPER: f64 = 0.75;

/// SplitMix64 finalizer; used to derive decorrelated sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for a labelled stream derived from `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed ^ mix64(stream)
}

/// `N` input/output pairs in orthonormal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// `N × D_in` input coordinates.
    pub u: DMatrix<f64>,
    /// `N × D_out` output coordinates.
    pub v: DMatrix<f64>,
    pub seed_used: u64,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `σ_j² = σ² (6/π²) j^{-2}`.
    #[default]
    Polynomial,
}

/// Per-coordinate noise variance law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    #[serde(default)]
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseProfile {
    pub fn polynomial(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::Polynomial,
            sigma,
        }
    }

    /// Standard deviation of output coordinate `j` (1-based).
    pub fn coordinate_std(&self, j: usize) -> f64 {
        match self.kind {
            NoiseKind::Polynomial => self.sigma * (6.0 / (PI * PI)).sqrt() / j as f64,
        }
    }

    /// `Σ_{j ≤ dim} σ_j²`, never above `σ²`.
    pub fn truncated_trace(&self, dim: usize) -> f64 {
        (1..=dim).map(|j| self.coordinate_std(j).powi(2)).sum()
    }
}

/// Row-major stream of `scale_i * ξ` draws with `ξ` uniform on `[-√3, √3]`.
struct UniformRows {
    rng: ChaCha8Rng,
    scales: Vec<f64>,
}

impl UniformRows {
    fn new(scales: Vec<f64>, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scales,
        }
    }

    fn fill(&mut self, rows: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(rows * self.scales.len());
        for _ in 0..rows {
            for &s in &self.scales {
                let xi: f64 = self.rng.random_range(-SQRT3..=SQRT3);
                out.push(s * xi);
            }
        }
    }

    fn matrix(mut self, rows: usize) -> DMatrix<f64> {
        let mut data = Vec::new();
        self.fill(rows, &mut data);
        DMatrix::from_row_slice(rows, self.scales.len(), &data)
    }
}

fn input_scales(in_decay: &EigenDecay) -> Vec<f64> {
    in_decay.values().iter().map(|mu| mu.sqrt()).collect()
}

fn noise_scales(dim: usize, profile: &NoiseProfile) -> Vec<f64> {
    (1..=dim).map(|j| profile.coordinate_std(j)).collect()
}

/// Draws `u[k][i] = sqrt(μ_i) ξ` with `ξ` uniform on `[-√3, √3]`.
pub fn sample_inputs(n: usize, in_decay: &EigenDecay, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::arg("n", "must be at least 1"));
    }
    Ok(UniformRows::new(input_scales(in_decay), seed).matrix(n))
}

fn check_profile(profile: &NoiseProfile) -> Result<()> {
    if !(profile.sigma.is_finite() && profile.sigma >= 0.0) {
        return Err(Error::arg(
            "profile",
            format!("sigma must be nonnegative, got {}", profile.sigma),
        ));
    }
    Ok(())
}

/// Draws `ε[k][j] = σ_j η` with `η` uniform on `[-√3, √3]`.
pub fn sample_noise(
    n: usize,
    out_decay: &EigenDecay,
    profile: &NoiseProfile,
    seed: u64,
) -> Result<DMatrix<f64>> {
    check_profile(profile)?;
    if n == 0 {
        return Err(Error::arg("n", "must be at least 1"));
    }
    if profile.sigma == 0.0 {
        return Ok(DMatrix::zeros(n, out_decay.len()));
    }
    Ok(UniformRows::new(noise_scales(out_decay.len(), profile), seed).matrix(n))
}

/// Chunked version of [`make_dataset`]: successive chunks concatenate to the
/// exact same draws, so large samples never need to be held in memory at once.
pub struct DatasetStream<'a> {
    a0: &'a OperatorMatrix,
    inputs: UniformRows,
    noise: Option<UniformRows>,
    remaining: usize,
}

/// One chunk of rows, stored row-major.
#[derive(Debug, Clone, Default)]
pub struct SampleChunk {
    pub rows: usize,
    /// `rows × D_in`, row-major.
    pub u: Vec<f64>,
    /// `rows × D_out`, row-major.
    pub v: Vec<f64>,
}

impl<'a> DatasetStream<'a> {
    pub fn new(
        a0: &'a OperatorMatrix,
        n: usize,
        profile: &NoiseProfile,
        seed: u64,
    ) -> Result<Self> {
        check_profile(profile)?;
        if n == 0 {
            return Err(Error::arg("n", "must be at least 1"));
        }
        let noise = (profile.sigma > 0.0)
            .then(|| UniformRows::new(noise_scales(a0.d_out(), profile), sub_seed(seed, 2)));
        Ok(Self {
            a0,
            inputs: UniformRows::new(input_scales(a0.input_decay()), sub_seed(seed, 1)),
            noise,
            remaining: n,
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Fills `chunk` with up to `max_rows` further rows; returns false when exhausted.
    pub fn next_chunk(&mut self, max_rows: usize, chunk: &mut SampleChunk) -> bool {
        let rows = max_rows.min(self.remaining);
        if rows == 0 {
            return false;
        }
        self.remaining -= rows;
        let (d_in, d_out) = (self.a0.d_in(), self.a0.d_out());
        self.inputs.fill(rows, &mut chunk.u);
        match &mut self.noise {
            Some(noise) => noise.fill(rows, &mut chunk.v),
            None => {
                chunk.v.clear();
                chunk.v.resize(rows * d_out, 0.0);
            }
        }
        // Row-major rows × d is column-major d × rows, so v^T += m u^T.
        let ut = DMatrixView::from_slice(&chunk.u, d_in, rows);
        let mut vt = DMatrixViewMut::from_slice(&mut chunk.v, d_out, rows);
        vt.gemm(1.0, self.a0.matrix(), &ut, 1.0);
        chunk.rows = rows;
        true
    }
}

/// Samples `v = u m^T + ε` with inputs and noise drawn from separate sub-seeds.
pub fn make_dataset(
    a0: &OperatorMatrix,
    n: usize,
    profile: &NoiseProfile,
    seed: u64,
) -> Result<SampleSet> {
    let mut stream = DatasetStream::new(a0, n, profile, seed)?;
    let mut chunk = SampleChunk::default();
    stream.next_chunk(n, &mut chunk);
    Ok(SampleSet {
        u: DMatrix::from_row_slice(n, a0.d_in(), &chunk.u),
        v: DMatrix::from_row_slice(n, a0.d_out(), &chunk.v),
        seed_used: seed,
    })
}

/// Random-sign ground truth with taper `w_i ∝ i^{-0.75}`, rescaled to `‖a‖_F = B`.
pub fn random_source_operator(
    cfg: &ProblemConfig,
    seed: u64,
) -> Result<(SourceCoefficients, OperatorMatrix)> {
    random_source_operator_with_taper(cfg, DEFAULT_TAPER, seed)
}

pub fn random_source_operator_with_taper(
    cfg: &ProblemConfig,
    taper: f64,
    seed: u64,
) -> Result<(SourceCoefficients, OperatorMatrix)> {
    if !(taper.is_finite() && taper >= 0.0) {
        return Err(Error::arg(
            "taper",
            format!("must be nonnegative, got {taper}"),
        ));
    }
    let in_decay = Arc::new(cfg.input_decay()?);
    let out_decay = Arc::new(cfg.output_decay()?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(cfg.d_out, cfg.d_in);
    // Row-major draw order keeps coefficients independent of storage layout.
    for j in 0..cfg.d_out {
        for i in 0..cfg.d_in {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            a[(j, i)] = sign * powf((i + 1) as f64, -taper) * powf((j + 1) as f64, -taper);
        }
    }
    let norm = a.norm();
    a *= cfg.b / norm;
    let src = SourceCoefficients {
        a,
        beta: cfg.beta,
        gamma: cfg.gamma,
    };
    let op = operator_from_source(&src, in_decay, out_decay)?;
    Ok((src, op))
}

/// Diagonal `Δ^t`-type ground truth on Matérn/Sobolev spectra.
#[derive(Debug, Clone)]
pub struct LaplacianTruth {
    pub source: SourceCoefficients,
    pub operator: OperatorMatrix,
    /// Whether the `(β,γ)`-norm of the infinite operator is finite.
    pub finite_source: bool,
}

/// Whether `(1-γ) m < (1-β) s - 1/2`, the finiteness condition for the
/// `(β,γ)`-norm of the Laplacian-power operator.
pub fn laplacian_source_is_finite(s: f64, m: f64, beta: f64, gamma: f64) -> bool {
    (1.0 - gamma) * m < (1.0 - beta) * s - 0.5
}

/// Builds `μ_n = n^{-2s}`, `ρ_n = n^{-2m}` and the diagonal operator
/// `d_n = scale (πn)^{2t}`, with its source coefficients for `(β,γ)`.
#[allow(clippy::too_many_arguments)]
pub fn laplacian_operator(
    s: f64,
    m: f64,
    t: i32,
    d_in: usize,
    d_out: usize,
    scale: f64,
    beta: f64,
    gamma: f64,
) -> Result<LaplacianTruth> {
    if !(s > 0.0) {
        return Err(Error::arg("s", format!("must be positive, got {s}")));
    }
    if !(m > 0.0) {
        return Err(Error::arg("m", format!("must be positive, got {m}")));
    }
    if d_in != d_out {
        return Err(Error::DimensionMismatch {
            context: "diagonal Laplacian operator",
            expected: d_in,
            found: d_out,
        });
    }
    let mu = Arc::new(EigenDecay::power_law(d_in, 1.0 / (2.0 * s))?);
    let rho = Arc::new(EigenDecay::power_law(d_out, 1.0 / (2.0 * m))?);
    let mut a = DMatrix::zeros(d_out, d_in);
    for n in 0..d_in {
        let d_n = scale * powf(PI * (n + 1) as f64, 2.0 * t as f64);
        a[(n, n)] =
            d_n * powf(mu.values()[n], -beta / 2.0) * powf(rho.values()[n], -(1.0 - gamma / 2.0));
    }
    let source = SourceCoefficients { a, beta, gamma };
    let operator = operator_from_source(&source, mu, rho)?;
    Ok(LaplacianTruth {
        source,
        operator,
        finite_source: laplacian_source_is_finite(s, m, beta, gamma),
    })
}

/// Block parameters of a packing-family operator `A_ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingBlock {
    pub m1: usize,
    pub m2: usize,
    pub k: usize,
    pub eps: f64,
}

impl PackingBlock {
    /// `sqrt(32 ε / (m1 K))`.
    pub fn amplitude(&self) -> f64 {
        (32.0 * self.eps / (self.m1 * self.k) as f64).sqrt()
    }
}

/// Uniform random `{0,1}` pattern of shape `m1 × K`.
pub fn random_omega(m1: usize, k: usize, seed: u64) -> DMatrix<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(m1, k);
    for i in 0..m1 {
        for j in 0..k {
            w[(i, j)] = u8::from(rng.random::<bool>());
        }
    }
    w
}

/// The lower-bound hypothesis `A_ω`: entry `(j+m2, i+m1)` (1-based `i, j`) equals
/// `sqrt(32ε/(m1 K)) ω_ij μ_{i+m1}^{(β'-1)/2} ρ_{j+m2}^{(1-γ')/2}`; zero elsewhere.
pub fn packing_operator(
    block: &PackingBlock,
    omega: &DMatrix<u8>,
    in_decay: Arc<EigenDecay>,
    out_decay: Arc<EigenDecay>,
    beta_prime: f64,
    gamma_prime: f64,
) -> Result<OperatorMatrix> {
    if block.m1 == 0 || block.k == 0 {
        return Err(Error::arg("block", "m1 and K must be at least 1"));
    }
    if !(block.eps > 0.0) {
        return Err(Error::arg(
            "eps",
            format!("must be positive, got {}", block.eps),
        ));
    }
    if omega.shape() != (block.m1, block.k) {
        return Err(Error::DimensionMismatch {
            context: "packing pattern (m1 x K)",
            expected: block.m1 * block.k,
            found: omega.len(),
        });
    }
    if omega.iter().any(|&w| w > 1) {
        return Err(Error::arg("omega", "entries must be 0 or 1"));
    }
    if 2 * block.m1 > in_decay.len() {
        return Err(Error::arg(
            "m1",
            format!(
                "block reaches input index {} beyond D_in = {}",
                2 * block.m1,
                in_decay.len()
            ),
        ));
    }
    if block.k + block.m2 > out_decay.len() {
        return Err(Error::arg(
            "m2",
            format!(
                "block reaches output index {} beyond D_out = {}",
                block.k + block.m2,
                out_decay.len()
            ),
        ));
    }
    let amp = block.amplitude();
    let mut m = DMatrix::zeros(out_decay.len(), in_decay.len());
    for i in 0..block.m1 {
        let col = i + block.m1;
        let cw = powf(in_decay.values()[col], (beta_prime - 1.0) / 2.0);
        for j in 0..block.k {
            let row = j + block.m2;
            let rw = powf(out_decay.values()[row], (1.0 - gamma_prime) / 2.0);
            m[(row, col)] = amp * f64::from(omega[(i, j)]) * cw * rw;
        }
    }
    OperatorMatrix::new(m, in_decay, out_decay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{bg_norm, make_decay};
    use approx::assert_relative_eq;

    fn cfg() -> ProblemConfig {
        ProblemConfig {
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
            d_in: 12,
            d_out: 10,
            seed: 3,
        }
    }

    #[test]
    fn inputs_are_bounded_and_deterministic() {
        let d = make_decay(16, 0.5).unwrap();
        let u = sample_inputs(200, &d, 11).unwrap();
        for k in 0..u.nrows() {
            for i in 0..u.ncols() {
                assert!(u[(k, i)].abs() / d.values()[i].sqrt() <= 1.732_050_9);
            }
        }
        assert_eq!(u, sample_inputs(200, &d, 11).unwrap());
        assert_ne!(u, sample_inputs(200, &d, 12).unwrap());
        assert!(sample_inputs(0, &d, 1).is_err());
    }

    #[test]
    fn first_coordinate_has_unit_second_moment() {
        let d = make_decay(1, 0.5).unwrap();
        let u = sample_inputs(100_000, &d, 5).unwrap();
        let m2 = u.column(0).iter().map(|x| x * x).sum::<f64>() / 1e5;
        assert!((0.98..=1.02).contains(&m2), "second moment {m2}");
    }

    #[test]
    fn noise_profile() {
        let d = make_decay(50, 0.5).unwrap();
        let zero = sample_noise(5, &d, &NoiseProfile::polynomial(0.0), 1).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let p = NoiseProfile::polynomial(1.0);
        assert_relative_eq!(
            p.coordinate_std(1).powi(2),
            6.0 / (PI * PI),
            max_relative = 1e-15
        );
        assert_relative_eq!(p.coordinate_std(1).powi(2), 0.60793, max_relative = 1e-5);
        assert!(p.truncated_trace(10_000) <= 1.0);
        assert!(p.truncated_trace(10_000) > 0.9999);
        let eps = sample_noise(300, &d, &p, 2).unwrap();
        for k in 0..eps.nrows() {
            for j in 0..eps.ncols() {
                assert!(eps[(k, j)].abs() <= SQRT3 * p.coordinate_std(j + 1) * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn dataset_noiseless_and_identity() {
        let c = ProblemConfig {
            sigma: 0.0,
            ..cfg()
        };
        let (_, a0) = random_source_operator(&c, 9).unwrap();
        let data = make_dataset(&a0, 40, &NoiseProfile::polynomial(0.0), 4).unwrap();
        for k in 0..40 {
            let expect = a0.matrix() * data.u.row(k).transpose();
            let scale = a0.matrix().norm() * data.u.row(k).norm();
            for j in 0..c.d_out {
                assert!((data.v[(k, j)] - expect[j]).abs() <= 1e-14 * scale);
            }
        }

        let d = Arc::new(make_decay(6, 0.5).unwrap());
        let eye = OperatorMatrix::new(DMatrix::identity(6, 6), d.clone(), d.clone()).unwrap();
        let data = make_dataset(&eye, 10, &NoiseProfile::polynomial(0.0), 4).unwrap();
        assert_eq!(data.u, data.v);

        let zero = OperatorMatrix::zeros(d.clone(), d);
        let data = make_dataset(&zero, 10, &NoiseProfile::polynomial(0.0), 4).unwrap();
        assert!(data.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dataset_is_deterministic() {
        let (_, a0) = random_source_operator(&cfg(), 9).unwrap();
        let p = NoiseProfile::polynomial(0.1);
        let a = make_dataset(&a0, 30, &p, 77).unwrap();
        let b = make_dataset(&a0, 30, &p, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed_used, 77);
    }

    #[test]
    fn random_source_has_norm_b() {
        let (src, op) = random_source_operator(&cfg(), 1).unwrap();
        assert_relative_eq!(src.frobenius_norm(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(bg_norm(&op, 0.9, 0.0), 1.0, max_relative = 1e-10);
        let (src2, _) = random_source_operator(&cfg(), 1).unwrap();
        assert_eq!(src, src2);
        let (src0, op0) = random_source_operator(&ProblemConfig { b: 0.0, ..cfg() }, 1).unwrap();
        assert!(src0.a.iter().all(|&x| x == 0.0));
        assert!(op0.matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_examples() {
        let lap = laplacian_operator(1.0, 1.0, 0, 5, 5, 1.0, 0.2, 0.3).unwrap();
        for n in 0..5 {
            let mu = lap.operator.input_decay().values()[n];
            let rho = lap.operator.output_decay().values()[n];
            // d_n = 1 mapped to orthonormal coordinates is μ^{-1/2} ρ^{-1/2}.
            assert_relative_eq!(
                lap.operator.matrix()[(n, n)],
                1.0 / (mu * rho).sqrt(),
                max_relative = 1e-12
            );
        }
        let lap = laplacian_operator(1.0, 1.0, 1, 3, 3, 1.0, 0.0, 0.0).unwrap();
        let mu2 = lap.operator.input_decay().values()[1];
        let rho2 = lap.operator.output_decay().values()[1];
        let d2 = lap.operator.matrix()[(1, 1)] * (mu2 * rho2).sqrt();
        assert_relative_eq!(d2, 4.0 * PI * PI, max_relative = 1e-12);
        assert_relative_eq!(d2, 39.478, max_relative = 1e-4);
        assert!(laplacian_source_is_finite(1.0, 0.5, 0.0, 1.0));
        assert!(!laplacian_source_is_finite(1.0, 1.0, 0.5, 0.0));
        assert!(laplacian_operator(1.0, 1.0, 0, 3, 4, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn packing_examples() {
        let mu = Arc::new(make_decay(4, 0.5).unwrap());
        let rho = Arc::new(make_decay(4, 0.5).unwrap());
        let block = PackingBlock {
            m1: 1,
            m2: 1,
            k: 1,
            eps: 1.0 / 32.0,
        };
        let one = DMatrix::from_element(1, 1, 1u8);
        let op = packing_operator(&block, &one, mu.clone(), rho.clone(), 0.0, 0.5).unwrap();
        // 0.25^{-1/2} * 0.25^{1/4} = sqrt(2)
        assert_relative_eq!(op.matrix()[(1, 1)], 2f64.sqrt(), max_relative = 1e-14);
        assert_eq!(op.matrix().iter().filter(|&&x| x != 0.0).count(), 1);

        let zero = DMatrix::zeros(1, 1);
        let op = packing_operator(&block, &zero, mu.clone(), rho.clone(), 0.0, 0.5).unwrap();
        assert!(op.matrix().iter().all(|&x| x == 0.0));

        let big = PackingBlock { m1: 3, ..block };
        assert!(packing_operator(
            &big,
            &DMatrix::zeros(3, 1),
            mu.clone(),
            rho.clone(),
            0.0,
            0.5
        )
        .is_err());
        let off = PackingBlock { m2: 4, ..block };
        assert!(packing_operator(&off, &one, mu, rho, 0.0, 0.5).is_err());
    }

    #[test]
    fn packing_separation_identity() {
        let mu = Arc::new(make_decay(40, 0.4).unwrap());
        let rho = Arc::new(make_decay(30, 0.6).unwrap());
        let block = PackingBlock {
            m1: 7,
            m2: 3,
            k: 5,
            eps: 0.013,
        };
        for s in 0..50u64 {
            let w1 = random_omega(7, 5, 2 * s);
            let w2 = random_omega(7, 5, 2 * s + 1);
            let a1 = packing_operator(&block, &w1, mu.clone(), rho.clone(), 0.2, 0.7).unwrap();
            let a2 = packing_operator(&block, &w2, mu.clone(), rho.clone(), 0.2, 0.7).unwrap();
            let lhs = bg_norm(&a1.difference(&a2).unwrap(), 0.2, 0.7).powi(2);
            let hamming = w1.iter().zip(w2.iter()).filter(|(a, b)| a != b).count() as f64;
            let rhs = 32.0 * block.eps / 35.0 * hamming;
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn embedding_bound_holds_for_samples() {
        // α > p so the weighted sum Σ i^{-α/p} stays finite.
        let (p, alpha) = (0.4, 0.6);
        let d = make_decay(64, p).unwrap();
        let bound: f64 = 3.0 * (1..=64).map(|i| powf(i as f64, -alpha / p)).sum::<f64>();
        let u = sample_inputs(500, &d, 8).unwrap();
        for k in 0..u.nrows() {
            let s: f64 = (0..64)
                .map(|i| powf(d.values()[i], alpha - 1.0) * u[(k, i)].powi(2))
                .sum();
            assert!(s <= bound * (1.0 + 1e-12));
        }
    }
}
