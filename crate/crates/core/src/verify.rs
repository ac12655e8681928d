//! Self-checks runnable from the command line: finite-difference suites for
//! every hand-written gradient, and identity oracles for the DPP algebra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpp::{self, DppHyperparams, SimilarityConfig};
use crate::error::Result;
use crate::gan::{self, GeneratorState};
use crate::linalg::{self, SymMatrix, JITTER_LADDER};
use crate::nn::{self, Activation, AdamConfig, Matrix, NetworkParameters, NetworkSpec};
use crate::quality::{self, DomainBox, QualityFunctionSpec, QualitySource, Surrogate, WeightVector};

/// `|a − b| ≤ max(rel · max(|a|, |b|), abs)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub fn relative(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }

    pub fn absolute(abs: f64) -> Self {
        Self { rel: 0.0, abs }
    }

    /// Error scaled so that values ≤ 1 pass.
    pub fn scaled_error(&self, a: f64, b: f64) -> f64 {
        let allowed = (self.rel * a.abs().max(b.abs())).max(self.abs);
        let diff = (a - b).abs();
        if allowed == 0.0 {
            if diff == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            diff / allowed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub tolerance: Tolerance,
    /// Scalar comparisons made.
    pub checked: usize,
    /// Comparisons skipped (e.g. next to an activation kink).
    pub skipped: usize,
    /// Largest `|a − b| / max(|a|, |b|)` (or absolute error for absolute
    /// tolerances) seen.
    pub max_error: f64,
    pub passed: bool,
}

struct Accumulator {
    name: String,
    tol: Tolerance,
    checked: usize,
    skipped: usize,
    max_error: f64,
    max_scaled: f64,
}

impl Accumulator {
    fn new(name: &str, tol: Tolerance) -> Self {
        Self {
            name: name.to_string(),
            tol,
            checked: 0,
            skipped: 0,
            max_error: 0.0,
            max_scaled: 0.0,
        }
    }

    fn compare(&mut self, analytic: f64, reference: f64) {
        self.checked += 1;
        let diff = (analytic - reference).abs();
        let err = if self.tol.rel > 0.0 {
            diff / analytic.abs().max(reference.abs()).max(self.tol.abs / self.tol.rel)
        } else {
            diff
        };
        let scaled = self.tol.scaled_error(analytic, reference);
        // NaN must fail
        self.max_error = if err.is_nan() { f64::INFINITY } else { self.max_error.max(err) };
        self.max_scaled = if scaled.is_nan() { f64::INFINITY } else { self.max_scaled.max(scaled) };
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            passed: self.checked > 0 && self.max_scaled <= 1.0,
            name: self.name,
            tolerance: self.tol,
            checked: self.checked,
            skipped: self.skipped,
            max_error: self.max_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn random_points(n: usize, dim: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

fn mixture_qualities(designs: &[Vec<f64>], spec: &QualityFunctionSpec, w: &WeightVector) -> Vec<f64> {
    designs
        .iter()
        .map(|x| quality::aggregate(&quality::evaluate_performance(spec, x), w))
        .collect()
}

/// DPP loss gradients against central differences of the loss, over
/// `batches` random batches of `n` designs in `[−1, 1]²` scored by the
/// default two-objective field.
pub fn check_pad_gradients(batches: usize, n: usize, gamma0: f64, seed: u64) -> Result<SuiteResult> {
    let spec = QualityFunctionSpec::bimodal_frontier();
    let cfg = SimilarityConfig::default();
    let hp = DppHyperparams { gamma0, gamma1: 0.0 };
    let mut acc = Accumulator::new("pad_loss_gradients", Tolerance::relative(1e-4, 1e-8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    for _ in 0..batches {
        let w = quality::sample_weights(spec.num_objectives(), &mut rng);
        let batch = random_points(n, 2, -1.0, 1.0, &mut rng);
        let loss_at = |b: &[Vec<f64>]| -> Result<f64> {
            let bk = dpp::build_kernel(b, &mixture_qualities(b, &spec, &w), &cfg, &hp)?;
            dpp::pad_loss(&bk, &JITTER_LADDER)
        };
        let source = QualitySource::Analytic(spec.clone());
        let analytic = gan::batch_pad(&batch, &source, &w, &cfg, &hp)?.design_grads;
        for m in 0..n {
            for i in 0..2 {
                let mut plus = batch.clone();
                plus[m][i] += h;
                let mut minus = batch.clone();
                minus[m][i] -= h;
                let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
                acc.compare(analytic[m][i], fd);
            }
        }
    }
    Ok(acc.finish())
}

/// Backpropagated parameter and input gradients against central
/// differences, for every hidden/output activation pairing. Networks with
/// a hidden preactivation within `1e-4` of a kink are skipped.
pub fn check_network_gradients(seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("network_backward", Tolerance::relative(1e-5, 1e-8));
    let hidden = [Activation::Tanh, Activation::Relu, Activation::LeakyRelu];
    let outputs = [Activation::Identity, Activation::Sigmoid, Activation::Tanh];
    let h = 1e-5;
    let mut case = 0u64;
    for hid in hidden {
        for out in outputs {
            for widths in [vec![2, 8, 1], vec![3, 16, 16, 2], vec![1, 4, 3]] {
                case += 1;
                let spec = NetworkSpec::new(widths, hid, out)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(case));
                let mut p = nn::init_params(&spec, rng.random());
                p.values.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
                let mut input = Matrix::zeros(3, spec.input_width());
                input.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                let mut weights = Matrix::zeros(3, spec.output_width());
                weights.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                let objective = |p: &NetworkParameters, x: &Matrix| -> Result<f64> {
                    let (y, _) = nn::forward(&spec, p, x)?;
                    Ok(y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum())
                };
                let (_, cache) = nn::forward(&spec, &p, &input)?;
                let near_kink = cache
                    .preactivations()
                    .iter()
                    .take(spec.num_layers() - 1)
                    .any(|z| z.data.iter().any(|v| v.abs() < 1e-4));
                if near_kink && hid.has_kink() {
                    acc.skipped += p.len() + input.data.len();
                    continue;
                }
                let (g, gin) = nn::backward(&spec, &p, &cache, &weights)?;
                for i in 0..p.len() {
                    let mut plus = p.clone();
                    plus.values[i] += h;
                    let mut minus = p.clone();
                    minus.values[i] -= h;
                    acc.compare(g[i], (objective(&plus, &input)? - objective(&minus, &input)?) / (2.0 * h));
                }
                for i in 0..input.data.len() {
                    let mut plus = input.clone();
                    plus.data[i] += h;
                    let mut minus = input.clone();
                    minus.data[i] -= h;
                    acc.compare(gin.data[i], (objective(&p, &plus)? - objective(&p, &minus)?) / (2.0 * h));
                }
            }
        }
    }
    Ok(acc.finish())
}

/// Analytic performance Jacobian against central differences (h = 1e-6)
/// at random points of `[−1, 1]²`. Points where an objective sits near the
/// clamp are skipped.
pub fn check_performance_gradients(points: usize, seed: u64) -> Result<SuiteResult> {
    let spec = QualityFunctionSpec::bimodal_frontier();
    let mut acc = Accumulator::new("performance_gradient", Tolerance::relative(1e-5, 1e-8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    for x in random_points(points, 2, -1.0, 1.0, &mut rng) {
        let jac = quality::performance_gradient(&spec, &x);
        let p = quality::evaluate_performance(&spec, &x);
        for (j, row) in jac.iter().enumerate() {
            if p[j] > 1.0 - 1e-4 {
                acc.skipped += row.len();
                continue;
            }
            for i in 0..x.len() {
                let mut plus = x.clone();
                plus[i] += h;
                let mut minus = x.clone();
                minus[i] -= h;
                let fd = (quality::evaluate_performance(&spec, &plus)[j] - quality::evaluate_performance(&spec, &minus)[j])
                    / (2.0 * h);
                acc.compare(row[i], fd);
            }
        }
    }
    Ok(acc.finish())
}

/// Surrogate input Jacobian against central differences for randomly
/// initialized `[2, 16, 16, 2]` surrogates.
pub fn check_surrogate_jacobian(cases: usize, seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("surrogate_jacobian", Tolerance::relative(1e-5, 1e-8));
    let spec = NetworkSpec::new(vec![2, 16, 16, 2], Activation::Tanh, Activation::Sigmoid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    for _ in 0..cases {
        let s = Surrogate {
            params: nn::init_params(&spec, rng.random()),
            spec: spec.clone(),
        };
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, jac) = quality::surrogate_predict_with_gradient(&s, &x)?;
        for i in 0..2 {
            let mut plus = x.clone();
            plus[i] += h;
            let mut minus = x.clone();
            minus[i] -= h;
            let yp = s.predict_batch(&[plus])?.pop().unwrap();
            let ym = s.predict_batch(&[minus])?.pop().unwrap();
            for (j, row) in jac.iter().enumerate() {
                acc.compare(row[i], (yp[j] - ym[j]) / (2.0 * h));
            }
        }
    }
    Ok(acc.finish())
}

/// Gradient of `γ₁ ℒ_PaD(G_θ(z))` with respect to every generator parameter
/// against central differences, on frozen `[2, 4, 2]` generators with a
/// batch of `n = 4`.
pub fn check_generator_gradient(cases: usize, seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("generator_pad_gradient", Tolerance::relative(1e-4, 1e-8));
    let spec = NetworkSpec::new(vec![2, 4, 2], Activation::Tanh, Activation::Tanh)?;
    let domain = DomainBox::default();
    let source = QualitySource::Analytic(QualityFunctionSpec::bimodal_frontier());
    let cfg = SimilarityConfig::default();
    let hp = DppHyperparams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    for _ in 0..cases {
        let mut g = GeneratorState::new(spec.clone(), nn::init_params(&spec, rng.random()), AdamConfig::default(), &domain)?;
        g.params.values.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        let z = gan::sample_latents(4, 2, &mut rng);
        let w = quality::sample_weights(2, &mut rng);
        let (_, grads) = gan::pad_generator_gradient(&g, &z, &source, &w, &cfg, &hp)?;
        for i in 0..g.params.len() {
            let mut plus = g.clone();
            plus.params.values[i] += h;
            let mut minus = g.clone();
            minus.params.values[i] -= h;
            let lp = gan::pad_generator_gradient(&plus, &z, &source, &w, &cfg, &hp)?.0;
            let lm = gan::pad_generator_gradient(&minus, &z, &source, &w, &cfg, &hp)?.0;
            acc.compare(grads[i], (lp - lm) / (2.0 * h));
        }
    }
    Ok(acc.finish())
}

/// All finite-difference suites with their default sizes.
pub fn gradcheck(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        suites: vec![
            check_pad_gradients(20, 8, 5.0, seed)?,
            check_network_gradients(seed)?,
            check_performance_gradients(200, seed)?,
            check_surrogate_jacobian(20, seed)?,
            check_generator_gradient(5, seed)?,
        ],
    })
}

/// `Π q_i^{2γ₀} det(K_S)` against `det(L_S)` taken directly from the full
/// kernel, for every nonempty subset of `ground_sets` random 6-item sets.
pub fn check_subset_probability(ground_sets: usize, seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("subset_probability", Tolerance::relative(1e-10, 1e-300));
    let cfg = SimilarityConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ground_sets {
        let gamma0 = rng.random_range(0.0..5.0);
        let hp = DppHyperparams { gamma0, gamma1: 0.0 };
        let designs = random_points(6, 2, -1.5, 1.5, &mut rng);
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..1.0)).collect();
        let bk = dpp::build_kernel(&designs, &q, &cfg, &hp)?;
        for mask in 1u32..64 {
            let subset: Vec<usize> = (0..6).filter(|i| mask & (1 << i) != 0).collect();
            let p = dpp::subset_probability(&designs, &q, &subset, &cfg, &hp)?;
            let l_s = bk.kernel.submatrix(&subset);
            let direct = linalg::determinant(subset.len(), l_s.as_slice());
            acc.compare(p, direct);
        }
    }
    Ok(acc.finish())
}

/// Eigenvalue form of the loss against the decomposed form on random
/// well-spread batches.
pub fn check_logdet_identity(batches: usize, seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("pad_loss_decomposition", Tolerance::absolute(1e-8));
    let cfg = SimilarityConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..batches {
        let n = rng.random_range(2..=8);
        let hp = DppHyperparams {
            gamma0: rng.random_range(0.0..5.0),
            gamma1: 0.0,
        };
        let designs = random_points(n, 2, -2.0, 2.0, &mut rng);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
        let bk = dpp::build_kernel(&designs, &q, &cfg, &hp)?;
        acc.compare(dpp::pad_loss_eigen(&bk)?, dpp::pad_loss(&bk, &[0.0])?);
    }
    Ok(acc.finish())
}

/// Cholesky log-determinant against the sum of log eigenvalues for random
/// SPD matrices `AᵀA/n + I` of orders 2..=100.
pub fn check_cholesky_vs_eigen(matrices: usize, seed: u64) -> Result<SuiteResult> {
    let mut acc = Accumulator::new("cholesky_vs_eigen_logdet", Tolerance::absolute(1e-8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..matrices {
        let n = if matrices > 1 { 2 + k * 98 / (matrices - 1) } else { 2 };
        let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = SymMatrix::from_fn(n, |i, j| {
            (0..n).map(|r| a[r * n + i] * a[r * n + j]).sum::<f64>() / n as f64 + if i == j { 1.0 } else { 0.0 }
        })?;
        let (_, chol) = linalg::cholesky_logdet(&m, 0.0)?;
        let eig: f64 = linalg::sym_eigenvalues(&m)?.iter().map(|l| l.ln()).sum();
        acc.compare(chol, eig);
    }
    Ok(acc.finish())
}

/// All DPP/linear-algebra identity oracles with their default sizes.
pub fn oracle(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        suites: vec![
            check_subset_probability(20, seed)?,
            check_logdet_identity(100, seed)?,
            check_cholesky_vs_eigen(50, seed)?,
        ],
    })
}
