//! Multivariate performance of a design and its scalarization into a single
//! quality score.
//!
//! Two performance estimators are provided: an analytic field built from
//! Gaussian bumps (exact gradients) and a trained network surrogate whose
//! input Jacobian comes from backpropagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, AdamConfig, AdamState, Matrix, NetworkParameters, NetworkSpec};

/// Floor applied to aggregated quality; `log q` appears in the loss.
pub const QUALITY_FLOOR: f64 = 1e-6;

/// Axis-aligned box `[lo, hi]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

impl DomainBox {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("invalid domain box {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| *v >= self.lo && *v <= self.hi)
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.random_range(self.lo..=self.hi)).collect()
    }
}

impl Default for DomainBox {
    fn default() -> Self {
        Self { dim: 2, lo: -1.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub sigma: f64,
}

impl Bump {
    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        self.amplitude * (-sq / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub bumps: Vec<Bump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityFunctionSpec {
    pub domain: DomainBox,
    pub objectives: Vec<Objective>,
}

impl QualityFunctionSpec {
    /// Two objectives on `[-1, 1]²`, each with two bumps at radius ≈ 0.7.
    pub fn bimodal_frontier() -> Self {
        let bump = |x: f64, y: f64| Bump {
            center: vec![x, y],
            amplitude: 0.95,
            sigma: 0.25,
        };
        Self {
            domain: DomainBox::default(),
            objectives: vec![
                Objective {
                    bumps: vec![bump(0.7, 0.0), bump(-0.4, 0.55)],
                },
                Objective {
                    bumps: vec![bump(0.0, 0.7), bump(0.55, -0.4)],
                },
            ],
        }
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.objectives.is_empty() {
            return Err(Error::Config("quality needs at least one objective".into()));
        }
        for (j, obj) in self.objectives.iter().enumerate() {
            for b in &obj.bumps {
                if b.center.len() != self.domain.dim {
                    return Err(Error::Config(format!(
                        "objective {j}: bump center has dimension {}, domain has {}",
                        b.center.len(),
                        self.domain.dim
                    )));
                }
                if !(b.amplitude > 0.0 && b.amplitude <= 1.0) {
                    return Err(Error::Config(format!("objective {j}: amplitude must be in (0, 1]")));
                }
                if !(b.sigma > 0.0 && b.sigma.is_finite()) || b.center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config(format!("objective {j}: invalid bump {b:?}")));
                }
            }
        }
        Ok(())
    }
}

impl Default for QualityFunctionSpec {
    fn default() -> Self {
        Self::bimodal_frontier()
    }
}

/// `p_j(x) = clamp(Σ_m a_m exp(−‖x − c_m‖² / 2σ_m²), 0, 1)`
pub fn evaluate_performance(spec: &QualityFunctionSpec, x: &[f64]) -> Vec<f64> {
    spec.objectives
        .iter()
        .map(|obj| obj.bumps.iter().map(|b| b.value(x)).sum::<f64>().clamp(0.0, 1.0))
        .collect()
}

/// `K × d` Jacobian of [`evaluate_performance`]; rows where the clamp is
/// active are zero.
pub fn performance_gradient(spec: &QualityFunctionSpec, x: &[f64]) -> Vec<Vec<f64>> {
    spec.objectives
        .iter()
        .map(|obj| {
            let mut row = vec![0.0; x.len()];
            let mut raw = 0.0;
            for b in &obj.bumps {
                let v = b.value(x);
                raw += v;
                let s2 = b.sigma * b.sigma;
                for (r, (xi, ci)) in row.iter_mut().zip(x.iter().zip(&b.center)) {
                    *r += v * (ci - xi) / s2;
                }
            }
            if !(0.0..=1.0).contains(&raw) {
                row.iter_mut().for_each(|r| *r = 0.0);
            }
            row
        })
        .collect()
}

/// Positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Uniform draw from the open `(K−1)`-simplex: normalized i.i.d. Exp(1)
/// variates.
pub fn sample_weights(k: usize, rng: &mut impl Rng) -> WeightVector {
    assert!(k >= 1, "sample_weights needs K >= 1");
    if k == 1 {
        return WeightVector(vec![1.0]);
    }
    loop {
        let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let sum: f64 = e.iter().sum();
        if e.iter().all(|v| *v > 0.0) && sum.is_finite() {
            return WeightVector(e.into_iter().map(|v| v / sum).collect());
        }
    }
}

/// Aggregated quality and whether the floor/ceiling clamp was active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub quality: f64,
    pub clamped: bool,
}

pub fn aggregate_detailed(p: &[f64], w: &WeightVector) -> Aggregate {
    assert_eq!(p.len(), w.len(), "aggregate: performance and weight lengths differ");
    let raw: f64 = p.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
    let quality = raw.clamp(QUALITY_FLOOR, 1.0);
    Aggregate {
        quality,
        clamped: quality != raw,
    }
}

/// `q = clamp(Σ_j w_j p_j, ε_q, 1)`
pub fn aggregate(p: &[f64], w: &WeightVector) -> f64 {
    aggregate_detailed(p, w).quality
}

/// Gradient of the aggregated quality given the performance Jacobian.
pub fn aggregate_gradient(jacobian: &[Vec<f64>], w: &WeightVector, agg: Aggregate) -> Vec<f64> {
    let d = jacobian.first().map_or(0, Vec::len);
    let mut g = vec![0.0; d];
    if agg.clamped {
        return g;
    }
    for (row, wj) in jacobian.iter().zip(w.as_slice()) {
        for (gi, r) in g.iter_mut().zip(row) {
            *gi += wj * r;
        }
    }
    g
}

/// A trained network mapping designs to performance vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub spec: NetworkSpec,
    pub params: NetworkParameters,
}

impl Surrogate {
    pub fn predict_batch(&self, designs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (out, _) = nn::forward(&self.spec, &self.params, &Matrix::from_rows(designs)?)?;
        Ok(out.to_rows())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Designs drawn uniformly from the domain to build the training set.
    pub samples: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            hidden: vec![64, 64],
            epochs: 300,
            batch_size: 64,
            lr: 3e-3,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("surrogate sizes must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("surrogate lr must be > 0 and holdout_fraction in [0, 1)".into()));
        }
        Ok(())
    }

    /// `[d, hidden.., K]` with tanh hidden layers and a sigmoid head.
    pub fn network_spec(&self, dim: usize, objectives: usize) -> Result<NetworkSpec> {
        let mut widths = vec![dim];
        widths.extend(&self.hidden);
        widths.push(objectives);
        NetworkSpec::new(widths, nn::Activation::Tanh, nn::Activation::Sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub surrogate: Surrogate,
    /// Held-out mean squared error per objective.
    pub holdout_mse: Vec<f64>,
    pub holdout_size: usize,
}

impl SurrogateFit {
    pub fn holdout_rmse(&self) -> Vec<f64> {
        self.holdout_mse.iter().map(|m| m.sqrt()).collect()
    }
}

/// Fits `spec` to `(designs, targets)` by minibatch Adam on mean squared
/// error. A shuffled `holdout_fraction` of the data (at least one point when
/// there are two or more) is kept out of training and scored at the end.
pub fn train_surrogate(
    designs: &[Vec<f64>],
    targets: &[Vec<f64>],
    spec: &NetworkSpec,
    config: &SurrogateConfig,
) -> Result<SurrogateFit> {
    if designs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if designs.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "train_surrogate targets",
            expected: designs.len(),
            actual: targets.len(),
        });
    }
    if targets.iter().flatten().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument("surrogate targets must lie in [0, 1]".into()));
    }
    let k = spec.output_width();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..designs.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = if designs.len() < 2 {
        0
    } else {
        ((designs.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, designs.len() - 1)
    };
    let (holdout, train) = order.split_at(n_hold);
    let mut train = train.to_vec();
    let holdout: Vec<usize> = if holdout.is_empty() { train.clone() } else { holdout.to_vec() };

    let mut params = nn::init_params(spec, config.seed);
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.lr));
    let batch_size = config.batch_size.min(train.len());
    let total_steps = config.epochs * train.len().div_ceil(batch_size);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| designs[i].clone()).collect();
            let (out, cache) = nn::forward(spec, &params, &Matrix::from_rows(&xs)?)?;
            let scale = 2.0 / (chunk.len() * k) as f64;
            let mut grad = Matrix::zeros(chunk.len(), k);
            for (r, &i) in chunk.iter().enumerate() {
                for j in 0..k {
                    grad.row_mut(r)[j] = scale * (out.row(r)[j] - targets[i][j]);
                }
            }
            let (g, _) = nn::backward(spec, &params, &cache, &grad)?;
            // cosine decay to 5% of the base rate
            let progress = step as f64 / total_steps.max(1) as f64;
            adam.config.lr = config.lr * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
            nn::adam_step(&mut params.values, &g, &mut adam)?;
            step += 1;
        }
    }
    params.check(spec)?;

    let xs: Vec<Vec<f64>> = holdout.iter().map(|&i| designs[i].clone()).collect();
    let (out, _) = nn::forward(spec, &params, &Matrix::from_rows(&xs)?)?;
    let mut mse = vec![0.0; k];
    for (r, &i) in holdout.iter().enumerate() {
        for j in 0..k {
            let e = out.row(r)[j] - targets[i][j];
            mse[j] += e * e;
        }
    }
    mse.iter_mut().for_each(|m| *m /= holdout.len() as f64);
    Ok(SurrogateFit {
        surrogate: Surrogate {
            spec: spec.clone(),
            params,
        },
        holdout_mse: mse,
        holdout_size: n_hold,
    })
}

/// Performance vector and exact `K × d` input Jacobian of the surrogate.
pub fn surrogate_predict_with_gradient(surrogate: &Surrogate, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut batch = surrogate_predict_with_gradient_batch(surrogate, std::slice::from_ref(&x.to_vec()))?;
    Ok(batch.pop().unwrap())
}

/// Batched form: one forward pass, then one backward pass per objective
/// with a one-hot output gradient.
pub fn surrogate_predict_with_gradient_batch(
    surrogate: &Surrogate,
    designs: &[Vec<f64>],
) -> Result<Vec<(Vec<f64>, Vec<Vec<f64>>)>> {
    let spec = &surrogate.spec;
    let k = spec.output_width();
    let input = Matrix::from_rows(designs)?;
    let (out, cache) = nn::forward(spec, &surrogate.params, &input)?;
    let mut result: Vec<(Vec<f64>, Vec<Vec<f64>>)> =
        (0..designs.len()).map(|r| (out.row(r).to_vec(), Vec::with_capacity(k))).collect();
    for j in 0..k {
        let mut seed = Matrix::zeros(designs.len(), k);
        for r in 0..designs.len() {
            seed.row_mut(r)[j] = 1.0;
        }
        let (_, gin) = nn::backward(spec, &surrogate.params, &cache, &seed)?;
        for (r, item) in result.iter_mut().enumerate() {
            item.1.push(gin.row(r).to_vec());
        }
    }
    Ok(result)
}

/// Where performance values and their gradients come from during training.
#[derive(Debug, Clone)]
pub enum QualitySource {
    Analytic(QualityFunctionSpec),
    Surrogate(Surrogate),
}

impl QualitySource {
    pub fn num_objectives(&self) -> usize {
        match self {
            QualitySource::Analytic(s) => s.num_objectives(),
            QualitySource::Surrogate(s) => s.spec.output_width(),
        }
    }

    /// Performance vectors and Jacobians for a batch of designs.
    pub fn evaluate_batch(&self, designs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<Vec<f64>>)>> {
        match self {
            QualitySource::Analytic(spec) => Ok(designs
                .iter()
                .map(|x| (evaluate_performance(spec, x), performance_gradient(spec, x)))
                .collect()),
            QualitySource::Surrogate(s) => surrogate_predict_with_gradient_batch(s, designs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn isolated_bump_spec(amplitude: f64) -> QualityFunctionSpec {
        QualityFunctionSpec {
            domain: DomainBox::default(),
            objectives: vec![Objective {
                bumps: vec![
                    Bump {
                        center: vec![0.2, -0.3],
                        amplitude,
                        sigma: 0.1,
                    },
                    Bump {
                        center: vec![5.0, 5.0],
                        amplitude: 0.5,
                        sigma: 0.1,
                    },
                ],
            }],
        }
    }

    /// Straight re-statement of the mixture formula, used as an oracle.
    fn mixture_oracle(spec: &QualityFunctionSpec, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for obj in &spec.objectives {
            let mut total = 0.0;
            for b in &obj.bumps {
                let mut d2 = 0.0;
                for i in 0..x.len() {
                    d2 += (x[i] - b.center[i]).powi(2);
                }
                total += b.amplitude * (-d2 / (2.0 * b.sigma.powi(2))).exp();
            }
            out.push(total.max(0.0).min(1.0));
        }
        out
    }

    #[test]
    fn value_at_center() {
        let spec = isolated_bump_spec(0.9);
        let p = evaluate_performance(&spec, &[0.2, -0.3]);
        assert!((p[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn decays_far_from_centers() {
        let spec = isolated_bump_spec(0.9);
        let p = evaluate_performance(&spec, &[0.2 + 1.0, -0.3]);
        assert!(p[0] <= 1e-8);
    }

    #[test]
    fn matches_duplicate_formula() {
        let spec = QualityFunctionSpec::bimodal_frontier();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x = spec.domain.sample_uniform(&mut rng);
            assert_eq!(evaluate_performance(&spec, &x), mixture_oracle(&spec, &x));
        }
    }

    #[test]
    fn gradient_zero_at_isolated_center() {
        let spec = isolated_bump_spec(0.9);
        let g = performance_gradient(&spec, &[0.2, -0.3]);
        assert!(g[0].iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn gradient_zero_on_clamped_plateau() {
        let spec = QualityFunctionSpec {
            domain: DomainBox::default(),
            objectives: vec![Objective {
                bumps: vec![
                    Bump { center: vec![0.0, 0.0], amplitude: 0.8, sigma: 0.5 },
                    Bump { center: vec![0.1, 0.0], amplitude: 0.8, sigma: 0.5 },
                ],
            }],
        };
        let x = [0.05, 0.02];
        assert_eq!(evaluate_performance(&spec, &x), vec![1.0]);
        assert_eq!(performance_gradient(&spec, &x), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = QualityFunctionSpec::bimodal_frontier();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..200 {
            let x = spec.domain.sample_uniform(&mut rng);
            let g = performance_gradient(&spec, &x);
            for i in 0..2 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (pp, pm) = (evaluate_performance(&spec, &xp), evaluate_performance(&spec, &xm));
                for j in 0..2 {
                    let fd = (pp[j] - pm[j]) / (2.0 * h);
                    let err = (fd - g[j][i]).abs() / fd.abs().max(g[j][i].abs()).max(1e-3);
                    assert!(err < 1e-5, "fd {fd} vs {}", g[j][i]);
                }
            }
        }
    }

    #[test]
    fn weights_single_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_weights(1, &mut rng).as_slice(), &[1.0]);
    }

    #[test]
    fn weights_are_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 1..8 {
            for _ in 0..500 {
                let w = sample_weights(k, &mut rng);
                assert!(w.as_slice().iter().all(|v| *v > 0.0));
                assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_uniform_on_segment() {
        // For K = 2 the first weight is U(0, 1): mean 1/2, variance 1/12.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_weights(2, &mut rng).as_slice()[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");
        let below_quarter = draws.iter().filter(|w| **w < 0.25).count() as f64 / draws.len() as f64;
        assert!((below_quarter - 0.25).abs() < 0.01);
    }

    #[test]
    fn weights_deterministic_given_rng() {
        let a = sample_weights(3, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_weights(3, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(aggregate(&[0.2, 0.8], &w), 0.5);
        assert_eq!(aggregate(&[0.0, 0.0], &w), QUALITY_FLOOR);
        assert!(aggregate_detailed(&[0.0, 0.0], &w).clamped);
        let single = WeightVector::new(vec![1.0]).unwrap();
        assert_eq!(aggregate(&[0.37], &single), 0.37);
    }

    #[test]
    fn aggregate_gradient_respects_clamp() {
        let w = WeightVector::new(vec![0.25, 0.75]).unwrap();
        let jac = vec![vec![1.0, 2.0], vec![-1.0, 4.0]];
        let open = aggregate_detailed(&[0.4, 0.4], &w);
        assert_eq!(aggregate_gradient(&jac, &w, open), vec![-0.5, 3.5]);
        let shut = aggregate_detailed(&[0.0, 0.0], &w);
        assert_eq!(aggregate_gradient(&jac, &w, shut), vec![0.0, 0.0]);
    }

    fn surrogate_spec(k: usize) -> NetworkSpec {
        SurrogateConfig::default().network_spec(2, k).unwrap()
    }

    #[test]
    fn surrogate_rejects_empty_dataset() {
        let spec = surrogate_spec(2);
        assert!(matches!(
            train_surrogate(&[], &[], &spec, &SurrogateConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn surrogate_learns_a_constant() {
        let spec = surrogate_spec(2);
        let designs = vec![vec![0.3, -0.1]; 50];
        let targets = vec![vec![0.7, 0.2]; 50];
        let cfg = SurrogateConfig {
            epochs: 100,
            batch_size: 16,
            ..SurrogateConfig::default()
        };
        let fit = train_surrogate(&designs, &targets, &spec, &cfg).unwrap();
        assert_eq!(fit.holdout_size, 5);
        assert!(fit.holdout_mse.iter().all(|m| *m <= 1e-4), "{:?}", fit.holdout_mse);
    }

    #[test]
    fn surrogate_single_point_dataset() {
        let spec = surrogate_spec(1);
        let cfg = SurrogateConfig { epochs: 300, ..SurrogateConfig::default() };
        let fit = train_surrogate(&[vec![0.0, 0.0]], &[vec![0.4]], &spec, &cfg).unwrap();
        assert_eq!(fit.holdout_size, 0);
        assert!(fit.holdout_mse[0] <= 1e-4);
    }

    #[test]
    fn surrogate_training_is_deterministic() {
        let spec = surrogate_spec(2);
        let q = QualityFunctionSpec::bimodal_frontier();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let designs: Vec<Vec<f64>> = (0..100).map(|_| q.domain.sample_uniform(&mut rng)).collect();
        let targets: Vec<Vec<f64>> = designs.iter().map(|x| evaluate_performance(&q, x)).collect();
        let cfg = SurrogateConfig { epochs: 5, ..SurrogateConfig::default() };
        let a = train_surrogate(&designs, &targets, &spec, &cfg).unwrap();
        let b = train_surrogate(&designs, &targets, &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_surrogate_has_zero_jacobian() {
        let spec = surrogate_spec(2);
        let s = Surrogate {
            params: NetworkParameters::zeros(&spec),
            spec,
        };
        let (p1, j1) = surrogate_predict_with_gradient(&s, &[0.1, 0.2]).unwrap();
        let (p2, _) = surrogate_predict_with_gradient(&s, &[-0.7, 0.9]).unwrap();
        assert_eq!(p1, vec![0.5, 0.5]);
        assert_eq!(p1, p2);
        assert!(j1.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn surrogate_jacobian_matches_finite_differences() {
        for k in [1, 2, 3] {
            let spec = surrogate_spec(k);
            let s = Surrogate {
                params: nn::init_params(&spec, k as u64),
                spec,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for _ in 0..20 {
                let x = DomainBox::default().sample_uniform(&mut rng);
                let (_, jac) = surrogate_predict_with_gradient(&s, &x).unwrap();
                assert_eq!(jac.len(), k);
                assert!(jac.iter().all(|r| r.len() == 2));
                let h = 1e-6;
                for i in 0..2 {
                    let mut xp = x.clone();
                    xp[i] += h;
                    let mut xm = x.clone();
                    xm[i] -= h;
                    let pp = s.predict_batch(&[xp]).unwrap().remove(0);
                    let pm = s.predict_batch(&[xm]).unwrap().remove(0);
                    for j in 0..k {
                        let fd = (pp[j] - pm[j]) / (2.0 * h);
                        let err = (fd - jac[j][i]).abs() / fd.abs().max(jac[j][i].abs()).max(1e-3);
                        assert!(err < 1e-5, "fd {fd} vs {}", jac[j][i]);
                    }
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weights(k: usize) -> impl Strategy<Value = WeightVector> {
            any::<u64>().prop_map(move |s| sample_weights(k, &mut ChaCha8Rng::seed_from_u64(s)))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn convex_combination_bound(w in weights(3), p in prop::collection::vec(0.0f64..=1.0, 3)) {
                let raw: f64 = p.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
                let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(raw >= lo - 1e-15 && raw <= hi + 1e-15);
                prop_assert!(aggregate(&p, &w) <= hi.max(QUALITY_FLOOR) + 1e-15);
            }

            #[test]
            fn linear_inside_clamp(
                w in weights(2),
                p in prop::collection::vec(0.01f64..0.5, 2),
                p2 in prop::collection::vec(0.01f64..0.5, 2),
                a in 0.0f64..1.0,
                b in 0.0f64..1.0,
            ) {
                let mix: Vec<f64> = p.iter().zip(&p2).map(|(x, y)| a * x + b * y).collect();
                let lhs = aggregate_detailed(&mix, &w);
                let rhs = a * aggregate(&p, &w) + b * aggregate(&p2, &w);
                if !lhs.clamped && rhs >= QUALITY_FLOOR && rhs <= 1.0 {
                    prop_assert!((lhs.quality - rhs).abs() < 1e-12);
                }
            }

            #[test]
            fn monotone_in_each_objective(
                w in weights(3),
                p in prop::collection::vec(0.0f64..=1.0, 3),
                j in 0usize..3,
                bump in 0.0f64..0.5,
            ) {
                let mut up = p.clone();
                up[j] = (up[j] + bump).min(1.0);
                prop_assert!(aggregate(&up, &w) >= aggregate(&p, &w));
            }
        }
    }
}
