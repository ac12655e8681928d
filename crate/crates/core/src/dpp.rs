//! Performance-augmented determinantal point process loss.
//!
//! For a batch `x_1..x_n` with qualities `q_i` the kernel is
//! `L(i, j) = k(x_i, x_j) · (q_i q_j)^γ₀ = (D K D)(i, j)` with
//! `D = diag(q^γ₀)`, so
//!
//! ```text
//! −(1/n) log det L = −(1/n) [ 2γ₀ Σ log q_i + log det K ]
//! ```
//!
//! The loss is evaluated in that split form (Cholesky on `K` only) and its
//! gradient is closed-form: with `A = −(1/n) K⁻¹`,
//!
//! ```text
//! ∂ℒ/∂x_m = −2γ₀/(n q_m) ∇q(x_m) + Σ_{j≠m} (A_mj + A_jm) K_mj (x_j − x_m) / h²
//! ```
//!
//! The eigenvalue form `−(1/n) Σ log λ_i(L)` is kept for cross-checking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::quality::QUALITY_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub bandwidth: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { bandwidth: 1.0 }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DppHyperparams {
    /// Exponent on quality inside the kernel.
    pub gamma0: f64,
    /// Weight of the DPP loss in the generator objective.
    pub gamma1: f64,
}

impl Default for DppHyperparams {
    fn default() -> Self {
        Self { gamma0: 5.0, gamma1: 0.2 }
    }
}

impl DppHyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma0", self.gamma0), ("gamma1", self.gamma1)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `exp(−‖a − b‖² / 2h²)`
#[inline]
pub fn similarity(a: &[f64], b: &[f64], cfg: &SimilarityConfig) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * cfg.bandwidth * cfg.bandwidth)).exp()
}

pub fn similarity_matrix(designs: &[Vec<f64>], cfg: &SimilarityConfig) -> Result<SymMatrix> {
    let d = designs.first().map_or(0, Vec::len);
    if let Some(bad) = designs.iter().find(|x| x.len() != d) {
        return Err(Error::ShapeMismatch {
            context: "similarity_matrix design dimension",
            expected: d,
            actual: bad.len(),
        });
    }
    SymMatrix::from_fn(designs.len(), |i, j| {
        if i == j {
            1.0
        } else {
            similarity(&designs[i], &designs[j], cfg)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchKernel {
    pub designs: Vec<Vec<f64>>,
    pub qualities: Vec<f64>,
    /// `K_ij = k(x_i, x_j)`
    pub similarity: SymMatrix,
    /// `L_B = D K D`
    pub kernel: SymMatrix,
    pub similarity_cfg: SimilarityConfig,
    pub gamma0: f64,
}

impl BatchKernel {
    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }
}

pub fn build_kernel(
    designs: &[Vec<f64>],
    qualities: &[f64],
    cfg: &SimilarityConfig,
    hp: &DppHyperparams,
) -> Result<BatchKernel> {
    if designs.is_empty() {
        return Err(Error::InvalidArgument("batch must contain at least one design".into()));
    }
    if designs.len() != qualities.len() {
        return Err(Error::ShapeMismatch {
            context: "build_kernel qualities",
            expected: designs.len(),
            actual: qualities.len(),
        });
    }
    for (index, &q) in qualities.iter().enumerate() {
        if !(QUALITY_FLOOR..=1.0).contains(&q) {
            return Err(Error::QualityOutOfRange {
                index,
                value: q,
                min: QUALITY_FLOOR,
            });
        }
    }
    let k = similarity_matrix(designs, cfg)?;
    let scale: Vec<f64> = qualities.iter().map(|q| q.powf(hp.gamma0)).collect();
    let l = SymMatrix::from_fn(designs.len(), |i, j| scale[i] * k.get(i, j) * scale[j])?;
    Ok(BatchKernel {
        designs: designs.to_vec(),
        qualities: qualities.to_vec(),
        similarity: k,
        kernel: l,
        similarity_cfg: *cfg,
        gamma0: hp.gamma0,
    })
}

/// `−(1/n) [2γ₀ Σ log q_i + log det(K + jitter·I)]`, with the jitter taken
/// from the first rung of `ladder` at which `K` factors.
pub fn pad_loss(bk: &BatchKernel, ladder: &[f64]) -> Result<f64> {
    let chol = linalg::cholesky_with_ladder(&bk.similarity, ladder)?;
    Ok(split_loss(bk, chol.logdet()))
}

fn split_loss(bk: &BatchKernel, logdet_k: f64) -> f64 {
    let n = bk.len() as f64;
    let log_q: f64 = bk.qualities.iter().map(|q| q.ln()).sum();
    -(2.0 * bk.gamma0 * log_q + logdet_k) / n
}

/// `−(1/n) Σ log λ_i(L_B)` straight from the eigenvalues of the full kernel.
/// Fails with [`Error::DegenerateBatch`] if any eigenvalue is non-positive.
pub fn pad_loss_eigen(bk: &BatchKernel) -> Result<f64> {
    let values = linalg::sym_eigenvalues(&bk.kernel)?;
    if values.iter().any(|l| *l <= 0.0) {
        return Err(Error::DegenerateBatch);
    }
    Ok(-values.iter().map(|l| l.ln()).sum::<f64>() / bk.len() as f64)
}

/// Loss value together with per-design gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PadEvaluation {
    pub loss: f64,
    pub gradients: Vec<Vec<f64>>,
    pub jitter: f64,
}

/// Gradient of [`pad_loss`] with respect to every design.
///
/// `quality_grads[m]` is `∇q(x_m)`; it is ignored when `q_m` sits on the
/// clamp (`ε_q` or 1).
pub fn pad_loss_gradients(bk: &BatchKernel, quality_grads: &[Vec<f64>], ladder: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(pad_loss_and_gradients(bk, quality_grads, ladder)?.gradients)
}

pub fn pad_loss_and_gradients(bk: &BatchKernel, quality_grads: &[Vec<f64>], ladder: &[f64]) -> Result<PadEvaluation> {
    let n = bk.len();
    if quality_grads.len() != n {
        return Err(Error::ShapeMismatch {
            context: "pad_loss_gradients quality gradients",
            expected: n,
            actual: quality_grads.len(),
        });
    }
    let d = bk.designs[0].len();
    if let Some(bad) = quality_grads.iter().find(|g| g.len() != d) {
        return Err(Error::ShapeMismatch {
            context: "pad_loss_gradients gradient dimension",
            expected: d,
            actual: bad.len(),
        });
    }
    let chol = linalg::cholesky_with_ladder(&bk.similarity, ladder)?;
    let loss = split_loss(bk, chol.logdet());
    let k_inv = chol.inverse();
    let nf = n as f64;
    let h2 = bk.similarity_cfg.bandwidth * bk.similarity_cfg.bandwidth;

    let gradients = (0..n)
        .map(|m| {
            let mut g = vec![0.0; d];
            let q = bk.qualities[m];
            if q > QUALITY_FLOOR && q < 1.0 && bk.gamma0 != 0.0 {
                let coef = -2.0 * bk.gamma0 / (nf * q);
                for (gi, dq) in g.iter_mut().zip(&quality_grads[m]) {
                    *gi += coef * dq;
                }
            }
            let xm = &bk.designs[m];
            for j in 0..n {
                if j == m {
                    continue;
                }
                // A = −K⁻¹/n; both (m, j) and (j, m) entries depend on x_m.
                let a_sym = -(k_inv.get(m, j) + k_inv.get(j, m)) / nf;
                let w = a_sym * bk.similarity.get(m, j) / h2;
                for (gi, (xmi, xji)) in g.iter_mut().zip(xm.iter().zip(&bk.designs[j])) {
                    *gi += w * (xji - xmi);
                }
            }
            g
        })
        .collect();

    Ok(PadEvaluation {
        loss,
        gradients,
        jitter: chol.jitter(),
    })
}

/// Unnormalized DPP probability of the subset `subset`:
/// `Π_{i∈S} q_i^{2γ₀} · det(K_S)`.
pub fn subset_probability(
    designs: &[Vec<f64>],
    qualities: &[f64],
    subset: &[usize],
    cfg: &SimilarityConfig,
    hp: &DppHyperparams,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    if designs.len() != qualities.len() {
        return Err(Error::ShapeMismatch {
            context: "subset_probability qualities",
            expected: designs.len(),
            actual: qualities.len(),
        });
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= designs.len()) {
        return Err(Error::InvalidArgument(format!("subset index {bad} out of range")));
    }
    let picked: Vec<Vec<f64>> = subset.iter().map(|&i| designs[i].clone()).collect();
    let k_s = similarity_matrix(&picked, cfg)?;
    let det = linalg::determinant(subset.len(), k_s.as_slice());
    let quality: f64 = subset.iter().map(|&i| qualities[i].powf(2.0 * hp.gamma0)).product();
    Ok(quality * det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::JITTER_LADDER;
    use crate::quality::{
        aggregate, aggregate_detailed, aggregate_gradient, evaluate_performance, performance_gradient,
        QualityFunctionSpec, WeightVector,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SimilarityConfig {
        SimilarityConfig::default()
    }

    fn hp(gamma0: f64) -> DppHyperparams {
        DppHyperparams { gamma0, gamma1: 0.2 }
    }

    fn random_batch(n: usize, spread: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-spread..spread)).collect())
            .collect()
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&[0.3, 0.4], &[0.3, 0.4], &cfg()), 1.0);
        let v = similarity(&[0.0, 0.0], &[1.0, 1.0], &cfg());
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        let h = SimilarityConfig { bandwidth: 2.0 };
        assert!((similarity(&[0.0], &[2.0], &h) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn similarity_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let b = random_batch(2, 2.0, &mut rng);
            assert_eq!(similarity(&b[0], &b[1], &cfg()), similarity(&b[1], &b[0], &cfg()));
            assert!(similarity(&b[0], &b[1], &cfg()) < 1.0);
        }
    }

    #[test]
    fn single_item_kernel() {
        let bk = build_kernel(&[vec![0.1, 0.2]], &[0.5], &cfg(), &hp(5.0)).unwrap();
        assert_eq!(bk.kernel.get(0, 0), 9.765625e-4);
        let loss = pad_loss(&bk, &JITTER_LADDER).unwrap();
        assert!((loss - 10.0 * 2f64.ln()).abs() < 1e-12);
        assert!((loss - 6.93147).abs() < 1e-5);
        let bk1 = build_kernel(&[vec![0.1, 0.2]], &[1.0], &cfg(), &hp(5.0)).unwrap();
        assert_eq!(pad_loss(&bk1, &JITTER_LADDER).unwrap(), 0.0);
    }

    #[test]
    fn duplicates_are_rank_deficient() {
        let x = vec![0.25, -0.5];
        let bk = build_kernel(&[x.clone(), x], &[1.0, 1.0], &cfg(), &hp(5.0)).unwrap();
        assert!(bk.kernel.as_slice().iter().all(|v| *v == 1.0));
        assert_eq!(linalg::determinant(2, bk.kernel.as_slice()), 0.0);
    }

    #[test]
    fn unit_quality_kernel_equals_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_batch(6, 1.0, &mut rng);
        for g0 in [0.0, 1.0, 5.0, 17.5] {
            let bk = build_kernel(&b, &[1.0; 6], &cfg(), &hp(g0)).unwrap();
            assert_eq!(bk.kernel, bk.similarity);
        }
    }

    #[test]
    fn kernel_is_dkd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(5, 1.0, &mut rng);
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..1.0)).collect();
        let bk = build_kernel(&b, &q, &cfg(), &hp(5.0)).unwrap();
        for i in 0..5 {
            assert_eq!(bk.similarity.get(i, i), 1.0);
            for j in 0..5 {
                let expected = q[i].powf(5.0) * bk.similarity.get(i, j) * q[j].powf(5.0);
                assert!((bk.kernel.get(i, j) - expected).abs() <= 1e-14 * expected.abs());
                assert!(bk.similarity.get(i, j) > 0.0 && bk.similarity.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn build_kernel_rejects_bad_quality() {
        let b = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert!(matches!(
            build_kernel(&b, &[0.5, 0.0], &cfg(), &hp(5.0)),
            Err(Error::QualityOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            build_kernel(&b, &[1.5, 0.5], &cfg(), &hp(5.0)),
            Err(Error::QualityOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            build_kernel(&b, &[0.5], &cfg(), &hp(5.0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn distant_points_give_zero_loss() {
        let b = vec![vec![0.0, 0.0], vec![100.0, 0.0]];
        let bk = build_kernel(&b, &[1.0, 1.0], &cfg(), &hp(5.0)).unwrap();
        assert!(pad_loss(&bk, &JITTER_LADDER).unwrap().abs() < 1e-12);
    }

    #[test]
    fn split_form_matches_eigen_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let b = random_batch(8, 2.0, &mut rng);
            let q: Vec<f64> = (0..8).map(|_| rng.random_range(0.2..1.0)).collect();
            let bk = build_kernel(&b, &q, &cfg(), &hp(5.0)).unwrap();
            let split = pad_loss(&bk, &[0.0]).unwrap();
            let eig = pad_loss_eigen(&bk).unwrap();
            assert!((split - eig).abs() < 1e-8, "{split} vs {eig}");
        }
    }

    #[test]
    fn singular_batch_uses_jitter() {
        let x = vec![0.0, 0.0];
        let bk = build_kernel(&[x.clone(), x.clone(), vec![1.0, 0.0]], &[0.5; 3], &cfg(), &hp(1.0)).unwrap();
        let eval = pad_loss_and_gradients(&bk, &[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]], &JITTER_LADDER).unwrap();
        assert_eq!(eval.jitter, 1e-10);
        assert!(eval.loss.is_finite());
        assert!(matches!(pad_loss(&bk, &[0.0]), Err(Error::DegenerateBatch)));
    }

    #[test]
    fn distant_unit_quality_gradient_is_pure_quality_ascent() {
        let b = vec![vec![0.0, 0.0], vec![50.0, 0.0], vec![0.0, 50.0]];
        let q = vec![0.999_999, 0.5, 0.25];
        let bk = build_kernel(&b, &q, &cfg(), &hp(5.0)).unwrap();
        let qg = vec![vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.0, 0.0]];
        let g = pad_loss_gradients(&bk, &qg, &JITTER_LADDER).unwrap();
        for m in 0..3 {
            for i in 0..2 {
                let expected = -2.0 * 5.0 / (3.0 * q[m]) * qg[m][i];
                assert!((g[m][i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamped_clones_only_feel_the_kernel() {
        let b = vec![vec![0.0, 0.0], vec![0.01, 0.0], vec![0.0, 0.01]];
        let bk = build_kernel(&b, &[QUALITY_FLOOR; 3], &cfg(), &hp(5.0)).unwrap();
        let qg = vec![vec![100.0, 100.0]; 3];
        let g = pad_loss_gradients(&bk, &qg, &JITTER_LADDER).unwrap();
        // descent direction −g pushes each clone away from the centroid
        let centroid = [0.01 / 3.0, 0.01 / 3.0];
        for m in 0..3 {
            let away: f64 = (0..2).map(|i| (b[m][i] - centroid[i]) * -g[m][i]).sum();
            assert!(away > 0.0, "item {m}: {:?}", g[m]);
        }
        let zero_q = pad_loss_gradients(&bk, &[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]], &JITTER_LADDER).unwrap();
        assert_eq!(g, zero_q);
    }

    fn mixture_quality(x: &[f64], spec: &QualityFunctionSpec, w: &WeightVector) -> f64 {
        aggregate(&evaluate_performance(spec, x), w)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = QualityFunctionSpec::bimodal_frontier();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let hp = hp(5.0);
        let h = 1e-5;
        for _ in 0..20 {
            let w = crate::quality::sample_weights(2, &mut rng);
            let batch = random_batch(8, 1.0, &mut rng);
            let loss_at = |b: &[Vec<f64>]| {
                let q: Vec<f64> = b.iter().map(|x| mixture_quality(x, &spec, &w)).collect();
                pad_loss(&build_kernel(b, &q, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap()
            };
            let q: Vec<f64> = batch.iter().map(|x| mixture_quality(x, &spec, &w)).collect();
            let qg: Vec<Vec<f64>> = batch
                .iter()
                .map(|x| {
                    let agg = aggregate_detailed(&evaluate_performance(&spec, x), &w);
                    aggregate_gradient(&performance_gradient(&spec, x), &w, agg)
                })
                .collect();
            let bk = build_kernel(&batch, &q, &cfg(), &hp).unwrap();
            let g = pad_loss_gradients(&bk, &qg, &JITTER_LADDER).unwrap();
            for m in 0..8 {
                for i in 0..2 {
                    let mut plus = batch.clone();
                    plus[m][i] += h;
                    let mut minus = batch.clone();
                    minus[m][i] -= h;
                    let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                    let err = (fd - g[m][i]).abs() / fd.abs().max(g[m][i].abs()).max(1e-4);
                    assert!(err < 1e-4, "item {m} coord {i}: fd {fd} vs {}", g[m][i]);
                }
            }
        }
    }

    #[test]
    fn subset_probability_examples() {
        let designs = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.5]];
        let q = vec![0.7, 0.4, 0.9];
        let p = subset_probability(&designs, &q, &[2], &cfg(), &hp(1.0)).unwrap();
        assert!((p - 0.81).abs() < 1e-15);
        assert_eq!(subset_probability(&designs, &q, &[0, 1], &cfg(), &hp(1.0)).unwrap(), 0.0);
        assert!(subset_probability(&designs, &q, &[], &cfg(), &hp(1.0)).is_err());
        assert!(subset_probability(&designs, &q, &[3], &cfg(), &hp(1.0)).is_err());
    }

    /// Cofactor expansion along the first row, independent of any
    /// factorization.
    fn cofactor_det(n: usize, m: &[f64]) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let mut total = 0.0;
        for c in 0..n {
            let minor: Vec<f64> = (1..n)
                .flat_map(|r| (0..n).filter(move |&k| k != c).map(move |k| (r, k)))
                .map(|(r, k)| m[r * n + k])
                .collect();
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * m[c] * cofactor_det(n - 1, &minor);
        }
        total
    }

    #[test]
    fn subset_probability_equals_det_of_kernel_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for g0 in [1.0, 5.0] {
            let designs = random_batch(6, 1.5, &mut rng);
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(0.3..1.0)).collect();
            let bk = build_kernel(&designs, &q, &cfg(), &hp(g0)).unwrap();
            for mask in 1u32..64 {
                let s: Vec<usize> = (0..6).filter(|i| mask & (1 << i) != 0).collect();
                let block = bk.kernel.submatrix(&s);
                let direct = cofactor_det(s.len(), block.as_slice());
                let p = subset_probability(&designs, &q, &s, &cfg(), &hp(g0)).unwrap();
                assert!((p - direct).abs() <= 1e-10 * direct.abs().max(1e-300), "{p} vs {direct}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn batch_strategy(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
            n.prop_flat_map(|n| {
                (
                    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), n),
                    prop::collection::vec(0.05f64..1.0, n),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn quality_increase_lowers_loss((b, q) in batch_strategy(1..8), i in 0usize..8, bump in 0.01f64..0.5) {
                let i = i % b.len();
                let hp = hp(5.0);
                let base = pad_loss(&build_kernel(&b, &q, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap();
                let mut q2 = q.clone();
                q2[i] = (q2[i] + bump).min(1.0);
                prop_assume!(q2[i] > q[i]);
                let up = pad_loss(&build_kernel(&b, &q2, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap();
                prop_assert!(up < base);
            }

            #[test]
            fn gamma0_zero_ignores_quality((b, q) in batch_strategy(1..8)) {
                let hp = hp(0.0);
                let bk = build_kernel(&b, &q, &cfg(), &hp).unwrap();
                prop_assert_eq!(&bk.kernel, &bk.similarity);
                let ones = vec![1.0; b.len()];
                let bk1 = build_kernel(&b, &ones, &cfg(), &hp).unwrap();
                prop_assert_eq!(pad_loss(&bk, &JITTER_LADDER).unwrap(), pad_loss(&bk1, &JITTER_LADDER).unwrap());
            }

            #[test]
            fn permutation_invariant((b, q) in batch_strategy(2..8), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let mut idx: Vec<usize> = (0..b.len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let pb: Vec<Vec<f64>> = idx.iter().map(|&i| b[i].clone()).collect();
                let pq: Vec<f64> = idx.iter().map(|&i| q[i]).collect();
                let hp = hp(5.0);
                let a = pad_loss(&build_kernel(&b, &q, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap();
                let c = pad_loss(&build_kernel(&pb, &pq, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap();
                prop_assert!((a - c).abs() <= 1e-9 * a.abs().max(1.0));
            }

            #[test]
            fn closer_pair_costs_more(d1 in 0.05f64..3.0, shrink in 0.1f64..0.95, q in prop::collection::vec(0.1f64..1.0, 2)) {
                let hp = hp(5.0);
                let at = |d: f64| {
                    let b = vec![vec![0.0, 0.0], vec![d, 0.0]];
                    pad_loss(&build_kernel(&b, &q, &cfg(), &hp).unwrap(), &JITTER_LADDER).unwrap()
                };
                prop_assert!(at(d1 * shrink) > at(d1));
            }
        }
    }
}
