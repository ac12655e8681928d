//! Post-training evaluation of a design pool: log-det diversity under
//! random subsetting, Pareto fronts and hypervolume, novelty with respect to
//! the training data, and top-k tables.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpp::{similarity_matrix, SimilarityConfig};
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues below this are clamped before taking logs.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// `log det` of the similarity matrix of `subset`, via Jacobi eigenvalues
/// clamped at [`EIGEN_FLOOR`].
pub fn diversity_score(subset: &[Vec<f64>], cfg: &SimilarityConfig) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("diversity of an empty subset".into()));
    }
    let k = similarity_matrix(subset, cfg)?;
    let values = linalg::sym_eigenvalues(&k)?;
    Ok(values.iter().map(|l| l.max(EIGEN_FLOOR).ln()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles use linear interpolation between order statistics.
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |p: f64| {
            let pos = p * (count - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Self {
            count,
            mean,
            std: var.sqrt(),
            min: sorted[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            q3: quantile(0.75),
            max: sorted[count - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub values: Vec<f64>,
    pub summary: Summary,
    pub n_repetitions: usize,
    pub subset_size: usize,
    pub pool_size: usize,
}

/// Repeats [`diversity_score`] on `n_repetitions` random subsets of
/// `subset_size` designs drawn without replacement from `pool`. Repetition
/// `r` uses ChaCha stream `r` of `seed`, so results do not depend on the
/// number of worker threads.
pub fn diversity_statistics(
    pool: &[Vec<f64>],
    n_repetitions: usize,
    subset_size: usize,
    cfg: &SimilarityConfig,
    seed: u64,
) -> Result<DiversityReport> {
    if subset_size == 0 {
        return Err(Error::InvalidArgument("subset_size must be >= 1".into()));
    }
    if pool.len() < subset_size {
        return Err(Error::PoolTooSmall {
            pool: pool.len(),
            subset: subset_size,
        });
    }
    let values = (0..n_repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let picked: Vec<Vec<f64>> = index::sample(&mut rng, pool.len(), subset_size)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            diversity_score(&picked, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DiversityReport {
        summary: Summary::from_values(&values),
        values,
        n_repetitions,
        subset_size,
        pool_size: pool.len(),
    })
}

/// `a` dominates `b` (maximization): `a ≥ b` componentwise and `a ≠ b`.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationComparison {
    /// Points of the evaluated set dominated by some point of the other set.
    pub dominated_by_other: usize,
    /// Points of the other set dominated by some point of the evaluated set.
    pub other_dominated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    /// Indices of non-dominated points, ascending.
    pub front: Vec<usize>,
    /// Area dominated relative to the origin; only computed for K = 2.
    pub hypervolume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<DominationComparison>,
}

pub fn pareto_front(performances: &[Vec<f64>]) -> Result<ParetoReport> {
    if performances.is_empty() {
        return Err(Error::InvalidArgument("pareto_front needs at least one point".into()));
    }
    let k = performances[0].len();
    if let Some(bad) = performances.iter().find(|p| p.len() != k) {
        return Err(Error::ShapeMismatch {
            context: "pareto_front objective count",
            expected: k,
            actual: bad.len(),
        });
    }
    if performances.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("performance values"));
    }
    let front = if k == 2 {
        front_2d(performances)
    } else {
        (0..performances.len())
            .filter(|&i| !performances.iter().any(|o| dominates(o, &performances[i])))
            .collect()
    };
    let hypervolume = (k == 2).then(|| {
        let pts: Vec<&[f64]> = front.iter().map(|&i| performances[i].as_slice()).collect();
        hypervolume_2d(&pts)
    });
    Ok(ParetoReport {
        front,
        hypervolume,
        comparison: None,
    })
}

/// Sort-and-sweep front for two objectives.
fn front_2d(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b][0]
            .total_cmp(&points[a][0])
            .then(points[b][1].total_cmp(&points[a][1]))
    });
    let mut front = Vec::new();
    let mut best_prev = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let x0 = points[order[start]][0];
        let mut end = start;
        while end < order.len() && points[order[end]][0] == x0 {
            end += 1;
        }
        // group shares the first objective; its first member has the best second
        let group_max = points[order[start]][1];
        for &i in &order[start..end] {
            let y = points[i][1];
            if !(best_prev >= y) && y == group_max {
                front.push(i);
            }
        }
        best_prev = best_prev.max(group_max);
        start = end;
    }
    front.sort_unstable();
    front
}

/// Area dominated by `points` and bounded below by the origin.
pub fn hypervolume_2d(points: &[&[f64]]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p[0].max(0.0), p[1].max(0.0)))
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    // descending x; the staircase rises in y as x falls
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut covered_y = 0.0;
    for (x, y) in pts {
        if y > covered_y {
            area += x * (y - covered_y);
            covered_y = y;
        }
    }
    area
}

pub fn compare_domination(ours: &[Vec<f64>], other: &[Vec<f64>]) -> DominationComparison {
    DominationComparison {
        dominated_by_other: ours.iter().filter(|a| other.iter().any(|b| dominates(b, a))).count(),
        other_dominated: other.iter().filter(|b| ours.iter().any(|a| dominates(a, b))).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub threshold: f64,
    pub fraction_above: f64,
}

/// Euclidean distance from every sample to its nearest training design.
pub fn novelty_distances(samples: &[Vec<f64>], training: &[Vec<f64>], threshold: f64) -> Result<NoveltyReport> {
    if samples.is_empty() || training.is_empty() {
        return Err(Error::InvalidArgument("novelty needs nonempty sample and training sets".into()));
    }
    let distances: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            training
                .iter()
                .map(|t| s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    let n = distances.len() as f64;
    Ok(NoveltyReport {
        mean: distances.iter().sum::<f64>() / n,
        max: distances.iter().cloned().fold(0.0, f64::max),
        threshold,
        fraction_above: distances.iter().filter(|d| **d > threshold).count() as f64 / n,
        distances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub rank: usize,
    pub index: usize,
    pub score: f64,
    pub design: Vec<f64>,
    pub performance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKTable {
    /// `"aggregate"` (equal-weight mean of objectives) or `"objective_<j>"`.
    pub criterion: String,
    pub rows: Vec<TopKRow>,
}

/// The `k` best samples by equal-weight aggregate quality and by each
/// objective. Ties go to the lower sample index.
pub fn top_k_report(samples: &[Vec<f64>], performances: &[Vec<f64>], k: usize) -> Result<Vec<TopKTable>> {
    if samples.len() != performances.len() {
        return Err(Error::ShapeMismatch {
            context: "top_k_report performances",
            expected: samples.len(),
            actual: performances.len(),
        });
    }
    if k > samples.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {} samples", samples.len())));
    }
    let objectives = performances.first().map_or(0, Vec::len);
    let mut criteria: Vec<(String, Box<dyn Fn(&[f64]) -> f64>)> = vec![(
        "aggregate".into(),
        Box::new(move |p: &[f64]| p.iter().sum::<f64>() / objectives as f64),
    )];
    for j in 0..objectives {
        criteria.push((format!("objective_{}", j + 1), Box::new(move |p: &[f64]| p[j])));
    }
    Ok(criteria
        .into_iter()
        .map(|(criterion, score)| {
            let mut order: Vec<(usize, f64)> =
                performances.iter().enumerate().map(|(i, p)| (i, score(p))).collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let rows = order
                .into_iter()
                .take(k)
                .enumerate()
                .map(|(rank, (index, score))| TopKRow {
                    rank: rank + 1,
                    index,
                    score,
                    design: samples[index].clone(),
                    performance: performances[index].clone(),
                })
                .collect();
            TopKTable { criterion, rows }
        })
        .collect())
}
