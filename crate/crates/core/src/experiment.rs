//! End-to-end pipelines shared by the command line and the acceptance
//! tests: surrogate fitting, training runs, pool evaluation, and the
//! DPP-loss versus plain GAN comparison.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EvaluationConfig, ExperimentConfig};
use crate::dpp::SimilarityConfig;
use crate::error::{Error, Result};
use crate::evalmetrics::{self, DiversityReport, NoveltyReport, ParetoReport, Summary, TopKTable};
use crate::gan::{self, QualitySourceKind, TrainOutcome};
use crate::quality::{self, QualityFunctionSpec, QualitySource, Surrogate, SurrogateFit};

/// Offset mixed into a run seed to get the seed for its evaluation pool.
const POOL_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn pool_seed(seed: u64) -> u64 {
    seed.wrapping_add(POOL_SEED_OFFSET)
}

/// Surrogate fitted to `cfg.surrogate.samples` designs drawn uniformly over
/// the domain and scored by the analytic objectives.
pub fn fit_surrogate(cfg: &ExperimentConfig) -> Result<SurrogateFit> {
    let sc = &cfg.surrogate;
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let designs: Vec<Vec<f64>> = (0..sc.samples).map(|_| cfg.quality.domain.sample_uniform(&mut rng)).collect();
    let targets: Vec<Vec<f64>> = designs.iter().map(|x| quality::evaluate_performance(&cfg.quality, x)).collect();
    let spec = sc.network_spec(cfg.quality.domain.dim, cfg.quality.num_objectives())?;
    quality::train_surrogate(&designs, &targets, &spec, sc)
}

/// The quality source selected by `train.quality_source`. A surrogate is
/// fitted in-process when none is supplied.
pub fn quality_source(cfg: &ExperimentConfig, surrogate: Option<Surrogate>) -> Result<QualitySource> {
    match cfg.train.quality_source {
        QualitySourceKind::Analytic => Ok(QualitySource::Analytic(cfg.quality.clone())),
        QualitySourceKind::Surrogate => {
            let s = match surrogate {
                Some(s) => s,
                None => fit_surrogate(cfg)?.surrogate,
            };
            if s.spec.input_width() != cfg.quality.domain.dim {
                return Err(Error::ShapeMismatch {
                    context: "surrogate input width",
                    expected: cfg.quality.domain.dim,
                    actual: s.spec.input_width(),
                });
            }
            Ok(QualitySource::Surrogate(s))
        }
    }
}

/// Metrics of one pool of designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pool_size: usize,
    pub diversity: DiversityReport,
    /// Summary of each objective over the pool.
    pub objectives: Vec<Summary>,
    pub pareto: ParetoReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novelty: Option<NoveltyReport>,
    pub top_k: Vec<TopKTable>,
}

impl EvaluationReport {
    pub fn mean_objectives(&self) -> Vec<f64> {
        self.objectives.iter().map(|s| s.mean).collect()
    }
}

/// Evaluates `pool` with the analytic objectives. Novelty is measured
/// against `training` when given.
pub fn evaluate_pool(
    pool: &[Vec<f64>],
    objectives: &QualityFunctionSpec,
    training: Option<&[Vec<f64>]>,
    eval: &EvaluationConfig,
    similarity: &SimilarityConfig,
    seed: u64,
) -> Result<EvaluationReport> {
    if pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let performances: Vec<Vec<f64>> = pool.iter().map(|x| quality::evaluate_performance(objectives, x)).collect();
    let diversity = evalmetrics::diversity_statistics(pool, eval.n_repetitions, eval.subset_size, similarity, seed)?;
    let k = objectives.num_objectives();
    let summaries = (0..k)
        .map(|j| Summary::from_values(&performances.iter().map(|p| p[j]).collect::<Vec<_>>()))
        .collect();
    let pareto = evalmetrics::pareto_front(&performances)?;
    let novelty = training
        .map(|t| evalmetrics::novelty_distances(pool, t, eval.novelty_threshold))
        .transpose()?;
    let top_k = evalmetrics::top_k_report(pool, &performances, eval.top_k.min(pool.len()))?;
    Ok(EvaluationReport {
        pool_size: pool.len(),
        diversity,
        objectives: summaries,
        pareto,
        novelty,
        top_k,
    })
}

/// A trained model together with the evaluation of a sampled pool.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub gamma1: f64,
    pub outcome: TrainOutcome,
    pub pool: Vec<Vec<f64>>,
    pub report: EvaluationReport,
}

/// Train with `seed` and `gamma1`, sample `evaluation.pool_size` designs
/// and evaluate them.
pub fn train_and_evaluate(
    cfg: &ExperimentConfig,
    data: &[Vec<f64>],
    source: &QualitySource,
    seed: u64,
    gamma1: f64,
) -> Result<RunResult> {
    let mut tc = cfg.train_config(seed);
    tc.dpp.gamma1 = gamma1;
    let outcome = gan::train(&tc, data, source, &cfg.quality.domain)?;
    let pool = gan::sample(&outcome.generator, cfg.evaluation.pool_size, pool_seed(seed))?;
    let report = evaluate_pool(&pool, &cfg.quality, Some(data), &cfg.evaluation, &tc.similarity, seed)?;
    Ok(RunResult {
        seed,
        gamma1,
        outcome,
        pool,
        report,
    })
}

/// Headline numbers for one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub mean_diversity: f64,
    pub mean_objectives: Vec<f64>,
    pub hypervolume: Option<f64>,
    pub mean_novelty: Option<f64>,
}

impl ArmMetrics {
    pub fn from_report(r: &EvaluationReport) -> Self {
        Self {
            mean_diversity: r.diversity.summary.mean,
            mean_objectives: r.mean_objectives(),
            hypervolume: r.pareto.hypervolume,
            mean_novelty: r.novelty.as_ref().map(|n| n.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub padgan: ArmMetrics,
    pub vanilla: ArmMetrics,
    pub diversity_higher: bool,
    pub all_objectives_higher: bool,
    pub hypervolume_higher: bool,
    pub novelty_higher: bool,
}

impl SeedComparison {
    pub fn new(seed: u64, padgan: ArmMetrics, vanilla: ArmMetrics) -> Self {
        let gt = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(a), Some(b)) if a > b);
        Self {
            seed,
            diversity_higher: padgan.mean_diversity > vanilla.mean_diversity,
            all_objectives_higher: padgan
                .mean_objectives
                .iter()
                .zip(&vanilla.mean_objectives)
                .all(|(a, b)| a > b),
            hypervolume_higher: gt(padgan.hypervolume, vanilla.hypervolume),
            novelty_higher: gt(padgan.mean_novelty, vanilla.mean_novelty),
            padgan,
            vanilla,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub gamma0: f64,
    pub gamma1: f64,
    pub steps: usize,
    /// The training data evaluated as a pool of its own.
    pub data: ArmMetrics,
    pub seeds: Vec<SeedComparison>,
}

impl CompareReport {
    /// Seeds where the DPP-loss run beat the plain GAN on diversity and on
    /// every objective mean.
    pub fn wins_diversity_and_quality(&self) -> usize {
        self.seeds.iter().filter(|s| s.diversity_higher && s.all_objectives_higher).count()
    }

    pub fn wins_hypervolume(&self) -> usize {
        self.seeds.iter().filter(|s| s.hypervolume_higher).count()
    }

    pub fn wins_novelty(&self) -> usize {
        self.seeds.iter().filter(|s| s.novelty_higher).count()
    }

    /// Side-by-side table, one row per seed and arm.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let k = self.data.mean_objectives.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["seed", "arm", "gamma1", "mean_diversity"].map(String::from).to_vec();
        header.extend((1..=k).map(|j| format!("mean_q{j}")));
        header.extend(["hypervolume", "mean_novelty"].map(String::from));
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut row = |seed: String, arm: &str, gamma1: f64, m: &ArmMetrics| -> Result<()> {
            let mut r = vec![seed, arm.to_string(), gamma1.to_string(), m.mean_diversity.to_string()];
            r.extend(m.mean_objectives.iter().map(|v| v.to_string()));
            r.push(opt(m.hypervolume));
            r.push(opt(m.mean_novelty));
            w.write_record(&r)?;
            Ok(())
        };
        row(String::new(), "data", 0.0, &self.data)?;
        for s in &self.seeds {
            row(s.seed.to_string(), "padgan", self.gamma1, &s.padgan)?;
            row(s.seed.to_string(), "vanilla", 0.0, &s.vanilla)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains the configured `γ₁` and `γ₁ = 0` on every seed in
/// `cfg.compare.seeds` and compares the evaluated pools.
pub fn compare(cfg: &ExperimentConfig, data: &[Vec<f64>], source: &QualitySource) -> Result<(CompareReport, Vec<RunResult>)> {
    let gamma1 = cfg.train.dpp.gamma1;
    let data_pool: Vec<Vec<f64>> = data.iter().take(cfg.evaluation.pool_size).cloned().collect();
    let data_eval = EvaluationConfig {
        subset_size: cfg.evaluation.subset_size.min(data_pool.len()),
        ..cfg.evaluation.clone()
    };
    let data_report = evaluate_pool(&data_pool, &cfg.quality, None, &data_eval, &cfg.train.similarity, cfg.seed)?;
    let mut seeds = Vec::new();
    let mut runs = Vec::new();
    for &seed in &cfg.compare.seeds {
        let pad = train_and_evaluate(cfg, data, source, seed, gamma1)?;
        let van = train_and_evaluate(cfg, data, source, seed, 0.0)?;
        seeds.push(SeedComparison::new(
            seed,
            ArmMetrics::from_report(&pad.report),
            ArmMetrics::from_report(&van.report),
        ));
        runs.push(pad);
        runs.push(van);
    }
    Ok((
        CompareReport {
            gamma0: cfg.train.dpp.gamma0,
            gamma1,
            steps: cfg.train.steps,
            data: ArmMetrics::from_report(&data_report),
            seeds,
        },
        runs,
    ))
}
