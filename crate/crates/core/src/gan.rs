//! Adversarial training of a generator/discriminator pair, optionally with
//! the performance-augmented DPP loss added to the generator objective:
//!
//! ```text
//! D:  min  −mean log D(x_real) − mean log(1 − D(G(z)))
//! G:  min  −mean log D(G(z)) + γ₁ ℒ_PaD(G(z))
//! ```
//!
//! The DPP term is computed on the same fake batch as the adversarial term
//! and only ever reaches the generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpp::{self, DppHyperparams, SimilarityConfig};
use crate::error::{Error, Result};
use crate::evalmetrics;
use crate::linalg::JITTER_LADDER;
use crate::nn::{self, Activation, AdamConfig, AdamState, Checkpoint, Matrix, NetworkParameters, NetworkSpec};
use crate::quality::{self, DomainBox, QualitySource, WeightVector};

/// Clamp applied to discriminator outputs before taking logs.
pub const D_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualitySourceKind {
    Analytic,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Discriminator updates per generator update.
    pub discriminator_steps: usize,
    pub dpp: DppHyperparams,
    pub similarity: SimilarityConfig,
    pub quality_source: QualitySourceKind,
    pub log_interval: usize,
    /// When false the DPP term is skipped entirely in the generator update
    /// (its value is still logged).
    pub pad_gradient: bool,
    /// Supplied by the caller rather than the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            steps: 5000,
            latent_dim: 5,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            discriminator_steps: 1,
            dpp: DppHyperparams::default(),
            similarity: SimilarityConfig::default(),
            quality_source: QualitySourceKind::Analytic,
            log_interval: 50,
            pad_gradient: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("latent_dim", self.latent_dim),
            ("discriminator_steps", self.discriminator_steps),
            ("log_interval", self.log_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be >= 1")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be >= 2".into()));
        }
        for (name, v) in [("lr_generator", self.lr_generator), ("lr_discriminator", self.lr_discriminator)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be > 0")));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("train.{name} must lie in [0, 1)")));
            }
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        self.similarity.validate()?;
        self.dpp.validate()
    }

    pub fn generator_spec(&self, dim: usize) -> Result<NetworkSpec> {
        let mut widths = vec![self.latent_dim];
        widths.extend(&self.generator_hidden);
        widths.push(dim);
        NetworkSpec::new(widths, Activation::Tanh, Activation::Tanh)
    }

    pub fn discriminator_spec(&self, dim: usize) -> Result<NetworkSpec> {
        let mut widths = vec![dim];
        widths.extend(&self.discriminator_hidden);
        widths.push(1);
        NetworkSpec::new(widths, Activation::LeakyRelu, Activation::Sigmoid)
    }
}

/// `−mean log D(x_real) − mean log(1 − D(x_fake))`, outputs clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let real = d_real.iter().map(|a| clamp_d(*a).ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|a| (1.0 - clamp_d(*a)).ln()).sum::<f64>() / d_fake.len() as f64;
    -real - fake
}

/// Non-saturating adversarial term plus the weighted DPP loss.
pub fn generator_objective(d_fake: &[f64], pad_loss: f64, gamma1: f64) -> f64 {
    generator_adversarial_loss(d_fake) + gamma1 * pad_loss
}

pub fn generator_adversarial_loss(d_fake: &[f64]) -> f64 {
    -d_fake.iter().map(|a| clamp_d(*a).ln()).sum::<f64>() / d_fake.len() as f64
}

fn clamp_d(a: f64) -> f64 {
    a.clamp(D_CLAMP, 1.0 - D_CLAMP)
}

/// Generator network plus the affine map from its tanh output `t ∈ (−1, 1)`
/// onto the design box: `x = lo + (hi − lo)(t + 1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub spec: NetworkSpec,
    pub params: NetworkParameters,
    pub optimizer: AdamState,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorState {
    pub spec: NetworkSpec,
    pub params: NetworkParameters,
    pub optimizer: AdamState,
}

impl GeneratorState {
    pub fn new(spec: NetworkSpec, params: NetworkParameters, adam: AdamConfig, domain: &DomainBox) -> Result<Self> {
        params.check(&spec)?;
        if spec.output_width() != domain.dim {
            return Err(Error::ShapeMismatch {
                context: "generator output width vs domain",
                expected: domain.dim,
                actual: spec.output_width(),
            });
        }
        let optimizer = AdamState::new(params.len(), adam);
        Ok(Self {
            spec,
            params,
            optimizer,
            lo: vec![domain.lo; domain.dim],
            hi: vec![domain.hi; domain.dim],
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.input_width()
    }

    /// Maps a batch of latents to designs; also returns the forward cache.
    pub fn generate(&self, z: &Matrix) -> Result<(Vec<Vec<f64>>, nn::ForwardCache)> {
        let (t, cache) = nn::forward(&self.spec, &self.params, z)?;
        let designs = (0..t.rows).map(|r| self.to_domain(t.row(r))).collect();
        Ok((designs, cache))
    }

    fn to_domain(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (lo, hi))| lo + (hi - lo) * (t + 1.0) / 2.0)
            .collect()
    }

    /// Chain a design-space gradient back through the affine output map.
    fn to_output_grad(&self, design_grads: &[Vec<f64>]) -> Matrix {
        let d = self.lo.len();
        let mut m = Matrix::zeros(design_grads.len(), d);
        for (r, g) in design_grads.iter().enumerate() {
            for (c, out) in m.row_mut(r).iter_mut().enumerate() {
                *out = g[c] * (self.hi[c] - self.lo[c]) / 2.0;
            }
        }
        m
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("generator", &self.spec, &self.params, Some(&self.optimizer));
        ck.output_lo = Some(self.lo.clone());
        ck.output_hi = Some(self.hi.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (Some(lo), Some(hi)) = (ck.output_lo.clone(), ck.output_hi.clone()) else {
            return Err(Error::InvalidArgument(format!(
                "checkpoint with role {:?} has no output map; not a generator",
                ck.role
            )));
        };
        if lo.len() != ck.spec.output_width() || hi.len() != lo.len() {
            return Err(Error::ShapeMismatch {
                context: "generator output map",
                expected: ck.spec.output_width(),
                actual: lo.len(),
            });
        }
        let params = ck.params();
        let optimizer = ck
            .optimizer
            .clone()
            .unwrap_or_else(|| AdamState::new(params.len(), AdamConfig::default()));
        Ok(Self {
            spec: ck.spec.clone(),
            params,
            optimizer,
            lo,
            hi,
        })
    }
}

impl DiscriminatorState {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new("discriminator", &self.spec, &self.params, Some(&self.optimizer))
    }
}

/// Latents drawn from `U[−1, 1]^{d_z}`.
pub fn sample_latents(rows: usize, dim: usize, rng: &mut impl Rng) -> Matrix {
    let mut z = Matrix::zeros(rows, dim);
    z.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
    z
}

/// `count` designs from the generator, deterministic in `seed`.
pub fn sample(generator: &GeneratorState, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sample_latents(count, generator.latent_dim(), &mut rng);
    Ok(generator.generate(&z)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_adv_loss: f64,
    pub pad_loss: f64,
    pub mean_quality: Vec<f64>,
    pub batch_diversity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// Columns `step,d_loss,g_adv_loss,pad_loss,mean_q1..mean_qK,batch_diversity`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, objectives: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["step", "d_loss", "g_adv_loss", "pad_loss"].map(String::from).to_vec();
        header.extend((1..=objectives).map(|j| format!("mean_q{j}")));
        header.push("batch_diversity".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.d_loss.to_string(),
                r.g_adv_loss.to_string(),
                r.pad_loss.to_string(),
            ];
            row.extend(r.mean_quality.iter().map(|v| v.to_string()));
            row.push(r.batch_diversity.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// DPP loss of a generated batch and its gradient with respect to each
/// design.
#[derive(Debug, Clone)]
pub struct BatchPad {
    pub loss: f64,
    pub design_grads: Vec<Vec<f64>>,
    pub performances: Vec<Vec<f64>>,
}

/// Scores `designs` with `source`, scalarizes with `weights` and evaluates
/// the DPP loss with its design gradients.
pub fn batch_pad(
    designs: &[Vec<f64>],
    source: &QualitySource,
    weights: &WeightVector,
    similarity: &SimilarityConfig,
    hp: &DppHyperparams,
) -> Result<BatchPad> {
    let evaluated = source.evaluate_batch(designs)?;
    let mut qualities = Vec::with_capacity(designs.len());
    let mut quality_grads = Vec::with_capacity(designs.len());
    let mut performances = Vec::with_capacity(designs.len());
    for (perf, jac) in evaluated {
        let agg = quality::aggregate_detailed(&perf, weights);
        quality_grads.push(quality::aggregate_gradient(&jac, weights, agg));
        qualities.push(agg.quality);
        performances.push(perf);
    }
    let bk = dpp::build_kernel(designs, &qualities, similarity, hp)?;
    let eval = dpp::pad_loss_and_gradients(&bk, &quality_grads, &JITTER_LADDER)?;
    Ok(BatchPad {
        loss: eval.loss,
        design_grads: eval.gradients,
        performances,
    })
}

/// `γ₁ ℒ_PaD(G_θ(z))` and its gradient with respect to the generator
/// parameters `θ`, for fixed latents and weights.
pub fn pad_generator_gradient(
    generator: &GeneratorState,
    z: &Matrix,
    source: &QualitySource,
    weights: &WeightVector,
    similarity: &SimilarityConfig,
    hp: &DppHyperparams,
) -> Result<(f64, Vec<f64>)> {
    let (designs, cache) = generator.generate(z)?;
    let pad = batch_pad(&designs, source, weights, similarity, hp)?;
    let scaled: Vec<Vec<f64>> = pad
        .design_grads
        .iter()
        .map(|g| g.iter().map(|v| hp.gamma1 * v).collect())
        .collect();
    let (grads, _) = nn::backward(&generator.spec, &generator.params, &cache, &generator.to_output_grad(&scaled))?;
    Ok((hp.gamma1 * pad.loss, grads))
}

/// Final networks and the log of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: GeneratorState,
    pub discriminator: DiscriminatorState,
    pub log: TrainLog,
}

/// Stateful trainer; [`train`] is the usual entry point.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub generator: GeneratorState,
    pub discriminator: DiscriminatorState,
    pub log: TrainLog,
    data: &'a [Vec<f64>],
    source: &'a QualitySource,
    rng: ChaCha8Rng,
    weight_rng: ChaCha8Rng,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a [Vec<f64>], source: &'a QualitySource, domain: &DomainBox) -> Result<Self> {
        config.validate()?;
        domain.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = data.iter().find(|x| x.len() != domain.dim) {
            return Err(Error::ShapeMismatch {
                context: "training design width",
                expected: domain.dim,
                actual: bad.len(),
            });
        }
        let g_spec = config.generator_spec(domain.dim)?;
        let d_spec = config.discriminator_spec(domain.dim)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(2);
        let g_params = nn::init_params(&g_spec, init_rng.random());
        let d_params = nn::init_params(&d_spec, init_rng.random());
        let adam = |lr| AdamConfig {
            lr,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            ..AdamConfig::default()
        };
        let generator = GeneratorState::new(g_spec, g_params, adam(config.lr_generator), domain)?;
        let discriminator = DiscriminatorState {
            optimizer: AdamState::new(d_params.len(), adam(config.lr_discriminator)),
            spec: d_spec,
            params: d_params,
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut weight_rng = ChaCha8Rng::seed_from_u64(config.seed);
        weight_rng.set_stream(1);
        Ok(Self {
            config,
            generator,
            discriminator,
            log: TrainLog::default(),
            data,
            source,
            rng,
            weight_rng,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Runs the remaining configured steps.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while self.step < self.config.steps {
            self.step_once()?;
        }
        Ok(TrainOutcome {
            generator: self.generator,
            discriminator: self.discriminator,
            log: self.log,
        })
    }

    /// One round of discriminator updates followed by one generator update.
    pub fn step_once(&mut self) -> Result<()> {
        let step = self.step + 1;
        let n = self.config.batch_size;
        let mut d_loss = 0.0;
        for _ in 0..self.config.discriminator_steps {
            d_loss = self.discriminator_update(step)?;
        }

        let z = sample_latents(n, self.generator.latent_dim(), &mut self.rng);
        let weights = quality::sample_weights(self.source.num_objectives(), &mut self.weight_rng);
        let (designs, g_cache) = self.generator.generate(&z)?;

        let (d_out, d_cache) = self.d_forward(&designs)?;
        let g_adv = generator_adversarial_loss(&d_out);
        let mut out_grad = Matrix::zeros(n, 1);
        for (g, a) in out_grad.data.iter_mut().zip(&d_out) {
            *g = -1.0 / (n as f64 * clamp_d(*a));
        }
        let (_, adv_input_grad) = nn::backward(
            &self.discriminator.spec,
            &self.discriminator.params,
            &d_cache,
            &out_grad,
        )?;
        let mut design_grads = adv_input_grad.to_rows();

        let logging = step.is_multiple_of(self.config.log_interval) || step == self.config.steps;
        let mut pad = None;
        if self.config.pad_gradient || logging {
            let p = batch_pad(&designs, self.source, &weights, &self.config.similarity, &self.config.dpp)
                .map_err(|e| at_step(e, step))?;
            if !p.loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, what: "pad_loss" });
            }
            pad = Some(p);
        }
        if self.config.pad_gradient {
            let p = pad.as_ref().unwrap();
            let gamma1 = self.config.dpp.gamma1;
            for (g, pg) in design_grads.iter_mut().zip(&p.design_grads) {
                for (a, b) in g.iter_mut().zip(pg) {
                    *a += gamma1 * b;
                }
            }
        }
        if !g_adv.is_finite() {
            return Err(Error::NonFiniteLoss { step, what: "g_adv_loss" });
        }
        let (g_grads, _) = nn::backward(
            &self.generator.spec,
            &self.generator.params,
            &g_cache,
            &self.generator.to_output_grad(&design_grads),
        )?;
        if g_grads.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                what: "generator gradient",
            });
        }
        nn::adam_step(&mut self.generator.params.values, &g_grads, &mut self.generator.optimizer)?;

        if logging {
            let p = pad.unwrap();
            let k = self.source.num_objectives();
            let mean_quality = (0..k)
                .map(|j| p.performances.iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let batch_diversity = evalmetrics::diversity_score(&designs, &self.config.similarity)?;
            self.log.records.push(LogRecord {
                step,
                d_loss,
                g_adv_loss: g_adv,
                pad_loss: p.loss,
                mean_quality,
                batch_diversity,
            });
        }
        self.step = step;
        Ok(())
    }

    fn d_forward(&self, designs: &[Vec<f64>]) -> Result<(Vec<f64>, nn::ForwardCache)> {
        let (out, cache) = nn::forward(&self.discriminator.spec, &self.discriminator.params, &Matrix::from_rows(designs)?)?;
        Ok((out.data, cache))
    }

    fn discriminator_update(&mut self, step: usize) -> Result<f64> {
        let n = self.config.batch_size;
        let real: Vec<Vec<f64>> = (0..n)
            .map(|_| self.data[self.rng.random_range(0..self.data.len())].clone())
            .collect();
        let z = sample_latents(n, self.generator.latent_dim(), &mut self.rng);
        let (fake, _) = self.generator.generate(&z)?;

        let (d_real, real_cache) = self.d_forward(&real)?;
        let (d_fake, fake_cache) = self.d_forward(&fake)?;
        let loss = discriminator_loss(&d_real, &d_fake);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, what: "d_loss" });
        }
        let inv_n = 1.0 / n as f64;
        let mut real_grad = Matrix::zeros(n, 1);
        for (g, a) in real_grad.data.iter_mut().zip(&d_real) {
            *g = -inv_n / clamp_d(*a);
        }
        let mut fake_grad = Matrix::zeros(n, 1);
        for (g, a) in fake_grad.data.iter_mut().zip(&d_fake) {
            *g = inv_n / (1.0 - clamp_d(*a));
        }
        let spec = &self.discriminator.spec;
        let params = &self.discriminator.params;
        let (mut grads, _) = nn::backward(spec, params, &real_cache, &real_grad)?;
        let (fake_grads, _) = nn::backward(spec, params, &fake_cache, &fake_grad)?;
        grads.iter_mut().zip(&fake_grads).for_each(|(a, b)| *a += b);
        if grads.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                what: "discriminator gradient",
            });
        }
        nn::adam_step(&mut self.discriminator.params.values, &grads, &mut self.discriminator.optimizer)?;
        Ok(loss)
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::DegenerateBatch => Error::DegenerateBatchAtStep { step },
        other => other,
    }
}

pub fn train(
    config: &TrainConfig,
    data: &[Vec<f64>],
    source: &QualitySource,
    domain: &DomainBox,
) -> Result<TrainOutcome> {
    Trainer::new(config.clone(), data, source, domain)?.run()
}
