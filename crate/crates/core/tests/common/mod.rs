#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small enough that every subcommand finishes in a few seconds.
pub const SMALL_CONFIG: &str = r#"{
  "seed": 3,
  "dataset": {"count": 500},
  "train": {"steps": 100, "generator_hidden": [16], "discriminator_hidden": [16]},
  "evaluation": {"pool_size": 200, "n_repetitions": 20, "subset_size": 50},
  "surrogate": {"samples": 300, "epochs": 20},
  "compare": {"seeds": [0]}
}"#;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_padgan"));
    c.env_remove("PADGAN_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn padgan")
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

/// Every regular file below `dir`, relative path and contents, sorted;
/// empty when `dir` does not exist.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    if !dir.exists() {
        return out;
    }
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

use padgan::dpp::{self, DppHyperparams, SimilarityConfig};
use padgan::gan::{self, GeneratorState};
use padgan::linalg::JITTER_LADDER;
use padgan::nn::{self, Activation, AdamConfig, Matrix, NetworkSpec};
use padgan::quality::{self, DomainBox, QualityFunctionSpec, QualitySource, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain re-implementation of a tanh network followed by the affine map to
/// `[lo, hi]`; parameters are laid out layer by layer, weights (one row of
/// `fan_in` inputs per output unit) then biases.
pub fn tanh_net_designs(widths: &[usize], params: &[f64], z: &[Vec<f64>], lo: f64, hi: f64) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| {
            let mut a = row.clone();
            let mut off = 0;
            for w in widths.windows(2) {
                let (fi, fo) = (w[0], w[1]);
                let weights = &params[off..off + fi * fo];
                let bias = &params[off + fi * fo..off + fi * fo + fo];
                off += fi * fo + fo;
                a = (0..fo)
                    .map(|j| (bias[j] + (0..fi).map(|i| a[i] * weights[j * fi + i]).sum::<f64>()).tanh())
                    .collect();
            }
            a.iter().map(|t| lo + (hi - lo) * (t + 1.0) / 2.0).collect()
        })
        .collect()
}

fn pad_of(designs: &[Vec<f64>], spec: &QualityFunctionSpec, w: &WeightVector, hp: &DppHyperparams) -> f64 {
    let q: Vec<f64> = designs
        .iter()
        .map(|x| quality::aggregate(&quality::evaluate_performance(spec, x), w))
        .collect();
    let bk = dpp::build_kernel(designs, &q, &SimilarityConfig::default(), hp).unwrap();
    dpp::pad_loss(&bk, &JITTER_LADDER).unwrap()
}

/// Compares the backpropagated `γ₁ ℒ` parameter gradient of a `[2, 4, 2]`
/// generator (batch of 4) with central differences taken through the
/// independent forward pass above. Returns the worst `|a − b| / allowed`
/// with `allowed = max(1e-4·max(|a|, |b|), 1e-8)`, so values ≤ 1 pass.
pub fn generator_fd_worst_ratio(cases: usize, seed: u64) -> f64 {
    let widths = [2, 4, 2];
    let spec = NetworkSpec::new(widths.to_vec(), Activation::Tanh, Activation::Tanh).unwrap();
    let domain = DomainBox::default();
    let objectives = QualityFunctionSpec::bimodal_frontier();
    let source = QualitySource::Analytic(objectives.clone());
    let hp = DppHyperparams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let params: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-0.8..0.8)).collect();
        let g = GeneratorState::new(spec.clone(), nn::NetworkParameters { values: params.clone() }, AdamConfig::default(), &domain)
            .unwrap();
        let z: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let w = quality::sample_weights(2, &mut rng);
        let zm = Matrix::from_rows(&z).unwrap();

        let ours = tanh_net_designs(&widths, &params, &z, domain.lo, domain.hi);
        let (theirs, _) = g.generate(&zm).unwrap();
        for (a, b) in ours.iter().flatten().zip(theirs.iter().flatten()) {
            assert!((a - b).abs() < 1e-12, "forward pass mismatch");
        }

        let (_, grads) = gan::pad_generator_gradient(&g, &zm, &source, &w, &SimilarityConfig::default(), &hp).unwrap();
        for i in 0..params.len() {
            let at = |delta: f64| {
                let mut p = params.clone();
                p[i] += delta;
                hp.gamma1 * pad_of(&tanh_net_designs(&widths, &p, &z, domain.lo, domain.hi), &objectives, &w, &hp)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let allowed = (1e-4 * grads[i].abs().max(fd.abs())).max(1e-8);
            let err = (grads[i] - fd).abs() / allowed;
            worst = worst.max(err);
        }
    }
    worst
}
