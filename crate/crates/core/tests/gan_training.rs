mod common;

use padgan::datasynth::{generate_dataset, DatasetSpec, Mode};
use padgan::dpp::DppHyperparams;
use padgan::gan::{TrainConfig, Trainer};
use padgan::quality::{DomainBox, QualityFunctionSpec, QualitySource};

#[test]
fn generator_gradient_matches_finite_differences() {
    let worst = common::generator_fd_worst_ratio(10, 11);
    assert!(worst <= 1.0, "worst scaled error {worst}");
}

fn two_modes(seed: u64) -> Vec<Vec<f64>> {
    let mode = |x: f64| Mode {
        center: vec![x, 0.0],
        std: 0.05,
        weight: 0.5,
    };
    generate_dataset(&DatasetSpec {
        modes: vec![mode(-0.5), mode(0.5)],
        count: 1000,
        domain: DomainBox::default(),
        seed,
    })
    .unwrap()
}

fn small(steps: usize, gamma1: f64, pad_gradient: bool) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 16,
        generator_hidden: vec![16],
        discriminator_hidden: vec![16],
        log_interval: 10,
        pad_gradient,
        dpp: DppHyperparams { gamma0: 5.0, gamma1 },
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_weight_matches_disabled_pad_term() {
    let data = two_modes(1);
    let source = QualitySource::Analytic(QualityFunctionSpec::bimodal_frontier());
    let domain = DomainBox::default();
    let with = padgan::gan::train(&small(120, 0.0, true), &data, &source, &domain).unwrap();
    let without = padgan::gan::train(&small(120, 0.0, false), &data, &source, &domain).unwrap();
    assert_eq!(with.log, without.log);
    assert_eq!(with.generator.params, without.generator.params);
    assert_eq!(with.discriminator.params, without.discriminator.params);

    let mut a = Vec::new();
    let mut b = Vec::new();
    with.log.write_csv(&mut a, 2).unwrap();
    without.log.write_csv(&mut b, 2).unwrap();
    assert_eq!(a, b);

    // and a nonzero weight does change the run
    let pad = padgan::gan::train(&small(120, 0.2, true), &data, &source, &domain).unwrap();
    assert_ne!(pad.generator.params, with.generator.params);
}

/// Mann-Kendall S statistic and its normal score (no tie correction).
fn mann_kendall(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (xs[j] - xs[i]).signum();
        }
    }
    let n = n as f64;
    let var = n * (n - 1.0) * (2.0 * n + 5.0) / 18.0;
    let z = if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var.sqrt()
    } else {
        0.0
    };
    (s, z)
}

#[test]
fn pad_term_spreads_a_collapsed_generator() {
    let data = two_modes(2);
    let source = QualitySource::Analytic(QualityFunctionSpec::bimodal_frontier());
    let domain = DomainBox::default();
    let mut trainer = Trainer::new(small(600, 0.2, true), &data, &source, &domain).unwrap();

    // shrink the output layer so every latent maps to nearly the same design
    let widths = &trainer.generator.spec.layer_widths;
    let (fi, fo) = (widths[widths.len() - 2], widths[widths.len() - 1]);
    let n = trainer.generator.params.values.len();
    for v in &mut trainer.generator.params.values[n - (fi * fo + fo)..] {
        *v *= 0.01;
    }

    let outcome = trainer.run().unwrap();
    let div: Vec<f64> = outcome.log.records.iter().map(|r| r.batch_diversity).collect();
    assert_eq!(div.len(), 60);
    assert!(div.iter().all(|d| d.is_finite()));
    let (s, z) = mann_kendall(&div);
    let third = div.len() / 3;
    let early: f64 = div[..third].iter().sum::<f64>() / third as f64;
    let late: f64 = div[div.len() - third..].iter().sum::<f64>() / third as f64;
    eprintln!("Mann-Kendall S = {s}, z = {z:.2}; early mean {early:.2}, late mean {late:.2}");
    assert!(z > 1.96, "no significant upward trend in batch diversity (z = {z})");
    assert!(late > early);
}
