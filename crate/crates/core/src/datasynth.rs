//! Synthetic training designs drawn from a Gaussian mixture inside the
//! design domain, and their CSV form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quality::DomainBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub center: Vec<f64>,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub modes: Vec<Mode>,
    pub count: usize,
    pub domain: DomainBox,
    pub seed: u64,
}

impl DatasetSpec {
    /// `modes` equal-weight modes spaced evenly on a circle about the origin.
    pub fn ring(modes: usize, radius: f64, std: f64, count: usize, seed: u64) -> Self {
        let modes = (0..modes)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
                Mode {
                    center: vec![radius * angle.cos(), radius * angle.sin()],
                    std,
                    weight: 1.0 / modes as f64,
                }
            })
            .collect();
        Self {
            modes,
            count,
            domain: DomainBox::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.modes.is_empty() {
            return Err(Error::Config("dataset needs at least one mode".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.std > 0.0 && m.std.is_finite()) || !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::Config(format!("mode {i}: std and weight must be > 0")));
            }
            if !self.domain.contains(&m.center) {
                return Err(Error::Config(format!("mode {i}: center {:?} outside the domain", m.center)));
            }
        }
        Ok(())
    }

    /// Mixture weights scaled to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.modes.iter().map(|m| m.weight).sum();
        self.modes.iter().map(|m| m.weight / total).collect()
    }
}

impl Default for DatasetSpec {
    /// Six modes on a ring of radius 0.4, σ = 0.05, 10 000 points.
    fn default() -> Self {
        Self::ring(6, 0.4, 0.05, 10_000, 0)
    }
}

/// Pick a mode by weight, add isotropic noise, redraw the noise until the
/// point lands inside the domain box.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok(generate_with_modes(spec).into_iter().map(|(_, x)| x).collect())
}

/// Like [`generate_dataset`] but also returns the mode each point came from.
pub fn generate_with_modes(spec: &DatasetSpec) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let picker = WeightedIndex::new(spec.normalized_weights()).expect("validated weights");
    (0..spec.count)
        .map(|_| {
            let k = picker.sample(&mut rng);
            let mode = &spec.modes[k];
            loop {
                let x: Vec<f64> = mode
                    .center
                    .iter()
                    .map(|c| c + mode.std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if spec.domain.contains(&x) {
                    break (k, x);
                }
            }
        })
        .collect()
}

/// Header `x0,x1,...`; values printed in shortest round-trip form.
pub fn write_designs<W: Write>(writer: W, dim: usize, designs: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..dim).map(|i| format!("x{i}")))?;
    for x in designs {
        if x.len() != dim {
            return Err(Error::ShapeMismatch {
                context: "dataset row width",
                expected: dim,
                actual: x.len(),
            });
        }
        w.write_record(x.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, dim: usize, designs: &[Vec<f64>]) -> Result<()> {
    write_designs(BufWriter::new(File::create(path)?), dim, designs)
}

/// Returns the dimension (from the header) and the rows.
pub fn read_designs<R: Read>(reader: R) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    for (i, h) in headers.iter().enumerate() {
        if h.trim() != format!("x{i}") {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!("expected header column x{i}, found {h:?}"),
            });
        }
    }
    let dim = headers.len();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::MalformedRow {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::MalformedRow {
                    line,
                    message: format!("not a finite number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((dim, rows))
}

pub fn load_dataset(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    read_designs(BufReader::new(File::open(path)?))
}
