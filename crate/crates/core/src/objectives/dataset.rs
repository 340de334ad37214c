use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Row-major feature and target matrices with matching row counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    n_targets: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, targets: Vec<f64>, n_features: usize, n_targets: usize) -> Result<Self> {
        if n_features == 0 || n_targets == 0 {
            return Err(Error::config("datasets need at least one feature and one target column"));
        }
        if !features.len().is_multiple_of(n_features) || !targets.len().is_multiple_of(n_targets) {
            return Err(Error::config("matrix storage is not a whole number of rows"));
        }
        let rows = features.len() / n_features;
        if targets.len() / n_targets != rows {
            return Err(Error::LengthMismatch {
                left: rows,
                right: targets.len() / n_targets,
            });
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("dataset entries must be finite".into()));
        }
        Ok(Dataset {
            features,
            targets,
            n_features,
            n_targets,
        })
    }

    pub fn rows(&self) -> usize {
        self.features.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn feature_row(&self, row: usize) -> &[f64] {
        &self.features[row * self.n_features..(row + 1) * self.n_features]
    }

    pub fn target_row(&self, row: usize) -> &[f64] {
        &self.targets[row * self.n_targets..(row + 1) * self.n_targets]
    }

    /// Split off the trailing `fraction` of rows, preserving order.
    pub fn split_tail(&self, fraction: f64) -> (Dataset, Dataset) {
        let rows = self.rows();
        let tail = ((rows as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let head = rows - tail;
        let part = |a: usize, b: usize| Dataset {
            features: self.features[a * self.n_features..b * self.n_features].to_vec(),
            targets: self.targets[a * self.n_targets..b * self.n_targets].to_vec(),
            n_features: self.n_features,
            n_targets: self.n_targets,
        };
        (part(0, head), part(head, rows))
    }
}

/// Reads a comma-separated file with features first, then targets, per row.
pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    n_features: usize,
    n_targets: usize,
    header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_dataset(&text, n_features, n_targets, header)
}

pub(crate) fn parse_csv_dataset(text: &str, n_features: usize, n_targets: usize, header: bool) -> Result<Dataset> {
    let width = n_features + n_targets;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let lines = text.lines().enumerate().skip(usize::from(header));
    for (line_no, line) in lines {
        let row = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                row,
                column: fields.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("'{}' is not a number", field.trim()),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("non-finite value {value}"),
                });
            }
            if col < n_features {
                features.push(value);
            } else {
                targets.push(value);
            }
        }
    }
    Dataset::new(features, targets, n_features, n_targets)
}

/// Seeded stand-in for a robot-dynamics regression set: Gaussian inputs
/// pushed through a fixed random tanh teacher network plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub n_features: usize,
    pub n_targets: usize,
    pub teacher_hidden: usize,
    pub target_scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 2048,
            n_features: 21,
            n_targets: 7,
            teacher_hidden: 32,
            target_scale: 4.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

pub fn synthetic_regression(spec: &SyntheticSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let (nf, nh, nt) = (spec.n_features, spec.teacher_hidden, spec.n_targets);

    let w1: Vec<f64> = (0..nh * nf).map(|_| normal() / (nf as f64).sqrt()).collect();
    let b1: Vec<f64> = (0..nh).map(|_| 0.5 * normal()).collect();
    let w2: Vec<f64> = (0..nt * nh).map(|_| normal() / (nh as f64).sqrt()).collect();

    let mut features = Vec::with_capacity(spec.rows * nf);
    let mut targets = Vec::with_capacity(spec.rows * nt);
    let mut hidden = vec![0.0; nh];
    for _ in 0..spec.rows {
        let x: Vec<f64> = (0..nf).map(|_| normal()).collect();
        for (j, h) in hidden.iter_mut().enumerate() {
            let z: f64 = w1[j * nf..(j + 1) * nf].iter().zip(&x).map(|(w, v)| w * v).sum();
            *h = (z + b1[j]).tanh();
        }
        for k in 0..nt {
            let y: f64 = w2[k * nh..(k + 1) * nh].iter().zip(&hidden).map(|(w, h)| w * h).sum();
            targets.push(spec.target_scale * y + spec.noise * normal());
        }
        features.extend_from_slice(&x);
    }
    Dataset::new(features, targets, nf, nt)
}
