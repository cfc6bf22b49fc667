//! Synthetic stream generators and CSV ingestion.
//!
//! Generators are pure functions of their [`StreamSpec`]. Randomness comes
//! from ChaCha8 seeded with `seed`; each independent series draws from its
//! own ChaCha stream id (see [`rng_stream`]), so adding draws to one series
//! never shifts another. Normal variates use inverse-CDF sampling of a
//! 53-bit open-interval uniform.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::{logodds_encode, StreamBatch};

/// ChaCha stream ids for each independently drawn series.
pub mod streams {
    /// Change positions and per-segment parameters.
    pub const STRUCTURE: u64 = 0;
    /// Input features.
    pub const INPUTS: u64 = 1;
    /// Observation noise.
    pub const NOISE: u64 = 2;
}

/// Deterministic generator for one series of a seeded stream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval (0, 1).
pub fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

pub fn std_normal(rng: &mut impl RngCore) -> f64 {
    Normal::standard().inverse_cdf(open_uniform(rng))
}

fn default_step_n() -> usize {
    30
}
fn default_step_noise() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn default_lines_n() -> usize {
    20
}
fn default_lines_noise() -> f64 {
    0.1
}
fn default_segments() -> usize {
    5
}
fn default_segment_len() -> usize {
    100
}
fn default_dim() -> usize {
    8
}

/// Input distribution of the piecewise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// i.i.d. standard normal features.
    #[default]
    Gaussian,
    /// The single constant feature `1`, i.e. a latent-mean model.
    Constant,
}

/// Which stream to produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamKind {
    /// Noisy staircase over `n` unit-spaced points; change positions are
    /// uniform over the interior steps `5..=n-5`.
    StepMean {
        #[serde(default = "default_step_n")]
        n: usize,
        #[serde(default = "default_step_noise")]
        noise_std: f64,
        #[serde(default = "one")]
        step_size: f64,
        #[serde(default = "two")]
        n_changes: usize,
        #[serde(default)]
        start_level: f64,
    },
    /// `f₁(x) = 0.7x − 0.5` then `f₂(x) = −0.7x + 0.5`, `x ~ U(−1, 1)`,
    /// features `[x, 1]`.
    TwoLines {
        #[serde(default = "default_lines_n")]
        n_per_segment: usize,
        #[serde(default = "default_lines_noise")]
        noise_std: f64,
    },
    /// Regression weights redrawn from `N(0, weight_std²)` every
    /// `segment_len` steps.
    Piecewise {
        #[serde(default = "default_segments")]
        segments: usize,
        #[serde(default = "default_segment_len")]
        segment_len: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_step_noise")]
        noise_std: f64,
        #[serde(default = "one")]
        weight_std: f64,
        #[serde(default)]
        features: FeatureKind,
    },
    /// User-supplied file.
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    #[serde(flatten)]
    pub kind: StreamKind,
    #[serde(default)]
    pub seed: u64,
}

impl StreamSpec {
    pub fn new(kind: StreamKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn two_lines(seed: u64) -> Self {
        Self::new(
            StreamKind::TwoLines {
                n_per_segment: default_lines_n(),
                noise_std: default_lines_noise(),
            },
            seed,
        )
    }

    pub fn step_mean(seed: u64) -> Self {
        Self::new(
            StreamKind::StepMean {
                n: default_step_n(),
                noise_std: default_step_noise(),
                step_size: 1.0,
                n_changes: 2,
                start_level: 0.0,
            },
            seed,
        )
    }

    pub fn generate(&self) -> Result<Stream> {
        match &self.kind {
            StreamKind::StepMean {
                n,
                noise_std,
                step_size,
                n_changes,
                start_level,
            } => gen_step_mean(*n, *noise_std, *step_size, *n_changes, *start_level, self.seed),
            StreamKind::TwoLines {
                n_per_segment,
                noise_std,
            } => gen_two_lines(*n_per_segment, *noise_std, self.seed),
            StreamKind::Piecewise {
                segments,
                segment_len,
                dim,
                noise_std,
                weight_std,
                features,
            } => gen_piecewise(*segments, *segment_len, *dim, *noise_std, *weight_std, *features, self.seed),
            StreamKind::Csv { path, schema } => load_csv_stream(path, schema),
        }
    }
}

/// True generating parameters per step.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub param_names: Vec<String>,
    /// `params[t]` holds the parameters active at step `t + 1`.
    pub params: Vec<Vec<f64>>,
    /// `is_change[t]`: step `t + 1` starts a new segment.
    pub is_change: Vec<bool>,
}

impl GroundTruth {
    /// 1-based steps at which a new segment starts.
    pub fn change_steps(&self) -> Vec<usize> {
        self.is_change
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.then_some(i + 1))
            .collect()
    }
}

/// Batches in arrival order, plus ground truth for synthetic streams.
#[derive(Debug, Clone)]
pub struct Stream {
    pub batches: Vec<StreamBatch>,
    pub truth: Option<GroundTruth>,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.batches.first().map_or(0, StreamBatch::dim)
    }
}

fn check_positive(v: f64, what: &str) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Config(format!("{what} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

pub fn gen_step_mean(
    n: usize,
    noise_std: f64,
    step_size: f64,
    n_changes: usize,
    start_level: f64,
    seed: u64,
) -> Result<Stream> {
    check_positive(noise_std, "noise_std")?;
    if n < 11 {
        return Err(Error::Config(format!("step-mean stream needs n >= 11, got {n}")));
    }
    let interior = 5..=(n - 5);
    let span = interior.end() - interior.start() + 1;
    if n_changes > span {
        return Err(Error::Config(format!("{n_changes} changes do not fit into {span} interior steps")));
    }
    let mut structure = rng_stream(seed, streams::STRUCTURE);
    let mut noise = rng_stream(seed, streams::NOISE);
    let mut positions: Vec<usize> = sample(&mut structure, span, n_changes)
        .into_iter()
        .map(|i| interior.start() + i)
        .collect();
    positions.sort_unstable();

    let mut level = start_level;
    let mut batches = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut is_change = Vec::with_capacity(n);
    for t in 1..=n {
        let change = positions.contains(&t);
        if change {
            level += step_size;
        }
        let e = std_normal(&mut noise);
        batches.push(StreamBatch::single(&[1.0], level + noise_std * e)?);
        params.push(vec![level]);
        is_change.push(change);
    }
    Ok(Stream {
        batches,
        truth: Some(GroundTruth {
            param_names: vec!["mean".into()],
            params,
            is_change,
        }),
    })
}

pub fn gen_two_lines(n_per_segment: usize, noise_std: f64, seed: u64) -> Result<Stream> {
    check_positive(noise_std, "noise_std")?;
    let mut inputs = rng_stream(seed, streams::INPUTS);
    let mut noise = rng_stream(seed, streams::NOISE);
    let n = 2 * n_per_segment;
    let mut batches = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut is_change = Vec::with_capacity(n);
    for i in 0..n {
        let (slope, intercept) = if i < n_per_segment { (0.7, -0.5) } else { (-0.7, 0.5) };
        let x = 2.0 * open_uniform(&mut inputs) - 1.0;
        let y = slope * x + intercept + noise_std * std_normal(&mut noise);
        batches.push(StreamBatch::single(&[x, 1.0], y)?);
        params.push(vec![slope, intercept]);
        is_change.push(i == n_per_segment);
    }
    Ok(Stream {
        batches,
        truth: Some(GroundTruth {
            param_names: vec!["slope".into(), "intercept".into()],
            params,
            is_change,
        }),
    })
}

pub fn gen_piecewise(
    segments: usize,
    segment_len: usize,
    dim: usize,
    noise_std: f64,
    weight_std: f64,
    features: FeatureKind,
    seed: u64,
) -> Result<Stream> {
    check_positive(noise_std, "noise_std")?;
    check_positive(weight_std, "weight_std")?;
    if segments == 0 || segment_len == 0 || dim == 0 {
        return Err(Error::Config("piecewise stream needs segments, segment_len and dim > 0".into()));
    }
    if features == FeatureKind::Constant && dim != 1 {
        return Err(Error::Config("constant features require dim = 1".into()));
    }
    let mut structure = rng_stream(seed, streams::STRUCTURE);
    let mut inputs = rng_stream(seed, streams::INPUTS);
    let mut noise = rng_stream(seed, streams::NOISE);
    let n = segments * segment_len;
    let mut batches = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut is_change = Vec::with_capacity(n);
    let mut w = vec![0.0; dim];
    for t in 0..n {
        let change = t % segment_len == 0;
        if change {
            w.iter_mut().for_each(|v| *v = weight_std * std_normal(&mut structure));
        }
        let x: Vec<f64> = match features {
            FeatureKind::Gaussian => (0..dim).map(|_| std_normal(&mut inputs)).collect(),
            FeatureKind::Constant => vec![1.0],
        };
        let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise_std * std_normal(&mut noise);
        batches.push(StreamBatch::single(&x, y)?);
        params.push(w.clone());
        is_change.push(change && t > 0);
    }
    Ok(Stream {
        batches,
        truth: Some(GroundTruth {
            param_names: (0..dim).map(|j| format!("w{j}")).collect(),
            params,
            is_change,
        }),
    })
}

/// Finite log-odds substitutes for probabilities 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOddsFill {
    pub lo: f64,
    pub hi: f64,
}

/// Which columns form a regression stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub target: String,
    /// Treat the target as a probability and regress its log-odds.
    #[serde(default)]
    pub probability_target: Option<LogOddsFill>,
    /// Standardize each feature with mean and sample std of the first
    /// `n` rows.
    #[serde(default)]
    pub standardize_prefix: Option<usize>,
    /// Append a constant `1` feature after standardization.
    #[serde(default)]
    pub intercept: bool,
}

pub fn load_csv_stream(path: &Path, schema: &CsvSchema) -> Result<Stream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_reader(file, schema)
}

/// Parses a headered CSV into single-row batches in file order. Row
/// indices in errors count data rows from 1.
pub fn load_csv_reader(reader: impl Read, schema: &CsvSchema) -> Result<Stream> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingest { row: 0, msg: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Ingest {
                row: 0,
                msg: format!("missing column `{name}`"),
            })
    };
    let feature_cols = schema.features.iter().map(|f| col(f)).collect::<Result<Vec<_>>>()?;
    if feature_cols.is_empty() {
        return Err(Error::Config("schema lists no feature columns".into()));
    }
    let target_col = col(&schema.target)?;

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Ingest { row, msg: e.to_string() })?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Ingest {
                row,
                msg: format!("non-numeric cell `{raw}` in column `{}`", &headers[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row,
                    msg: format!("non-finite value in column `{}`", &headers[c]),
                });
            }
            Ok(v)
        };
        xs.push(feature_cols.iter().map(|&c| cell(c)).collect::<Result<_>>()?);
        ys.push(cell(target_col)?);
    }
    if xs.is_empty() {
        return Err(Error::Ingest { row: 0, msg: "file has no data rows".into() });
    }

    if let Some(prefix) = schema.standardize_prefix {
        if prefix < 2 || prefix > xs.len() {
            return Err(Error::Config(format!(
                "standardization prefix {prefix} must lie in [2, {}]",
                xs.len()
            )));
        }
        standardize(&mut xs, prefix);
    }

    let mut batches = Vec::with_capacity(xs.len());
    for (i, (mut x, y)) in xs.into_iter().zip(ys).enumerate() {
        if schema.intercept {
            x.push(1.0);
        }
        let batch = match schema.probability_target {
            Some(fill) => {
                let z = logodds_encode(y, fill.lo, fill.hi).map_err(|e| Error::Ingest {
                    row: i + 1,
                    msg: e.to_string(),
                })?;
                StreamBatch::new(
                    DMatrix::from_row_slice(1, x.len(), &x),
                    DVector::from_element(1, z),
                    Some(DVector::from_element(1, y)),
                )?
            }
            None => StreamBatch::single(&x, y)?,
        };
        batches.push(batch);
    }
    Ok(Stream { batches, truth: None })
}

fn standardize(xs: &mut [Vec<f64>], prefix: usize) {
    let d = xs[0].len();
    let n = prefix as f64;
    for j in 0..d {
        let mean = xs[..prefix].iter().map(|r| r[j]).sum::<f64>() / n;
        let var = xs[..prefix].iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in xs.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
}

/// Writes `step, x0.., y` rows.
pub fn write_stream_csv(stream: &Stream, mut out: impl Write) -> std::io::Result<()> {
    let d = stream.dim();
    let mut header = vec!["step".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.push("y".into());
    writeln!(out, "{}", header.join(","))?;
    let mut step = 0;
    for b in &stream.batches {
        for i in 0..b.len() {
            step += 1;
            let mut cells = vec![step.to_string()];
            cells.extend(b.features().row(i).iter().map(|v| fmt_f64(*v)));
            cells.push(fmt_f64(b.targets()[i]));
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

/// Writes the ground-truth sidecar: `step, <params>.., is_change`.
pub fn write_truth_csv(truth: &GroundTruth, mut out: impl Write) -> std::io::Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend(truth.param_names.iter().cloned());
    header.push("is_change".into());
    writeln!(out, "{}", header.join(","))?;
    for (t, (p, c)) in truth.params.iter().zip(&truth.is_change).enumerate() {
        let mut cells = vec![(t + 1).to_string()];
        cells.extend(p.iter().map(|v| fmt_f64(*v)));
        cells.push(u8::from(*c).to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Fixed 17-significant-digit rendering used in every output file.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
