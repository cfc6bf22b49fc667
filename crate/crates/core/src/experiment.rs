//! Config-driven runs, parameter sweeps and their output files.
//!
//! A run config is a TOML document with flat sections:
//!
//! ```toml
//! seed = 7
//! [stream]
//! kind = "two_lines"
//! [model]
//! noise_var = 0.1
//! [method]
//! name = "vgs"
//! beta = 0.2857142857142857
//! xi0 = -0.6190392084062235
//! [output]
//! dir = "out/two_lines"
//! [eval]
//! last_n = 20
//! ```
//!
//! Any key can be overridden with a dotted path, e.g. `method.beta=0.5`.
//! `VBS_OUTPUT_DIR`, when set, replaces `output.dir`.
//!
//! Every float written to disk uses the fixed 17-significant-digit form of
//! [`fmt_f64`], so a config and seed determine the output bytes exactly.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, write_stream_csv, write_truth_csv, Stream, StreamKind, StreamSpec};
use crate::error::{Error, Result};
use crate::eval::{segmented_std, RunningMetrics, StepRecord};
use crate::gauss::GaussianNat;
use crate::learner::{MethodSpec, OnlineLearner, StepInfo};
use crate::models::{sigmoid, LinearGaussian};
use crate::search::ShyEmission;

/// Environment variable overriding `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "VBS_OUTPUT_DIR";

fn default_noise_var() -> f64 {
    1.0
}
fn default_prior_var() -> f64 {
    1.0
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("vbs-out")
}

/// Likelihood noise and isotropic base prior `N(prior_mean·1, prior_var·I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_prior_var")]
    pub prior_var: f64,
    #[serde(default)]
    pub prior_mean: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            noise_var: default_noise_var(),
            prior_var: default_prior_var(),
            prior_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write `traces.csv` with the final bit histories of the beam.
    #[serde(default)]
    pub traces: bool,
    /// Include wall time in `summary.json`. Off by default, because it is
    /// the one value that differs between otherwise identical runs.
    #[serde(default)]
    pub wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            traces: false,
            wall_time: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Also report the mean absolute error over the final `last_n` steps.
    #[serde(default)]
    pub last_n: Option<usize>,
    /// Also report the segmented standard deviation of the absolute errors
    /// with this segment length.
    #[serde(default)]
    pub segment_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub stream: StreamKind,
    #[serde(default)]
    pub model: ModelConfig,
    pub method: MethodSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_value(parse_toml(text)?)
    }

    pub fn stream_spec(&self) -> StreamSpec {
        StreamSpec::new(self.stream.clone(), self.seed)
    }

    pub fn likelihood(&self) -> Result<LinearGaussian> {
        LinearGaussian::new(self.model.noise_var)
    }

    pub fn base_prior(&self, dim: usize) -> Result<GaussianNat> {
        GaussianNat::isotropic(dim, self.model.prior_mean, self.model.prior_var)
    }

    /// Config echo for the summary file.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }
}

fn parse_toml(text: &str) -> Result<toml::Value> {
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| Error::Config(e.message().to_string()))
}

/// Reads a config file as an untyped TOML tree, ready for overrides.
pub fn load_config_value(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text)
}

/// Parses `key=value`; the value is read as a TOML literal and falls back
/// to a bare string.
pub fn parse_assignment(expr: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = expr
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{expr}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{expr}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets a dotted key, creating intermediate tables as needed.
pub fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut node = root;
    for p in parts {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{p}` is not inside a table")))?;
        node = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}`: parent is not a table")))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Loads a run config and applies overrides in order, then the output
/// directory environment override.
pub fn resolve_config(mut value: toml::Value, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    for (k, v) in overrides {
        set_dotted(&mut value, k, v.clone())?;
    }
    let mut cfg = RunConfig::from_value(value)?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.output.dir = PathBuf::from(dir);
        }
    }
    Ok(cfg)
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub method: String,
    pub steps: usize,
    pub final_mcae: f64,
    /// `None` when the learner has no predictive density.
    pub mean_log_lik: Option<f64>,
    pub tail_mae: Option<f64>,
    pub segmented_std: Option<f64>,
    /// Steps at which the learner reported a change.
    pub detected_changes: Vec<usize>,
}

/// Everything a run produces besides the per-step stream.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub traces: Option<Vec<(String, f64)>>,
    pub segments: Vec<ShyEmission>,
}

/// Predict-then-observe over a stream. Every row of a batch is predicted
/// before the batch is absorbed; `sink` receives each finished record with
/// the diagnostics of its batch. For probability targets the prediction is
/// the median of the predictive pushed through the sigmoid and errors are
/// measured on the probability scale.
pub fn drive(
    learner: &mut dyn OnlineLearner,
    stream: &Stream,
    eval: &EvalConfig,
    mut sink: impl FnMut(&StepRecord, &StepInfo) -> Result<()>,
) -> Result<RunArtifacts> {
    let mut metrics = RunningMetrics::default();
    let mut tail: VecDeque<f64> = VecDeque::new();
    let mut all_errors = Vec::new();
    let mut detected = Vec::new();
    let mut segments = Vec::new();
    let mut step = 0;
    for (b, batch) in stream.batches.iter().enumerate() {
        let first_step = step + 1;
        let mut recs = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            step += 1;
            let x = batch.row(i);
            let pred = learner.predict(&x).map_err(|e| e.at_step(step))?;
            let y = batch.targets()[i];
            let mut rec = match batch.raw_probs() {
                Some(p) => StepRecord::new(step, sigmoid(pred.point), p[i]),
                None => StepRecord::new(step, pred.point, y),
            };
            rec.log_lik = pred.log_lik(y);
            if let Some(ll) = rec.log_lik {
                if ll.is_nan() {
                    return Err(Error::Numeric("NaN predictive log-likelihood".into()).at_step(step));
                }
            }
            recs.push(rec);
        }
        let info = learner.observe(batch).map_err(|e| e.at_step(b + 1))?;
        if info.dominant_bit == Some(true) {
            detected.push(first_step);
        }
        if let Some(e) = &info.emission {
            segments.push(e.clone());
        }
        for mut rec in recs {
            rec.dominant_bit = info.dominant_bit;
            rec.beam_entropy = info.beam_entropy;
            metrics.push(&rec);
            if let Some(n) = eval.last_n {
                tail.push_back(rec.abs_error);
                if tail.len() > n {
                    tail.pop_front();
                }
            }
            if eval.segment_len.is_some() {
                all_errors.push(rec.abs_error);
            }
            sink(&rec, &info)?;
        }
    }
    let final_mcae = metrics
        .mcae()
        .ok_or_else(|| Error::Contract("stream has no observations".into()))?;
    if let Some(last) = learner.finish()? {
        segments.push(last);
    }
    let tail_mae = match eval.last_n {
        Some(0) => return Err(Error::Config("eval.last_n must be positive".into())),
        Some(_) => Some(tail.iter().sum::<f64>() / tail.len() as f64),
        None => None,
    };
    let seg_std = eval.segment_len.map(|l| segmented_std(&all_errors, l)).transpose()?;
    Ok(RunArtifacts {
        summary: RunSummary {
            method: learner.name().to_string(),
            steps: step,
            final_mcae,
            mean_log_lik: metrics.mean_log_lik(),
            tail_mae,
            segmented_std: seg_std,
            detected_changes: detected,
        },
        traces: learner.traces(),
        segments,
    })
}

/// Builds the learner and stream of `cfg` and runs them in memory,
/// returning every record.
pub fn run_in_memory(cfg: &RunConfig) -> Result<(Vec<StepRecord>, RunArtifacts)> {
    let stream = cfg.stream_spec().generate()?;
    let mut learner = build_learner(cfg, &stream)?;
    let mut records = Vec::with_capacity(stream.len());
    let art = drive(learner.as_mut(), &stream, &cfg.eval, |r, _| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, art))
}

pub fn build_learner(cfg: &RunConfig, stream: &Stream) -> Result<Box<dyn OnlineLearner>> {
    if stream.is_empty() {
        return Err(Error::Config("stream is empty".into()));
    }
    let base = cfg.base_prior(stream.dim())?;
    cfg.method.build(base, cfg.likelihood()?, cfg.output.traces)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Runs `cfg` and writes `metrics.csv`, `summary.json`, and when
/// applicable `traces.csv` and `segments.csv` into `cfg.output.dir`.
/// Metrics are flushed after every step.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stream = cfg.stream_spec().generate()?;
    let mut learner = build_learner(cfg, &stream)?;

    let metrics_path = dir.join("metrics.csv");
    let mut out = create(&metrics_path)?;
    let io = |e| Error::io(&metrics_path, e);
    writeln!(out, "step,prediction,truth,abs_error,mcae,log_lik,dominant_s,beam_entropy").map_err(io)?;
    let mut abs_sum = 0.0;
    let art = drive(learner.as_mut(), &stream, &cfg.eval, |r, _| {
        abs_sum += r.abs_error;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.prediction),
            fmt_f64(r.truth),
            fmt_f64(r.abs_error),
            fmt_f64(abs_sum / r.step as f64),
            opt_f64(r.log_lik),
            r.dominant_bit.map(|b| u8::from(b).to_string()).unwrap_or_default(),
            opt_f64(r.beam_entropy),
        )
        .and_then(|_| out.flush())
        .map_err(io)
    })?;
    drop(out);

    if cfg.output.traces {
        write_traces(&dir.join("traces.csv"), art.traces.as_deref().unwrap_or_default())?;
    }
    if !art.segments.is_empty() {
        write_segments(&dir.join("segments.csv"), &art.segments)?;
    }
    let wall = cfg.output.wall_time.then(|| started.elapsed().as_secs_f64());
    write_summary(&dir.join("summary.json"), cfg, &art.summary, wall)?;
    Ok(art.summary)
}

fn write_traces(path: &Path, traces: &[(String, f64)]) -> Result<()> {
    let mut out = create(path)?;
    let mut body = String::from("rank,trace,weight\n");
    for (i, (t, w)) in traces.iter().enumerate() {
        body.push_str(&format!("{},{},{}\n", i + 1, t, fmt_f64(*w)));
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

fn write_segments(path: &Path, segs: &[ShyEmission]) -> Result<()> {
    let d = segs[0].mean.len();
    let mut header = vec!["segment_start".to_string(), "segment_end".to_string()];
    header.extend((0..d).map(|j| format!("mean{j}")));
    header.extend((0..d).map(|j| format!("std{j}")));
    let mut body = header.join(",") + "\n";
    for s in segs {
        let mut cells = vec![s.segment_start.to_string(), s.segment_end.to_string()];
        cells.extend(s.mean.iter().map(|v| fmt_f64(*v)));
        cells.extend(s.std.iter().map(|v| fmt_f64(*v)));
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    create(path)?.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// JSON formatter that renders floats like every other output file.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

fn json_f64(v: Option<f64>) -> serde_json::Value {
    v.and_then(serde_json::Number::from_f64)
        .map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Serializes a JSON value with fixed-format floats.
pub fn to_json_string(value: &serde_json::Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn write_summary(path: &Path, cfg: &RunConfig, s: &RunSummary, wall: Option<f64>) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("method".into(), s.method.clone().into());
    map.insert("steps".into(), s.steps.into());
    map.insert("final_mcae".into(), json_f64(Some(s.final_mcae)));
    map.insert("mean_log_lik".into(), json_f64(s.mean_log_lik));
    map.insert("tail_mae".into(), json_f64(s.tail_mae));
    map.insert("segmented_std".into(), json_f64(s.segmented_std));
    map.insert("detected_changes".into(), s.detected_changes.clone().into());
    map.insert("config".into(), cfg.to_json());
    if let Some(w) = wall {
        map.insert("wall_time_s".into(), json_f64(Some(w)));
    }
    let text = to_json_string(&serde_json::Value::Object(map)) + "\n";
    create(path)?.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `stream.csv` and, for synthetic streams, `truth.csv`.
pub fn simulate(spec: &StreamSpec, dir: &Path) -> Result<Stream> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stream = spec.generate()?;
    let path = dir.join("stream.csv");
    let mut out = create(&path)?;
    write_stream_csv(&stream, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(&path, e))?;
    if let Some(truth) = &stream.truth {
        let path = dir.join("truth.csv");
        let mut out = create(&path)?;
        write_truth_csv(truth, &mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(stream)
}

/// Ordered grid of dotted keys and candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

impl Grid {
    /// Reads the `[grid]` table (`"dotted.key" = [values..]`). Keys are
    /// taken in sorted order; the last key varies fastest.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let mut axes = Vec::new();
        for (k, v) in table {
            let values = v
                .as_array()
                .ok_or_else(|| Error::Config(format!("grid key `{k}` must map to an array")))?;
            if values.is_empty() {
                return Err(Error::Config(format!("grid key `{k}` has no values")));
            }
            axes.push((k.clone(), values.clone()));
        }
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Assignments of point `i` in row-major order.
    pub fn point(&self, mut i: usize) -> Vec<(String, toml::Value)> {
        let mut out = vec![(String::new(), toml::Value::Boolean(false)); self.axes.len()];
        for (slot, (k, vals)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = (k.clone(), vals[i % vals.len()].clone());
            i /= vals.len();
        }
        out
    }
}

/// One row of a sweep summary.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub assignment: Vec<(String, toml::Value)>,
    pub outcome: std::result::Result<RunSummary, String>,
}

/// Splits a sweep file into its base run config and its `[grid]`.
pub fn split_sweep(mut value: toml::Value) -> Result<(toml::Value, Grid)> {
    let table = value
        .as_table_mut()
        .ok_or_else(|| Error::Config("sweep config must be a table".into()))?;
    let grid = match table.remove("grid") {
        Some(toml::Value::Table(t)) => Grid::from_table(&t)?,
        Some(_) => return Err(Error::Config("`grid` must be a table".into())),
        None => Grid { axes: Vec::new() },
    };
    Ok((value, grid))
}

/// Runs every grid point into `<out>/point_NNNN` and writes `sweep.csv`
/// into `out`. A failing point is recorded in its row; the others still run.
pub fn sweep(base: &toml::Value, grid: &Grid, out: &Path, parallel: bool) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let run_point = |i: usize| {
        let assignment = grid.point(i);
        let outcome = (|| {
            let mut cfg = resolve_config(base.clone(), &assignment)?;
            cfg.output.dir = out.join(format!("point_{i:04}"));
            run(&cfg)
        })()
        .map_err(|e| e.to_string());
        SweepRow {
            index: i,
            assignment,
            outcome,
        }
    };
    let rows: Vec<SweepRow> = if parallel {
        (0..grid.len()).into_par_iter().map(run_point).collect()
    } else {
        (0..grid.len()).map(run_point).collect()
    };
    write_sweep_csv(&out.join("sweep.csv"), grid, &rows)?;
    Ok(rows)
}

fn value_cell(v: &toml::Value) -> String {
    match v {
        toml::Value::Float(f) => fmt_f64(*f),
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_sweep_csv(path: &Path, grid: &Grid, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    let mut header = vec!["point".to_string()];
    header.extend(grid.axes.iter().map(|(k, _)| k.clone()));
    header.extend(
        ["status", "final_mcae", "mean_log_lik", "tail_mae", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    let csv_err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.index.to_string()];
        rec.extend(r.assignment.iter().map(|(_, v)| value_cell(v)));
        match &r.outcome {
            Ok(s) => rec.extend([
                "ok".into(),
                fmt_f64(s.final_mcae),
                opt_f64(s.mean_log_lik),
                opt_f64(s.tail_mae),
                String::new(),
            ]),
            Err(msg) => rec.extend(["error".into(), String::new(), String::new(), String::new(), msg.clone()]),
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
