//! A uniform predict-then-observe interface over every method, so the
//! experiment driver, sweeps and comparisons treat them interchangeably.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::{bf_step, independent_step, lp_predict, vcl_step, BfConfig, BocdState};
use crate::error::{Error, Result};
use crate::gauss::{Broadening, GaussianNat};
use crate::models::{LinearGaussian, PredictiveMixture, StreamBatch};
use crate::search::{BeamSearch, PredictionMode, ScoreKind, SearchConfig, ShyEmission, ShyGreedy, WeightRule};

/// Predictive output for one input row.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub point: f64,
    /// `None` for point-estimate learners, which have no predictive density.
    pub density: Option<PredictiveMixture>,
}

impl Prediction {
    pub fn log_lik(&self, y: f64) -> Option<f64> {
        self.density.as_ref().map(|d| d.log_pdf(y))
    }
}

/// Diagnostics produced while absorbing a batch.
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    /// Latest change bit of the dominant hypothesis (or a detection flag
    /// for run-length methods).
    pub dominant_bit: Option<bool>,
    pub beam_entropy: Option<f64>,
    /// Change probability of the first (dominant-parent) expansion.
    pub change_prob: Option<f64>,
    pub map_run_length: Option<usize>,
    /// Segment closed at this step by a shy learner.
    pub emission: Option<ShyEmission>,
}

pub trait OnlineLearner: Send {
    fn name(&self) -> &'static str;
    /// Predicts a target for input `x` from everything observed so far.
    fn predict(&self, x: &DVector<f64>) -> Result<Prediction>;
    fn observe(&mut self, batch: &StreamBatch) -> Result<StepInfo>;
    /// Final bit histories and normalized weights, for learners that keep
    /// them.
    fn traces(&self) -> Option<Vec<(String, f64)>> {
        None
    }
    /// Closes any open segment; only shy learners emit one.
    fn finish(&self) -> Result<Option<ShyEmission>> {
        Ok(None)
    }
}

/// Broadening applied in the change branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BroadenSpec {
    Temper { beta: f64 },
    Additive { diffusion: f64, #[serde(default = "one")] dt: f64 },
    /// Interpolate toward the model's base prior.
    Forget { beta: f64 },
}

fn one() -> f64 {
    1.0
}
fn beam_default() -> usize {
    1
}
fn max_kept_default() -> usize {
    6
}
fn bocd_threshold_default() -> usize {
    50
}

impl BroadenSpec {
    pub fn build(&self, base: &GaussianNat) -> Broadening {
        match *self {
            Self::Temper { beta } => Broadening::Temper { beta },
            Self::Additive { diffusion, dt } => Broadening::Additive { diffusion, dt },
            Self::Forget { beta } => Broadening::Forget {
                beta,
                base: Arc::new(base.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSpec {
    #[default]
    Dominant,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    #[default]
    Joint,
    Conditional,
}

/// Method selection with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Vbs {
        broadening: BroadenSpec,
        xi0: f64,
        #[serde(default = "beam_default")]
        beam_size: usize,
        #[serde(default)]
        diversify: bool,
        #[serde(default = "one")]
        celbo_temp: f64,
        #[serde(default)]
        prediction: PredictionSpec,
        #[serde(default)]
        weight_rule: WeightSpec,
        /// Score branches through the variational bound instead of the
        /// closed-form evidence.
        #[serde(default)]
        celbo_score: bool,
    },
    /// Greedy search with tempering, i.e. a beam of one.
    Vgs {
        beta: f64,
        xi0: f64,
        #[serde(default = "one")]
        celbo_temp: f64,
    },
    ShyVgs {
        beta: f64,
        xi0: f64,
        #[serde(default = "one")]
        celbo_temp: f64,
    },
    Bocd {
        hazard: f64,
        #[serde(default = "max_kept_default")]
        max_kept: usize,
        /// A change is reported when the most probable run length stops
        /// growing and is at most this long.
        #[serde(default = "bocd_threshold_default")]
        change_threshold: usize,
    },
    Bf {
        beta: f64,
    },
    Vcl,
    Lp,
    Independent,
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Vbs { .. } => "vbs",
            Self::Vgs { .. } => "vgs",
            Self::ShyVgs { .. } => "shy_vgs",
            Self::Bocd { .. } => "bocd",
            Self::Bf { .. } => "bf",
            Self::Vcl => "vcl",
            Self::Lp => "lp",
            Self::Independent => "independent",
        }
    }

    /// Search configuration for the search-based methods.
    pub fn search_config(&self, base: &GaussianNat) -> Option<SearchConfig> {
        match self {
            Self::Vbs {
                broadening,
                xi0,
                beam_size,
                diversify,
                celbo_temp,
                prediction,
                weight_rule,
                celbo_score,
            } => {
                let mut cfg = SearchConfig::new(broadening.build(base), *xi0, *beam_size)
                    .with_diversify(*diversify)
                    .with_temperature(*celbo_temp)
                    .with_prediction(match prediction {
                        PredictionSpec::Dominant => PredictionMode::Dominant,
                        PredictionSpec::Average => PredictionMode::Average,
                    })
                    .with_weight_rule(match weight_rule {
                        WeightSpec::Joint => WeightRule::Joint,
                        WeightSpec::Conditional => WeightRule::Conditional,
                    });
                if *celbo_score {
                    cfg.score = ScoreKind::Celbo;
                }
                Some(cfg)
            }
            Self::Vgs { beta, xi0, celbo_temp } | Self::ShyVgs { beta, xi0, celbo_temp } => {
                Some(SearchConfig::greedy(*beta, *xi0).with_temperature(*celbo_temp))
            }
            _ => None,
        }
    }

    /// Checks hyperparameter combinations before any data is touched.
    pub fn validate(&self, base: &GaussianNat) -> Result<()> {
        if let Some(cfg) = self.search_config(base) {
            return cfg.validate();
        }
        match self {
            Self::Bocd { hazard, max_kept, .. } => {
                BocdState::new(base.clone(), *hazard, *max_kept)?;
            }
            Self::Bf { beta } => {
                BfConfig::new(*beta, base.clone())?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Instantiates the learner. `record_traces` keeps full bit histories
    /// for search methods and is ignored by the others.
    pub fn build(&self, base: GaussianNat, lik: LinearGaussian, record_traces: bool) -> Result<Box<dyn OnlineLearner>> {
        self.validate(&base)?;
        Ok(match self {
            Self::Vbs { .. } | Self::Vgs { .. } => {
                let cfg = self.search_config(&base).expect("search method").with_traces(record_traces);
                Box::new(BeamLearner {
                    search: BeamSearch::new(base, lik, cfg)?,
                })
            }
            Self::ShyVgs { .. } => {
                let cfg = self.search_config(&base).expect("search method").with_traces(record_traces);
                let shy = ShyGreedy::new(base, lik, cfg)?;
                Box::new(ShyLearner { shy, lik })
            }
            Self::Bocd {
                hazard,
                max_kept,
                change_threshold,
            } => Box::new(BocdLearner {
                state: BocdState::new(base.clone(), *hazard, *max_kept)?,
                base,
                lik,
                change_threshold: *change_threshold,
                prev_map: None,
            }),
            Self::Bf { beta } => Box::new(PosteriorLearner {
                kind: PosteriorKind::Bf(BfConfig::new(*beta, base.clone())?),
                post: base.clone(),
                base,
                lik,
            }),
            Self::Vcl => Box::new(PosteriorLearner {
                kind: PosteriorKind::Vcl,
                post: base.clone(),
                base,
                lik,
            }),
            Self::Lp => Box::new(PosteriorLearner {
                kind: PosteriorKind::Lp,
                post: base.clone(),
                base,
                lik,
            }),
            Self::Independent => Box::new(PosteriorLearner {
                kind: PosteriorKind::Independent,
                post: base.clone(),
                base,
                lik,
            }),
        })
    }
}

struct BeamLearner {
    search: BeamSearch,
}

impl OnlineLearner for BeamLearner {
    fn name(&self) -> &'static str {
        if self.search.config().beam_size == 1 {
            "vgs"
        } else {
            "vbs"
        }
    }

    fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        Ok(Prediction {
            point: self.search.point_predict(x)?,
            density: Some(self.search.predict(x)?),
        })
    }

    fn observe(&mut self, batch: &StreamBatch) -> Result<StepInfo> {
        let report = self.search.observe(batch)?;
        Ok(StepInfo {
            dominant_bit: Some(report.dominant_bit),
            beam_entropy: Some(self.search.beam().weight_entropy()),
            change_prob: report.change_probs.first().copied(),
            ..StepInfo::default()
        })
    }

    fn traces(&self) -> Option<Vec<(String, f64)>> {
        let beam = self.search.beam();
        beam.hypotheses
            .iter()
            .map(|h| Some((h.trace_string()?, h.weight())))
            .collect()
    }
}

struct ShyLearner {
    shy: ShyGreedy,
    lik: LinearGaussian,
}

impl OnlineLearner for ShyLearner {
    fn name(&self) -> &'static str {
        "shy_vgs"
    }

    fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let p = self.lik.predict(&self.shy.current().posterior, x)?;
        Ok(Prediction {
            point: p.mean,
            density: Some(PredictiveMixture::single(p)),
        })
    }

    fn observe(&mut self, batch: &StreamBatch) -> Result<StepInfo> {
        let (emission, m) = self.shy.observe(batch)?;
        Ok(StepInfo {
            dominant_bit: self.shy.current().last_bit,
            change_prob: Some(m),
            emission,
            ..StepInfo::default()
        })
    }

    fn finish(&self) -> Result<Option<ShyEmission>> {
        self.shy.finish().map(Some)
    }
}

struct BocdLearner {
    state: BocdState,
    base: GaussianNat,
    lik: LinearGaussian,
    change_threshold: usize,
    prev_map: Option<usize>,
}

impl OnlineLearner for BocdLearner {
    fn name(&self) -> &'static str {
        "bocd"
    }

    fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        let mix = self.state.predict(&self.lik, x)?;
        Ok(Prediction {
            point: mix.mean(),
            density: Some(mix),
        })
    }

    fn observe(&mut self, batch: &StreamBatch) -> Result<StepInfo> {
        self.state = self.state.step(&self.lik, &self.base, batch)?;
        let map = self.state.map_run_length();
        let detected = self
            .prev_map
            .is_some_and(|prev| map <= prev && map <= self.change_threshold);
        self.prev_map = Some(map);
        let entropy = 0.0 - self
            .state
            .runs
            .iter()
            .map(|r| if r.log_prob.is_finite() { r.log_prob.exp() * r.log_prob } else { 0.0 })
            .sum::<f64>();
        Ok(StepInfo {
            dominant_bit: Some(detected),
            beam_entropy: Some(entropy),
            map_run_length: Some(map),
            ..StepInfo::default()
        })
    }
}

enum PosteriorKind {
    Bf(BfConfig),
    Vcl,
    Lp,
    Independent,
}

/// Learners carrying a single Gaussian posterior.
struct PosteriorLearner {
    kind: PosteriorKind,
    post: GaussianNat,
    base: GaussianNat,
    lik: LinearGaussian,
}

impl OnlineLearner for PosteriorLearner {
    fn name(&self) -> &'static str {
        match self.kind {
            PosteriorKind::Bf(_) => "bf",
            PosteriorKind::Vcl => "vcl",
            PosteriorKind::Lp => "lp",
            PosteriorKind::Independent => "independent",
        }
    }

    fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        if let PosteriorKind::Lp = self.kind {
            return Ok(Prediction {
                point: lp_predict(&self.post, x)?,
                density: None,
            });
        }
        let p = self.lik.predict(&self.post, x)?;
        Ok(Prediction {
            point: p.mean,
            density: Some(PredictiveMixture::single(p)),
        })
    }

    fn observe(&mut self, batch: &StreamBatch) -> Result<StepInfo> {
        self.post = match &self.kind {
            PosteriorKind::Bf(cfg) => bf_step(&self.post, cfg, &self.lik, batch)?,
            PosteriorKind::Vcl | PosteriorKind::Lp => vcl_step(&self.post, &self.lik, batch)?,
            PosteriorKind::Independent => independent_step(&self.base, &self.lik, batch)?,
        };
        if !self.post.linear().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("posterior became non-finite".into()));
        }
        Ok(StepInfo::default())
    }
}
