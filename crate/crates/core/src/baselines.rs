//! Comparison learners sharing the linear-Gaussian update path: Bayesian
//! online changepoint detection over run lengths, Bayesian forgetting,
//! posterior-as-prior continual learning, its point-estimate (mode)
//! counterpart, and per-batch independent learning.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::GaussianNat;
use crate::models::{log_sum_exp, LinearGaussian, PredictiveMixture, StreamBatch};

/// One run-length hypothesis.
#[derive(Debug, Clone)]
pub struct RunLength {
    /// Steps since the last changepoint; 0 means the segment began at the
    /// most recent step.
    pub length: usize,
    pub log_prob: f64,
    pub posterior: GaussianNat,
}

/// Run-length posterior with constant hazard.
#[derive(Debug, Clone)]
pub struct BocdState {
    pub runs: Vec<RunLength>,
    pub hazard: f64,
    pub max_kept: usize,
}

impl BocdState {
    pub fn new(base: GaussianNat, hazard: f64, max_kept: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&hazard) {
            return Err(Error::Domain(format!("hazard must lie in [0, 1], got {hazard}")));
        }
        if max_kept == 0 {
            return Err(Error::Domain("max_kept must be positive".into()));
        }
        Ok(Self {
            runs: vec![RunLength {
                length: 0,
                log_prob: 0.0,
                posterior: base,
            }],
            hazard,
            max_kept,
        })
    }

    /// Advances the recursion by one batch.
    ///
    /// Growth: `(1-h) π_r p(x | run r)` for every run. Change: a single new
    /// run whose mass is `h · p(x | base)` and whose posterior starts from
    /// `base`. Runs with zero mass are dropped; the rest are truncated to the
    /// `max_kept` most probable and renormalized.
    pub fn step(&self, lik: &LinearGaussian, base: &GaussianNat, batch: &StreamBatch) -> Result<Self> {
        let log_grow = (1.0 - self.hazard).ln();
        let log_cp = self.hazard.ln();
        let mut runs = Vec::with_capacity(self.runs.len() + 1);
        if log_cp > f64::NEG_INFINITY {
            let (posterior, ev) = lik.absorb(base, batch)?;
            runs.push(RunLength {
                length: 0,
                log_prob: log_cp + ev,
                posterior,
            });
        }
        if log_grow > f64::NEG_INFINITY {
            for r in &self.runs {
                let (posterior, ev) = lik.absorb(&r.posterior, batch)?;
                runs.push(RunLength {
                    length: r.length + 1,
                    log_prob: r.log_prob + log_grow + ev,
                    posterior,
                });
            }
        }
        if runs.iter().any(|r| r.log_prob.is_nan()) {
            return Err(Error::Numeric("NaN run-length mass".into()));
        }
        runs.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then(a.length.cmp(&b.length)));
        runs.truncate(self.max_kept);
        let total = log_sum_exp(&runs.iter().map(|r| r.log_prob).collect::<Vec<_>>());
        if !total.is_finite() {
            return Err(Error::Numeric(format!("run-length normalizer is {total}")));
        }
        for r in &mut runs {
            r.log_prob -= total;
        }
        runs.sort_by_key(|r| r.length);
        Ok(Self {
            runs,
            hazard: self.hazard,
            max_kept: self.max_kept,
        })
    }

    /// Most probable run length; the shorter one on ties.
    pub fn map_run_length(&self) -> usize {
        let mut best = &self.runs[0];
        for r in &self.runs[1..] {
            if r.log_prob > best.log_prob {
                best = r;
            }
        }
        best.length
    }

    /// Probability mass per run length, ascending by length.
    pub fn distribution(&self) -> Vec<(usize, f64)> {
        self.runs.iter().map(|r| (r.length, r.log_prob.exp())).collect()
    }

    /// Run-length-weighted predictive mixture.
    pub fn predict(&self, lik: &LinearGaussian, x: &DVector<f64>) -> Result<PredictiveMixture> {
        let components = self
            .runs
            .iter()
            .map(|r| Ok((r.log_prob.exp(), lik.predict(&r.posterior, x)?)))
            .collect::<Result<_>>()?;
        Ok(PredictiveMixture { components })
    }
}

/// Bayesian forgetting toward a fixed base prior.
#[derive(Debug, Clone)]
pub struct BfConfig {
    pub beta: f64,
    pub base_prior: GaussianNat,
}

impl BfConfig {
    pub fn new(beta: f64, base_prior: GaussianNat) -> Result<Self> {
        if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
            return Err(Error::Domain(format!("forgetting rate must lie in [0, 1], got {beta}")));
        }
        Ok(Self { beta, base_prior })
    }
}

/// `p(z_t) ∝ p₀(z)^{1-β} q_{t-1}(z)^β`, then a Bayes update.
pub fn bf_step(
    post_prev: &GaussianNat,
    cfg: &BfConfig,
    lik: &LinearGaussian,
    batch: &StreamBatch,
) -> Result<GaussianNat> {
    let prior = if cfg.beta == 1.0 {
        post_prev.clone()
    } else {
        post_prev.interpolate_toward(&cfg.base_prior, cfg.beta)?
    };
    lik.update(&prior, batch)
}

/// Previous posterior is the next prior; no broadening.
pub fn vcl_step(post_prev: &GaussianNat, lik: &LinearGaussian, batch: &StreamBatch) -> Result<GaussianNat> {
    lik.update(post_prev, batch)
}

/// Mode-only prediction `x*ᵀμ`.
pub fn lp_predict(post: &GaussianNat, x: &DVector<f64>) -> Result<f64> {
    post.check_dim(x.len(), "lp_predict")?;
    Ok(x.dot(post.mean()?))
}

/// Fresh fit from the base prior, discarding history.
pub fn independent_step(base: &GaussianNat, lik: &LinearGaussian, batch: &StreamBatch) -> Result<GaussianNat> {
    lik.update(base, batch)
}
