//! Search over change-point histories.
//!
//! Every hypothesis is a binary history `s_{1:t}` with a posterior over the
//! model weights and a log-weight. One step branches each hypothesis into a
//! "no change" child (prior = previous posterior) and a "change" child
//! (prior = broadened previous posterior), scores both by their evidence,
//! and truncates the `2K` children back to `K`.

use bitvec::vec::BitVec;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{Broadening, GaussianNat};
use crate::models::{log_sigmoid, log_sum_exp, sigmoid, LinearGaussian, PredictiveMixture, StreamBatch};

/// How a child's unnormalized log-weight is formed from its parent's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightRule {
    /// `log w_parent + log p(s_t) + score_s / T`. With `T = 1` and exact
    /// evidence this is the exact posterior `p(s_{1:t} | x_{1:t})`.
    #[default]
    Joint,
    /// `log w_parent + log q(s_t | s_{<t})`: only the within-family split,
    /// dropping the family's own evidence.
    Conditional,
}

/// Per-branch score entering the change posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreKind {
    #[default]
    Evidence,
    /// CELBO at the fitted branch posterior. Identical to the evidence for
    /// the conjugate model, but computed through the bound.
    Celbo,
}

/// Which point prediction the beam reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionMode {
    #[default]
    Dominant,
    Average,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Prior log-odds `log p(s=1) / p(s=0)`.
    pub xi0: f64,
    /// Temperature `T ≥ 1` dividing the score difference.
    pub celbo_temp: f64,
    pub beam_size: usize,
    pub broadening: Broadening,
    /// Family-preserving truncation; requires `beam_size % 3 == 0`.
    pub diversify: bool,
    pub weight_rule: WeightRule,
    pub score: ScoreKind,
    pub prediction: PredictionMode,
    /// Keep the full bit history of each hypothesis.
    pub record_traces: bool,
}

impl SearchConfig {
    pub fn new(broadening: Broadening, xi0: f64, beam_size: usize) -> Self {
        Self {
            xi0,
            celbo_temp: 1.0,
            beam_size,
            broadening,
            diversify: false,
            weight_rule: WeightRule::default(),
            score: ScoreKind::default(),
            prediction: PredictionMode::default(),
            record_traces: false,
        }
    }

    /// Greedy search with multiplicative broadening.
    pub fn greedy(beta: f64, xi0: f64) -> Self {
        Self::new(Broadening::Temper { beta }, xi0, 1)
    }

    pub fn with_diversify(mut self, on: bool) -> Self {
        self.diversify = on;
        self
    }

    pub fn with_traces(mut self, on: bool) -> Self {
        self.record_traces = on;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.celbo_temp = t;
        self
    }

    pub fn with_weight_rule(mut self, rule: WeightRule) -> Self {
        self.weight_rule = rule;
        self
    }

    pub fn with_prediction(mut self, mode: PredictionMode) -> Self {
        self.prediction = mode;
        self
    }

    /// Inverse temperature of the broadening, when it has one.
    pub fn beta(&self) -> Option<f64> {
        match &self.broadening {
            Broadening::Temper { beta } | Broadening::Forget { beta, .. } => Some(*beta),
            Broadening::Additive { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.broadening.validate()?;
        if self.xi0.is_nan() {
            return Err(Error::Config("xi0 must not be NaN".into()));
        }
        if !(self.celbo_temp.is_finite() && self.celbo_temp >= 1.0) {
            return Err(Error::Config(format!("temperature must be >= 1, got {}", self.celbo_temp)));
        }
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be positive".into()));
        }
        if self.diversify && !self.beam_size.is_multiple_of(3) {
            return Err(Error::Config(format!(
                "diversified beams need a multiple of 3, got {}",
                self.beam_size
            )));
        }
        Ok(())
    }
}

/// One change-point history.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// `s_{1:t}`, present when trace recording is on.
    pub trace: Option<BitVec>,
    pub log_weight: f64,
    pub posterior: GaussianNat,
    /// Index of the parent in the previous beam.
    pub family_id: usize,
    /// Most recent decision `s_t`; `None` before the first step.
    pub last_bit: Option<bool>,
}

impl Hypothesis {
    pub fn root(prior: GaussianNat, record_traces: bool) -> Self {
        Self {
            trace: record_traces.then(BitVec::new),
            log_weight: 0.0,
            posterior: prior,
            family_id: 0,
            last_bit: None,
        }
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    fn child(&self, family_id: usize, bit: bool, posterior: GaussianNat, log_weight: f64) -> Self {
        let trace = self.trace.as_ref().map(|t| {
            let mut t = t.clone();
            t.push(bit);
            t
        });
        Self {
            trace,
            log_weight,
            posterior,
            family_id,
            last_bit: Some(bit),
        }
    }

    /// Trace rendered as `0`/`1` characters.
    pub fn trace_string(&self) -> Option<String> {
        self.trace
            .as_ref()
            .map(|t| t.iter().map(|b| if *b { '1' } else { '0' }).collect())
    }
}

/// Prior for step `t` given the previous posterior and `s_t`.
pub fn conditional_prior(post_prev: &GaussianNat, s: bool, cfg: &SearchConfig) -> Result<GaussianNat> {
    if s {
        cfg.broadening.apply(post_prev)
    } else {
        Ok(post_prev.clone())
    }
}

/// Log-odds `(score₁ − score₀)/T + ξ₀` of `q(s_t = 1)`.
pub fn change_log_odds(score0: f64, score1: f64, cfg: &SearchConfig) -> Result<f64> {
    if !score0.is_finite() || !score1.is_finite() {
        return Err(Error::Numeric(format!("non-finite branch scores ({score0}, {score1})")));
    }
    Ok((score1 - score0) / cfg.celbo_temp + cfg.xi0)
}

/// Bernoulli parameter `m` of `q(s_t | s_{<t})`.
pub fn change_posterior(score0: f64, score1: f64, cfg: &SearchConfig) -> Result<f64> {
    Ok(sigmoid(change_log_odds(score0, score1, cfg)?))
}

/// Result of branching a beam.
#[derive(Debug, Clone)]
pub struct Expansion {
    /// `2K` children ordered by parent, `s_t = 0` before `s_t = 1`.
    pub children: Vec<Hypothesis>,
    /// Change probability `m` per parent.
    pub change_probs: Vec<f64>,
}

struct Branches {
    children: [Hypothesis; 2],
    change_prob: f64,
}

fn branch(
    parent: &Hypothesis,
    family_id: usize,
    lik: &LinearGaussian,
    batch: &StreamBatch,
    cfg: &SearchConfig,
) -> Result<Branches> {
    let prior0 = &parent.posterior;
    let (post0, ev0) = lik.absorb(prior0, batch)?;
    let score0 = match cfg.score {
        ScoreKind::Evidence => ev0,
        ScoreKind::Celbo => lik.celbo(&post0, prior0, batch)?,
    };
    let (post1, score1) = if cfg.broadening.is_identity() {
        (post0.clone(), score0)
    } else {
        let prior1 = conditional_prior(prior0, true, cfg)?;
        let (post1, ev1) = lik.absorb(&prior1, batch)?;
        let score1 = match cfg.score {
            ScoreKind::Evidence => ev1,
            ScoreKind::Celbo => lik.celbo(&post1, &prior1, batch)?,
        };
        (post1, score1)
    };
    let a = change_log_odds(score0, score1, cfg)?;
    let (lw0, lw1) = match cfg.weight_rule {
        WeightRule::Conditional => (parent.log_weight + log_sigmoid(-a), parent.log_weight + log_sigmoid(a)),
        WeightRule::Joint => (
            parent.log_weight + log_sigmoid(-cfg.xi0) + score0 / cfg.celbo_temp,
            parent.log_weight + log_sigmoid(cfg.xi0) + score1 / cfg.celbo_temp,
        ),
    };
    Ok(Branches {
        children: [
            parent.child(family_id, false, post0, lw0),
            parent.child(family_id, true, post1, lw1),
        ],
        change_prob: sigmoid(a),
    })
}

/// Branches every hypothesis of `beam` on `s_t ∈ {0, 1}` and scores the
/// children against `batch`.
pub fn expand(
    beam: &Beam,
    lik: &LinearGaussian,
    batch: &StreamBatch,
    cfg: &SearchConfig,
) -> Result<Expansion> {
    let parents = &beam.hypotheses;
    let run = |(i, p): (usize, &Hypothesis)| branch(p, i, lik, batch, cfg);
    let branches: Vec<Branches> = if parents.len() >= 4 {
        parents.par_iter().enumerate().map(run).collect::<Result<_>>()?
    } else {
        parents.iter().enumerate().map(run).collect::<Result<_>>()?
    };
    let mut children = Vec::with_capacity(2 * parents.len());
    let mut change_probs = Vec::with_capacity(parents.len());
    for b in branches {
        change_probs.push(b.change_prob);
        children.extend(b.children);
    }
    Ok(Expansion {
        children,
        change_probs,
    })
}

/// Greedy step: keeps `s_t = 1` iff `m > ½` (ties go to "no change") and
/// resets the weight to one. Returns the kept hypothesis and `m`.
pub fn greedy_step(
    current: &Hypothesis,
    lik: &LinearGaussian,
    batch: &StreamBatch,
    cfg: &SearchConfig,
) -> Result<(Hypothesis, f64)> {
    let Branches {
        children: [no_change, change],
        change_prob,
    } = branch(current, 0, lik, batch, cfg)?;
    let mut kept = if change_prob > 0.5 { change } else { no_change };
    kept.log_weight = 0.0;
    Ok((kept, change_prob))
}

fn rank(children: &mut [Hypothesis]) -> Result<()> {
    if let Some(h) = children.iter().find(|h| h.log_weight.is_nan()) {
        return Err(Error::Numeric(format!("NaN log-weight in family {}", h.family_id)));
    }
    // stable: equal weights keep generation order (parent, then s_t = 0 first)
    children.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
    Ok(())
}

/// Shifts log-weights so the weights sum to one.
pub fn normalize(hyps: &mut [Hypothesis]) -> Result<()> {
    let lws: Vec<f64> = hyps.iter().map(|h| h.log_weight).collect();
    let total = log_sum_exp(&lws);
    if !total.is_finite() {
        return Err(Error::Numeric(format!("beam normalizer is {total}")));
    }
    for h in hyps {
        h.log_weight -= total;
    }
    Ok(())
}

/// Keeps the `k` heaviest children and renormalizes.
pub fn vanilla_truncate(mut children: Vec<Hypothesis>, k: usize) -> Result<Vec<Hypothesis>> {
    if children.is_empty() || k == 0 {
        return Err(Error::Contract("truncation needs children and k > 0".into()));
    }
    rank(&mut children)?;
    children.truncate(k);
    normalize(&mut children)?;
    Ok(children)
}

/// Family-preserving truncation.
///
/// Children are ranked by unnormalized log-weight and the bottom third is
/// dropped. From the survivors the best member of every family is taken
/// first, then the remaining slots are filled by rank. While the beam is
/// still growing (fewer than `2k` children) at most `n − k` are dropped.
pub fn diverse_truncate(mut children: Vec<Hypothesis>, k: usize) -> Result<Vec<Hypothesis>> {
    if children.is_empty() || k == 0 {
        return Err(Error::Contract("truncation needs children and k > 0".into()));
    }
    if !k.is_multiple_of(3) {
        return Err(Error::Contract(format!("diversified beam size must be a multiple of 3, got {k}")));
    }
    if children.len() > 2 * k {
        return Err(Error::Contract(format!(
            "{} children exceed 2k = {}",
            children.len(),
            2 * k
        )));
    }
    rank(&mut children)?;
    let n = children.len();
    if n <= k {
        normalize(&mut children)?;
        return Ok(children);
    }
    let survivors = n - (n / 3).min(n - k);
    children.truncate(survivors);

    let mut selected = vec![false; survivors];
    let mut seen_families: Vec<usize> = Vec::new();
    let mut count = 0;
    for (i, h) in children.iter().enumerate() {
        if count == k {
            break;
        }
        if !seen_families.contains(&h.family_id) {
            seen_families.push(h.family_id);
            selected[i] = true;
            count += 1;
        }
    }
    for flag in selected.iter_mut() {
        if count == k {
            break;
        }
        if !*flag {
            *flag = true;
            count += 1;
        }
    }
    let mut out: Vec<Hypothesis> = children
        .into_iter()
        .zip(selected)
        .filter_map(|(h, keep)| keep.then_some(h))
        .collect();
    normalize(&mut out)?;
    Ok(out)
}

/// Normalized set of at most `K` hypotheses after `step` observations.
#[derive(Debug, Clone)]
pub struct Beam {
    pub hypotheses: Vec<Hypothesis>,
    pub step: usize,
}

impl Beam {
    pub fn new(prior: GaussianNat, record_traces: bool) -> Self {
        Self {
            hypotheses: vec![Hypothesis::root(prior, record_traces)],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.hypotheses.iter().map(Hypothesis::weight).collect()
    }

    /// Heaviest hypothesis; the earliest on ties.
    pub fn dominant(&self) -> &Hypothesis {
        let mut best = &self.hypotheses[0];
        for h in &self.hypotheses[1..] {
            if h.log_weight > best.log_weight {
                best = h;
            }
        }
        best
    }

    /// Shannon entropy (nats) of the beam weights.
    pub fn weight_entropy(&self) -> f64 {
        // `0.0 -` rather than negation, so a single hypothesis gives +0
        0.0 - self
            .hypotheses
            .iter()
            .map(|h| {
                let w = h.weight();
                if w > 0.0 {
                    w * h.log_weight
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// Bits held in recorded traces (zero when recording is off).
    pub fn trace_bits(&self) -> usize {
        self.hypotheses
            .iter()
            .map(|h| h.trace.as_ref().map_or(0, BitVec::len))
            .sum()
    }
}

/// Per-component predictives weighted by the beam.
pub fn beam_marginal_predict(beam: &Beam, lik: &LinearGaussian, x: &DVector<f64>) -> Result<PredictiveMixture> {
    let components = beam
        .hypotheses
        .iter()
        .map(|h| Ok((h.weight(), lik.predict(&h.posterior, x)?)))
        .collect::<Result<_>>()?;
    Ok(PredictiveMixture { components })
}

/// What happened during one [`BeamSearch::observe`] call.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub change_probs: Vec<f64>,
    /// Latest bit of the dominant hypothesis after truncation.
    pub dominant_bit: bool,
}

/// Variational beam search over a linear-Gaussian model. `K = 1` with
/// vanilla truncation is greedy search.
#[derive(Debug, Clone)]
pub struct BeamSearch {
    lik: LinearGaussian,
    cfg: SearchConfig,
    beam: Beam,
}

impl BeamSearch {
    pub fn new(prior: GaussianNat, lik: LinearGaussian, cfg: SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let beam = Beam::new(prior, cfg.record_traces);
        Ok(Self { lik, cfg, beam })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn likelihood(&self) -> &LinearGaussian {
        &self.lik
    }

    pub fn beam(&self) -> &Beam {
        &self.beam
    }

    pub fn observe(&mut self, batch: &StreamBatch) -> Result<StepReport> {
        let Expansion {
            children,
            change_probs,
        } = expand(&self.beam, &self.lik, batch, &self.cfg)?;
        let hypotheses = if self.cfg.diversify {
            diverse_truncate(children, self.cfg.beam_size)?
        } else {
            vanilla_truncate(children, self.cfg.beam_size)?
        };
        self.beam = Beam {
            hypotheses,
            step: self.beam.step + 1,
        };
        Ok(StepReport {
            change_probs,
            dominant_bit: self.beam.dominant().last_bit.unwrap_or(false),
        })
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<PredictiveMixture> {
        beam_marginal_predict(&self.beam, &self.lik, x)
    }

    /// Point prediction under the configured [`PredictionMode`].
    pub fn point_predict(&self, x: &DVector<f64>) -> Result<f64> {
        match self.cfg.prediction {
            PredictionMode::Dominant => Ok(self.lik.predict(&self.beam.dominant().posterior, x)?.mean),
            PredictionMode::Average => Ok(self.predict(x)?.mean()),
        }
    }
}

/// A finished segment reported by [`ShyGreedy`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShyEmission {
    /// First step (1-based) of the segment.
    pub segment_start: usize,
    /// Last step (1-based) included in the fit.
    pub segment_end: usize,
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Greedy search that stays silent inside a segment and reports the fit
/// of a segment only once it has ended.
#[derive(Debug, Clone)]
pub struct ShyGreedy {
    lik: LinearGaussian,
    cfg: SearchConfig,
    current: Hypothesis,
    step: usize,
    segment_start: usize,
}

impl ShyGreedy {
    pub fn new(prior: GaussianNat, lik: LinearGaussian, cfg: SearchConfig) -> Result<Self> {
        cfg.validate()?;
        let current = Hypothesis::root(prior, cfg.record_traces);
        Ok(Self {
            lik,
            cfg,
            current,
            step: 0,
            segment_start: 1,
        })
    }

    pub fn current(&self) -> &Hypothesis {
        &self.current
    }

    fn emission(&self, end: usize) -> Result<ShyEmission> {
        Ok(ShyEmission {
            segment_start: self.segment_start,
            segment_end: end,
            mean: self.current.posterior.mean()?.clone(),
            std: self.current.posterior.std_devs()?,
        })
    }

    /// Consumes one batch. Returns the fit of the previous segment when a
    /// change is detected at this step, along with `m`.
    pub fn observe(&mut self, batch: &StreamBatch) -> Result<(Option<ShyEmission>, f64)> {
        let (next, m) = greedy_step(&self.current, &self.lik, batch, &self.cfg)?;
        self.step += 1;
        let mut emitted = None;
        if next.last_bit == Some(true) {
            // a change at the very first step of a segment closes nothing
            if self.step > self.segment_start {
                emitted = Some(self.emission(self.step - 1)?);
            }
            self.segment_start = self.step;
        }
        self.current = next;
        Ok((emitted, m))
    }

    /// Fit of the final, still open segment.
    pub fn finish(&self) -> Result<ShyEmission> {
        self.emission(self.step)
    }
}
