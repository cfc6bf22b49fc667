//! Conjugate Bayesian linear regression with known noise.
//!
//! Every search and baseline needs the same three primitives from a model:
//! the log evidence of a batch under a prior, the posterior after the batch,
//! and the predictive distribution at a new input. [`LinearGaussian`] provides
//! all three for `y = θᵀx + ε`, `ε ~ N(0, σ_n²)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::{quad_form, symmetrize, GaussianNat};

/// Observations revealed at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    raw_probs: Option<DVector<f64>>,
}

impl StreamBatch {
    pub fn new(
        features: DMatrix<f64>,
        targets: DVector<f64>,
        raw_probs: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::Contract("a batch needs at least one row and one feature".into()));
        }
        if targets.len() != n {
            return Err(Error::Shape {
                context: "StreamBatch targets",
                expected: n,
                got: targets.len(),
            });
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("batch contains non-finite values".into()));
        }
        if let Some(p) = &raw_probs {
            if p.len() != n {
                return Err(Error::Shape {
                    context: "StreamBatch raw_probs",
                    expected: n,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain("raw probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(Self {
            features,
            targets,
            raw_probs,
        })
    }

    /// One observation.
    pub fn single(x: &[f64], y: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(1, x.len(), x),
            DVector::from_element(1, y),
            None,
        )
    }

    pub fn with_raw_probs(self, probs: DVector<f64>) -> Result<Self> {
        Self::new(self.features, self.targets, Some(probs))
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn raw_probs(&self) -> Option<&DVector<f64>> {
        self.raw_probs.as_ref()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Concatenates rows of several batches with equal feature dimension.
    pub fn concat(batches: &[StreamBatch]) -> Result<Self> {
        let first = batches
            .first()
            .ok_or_else(|| Error::Contract("cannot concatenate zero batches".into()))?;
        let d = first.dim();
        let n: usize = batches.iter().map(StreamBatch::len).sum();
        let mut features = DMatrix::zeros(n, d);
        let mut targets = DVector::zeros(n);
        let mut row = 0;
        for b in batches {
            if b.dim() != d {
                return Err(Error::Shape {
                    context: "StreamBatch::concat",
                    expected: d,
                    got: b.dim(),
                });
            }
            for i in 0..b.len() {
                features.set_row(row, &b.features.row(i));
                targets[row] = b.targets[i];
                row += 1;
            }
        }
        Self::new(features, targets, None)
    }
}

/// Gaussian predictive distribution of a scalar target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: f64,
    pub var: f64,
}

impl PredictiveGaussian {
    pub fn log_pdf(&self, y: f64) -> f64 {
        log_normal_pdf(y, self.mean, self.var)
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Weighted mixture of predictive Gaussians (weights sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture {
    pub components: Vec<(f64, PredictiveGaussian)>,
}

impl PredictiveMixture {
    pub fn single(p: PredictiveGaussian) -> Self {
        Self {
            components: vec![(1.0, p)],
        }
    }

    /// Weight-averaged mean.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|(w, p)| w * p.mean).sum()
    }

    /// Component with the largest weight; the first one on ties.
    pub fn dominant(&self) -> PredictiveGaussian {
        let mut best = &self.components[0];
        for c in &self.components[1..] {
            if c.0 > best.0 {
                best = c;
            }
        }
        best.1
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, p)| w.ln() + p.log_pdf(y))
            .collect();
        log_sum_exp(&terms)
    }
}

/// Linear-Gaussian likelihood with fixed noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussian {
    noise_var: f64,
}

impl LinearGaussian {
    pub fn new(noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::Domain(format!("noise variance must be > 0, got {noise_var}")));
        }
        Ok(Self { noise_var })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Posterior and chained log evidence of `batch` under `prior`.
    ///
    /// Natural parameters are accumulated exactly,
    /// `Λ' = Λ + σ⁻² XᵀX`, `η' = η + σ⁻² Xᵀy`. The evidence is the product of
    /// one-row predictives with mean and covariance advanced row by row via
    /// the rank-one (Kalman) form, which equals the joint marginal by the
    /// chain rule. Single-row batches hand the advanced moments to the
    /// posterior so the next step skips a factorization.
    pub fn absorb(&self, prior: &GaussianNat, batch: &StreamBatch) -> Result<(GaussianNat, f64)> {
        prior.check_dim(batch.dim(), "LinearGaussian::absorb")?;
        let (mu0, cov0) = prior.mean_cov()?;
        let mut mean = mu0.clone();
        let mut cov = cov0.clone();
        let mut log_det = prior.log_det_precision()?;
        let mut log_ev = 0.0;
        for i in 0..batch.len() {
            let x = batch.row(i);
            let y = batch.targets[i];
            let sx = &cov * &x;
            let s = self.noise_var + x.dot(&sx);
            let resid = y - x.dot(&mean);
            log_ev += log_normal_pdf(resid, 0.0, s);
            mean.axpy(resid / s, &sx, 1.0);
            cov.ger(-1.0 / s, &sx, &sx, 1.0);
            log_det += (s / self.noise_var).ln();
        }
        if !log_ev.is_finite() {
            return Err(Error::Numeric(format!("non-finite log evidence {log_ev}")));
        }
        let posterior = self.natural_update(prior, batch)?;
        let posterior = if batch.len() == 1 {
            posterior.with_moments(mean, symmetrize(cov), log_det)
        } else {
            posterior
        };
        Ok((posterior, log_ev))
    }

    fn natural_update(&self, prior: &GaussianNat, batch: &StreamBatch) -> Result<GaussianNat> {
        let x = batch.features();
        let inv = 1.0 / self.noise_var;
        let precision = prior.precision() + x.tr_mul(x) * inv;
        let linear = prior.linear() + x.tr_mul(batch.targets()) * inv;
        GaussianNat::from_natural(symmetrize(precision), linear)
    }

    /// Posterior after `batch`.
    pub fn update(&self, prior: &GaussianNat, batch: &StreamBatch) -> Result<GaussianNat> {
        Ok(self.absorb(prior, batch)?.0)
    }

    /// `log p(y_{1:n} | x_{1:n})` under `prior`.
    pub fn log_evidence(&self, prior: &GaussianNat, batch: &StreamBatch) -> Result<f64> {
        Ok(self.absorb(prior, batch)?.1)
    }

    /// `N(x*ᵀμ, σ_n² + x*ᵀΣx*)`.
    pub fn predict(&self, posterior: &GaussianNat, x: &DVector<f64>) -> Result<PredictiveGaussian> {
        posterior.check_dim(x.len(), "LinearGaussian::predict")?;
        let (mu, cov) = posterior.mean_cov()?;
        Ok(PredictiveGaussian {
            mean: x.dot(mu),
            var: self.noise_var + quad_form(cov, x),
        })
    }

    /// `E_q[log p(y | X, θ)]` in closed form.
    pub fn expected_log_lik(&self, q: &GaussianNat, batch: &StreamBatch) -> Result<f64> {
        q.check_dim(batch.dim(), "LinearGaussian::expected_log_lik")?;
        let (mu, cov) = q.mean_cov()?;
        let mut total = 0.0;
        for i in 0..batch.len() {
            let x = batch.row(i);
            let resid = batch.targets[i] - x.dot(mu);
            total += -0.5 * (2.0 * PI * self.noise_var).ln()
                - (resid * resid + quad_form(cov, &x)) / (2.0 * self.noise_var);
        }
        Ok(total)
    }

    /// Conditional evidence lower bound `E_q[log p(y|θ)] − KL(q ‖ prior)`.
    /// At the exact posterior it equals [`Self::log_evidence`].
    pub fn celbo(&self, q: &GaussianNat, prior: &GaussianNat, batch: &StreamBatch) -> Result<f64> {
        prior.check_dim(q.dim(), "LinearGaussian::celbo")?;
        Ok(self.expected_log_lik(q, batch)? - q.kl_divergence(prior)?)
    }
}

/// Weight posterior together with its likelihood.
#[derive(Debug, Clone)]
pub struct BlrModel {
    pub posterior: GaussianNat,
    pub likelihood: LinearGaussian,
}

impl BlrModel {
    pub fn new(prior: GaussianNat, noise_var: f64) -> Result<Self> {
        Ok(Self {
            posterior: prior,
            likelihood: LinearGaussian::new(noise_var)?,
        })
    }

    pub fn update(&self, batch: &StreamBatch) -> Result<Self> {
        Ok(Self {
            posterior: self.likelihood.update(&self.posterior, batch)?,
            likelihood: self.likelihood,
        })
    }

    pub fn log_evidence(&self, batch: &StreamBatch) -> Result<f64> {
        self.likelihood.log_evidence(&self.posterior, batch)
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<PredictiveGaussian> {
        self.likelihood.predict(&self.posterior, x)
    }
}

/// Vector targets as independent per-output regressors over shared features.
#[derive(Debug, Clone)]
pub struct MultiTargetBlr {
    pub models: Vec<BlrModel>,
}

impl MultiTargetBlr {
    pub fn new(models: Vec<BlrModel>) -> Self {
        Self { models }
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.models.len() {
            return Err(Error::Shape {
                context: "MultiTargetBlr",
                expected: self.models.len(),
                got,
            });
        }
        Ok(())
    }

    /// `batches[j]` holds the targets of output `j`.
    pub fn update(&self, batches: &[StreamBatch]) -> Result<Self> {
        self.check_len(batches.len())?;
        let models = self
            .models
            .iter()
            .zip(batches)
            .map(|(m, b)| m.update(b))
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }

    /// Joint evidence: sum over independent outputs.
    pub fn log_evidence(&self, batches: &[StreamBatch]) -> Result<f64> {
        self.check_len(batches.len())?;
        self.models
            .iter()
            .zip(batches)
            .map(|(m, b)| m.log_evidence(b))
            .sum()
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<Vec<PredictiveGaussian>> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }
}

/// Rewrites an `n × k` target matrix as one scalar-target batch over the
/// stacked weights `[θ_1; …; θ_k]`, so a single block-diagonal posterior
/// carries all outputs. Rows are ordered observation-major.
pub fn stack_multi_target(features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<StreamBatch> {
    let (n, d) = features.shape();
    if targets.nrows() != n {
        return Err(Error::Shape {
            context: "stack_multi_target",
            expected: n,
            got: targets.nrows(),
        });
    }
    let k = targets.ncols();
    let mut x = DMatrix::zeros(n * k, d * k);
    let mut y = DVector::zeros(n * k);
    for i in 0..n {
        for j in 0..k {
            let r = i * k + j;
            x.view_mut((r, j * d), (1, d)).copy_from(&features.row(i));
            y[r] = targets[(i, j)];
        }
    }
    StreamBatch::new(x, y, None)
}

/// Log-odds of `p` with finite fills at the boundaries.
pub fn logodds_encode(p: f64, lo_fill: f64, hi_fill: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    if lo_fill.is_nan() || hi_fill.is_nan() || lo_fill >= hi_fill {
        return Err(Error::Domain(format!("fill bounds must satisfy lo < hi, got ({lo_fill}, {hi_fill})")));
    }
    Ok(if p == 0.0 {
        lo_fill
    } else if p == 1.0 {
        hi_fill
    } else {
        (p / (1.0 - p)).ln()
    })
}

/// Median of the logistic-normal `sigmoid(a)`, `a ~ N(mean, var)`.
pub fn logodds_decode_median(a: &PredictiveGaussian) -> f64 {
    sigmoid(a.mean)
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log σ(a)` without overflow.
pub fn log_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

pub fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// `log Σ exp(xᵢ)`; `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
