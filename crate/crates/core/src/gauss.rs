//! Multivariate Gaussians in natural parameters.
//!
//! The canonical representation is the pair `(Λ, η)` with `Λ = Σ⁻¹` and
//! `η = Λμ`. Conjugate updates are additive in this form and tempering is a
//! scalar multiple of both parameters. Mean and covariance are derived on
//! demand and memoized; the memo is write-once, so a [`GaussianNat`] can be
//! shared across threads freely.

use std::f64::consts::{E, PI};
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal when a factorization fails.
pub const JITTER_SCALE: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Moments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_det_precision: f64,
}

/// Gaussian over `dim` variables stored as precision matrix and linear term.
#[derive(Debug, Clone)]
pub struct GaussianNat {
    precision: DMatrix<f64>,
    linear: DVector<f64>,
    moments: OnceLock<Moments>,
}

impl GaussianNat {
    /// Builds from natural parameters. The precision is symmetrized; input
    /// asymmetry beyond `1e-12` relative is rejected.
    pub fn from_natural(precision: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let d = linear.len();
        if d == 0 {
            return Err(Error::Domain("Gaussian dimension must be positive".into()));
        }
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::Shape {
                context: "GaussianNat::from_natural",
                expected: d,
                got: precision.nrows().max(precision.ncols()),
            });
        }
        if precision.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite natural parameter".into()));
        }
        let scale = precision.amax().max(f64::MIN_POSITIVE);
        let asym = (&precision - precision.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Domain(format!(
                "precision not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self::from_parts(symmetrize(precision), linear))
    }

    /// Builds from mean and covariance; the covariance must be SPD.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape {
                context: "GaussianNat::from_moments",
                expected: d,
                got: cov.nrows(),
            });
        }
        let cov = symmetrize(cov);
        let (precision, log_det_cov) = spd_inverse(&cov)?;
        let linear = &precision * &mean;
        let g = Self::from_parts(precision, linear);
        let _ = g.moments.set(Moments {
            mean,
            cov,
            log_det_precision: -log_det_cov,
        });
        Ok(g)
    }

    /// `N(mean · 1, var · I)` in `dim` dimensions.
    pub fn isotropic(dim: usize, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::Domain(format!("isotropic variance must be > 0, got {var}")));
        }
        Self::from_moments(
            DVector::from_element(dim, mean),
            DMatrix::identity(dim, dim) * var,
        )
    }

    fn from_parts(precision: DMatrix<f64>, linear: DVector<f64>) -> Self {
        Self {
            precision,
            linear,
            moments: OnceLock::new(),
        }
    }

    /// Seeds the memo with externally derived moments (rank-one fast path).
    pub(crate) fn with_moments(self, mean: DVector<f64>, cov: DMatrix<f64>, log_det_precision: f64) -> Self {
        let _ = self.moments.set(Moments {
            mean,
            cov,
            log_det_precision,
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Whether mean and covariance have already been derived.
    pub fn is_cached(&self) -> bool {
        self.moments.get().is_some()
    }

    fn moments(&self) -> Result<&Moments> {
        if let Some(m) = self.moments.get() {
            return Ok(m);
        }
        let chol = factor_with_jitter(&self.precision)?;
        let cov = symmetrize(chol.inverse());
        let mean = chol.solve(&self.linear);
        let log_det_precision = chol_log_det(&chol);
        let _ = self.moments.set(Moments {
            mean,
            cov,
            log_det_precision,
        });
        Ok(self.moments.get().expect("moments just set"))
    }

    /// Mean and covariance `(μ, Σ)`, memoized on first call.
    pub fn mean_cov(&self) -> Result<(&DVector<f64>, &DMatrix<f64>)> {
        let m = self.moments()?;
        Ok((&m.mean, &m.cov))
    }

    pub fn mean(&self) -> Result<&DVector<f64>> {
        Ok(&self.moments()?.mean)
    }

    pub fn cov(&self) -> Result<&DMatrix<f64>> {
        Ok(&self.moments()?.cov)
    }

    pub fn log_det_precision(&self) -> Result<f64> {
        Ok(self.moments()?.log_det_precision)
    }

    /// Per-coordinate standard deviations `sqrt(diag Σ)`.
    pub fn std_devs(&self) -> Result<DVector<f64>> {
        Ok(self.cov()?.diagonal().map(f64::sqrt))
    }

    /// Differential entropy `½ d log(2πe) − ½ log det Λ`.
    pub fn entropy(&self) -> Result<f64> {
        let d = self.dim() as f64;
        Ok(0.5 * d * (2.0 * PI * E).ln() - 0.5 * self.log_det_precision()?)
    }

    /// Entropy of the marginal along unit direction `u`: `½ log(2πe uᵀΣu)`.
    pub fn directional_entropy(&self, u: &DVector<f64>) -> Result<f64> {
        self.check_dim(u.len(), "directional_entropy")?;
        let norm = u.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("direction must be unit length, |u| = {norm}")));
        }
        let var = quad_form(self.cov()?, u);
        Ok(0.5 * (2.0 * PI * E * var).ln())
    }

    /// Tempering `p(z)^β`: scales precision and linear term by `β`, so the
    /// mean is unchanged and every direction loses `½ log β` nats.
    pub fn temper(&self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain(format!("inverse temperature must lie in (0, 1], got {beta}")));
        }
        if beta == 1.0 {
            return Ok(self.clone());
        }
        let out = Self::from_parts(&self.precision * beta, &self.linear * beta);
        if let Some(m) = self.moments.get() {
            let d = self.dim() as f64;
            let _ = out.moments.set(Moments {
                mean: m.mean.clone(),
                cov: &m.cov / beta,
                log_det_precision: m.log_det_precision + d * beta.ln(),
            });
        }
        Ok(out)
    }

    /// Additive broadening: `Σ ← Σ + D·Δt·I` with the mean held fixed.
    pub fn additive_broaden(&self, diffusion: f64, dt: f64) -> Result<Self> {
        if !(diffusion.is_finite() && diffusion >= 0.0) {
            return Err(Error::Domain(format!("diffusion must be >= 0, got {diffusion}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
        }
        let extra = diffusion * dt;
        if extra == 0.0 {
            return Ok(self.clone());
        }
        let (mean, cov) = self.mean_cov()?;
        let d = self.dim();
        let broadened = cov + DMatrix::identity(d, d) * extra;
        Self::from_moments(mean.clone(), broadened)
    }

    /// Geometric interpolation `base^(1-β) · self^β`, i.e. a convex
    /// combination of natural parameters.
    pub fn interpolate_toward(&self, base: &GaussianNat, beta: f64) -> Result<Self> {
        self.check_dim(base.dim(), "interpolate_toward")?;
        if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
            return Err(Error::Domain(format!("forgetting rate must lie in [0, 1], got {beta}")));
        }
        let precision = &self.precision * beta + &base.precision * (1.0 - beta);
        let linear = &self.linear * beta + &base.linear * (1.0 - beta);
        Ok(Self::from_parts(symmetrize(precision), linear))
    }

    /// Closed-form `KL(self ‖ other)`.
    pub fn kl_divergence(&self, other: &GaussianNat) -> Result<f64> {
        self.check_dim(other.dim(), "kl_divergence")?;
        let (mu_q, cov_q) = self.mean_cov()?;
        let mu_p = other.mean()?;
        let lam_p = &other.precision;
        let trace = lam_p.component_mul(cov_q).sum();
        let diff = mu_p - mu_q;
        let maha = quad_form(lam_p, &diff);
        let d = self.dim() as f64;
        let kl = 0.5
            * (trace + maha - d + self.log_det_precision()? - other.log_det_precision()?);
        Ok(kl.max(0.0))
    }

    pub(crate) fn check_dim(&self, got: usize, context: &'static str) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Shape {
                context,
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// How the previous posterior is broadened when a change is hypothesized.
#[derive(Debug, Clone)]
pub enum Broadening {
    /// Multiplicative: precision and linear term scaled by `beta ∈ (0, 1]`.
    Temper { beta: f64 },
    /// Additive: covariance grows by `diffusion · dt` in every direction.
    Additive { diffusion: f64, dt: f64 },
    /// Interpolation toward a base prior, `Λ = (1-β)Λ₀ + βΛ`.
    Forget { beta: f64, base: Arc<GaussianNat> },
}

impl Broadening {
    pub fn validate(&self) -> Result<()> {
        match self {
            Broadening::Temper { beta } | Broadening::Forget { beta, .. } => {
                if !(beta.is_finite() && *beta > 0.0 && *beta <= 1.0) {
                    return Err(Error::Domain(format!("broadening beta must lie in (0, 1], got {beta}")));
                }
            }
            Broadening::Additive { diffusion, dt } => {
                if !(diffusion.is_finite() && *diffusion >= 0.0) || !(dt.is_finite() && *dt > 0.0) {
                    return Err(Error::Domain(format!(
                        "additive broadening needs D >= 0 and dt > 0, got D={diffusion}, dt={dt}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, g: &GaussianNat) -> Result<GaussianNat> {
        match self {
            Broadening::Temper { beta } => g.temper(*beta),
            Broadening::Additive { diffusion, dt } => g.additive_broaden(*diffusion, *dt),
            Broadening::Forget { beta, base } => g.interpolate_toward(base, *beta),
        }
    }

    /// True when broadening leaves every posterior unchanged.
    pub fn is_identity(&self) -> bool {
        match self {
            Broadening::Temper { beta } | Broadening::Forget { beta, .. } => *beta == 1.0,
            Broadening::Additive { diffusion, dt } => diffusion * dt == 0.0,
        }
    }
}

/// Sherman–Morrison: given `A⁻¹`, returns `(A + u vᵀ)⁻¹`.
pub fn sm_rank1_inverse_update(
    a_inv: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = a_inv.nrows();
    if a_inv.ncols() != d {
        return Err(Error::Shape {
            context: "sm_rank1_inverse_update",
            expected: d,
            got: a_inv.ncols(),
        });
    }
    for len in [u.len(), v.len()] {
        if len != d {
            return Err(Error::Shape {
                context: "sm_rank1_inverse_update",
                expected: d,
                got: len,
            });
        }
    }
    let a_inv_u = a_inv * u;
    let v_t_a_inv = a_inv.tr_mul(v);
    let denom = 1.0 + v.dot(&a_inv_u);
    if denom.abs() <= 1e-12 || !denom.is_finite() {
        return Err(Error::SingularUpdate(denom));
    }
    Ok(a_inv - (a_inv_u * v_t_a_inv.transpose()) / denom)
}

/// `xᵀ M x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn factor_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows();
    let jitter = JITTER_SCALE * (m.trace() / d as f64).abs().max(f64::MIN_POSITIVE);
    let jittered = m + DMatrix::identity(d, d) * jitter;
    Cholesky::new(jittered).ok_or_else(|| {
        Error::Numeric(format!("matrix not positive definite after jitter {jitter:e}"))
    })
}

/// Inverse and log-determinant of an SPD matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = factor_with_jitter(m)?;
    let log_det = chol_log_det(&chol);
    Ok((symmetrize(chol.inverse()), log_det))
}
