//! Reference computations for the integration tests. Everything here is
//! written from first principles (direct inversion, determinants, explicit
//! enumeration) and never calls into the library's inference code.

#![allow(dead_code)]

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box–Muller normal, independent of the library's inverse-CDF sampler.
pub fn normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn normal_vec(r: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(r))
}

pub fn normal_mat(r: &mut impl Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| normal(r))
}

/// Random SPD matrix `BBᵀ + εI` with controlled conditioning.
pub fn random_spd(r: &mut impl Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let b = normal_mat(r, d, d);
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * ridge
}

pub fn max_abs_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn max_abs_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible test matrix")
}

/// `ln det` via LU.
pub fn log_det(m: &DMatrix<f64>) -> f64 {
    let det = m.clone().lu().determinant();
    assert!(det > 0.0, "expected a positive determinant, got {det}");
    det.ln()
}

/// Natural-parameter posterior of a batch in one shot.
pub fn batch_posterior(
    prior_prec: &DMatrix<f64>,
    prior_lin: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    (
        prior_prec + x.transpose() * x / noise_var,
        prior_lin + x.transpose() * y / noise_var,
    )
}

/// `ln ∫ exp(−½ zᵀΛz + ηᵀz) dz`.
pub fn log_normalizer(prec: &DMatrix<f64>, lin: &DVector<f64>) -> f64 {
    let d = prec.nrows() as f64;
    let cov = inverse(prec);
    0.5 * lin.dot(&(&cov * lin)) - 0.5 * log_det(prec) + 0.5 * d * (2.0 * PI).ln()
}

/// Marginal likelihood as a ratio of normalizers.
pub fn evidence_by_normalizers(
    prior_prec: &DMatrix<f64>,
    prior_lin: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> f64 {
    let (p, l) = batch_posterior(prior_prec, prior_lin, x, y, noise_var);
    let n = y.len() as f64;
    log_normalizer(&p, &l) - log_normalizer(prior_prec, prior_lin)
        - 0.5 * n * (2.0 * PI * noise_var).ln()
        - y.dot(y) / (2.0 * noise_var)
}

/// Marginal likelihood as one joint `n`-dimensional Gaussian density,
/// `y ~ N(Xμ₀, σ²I + XΣ₀Xᵀ)`.
pub fn evidence_joint(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_var: f64,
) -> f64 {
    let n = y.len();
    let s = DMatrix::identity(n, n) * noise_var + x * prior_cov * x.transpose();
    let r = y - x * prior_mean;
    -0.5 * (n as f64 * (2.0 * PI).ln() + log_det(&s) + r.dot(&(inverse(&s) * &r)))
}

pub fn entropy_from_cov(cov: &DMatrix<f64>) -> f64 {
    let d = cov.nrows() as f64;
    0.5 * d * (2.0 * PI * E).ln() + 0.5 * log_det(cov)
}

pub fn log_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

pub fn log_norm_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (y - mean).powi(2) / var)
}

/// Scalar latent-mean state in moment form.
#[derive(Clone, Copy, Debug)]
pub struct Scalar {
    pub mean: f64,
    pub var: f64,
}

impl Scalar {
    /// Returns the posterior after observing `y` and the log predictive.
    pub fn observe(self, y: f64, noise_var: f64) -> (Self, f64) {
        let s = self.var + noise_var;
        let ev = log_norm_pdf(y, self.mean, s);
        let k = self.var / s;
        (
            Self {
                mean: self.mean + k * (y - self.mean),
                var: self.var * noise_var / s,
            },
            ev,
        )
    }
}

/// Exact posterior over all `2^T` change histories of the scalar
/// latent-mean model. `broaden` maps a state to its change-branch prior.
/// Traces are rendered as `0`/`1` strings in time order.
pub fn exhaustive_trace_posterior(
    ys: &[f64],
    prior: Scalar,
    noise_var: f64,
    xi0: f64,
    broaden: impl Fn(Scalar) -> Scalar,
) -> Vec<(String, f64)> {
    let t = ys.len();
    let mut logs = Vec::with_capacity(1 << t);
    for code in 0..(1u32 << t) {
        let mut st = prior;
        let mut lp = 0.0;
        let mut trace = String::with_capacity(t);
        for (i, &y) in ys.iter().enumerate() {
            let s = code >> i & 1 == 1;
            trace.push(if s { '1' } else { '0' });
            lp += log_sigmoid(if s { xi0 } else { -xi0 });
            let pr = if s { broaden(st) } else { st };
            let (post, ev) = pr.observe(y, noise_var);
            lp += ev;
            st = post;
        }
        logs.push((trace, lp));
    }
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    logs.into_iter().map(|(s, l)| (s, (l - max).exp() / z)).collect()
}

/// Filtering distribution over run lengths at every step, by brute force
/// over all changepoint placements of the product-partition model: each
/// step independently starts a new segment with probability `h`, and every
/// segment's observations are i.i.d. given a latent mean drawn from
/// `prior`. Run length after step `t` counts steps since the latest change
/// (0 if step `t` itself started a segment; `t` if there was none).
pub fn bocd_bruteforce(ys: &[f64], h: f64, prior: Scalar, noise_var: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(ys.len());
    for t in 1..=ys.len() {
        let mut mass = vec![0.0; t + 1];
        for code in 0..(1u32 << t) {
            let mut lp = 0.0;
            let mut st = prior;
            let mut last_change = None;
            for (i, &y) in ys[..t].iter().enumerate() {
                let c = code >> i & 1 == 1;
                lp += if c { h.ln() } else { (1.0 - h).ln() };
                if c {
                    st = prior;
                    last_change = Some(i + 1);
                }
                let (post, ev) = st.observe(y, noise_var);
                lp += ev;
                st = post;
            }
            let r = match last_change {
                Some(c) => t - c,
                None => t,
            };
            if lp.is_finite() {
                mass[r] += lp.exp();
            }
        }
        let z: f64 = mass.iter().sum();
        out.push(mass.into_iter().map(|m| m / z).collect());
    }
    out
}

/// Ordinary least squares via the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    inverse(&(x.transpose() * x)) * x.transpose() * y
}
