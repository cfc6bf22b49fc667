//! Built-in consistency checks runnable from the command line. Each check
//! compares two independent computations on a small fixed problem.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{independent_step, vcl_step, BocdState};
use crate::data::{gen_two_lines, rng_stream, std_normal};
use crate::error::Result;
use crate::gauss::{sm_rank1_inverse_update, GaussianNat};
use crate::models::{LinearGaussian, StreamBatch};
use crate::search::{BeamSearch, SearchConfig};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn random_batch(seed: u64, n: usize, d: usize) -> Result<StreamBatch> {
    let mut r = rng_stream(seed, 0);
    let x = DMatrix::from_fn(n, d, |_, _| std_normal(&mut r));
    let y = DVector::from_fn(n, |_, _| std_normal(&mut r));
    StreamBatch::new(x, y, None)
}

fn check(name: &'static str, err: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: err <= tol,
        detail: format!("error {err:.3e} (tolerance {tol:.0e})"),
    }
}

fn conjugacy() -> Result<CheckOutcome> {
    let prior = GaussianNat::isotropic(4, 0.0, 2.0)?;
    let lik = LinearGaussian::new(0.3)?;
    let batch = random_batch(1, 20, 4)?;
    let mut post = prior.clone();
    for i in 0..batch.len() {
        let row = StreamBatch::single(batch.row(i).as_slice(), batch.targets()[i])?;
        post = lik.update(&post, &row)?;
    }
    let x = batch.features();
    let lam = prior.precision() + x.transpose() * x / 0.3;
    Ok(check("streamed update equals batch posterior", max_abs(post.precision(), &lam), 1e-10))
}

/// Log normalizer of `exp(-½ zᵀΛz + ηᵀz)`.
fn log_normalizer(g: &GaussianNat) -> Result<f64> {
    let d = g.dim() as f64;
    Ok(0.5 * g.linear().dot(g.mean()?) - 0.5 * g.log_det_precision()? + 0.5 * d * std::f64::consts::TAU.ln())
}

fn evidence_chain() -> Result<CheckOutcome> {
    let prior = GaussianNat::isotropic(3, 0.5, 1.5)?;
    let noise = 0.7;
    let lik = LinearGaussian::new(noise)?;
    let batch = random_batch(2, 12, 3)?;
    let mut chained = 0.0;
    let mut post = prior.clone();
    for i in 0..batch.len() {
        let row = StreamBatch::single(batch.row(i).as_slice(), batch.targets()[i])?;
        let (next, ev) = lik.absorb(&post, &row)?;
        chained += ev;
        post = next;
    }
    let y = batch.targets();
    let n = y.len() as f64;
    let ratio = log_normalizer(&post)? - log_normalizer(&prior)?
        - 0.5 * n * (std::f64::consts::TAU * noise).ln()
        - y.dot(y) / (2.0 * noise);
    Ok(check("chained evidence equals normalizer ratio", (ratio - chained).abs(), 1e-9))
}

fn celbo_identity() -> Result<CheckOutcome> {
    let prior = GaussianNat::isotropic(3, 0.0, 1.0)?;
    let lik = LinearGaussian::new(0.5)?;
    let batch = random_batch(3, 10, 3)?;
    let post = lik.update(&prior, &batch)?;
    let gap = lik.log_evidence(&prior, &batch)? - lik.celbo(&post, &prior, &batch)?;
    Ok(check("bound is tight at the exact posterior", gap.abs(), 1e-8))
}

fn sherman_morrison() -> Result<CheckOutcome> {
    let mut r = rng_stream(4, 0);
    let b = DMatrix::from_fn(6, 6, |_, _| std_normal(&mut r));
    let a = &b * b.transpose() + DMatrix::identity(6, 6);
    let u = DVector::from_fn(6, |_, _| std_normal(&mut r));
    let a_inv = a.clone().try_inverse().expect("SPD");
    let fast = sm_rank1_inverse_update(&a_inv, &u, &u)?;
    let direct = (a + &u * u.transpose()).try_inverse().expect("SPD");
    Ok(check("rank-one inverse update equals direct inverse", max_abs(&fast, &direct), 1e-8))
}

fn tempering_entropy() -> Result<CheckOutcome> {
    let g = GaussianNat::from_moments(
        DVector::from_vec(vec![1.0, -1.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
    )?;
    let beta = 0.3;
    let gain = g.temper(beta)?.entropy()? - g.entropy()?;
    Ok(check("tempering raises entropy by -(d/2) log beta", (gain + beta.ln()).abs(), 1e-10))
}

fn limits() -> Result<CheckOutcome> {
    let stream = gen_two_lines(20, 0.1, 7)?;
    let base = GaussianNat::isotropic(2, 0.0, 1.0)?;
    let lik = LinearGaussian::new(0.1)?;
    let mut vcl = base.clone();
    let mut never = BeamSearch::new(base.clone(), lik, SearchConfig::greedy(0.5, -1e9))?;
    let mut bocd = BocdState::new(base.clone(), 1.0, 6)?;
    let mut err: f64 = 0.0;
    for b in &stream.batches {
        let x = b.row(0);
        err = err.max((lik.predict(&vcl, &x)?.mean - never.point_predict(&x)?).abs());
        vcl = vcl_step(&vcl, &lik, b)?;
        never.observe(b)?;
        bocd = bocd.step(&lik, &base, b)?;
        let ind = independent_step(&base, &lik, b)?;
        err = err.max((bocd.predict(&lik, &x)?.mean() - lik.predict(&ind, &x)?.mean).abs());
    }
    Ok(check("no-change and always-change limits", err, 1e-9))
}

type Check = fn() -> Result<CheckOutcome>;

/// Runs every check; a check that errors counts as a failure.
pub fn run_all() -> Vec<CheckOutcome> {
    let checks: [(&'static str, Check); 7] = [
        ("conjugacy", conjugacy),
        ("evidence", evidence_chain),
        ("celbo", celbo_identity),
        ("sherman_morrison", sherman_morrison),
        ("tempering", tempering_entropy),
        ("limits", limits),
        ("determinism", determinism),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            })
        })
        .collect()
}

fn determinism() -> Result<CheckOutcome> {
    let a = gen_two_lines(20, 0.1, 9)?;
    let b = gen_two_lines(20, 0.1, 9)?;
    Ok(CheckOutcome {
        name: "generators are deterministic",
        passed: a.batches == b.batches,
        detail: String::new(),
    })
}
