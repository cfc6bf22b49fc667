//! Library results against independent reference computations.

mod common;

use std::collections::HashMap;

use approx::assert_abs_diff_eq;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use vbs::baselines::{vcl_step, BocdState};
use vbs::data::{gen_piecewise, gen_two_lines, FeatureKind, StreamKind};
use vbs::experiment::{run_in_memory, EvalConfig, ModelConfig, OutputConfig, RunConfig};
use vbs::learner::{BroadenSpec, MethodSpec, PredictionSpec, WeightSpec};
use vbs::models::{stack_multi_target, BlrModel, MultiTargetBlr};
use vbs::search::{BeamSearch, SearchConfig, WeightRule};
use vbs::{Broadening, GaussianNat, LinearGaussian, StreamBatch};

#[test]
fn evidence_matches_joint_gaussian_marginal() {
    let mut r = rng(1);
    for _ in 0..50 {
        let d = r.random_range(1..=6);
        let n = r.random_range(1..=30);
        let mean = normal_vec(&mut r, d);
        let cov = random_spd(&mut r, d, 0.4);
        let x = normal_mat(&mut r, n, d);
        let y = normal_vec(&mut r, n);
        let nv = r.random_range(0.2..2.0);
        let prior = GaussianNat::from_moments(mean.clone(), cov.clone()).unwrap();
        let lib = LinearGaussian::new(nv)
            .unwrap()
            .log_evidence(&prior, &StreamBatch::new(x.clone(), y.clone(), None).unwrap())
            .unwrap();
        assert_abs_diff_eq!(lib, evidence_joint(&mean, &cov, &x, &y, nv), epsilon = 1e-9);
    }
}

#[test]
fn posterior_moments_match_direct_inversion() {
    let mut r = rng(2);
    let d = 5;
    let prior = GaussianNat::isotropic(d, 0.3, 2.0).unwrap();
    let lik = LinearGaussian::new(0.5).unwrap();
    let mut post = prior.clone();
    for _ in 0..20 {
        let row = normal_vec(&mut r, d);
        post = lik.update(&post, &StreamBatch::single(row.as_slice(), normal(&mut r)).unwrap()).unwrap();
        // moments seeded by the single-row path, against a fresh solve
        let cov = inverse(post.precision());
        let mean = &cov * post.linear();
        assert!(max_abs_mat(post.cov().unwrap(), &cov) < 1e-10);
        assert!(max_abs_vec(post.mean().unwrap(), &mean) < 1e-10);
        assert_abs_diff_eq!(post.log_det_precision().unwrap(), log_det(post.precision()), epsilon = 1e-9);
    }
}

fn scalar_beam(ys: &[f64], cfg: SearchConfig, noise_var: f64) -> HashMap<String, f64> {
    let mut vbs = BeamSearch::new(
        GaussianNat::isotropic(1, 0.0, 1.0).unwrap(),
        LinearGaussian::new(noise_var).unwrap(),
        cfg.with_traces(true),
    )
    .unwrap();
    for &y in ys {
        vbs.observe(&StreamBatch::single(&[1.0], y).unwrap()).unwrap();
    }
    vbs.beam()
        .hypotheses
        .iter()
        .map(|h| (h.trace_string().unwrap(), h.weight()))
        .collect()
}

#[test]
fn full_beam_is_exact_under_additive_broadening() {
    let ys = [0.1, -0.3, 0.2, 1.4, 1.1, 0.9, 1.3];
    let xi0 = (0.1f64 / 0.9).ln();
    let oracle = exhaustive_trace_posterior(&ys, Scalar { mean: 0.0, var: 1.0 }, 0.25, xi0, |s| Scalar {
        mean: s.mean,
        var: s.var + 1.0,
    });
    let cfg = SearchConfig::new(Broadening::Additive { diffusion: 1.0, dt: 1.0 }, xi0, 128);
    let got = scalar_beam(&ys, cfg, 0.25);
    for (t, p) in oracle {
        assert_abs_diff_eq!(got[&t], p, epsilon = 1e-10);
    }
}

#[test]
fn conditional_weight_rule_ignores_family_evidence() {
    // Step 1: both branches see the same data, so the split is driven by
    // the evidence alone. Under the conditional rule, two hypotheses with
    // very different fits of the past keep the weight that the split gave
    // them, so the rule cannot match the exhaustive posterior.
    let ys = [0.0, 0.0, 3.0, 3.0, 3.0, 0.0];
    let xi0 = (0.2f64 / 0.8).ln();
    let beta = 0.3;
    let oracle: HashMap<_, _> =
        exhaustive_trace_posterior(&ys, Scalar { mean: 0.0, var: 1.0 }, 0.2, xi0, |s| Scalar {
            mean: s.mean,
            var: s.var / beta,
        })
        .into_iter()
        .collect();
    let joint = scalar_beam(&ys, SearchConfig::new(Broadening::Temper { beta }, xi0, 64), 0.2);
    let cond = scalar_beam(
        &ys,
        SearchConfig::new(Broadening::Temper { beta }, xi0, 64).with_weight_rule(WeightRule::Conditional),
        0.2,
    );
    let err = |m: &HashMap<String, f64>| oracle.iter().map(|(t, p)| (m[t] - p).abs()).fold(0.0, f64::max);
    assert!(err(&joint) < 1e-10);
    assert!(err(&cond) > 1e-3, "conditional rule unexpectedly exact: {}", err(&cond));
}

#[test]
fn bocd_matches_bruteforce_changepoint_enumeration() {
    let mut r = rng(3);
    let nv = 0.3;
    let prior = Scalar { mean: 0.0, var: 2.0 };
    let base = GaussianNat::isotropic(1, 0.0, 2.0).unwrap();
    let lik = LinearGaussian::new(nv).unwrap();
    for &h in &[0.05, 0.2, 0.5] {
        let ys: Vec<f64> = (0..12).map(|t| if t >= 6 { 2.0 } else { 0.0 } + 0.5 * normal(&mut r)).collect();
        let oracle = bocd_bruteforce(&ys, h, prior, nv);
        let mut s = BocdState::new(base.clone(), h, usize::MAX).unwrap();
        for (t, &y) in ys.iter().enumerate() {
            s = s.step(&lik, &base, &StreamBatch::single(&[1.0], y).unwrap()).unwrap();
            let dist: HashMap<usize, f64> = s.distribution().into_iter().collect();
            let total: f64 = dist.values().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            for (rl, p) in oracle[t].iter().enumerate() {
                assert_abs_diff_eq!(dist.get(&rl).copied().unwrap_or(0.0), *p, epsilon = 1e-8);
            }
        }
    }
}

#[test]
fn bocd_detects_a_five_sigma_jump_quickly() {
    let sigma = 0.5;
    let mut r = rng(4);
    let ys: Vec<f64> = (1..=30)
        .map(|t| if t >= 15 { 5.0 * sigma } else { 0.0 } + sigma * normal(&mut r))
        .collect();
    let lik = LinearGaussian::new(sigma * sigma).unwrap();
    let base = GaussianNat::isotropic(1, 0.0, 4.0).unwrap();
    let mut trunc = BocdState::new(base.clone(), 0.1, 6).unwrap();
    let mut full = BocdState::new(base.clone(), 0.1, usize::MAX).unwrap();
    let mut maps = Vec::new();
    for &y in &ys {
        let b = StreamBatch::single(&[1.0], y).unwrap();
        trunc = trunc.step(&lik, &base, &b).unwrap();
        full = full.step(&lik, &base, &b).unwrap();
        maps.push((trunc.map_run_length(), full.map_run_length()));
    }
    for step in [16, 17] {
        let (t, f) = maps[step - 1];
        assert!(t <= 2 && f <= 2, "step {step}: MAP run lengths {t} / {f}");
    }
}

#[test]
fn vcl_with_vague_prior_recovers_least_squares() {
    let stream = gen_two_lines(20, 0.1, 11).unwrap();
    let first = &stream.batches[..20];
    let lik = LinearGaussian::new(0.01).unwrap();
    let mut post = GaussianNat::isotropic(2, 0.0, 1e8).unwrap();
    for b in first {
        post = vcl_step(&post, &lik, b).unwrap();
    }
    let x = DMatrix::from_fn(20, 2, |i, j| first[i].features()[(0, j)]);
    let y = DVector::from_fn(20, |i, _| first[i].targets()[0]);
    assert!(max_abs_vec(post.mean().unwrap(), &ols(&x, &y)) < 1e-6);
    // and the fit is close to f₁ = 0.7x − 0.5
    assert!((post.mean().unwrap()[0] - 0.7).abs() < 0.15);
    assert!((post.mean().unwrap()[1] + 0.5).abs() < 0.1);
}

#[test]
fn generator_noise_has_declared_scale() {
    // residual mean and variance within CLT bounds
    let sd = 0.5;
    let s = gen_piecewise(4, 500, 3, sd, 1.0, FeatureKind::Gaussian, 5).unwrap();
    let truth = s.truth.as_ref().unwrap();
    let res: Vec<f64> = s
        .batches
        .iter()
        .zip(&truth.params)
        .map(|(b, w)| b.targets()[0] - b.features().row(0).iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    let n = res.len() as f64;
    let mean = res.iter().sum::<f64>() / n;
    let var = res.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 * sd / n.sqrt(), "mean {mean}");
    // Var(s²) ≈ 2σ⁴/n for normal noise
    assert!((var - sd * sd).abs() < 4.0 * (2.0f64).sqrt() * sd * sd / n.sqrt(), "var {var}");
}

#[test]
fn multi_target_stacking_equals_independent_models() {
    let mut r = rng(6);
    let (n, d, k) = (7, 3, 2);
    let x = normal_mat(&mut r, n, d);
    let y = normal_mat(&mut r, n, k);
    let lik = LinearGaussian::new(0.4).unwrap();
    let stacked = stack_multi_target(&x, &y).unwrap();
    let joint_prior = GaussianNat::isotropic(d * k, 0.0, 1.0).unwrap();
    let (joint, ev) = lik.absorb(&joint_prior, &stacked).unwrap();
    let models = MultiTargetBlr::new(
        (0..k)
            .map(|_| BlrModel::new(GaussianNat::isotropic(d, 0.0, 1.0).unwrap(), 0.4).unwrap())
            .collect(),
    );
    let per_target: Vec<StreamBatch> = (0..k)
        .map(|j| StreamBatch::new(x.clone(), y.column(j).into_owned(), None).unwrap())
        .collect();
    assert_abs_diff_eq!(ev, models.log_evidence(&per_target).unwrap(), epsilon = 1e-9);
    let updated = models.update(&per_target).unwrap();
    for (j, m) in updated.models.iter().enumerate() {
        let block = joint.mean().unwrap().rows(j * d, d).into_owned();
        assert!(max_abs_vec(m.posterior.mean().unwrap(), &block) < 1e-10);
    }
}

fn config(method: MethodSpec) -> RunConfig {
    RunConfig {
        seed: 7,
        stream: StreamKind::TwoLines {
            n_per_segment: 20,
            noise_std: 0.1,
        },
        model: ModelConfig {
            noise_var: 0.1,
            ..ModelConfig::default()
        },
        method,
        output: OutputConfig::default(),
        eval: EvalConfig::default(),
    }
}

#[test]
fn forced_no_change_beam_matches_vcl_run() {
    let never = MethodSpec::Vbs {
        broadening: BroadenSpec::Temper { beta: 0.5 },
        xi0: -1e9,
        beam_size: 3,
        diversify: true,
        celbo_temp: 1.0,
        prediction: PredictionSpec::Average,
        weight_rule: WeightSpec::Joint,
        celbo_score: false,
    };
    let (a, _) = run_in_memory(&config(never)).unwrap();
    let (b, _) = run_in_memory(&config(MethodSpec::Vcl)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_abs_diff_eq!(x.prediction, y.prediction, epsilon = 1e-9);
    }
}

#[test]
fn celbo_scoring_agrees_with_evidence_scoring() {
    let base = |celbo_score| MethodSpec::Vbs {
        broadening: BroadenSpec::Temper { beta: 0.3 },
        xi0: -1.0,
        beam_size: 3,
        diversify: false,
        celbo_temp: 1.0,
        prediction: PredictionSpec::Dominant,
        weight_rule: WeightSpec::Joint,
        celbo_score,
    };
    let (a, _) = run_in_memory(&config(base(false))).unwrap();
    let (b, _) = run_in_memory(&config(base(true))).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_abs_diff_eq!(x.prediction, y.prediction, epsilon = 1e-8);
    }
}
