//! Two regimes of a one-dimensional regression, one after the other.
//! Plain continual learning keeps averaging the old line into its belief;
//! greedy search with tempering notices the switch and moves on.
//!
//! Run with `cargo run --example online_regression`.

use vbs::data::StreamSpec;
use vbs::experiment::{drive, EvalConfig};
use vbs::learner::{MethodSpec, OnlineLearner};
use vbs::{GaussianNat, LinearGaussian};

fn run(method: &MethodSpec, stream: &vbs::data::Stream) -> vbs::Result<(f64, Vec<usize>)> {
    let base = GaussianNat::isotropic(stream.dim(), 0.0, 1.0)?;
    let lik = LinearGaussian::new(0.1)?;
    let mut learner: Box<dyn OnlineLearner> = method.build(base, lik, false)?;
    let eval = EvalConfig {
        last_n: Some(20),
        segment_len: None,
    };
    let artifacts = drive(learner.as_mut(), stream, &eval, |_, _| Ok(()))?;
    Ok((artifacts.summary.tail_mae.unwrap(), artifacts.summary.detected_changes))
}

fn main() -> vbs::Result<()> {
    let stream = StreamSpec::two_lines(7).generate()?;
    let truth = stream.truth.as_ref().unwrap();
    println!("{} steps, regime switch at step {:?}", stream.len(), truth.change_steps());

    let vcl = MethodSpec::Vcl;
    let vgs = MethodSpec::Vgs {
        beta: 1.0 / 3.5,
        xi0: (0.35f64 / 0.65).ln(),
        celbo_temp: 1.0,
    };
    for (name, m) in [("vcl", &vcl), ("vgs", &vgs)] {
        let (tail, changes) = run(m, &stream)?;
        println!("{name}: error over the second regime {tail:.4}, changes flagged at {changes:?}");
    }
    Ok(())
}
