//! Run-length filtering with a constant hazard. Prints the most probable
//! number of steps since the last changepoint, and its mass, whenever that
//! run length fails to grow by one.
//!
//! Run with `cargo run --example bocd`.

use vbs::baselines::BocdState;
use vbs::data::gen_step_mean;
use vbs::{GaussianNat, LinearGaussian};

fn main() -> vbs::Result<()> {
    let stream = gen_step_mean(60, 0.3, 2.0, 2, 0.0, 4)?;
    let truth = stream.truth.as_ref().unwrap();
    println!("true changes at {:?}", truth.change_steps());

    let base = GaussianNat::isotropic(1, 0.0, 4.0)?;
    let lik = LinearGaussian::new(0.09)?;
    let mut state = BocdState::new(base.clone(), 0.05, 64)?;
    let mut prev = 0;
    for (t, batch) in stream.batches.iter().enumerate() {
        state = state.step(&lik, &base, batch)?;
        let map = state.map_run_length();
        let grew = map == prev + 1;
        prev = map;
        if grew {
            continue;
        }
        let mass = state
            .distribution()
            .into_iter()
            .find(|&(r, _)| r == map)
            .map_or(0.0, |(_, p)| p);
        let bar = "#".repeat((mass * 40.0).round() as usize);
        println!("{:>3}  run {map:>3}  p={mass:.3} {bar}", t + 1);
    }
    Ok(())
}
