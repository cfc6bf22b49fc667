//! Shy greedy search reports nothing while a segment is ongoing and emits
//! the fitted parameters of a segment once the next one has started.
//!
//! Run with `cargo run --example shy_segments`.

use vbs::data::{gen_step_mean};
use vbs::search::ShyGreedy;
use vbs::{GaussianNat, LinearGaussian, SearchConfig};

fn main() -> vbs::Result<()> {
    let stream = gen_step_mean(120, 0.5, 2.0, 3, 0.0, 11)?;
    let truth = stream.truth.as_ref().unwrap();
    println!("true changes at {:?}", truth.change_steps());

    let cfg = SearchConfig::greedy(0.1, (0.02f64 / 0.98).ln());
    let mut shy = ShyGreedy::new(GaussianNat::isotropic(1, 0.0, 4.0)?, LinearGaussian::new(0.25)?, cfg)?;
    let report = |e: &vbs::search::ShyEmission| {
        println!(
            "segment {:>3}..={:<3} level {:+.3} ± {:.3}",
            e.segment_start, e.segment_end, e.mean[0], e.std[0]
        )
    };
    for batch in &stream.batches {
        if let (Some(e), _) = shy.observe(batch)? {
            report(&e);
        }
    }
    report(&shy.finish()?);
    Ok(())
}
