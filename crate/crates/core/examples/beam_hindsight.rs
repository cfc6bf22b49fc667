//! A beam keeps several change histories alive, so evidence that arrives
//! later can promote a history that looked worse when it was first made.
//! This prints the dominant history after every step on a step-mean stream.
//!
//! Run with `cargo run --example beam_hindsight`.

use vbs::data::StreamSpec;
use vbs::{BeamSearch, Broadening, GaussianNat, LinearGaussian, SearchConfig};

fn main() -> vbs::Result<()> {
    let stream = StreamSpec::step_mean(3).generate()?;
    let truth = stream.truth.as_ref().unwrap();
    println!("true changes at {:?}", truth.change_steps());

    let cfg = SearchConfig::new(
        Broadening::Additive {
            diffusion: 1.0,
            dt: 1.0,
        },
        (0.1f64 / 0.9).ln(),
        4,
    )
    .with_traces(true);
    let mut search = BeamSearch::new(GaussianNat::isotropic(1, 0.0, 1.0)?, LinearGaussian::new(0.25)?, cfg)?;

    let mut previous = String::new();
    for (t, batch) in stream.batches.iter().enumerate() {
        search.observe(batch)?;
        let dom = search.beam().dominant();
        let trace = dom.trace_string().unwrap();
        let reranked = !trace.starts_with(&previous);
        println!(
            "{:>3}  {trace:<30}  w={:.3}  H={:.3}{}",
            t + 1,
            dom.weight(),
            search.beam().weight_entropy(),
            if reranked { "  <- history revised" } else { "" }
        );
        previous = trace;
    }
    Ok(())
}
