//! Ordinary truncation tends to fill the beam with near-copies that differ
//! only in their newest bit. Diversified truncation keeps the best child of
//! each parent before it fills the rest, so distinct histories survive.
//!
//! Run with `cargo run --example diversified_beam`.

use vbs::data::{gen_piecewise, FeatureKind};
use vbs::eval::{mcae, StepRecord};
use vbs::{BeamSearch, Broadening, GaussianNat, LinearGaussian, SearchConfig};

fn main() -> vbs::Result<()> {
    let stream = gen_piecewise(5, 100, 8, 0.5, 1.0, FeatureKind::Gaussian, 1)?;
    let xi0 = (0.05f64 / 0.95).ln();
    for diversify in [false, true] {
        let cfg = SearchConfig::new(Broadening::Temper { beta: 0.5 }, xi0, 6)
            .with_diversify(diversify)
            .with_traces(true);
        let mut search = BeamSearch::new(GaussianNat::isotropic(8, 0.0, 1.0)?, LinearGaussian::new(0.25)?, cfg)?;
        let mut records = Vec::new();
        for (t, batch) in stream.batches.iter().enumerate() {
            let x = batch.row(0);
            records.push(StepRecord::new(t + 1, search.point_predict(&x)?, batch.targets()[0]));
            search.observe(batch)?;
        }
        let traces: Vec<String> = search
            .beam()
            .hypotheses
            .iter()
            .filter_map(|h| h.trace_string())
            .collect();
        let last_change = |s: &String| s.rfind('1').map_or(0, |i| i + 1);
        let mut distinct: Vec<usize> = traces.iter().map(last_change).collect();
        distinct.sort_unstable();
        distinct.dedup();
        println!(
            "diversify={diversify:<5} MCAE {:.4}  last-change steps across the beam {distinct:?}",
            mcae(&records)?
        );
    }
    Ok(())
}
