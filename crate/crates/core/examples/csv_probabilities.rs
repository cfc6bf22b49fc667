//! A recorded sensor log whose target is a fault probability. Targets are
//! regressed on the log-odds scale; predictions are mapped back through the
//! sigmoid and errors are measured as probabilities.
//!
//! Run from the repository root with `cargo run --example csv_probabilities`.

use std::path::Path;

use vbs::data::{load_csv_stream, CsvSchema, LogOddsFill};
use vbs::experiment::{drive, EvalConfig};
use vbs::learner::{BroadenSpec, MethodSpec, PredictionSpec, WeightSpec};
use vbs::{GaussianNat, LinearGaussian};

fn main() -> vbs::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sensors.csv");
    let schema = CsvSchema {
        features: vec!["temp".into(), "humidity".into(), "drift".into()],
        target: "p_fault".into(),
        probability_target: Some(LogOddsFill { lo: -6.0, hi: 6.0 }),
        standardize_prefix: Some(20),
        intercept: true,
    };
    let stream = load_csv_stream(&path, &schema)?;
    println!("{} rows, {} features after the intercept", stream.len(), stream.dim());

    let method = MethodSpec::Vbs {
        broadening: BroadenSpec::Temper { beta: 0.5 },
        xi0: -3.0,
        beam_size: 3,
        diversify: true,
        celbo_temp: 1.0,
        prediction: PredictionSpec::Dominant,
        weight_rule: WeightSpec::Joint,
        celbo_score: false,
    };
    let base = GaussianNat::isotropic(stream.dim(), 0.0, 1.0)?;
    let mut learner = method.build(base, LinearGaussian::new(1.0)?, false)?;
    let artifacts = drive(learner.as_mut(), &stream, &EvalConfig::default(), |r, _| {
        if r.step % 10 == 0 {
            println!("step {:>2}: predicted {:.3}, observed {:.3}", r.step, r.prediction, r.truth);
        }
        Ok(())
    })?;
    let s = artifacts.summary;
    println!("MCAE {:.4}, changes flagged at {:?}", s.final_mcae, s.detected_changes);
    Ok(())
}
