//! Two outputs sharing the same inputs. Stacking the targets into one
//! scalar regression over concatenated weights gives the same posterior as
//! two independent models, so the change-aware machinery applies unchanged.
//!
//! Run with `cargo run --example vector_targets`.

use nalgebra::{DMatrix, DVector};
use vbs::models::{stack_multi_target, BlrModel, MultiTargetBlr};
use vbs::{GaussianNat, StreamBatch};

fn main() -> vbs::Result<()> {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
    let y = DMatrix::from_row_slice(4, 2, &[0.1, 3.0, 1.2, 2.1, 1.9, 0.8, 3.1, 0.2]);
    let noise_var = 0.1;

    let stacked = stack_multi_target(&x, &y)?;
    let joint = BlrModel::new(GaussianNat::isotropic(4, 0.0, 1.0)?, noise_var)?.update(&stacked)?;

    let per_output: Vec<StreamBatch> = (0..2)
        .map(|j| StreamBatch::new(x.clone(), y.column(j).into_owned(), None))
        .collect::<vbs::Result<_>>()?;
    let models = (0..2)
        .map(|_| BlrModel::new(GaussianNat::isotropic(2, 0.0, 1.0)?, noise_var))
        .collect::<vbs::Result<_>>()?;
    let split = MultiTargetBlr::new(models).update(&per_output)?;

    println!("stacked weights  {:?}", joint.posterior.mean()?.as_slice());
    for (j, m) in split.models.iter().enumerate() {
        println!("output {j} weights {:?}", m.posterior.mean()?.as_slice());
    }
    let query = DVector::from_vec(vec![1.0, 1.5]);
    for (j, p) in split.predict(&query)?.iter().enumerate() {
        println!("output {j} at x=1.5: {:.4} ± {:.4}", p.mean, p.std());
    }
    Ok(())
}
