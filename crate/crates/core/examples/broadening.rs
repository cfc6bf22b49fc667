//! The three ways of widening a belief before it meets data that may come
//! from a new regime, and how much each one raises the entropy.
//!
//! Run with `cargo run --example broadening`.

use nalgebra::{DMatrix, DVector};
use vbs::{Broadening, GaussianNat};

fn main() -> vbs::Result<()> {
    let mean = DVector::from_vec(vec![1.0, -2.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
    let belief = GaussianNat::from_moments(mean, cov)?;
    let base = GaussianNat::isotropic(2, 0.0, 1.0)?;
    println!("belief: mean {:?}, entropy {:.4}", belief.mean()?.as_slice(), belief.entropy()?);

    println!("\ntempering keeps the mean and adds -d/2 ln β nats:");
    for beta in [1.0, 0.5, 0.1, 0.01] {
        let t = belief.temper(beta)?;
        let gain = t.entropy()? - belief.entropy()?;
        println!(
            "  β = {beta:<5} entropy gain {gain:.4} (closed form {:.4}), mean {:?}",
            0.0 - beta.ln(),
            t.mean()?.as_slice()
        );
    }

    println!("\nadditive diffusion adds D·dt to every variance:");
    for d in [0.0, 0.1, 1.0] {
        let b = belief.additive_broaden(d, 1.0)?;
        println!("  D = {d:<4} stds {:?}", b.std_devs()?.as_slice());
    }

    println!("\nforgetting interpolates toward the base prior (β = 1 keeps the belief):");
    for beta in [1.0, 0.5, 0.0] {
        let f = Broadening::Forget {
            beta,
            base: std::sync::Arc::new(base.clone()),
        }
        .apply(&belief)?;
        println!("  β = {beta:<3} mean {:?}, KL to base {:.4}", f.mean()?.as_slice(), f.kl_divergence(&base)?);
    }
    Ok(())
}
