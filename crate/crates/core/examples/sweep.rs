//! A small grid over the tempering strength and the change prior, run in
//! parallel. Each point gets its own output directory plus one row in
//! `sweep.csv`.
//!
//! Run with `cargo run --release --example sweep`.

use vbs::experiment::{split_sweep, sweep};

const CONFIG: &str = r#"
seed = 7
[stream]
kind = "two_lines"
[model]
noise_var = 0.1
[method]
name = "vgs"
beta = 0.3
xi0 = -1.0
[eval]
last_n = 20
[grid]
"method.beta" = [0.05, 0.2, 0.5, 0.9]
"method.xi0" = [-3.0, -0.6]
"#;

fn main() -> vbs::Result<()> {
    let value: toml::Value = toml::from_str(CONFIG).map_err(|e| vbs::Error::Config(e.to_string()))?;
    let (base, grid) = split_sweep(value)?;
    let out = std::env::temp_dir().join("vbs-sweep-example");
    let rows = sweep(&base, &grid, &out, true)?;
    for row in rows {
        let point: Vec<String> = row.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match row.outcome {
            Ok(s) => println!("{:<32} tail error {:.4}", point.join(" "), s.tail_mae.unwrap()),
            Err(e) => println!("{:<32} failed: {e}", point.join(" ")),
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}
