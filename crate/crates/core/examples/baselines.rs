//! Every implemented method on the same piecewise-linear stream, scored by
//! mean cumulative absolute error and predictive log-likelihood.
//!
//! Run with `cargo run --release --example baselines`.

use vbs::experiment::{run_in_memory, RunConfig};

const CONFIG: &str = r#"
seed = 5
[stream]
kind = "piecewise"
segments = 4
segment_len = 60
dim = 4
noise_std = 0.5
[model]
noise_var = 0.25
"#;

fn main() -> vbs::Result<()> {
    let methods = [
        r#"name = "vcl""#,
        r#"name = "lp""#,
        r#"name = "independent""#,
        r#"name = "bf"
beta = 0.9"#,
        r#"name = "bocd"
hazard = 0.02"#,
        r#"name = "vgs"
beta = 0.3
xi0 = -3.0"#,
        r#"name = "vbs"
xi0 = -3.0
beam_size = 3
diversify = true
broadening = { mode = "temper", beta = 0.3 }"#,
    ];
    println!("{:<12} {:>8} {:>10}", "method", "MCAE", "log-lik");
    for m in methods {
        let cfg = RunConfig::from_toml_str(&format!("{CONFIG}[method]\n{m}\n"))?;
        let (_, artifacts) = run_in_memory(&cfg)?;
        let s = artifacts.summary;
        let ll = s.mean_log_lik.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:<12} {:>8.4} {:>10}", s.method, s.final_mcae, ll);
    }
    Ok(())
}
