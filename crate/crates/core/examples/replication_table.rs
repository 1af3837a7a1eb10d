//! Normal-normal replication study: known Normal(0, 1), unknown Normal(6, 1),
//! p in {0.3, 0.5}, n in {500, 1000}, Silverman bandwidth.
//!
//! Run with `cargo run --release --example replication_table [reps]`.

use semimix::experiments::{run_experiment, ExperimentSpec};
use semimix::model::{MixtureSpec, ParametricDensity};

fn main() -> semimix::Result<()> {
    let reps = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    println!(
        "{:>4} {:>5} {:>18} {:>18} {:>8}",
        "p", "n", "p̂ mean (sd)", "μ̂ mean (sd)", "failed"
    );
    for p in [0.3, 0.5] {
        for n in [500, 1000] {
            let mix = MixtureSpec::new(
                p,
                ParametricDensity::normal(0.0, 1.0)?,
                ParametricDensity::normal(6.0, 1.0)?,
            )?;
            let s = run_experiment(&ExperimentSpec::new(mix, n, reps, 2024))?;
            let a = &s.aggregates;
            println!(
                "{p:>4} {n:>5} {:>9.4} ({:.4}) {:>9.4} ({:.4}) {:>8}",
                a.mean_p.unwrap_or(f64::NAN),
                a.sd_p.unwrap_or(f64::NAN),
                a.mean_mu.unwrap_or(f64::NAN),
                a.sd_mu.unwrap_or(f64::NAN),
                a.n_failed
            );
        }
    }
    Ok(())
}
