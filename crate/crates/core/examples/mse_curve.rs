//! MSE of p̂ and MISE of f̂ against the true proportion for the
//! normal-exponential model (known truncated Normal(6, 1), unknown
//! Exponential(0.5)).
//!
//! Run with `cargo run --release --example mse_curve [n] [reps]`.

use semimix::experiments::{mse_curve, spearman, ExperimentSpec};
use semimix::model::{MixtureSpec, ParametricDensity};

fn main() -> semimix::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let mix = MixtureSpec::new(
        0.5,
        ParametricDensity::positive_trunc_normal(6.0, 1.0)?,
        ParametricDensity::exponential(0.5)?,
    )?;
    let template = ExperimentSpec::new(mix, n, reps, 7);
    let ps = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let (rows, _) = mse_curve(&template, &ps)?;
    println!("{:>5} {:>12} {:>12}", "p", "MSE(p̂)", "MISE(f̂)");
    for r in &rows {
        println!(
            "{:>5.2} {:>12.6} {:>12.6}",
            r.p,
            r.mse.unwrap_or(f64::NAN),
            r.mise.unwrap_or(f64::NAN)
        );
    }
    let mise: Vec<f64> = rows.iter().map(|r| r.mise.unwrap_or(f64::NAN)).collect();
    println!("Spearman(p, MISE) = {:.3}", spearman(&ps, &mise)?);
    Ok(())
}
