//! Fits the normal-gamma mixture: known truncated Normal(6, 1), unknown
//! Gamma(2, 1), true p = 0.6, n = 500, started from p = 0.2 and Gamma(4, 2)
//! with the triangular kernel and Silverman's bandwidth.
//!
//! Run with `cargo run --release --example fit_normal_gamma [seed]`.

use semimix::bandwidth::silverman;
use semimix::mm::{fit, FInit, MmConfig};
use semimix::model::{ise, moment, sample_mixture, MixtureSpec, ParametricDensity};
use semimix::smoothing::Kernel;

fn main() -> semimix::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let known = ParametricDensity::positive_trunc_normal(6.0, 1.0)?;
    let unknown = ParametricDensity::gamma(2.0, 1.0)?;
    let spec = MixtureSpec::new(0.6, known, unknown)?;
    let sample = sample_mixture(&spec, 500, seed)?;

    let h = silverman(&sample)?;
    let mut cfg = MmConfig::new(Kernel::Triangular, h);
    cfg.p_init = 0.2;
    cfg.f_init = FInit::Parametric(ParametricDensity::gamma(4.0, 2.0)?);
    cfg.tol = 1e-5;

    let res = fit(&sample, &known, &cfg)?;
    println!("seed {seed}: h = {:.4}", h.get());
    println!(
        "p̂ = {:.4} after {} iterations ({:?})",
        res.p_hat, res.n_iters, res.stop_reason
    );
    println!(
        "mean of f̂ = {:.4} (true 2), ISE = {:.5}",
        moment(&res.f_hat, 1)?,
        ise(&res.f_hat, &unknown)
    );
    let first = res.trace.first().map(|e| e.objective).unwrap_or(f64::NAN);
    let last = res.trace.last().map(|e| e.objective).unwrap_or(f64::NAN);
    println!("objective {first:.4} -> {last:.4}");

    println!("\n{:>6} {:>10} {:>10}", "x", "f̂(x)", "f(x)");
    for x in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
        println!(
            "{x:>6.2} {:>10.4} {:>10.4}",
            res.f_hat.eval(x),
            unknown.pdf(x)
        );
    }
    for w in &res.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
