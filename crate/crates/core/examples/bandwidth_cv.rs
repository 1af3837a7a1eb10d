//! Warm-up cross-validation of the bandwidth on a Normal(6, 1) + Gamma(2, 1)
//! mixture with p = 0.5 and n = 500 (K = 50 folds, ±0.4 around Silverman's
//! bandwidth in 21 steps, T = 5 warm-up iterations), followed by the full fit
//! continued at the selected bandwidth.
//!
//! Run with `cargo run --release --example bandwidth_cv [seed] [T]`.

use semimix::bandwidth::{cv_fit, silverman, AfterCv, CvConfig};
use semimix::mm::MmConfig;
use semimix::model::{sample_mixture, MixtureSpec, ParametricDensity};
use semimix::smoothing::Kernel;

fn main() -> semimix::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let warmup: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let known = ParametricDensity::normal(6.0, 1.0)?;
    let spec = MixtureSpec::new(0.5, known, ParametricDensity::gamma(2.0, 1.0)?)?;
    let sample = sample_mixture(&spec, 500, seed)?;
    let cfg = MmConfig::new(Kernel::Triangular, silverman(&sample)?);
    let cv = CvConfig {
        warmup,
        fold_seed: seed,
        ..CvConfig::default()
    };

    let (curve, res) = cv_fit(&sample, &known, &cfg, &cv, AfterCv::Continue)?;
    println!("{:>8} {:>14} {:>14}", "h", "CV(h)", "||f||²");
    for p in &curve.points {
        println!(
            "{:>8.4} {:>14.6} {:>14.6}{}",
            p.h,
            p.cv.unwrap_or(f64::NAN),
            p.l2_norm_sq.unwrap_or(f64::NAN),
            if p.h == curve.h_star { "  <- h*" } else { "" }
        );
    }
    println!(
        "\nh* = {:.4} (Silverman {:.4}, interior minimum: {})",
        curve.h_star,
        curve.h_silverman,
        curve.has_interior_minimum()
    );
    println!("p̂ = {:.4} after {} iterations", res.p_hat, res.n_iters);
    Ok(())
}
