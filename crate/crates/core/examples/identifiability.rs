//! Checks the monotonicity condition `G(μ) = V(μ) / (μ - μ0)` strictly
//! increasing for power variance functions and for a tabulated one.
//!
//! Run with `cargo run --example identifiability`.

use semimix::identifiability::{check_g_monotone, VarianceFunction};

fn main() -> semimix::Result<()> {
    println!("V(μ) = μ^γ, μ0 = 0, μ in (0.1, 10)");
    for power in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        let r = check_g_monotone(
            &VarianceFunction::NefPvf { scale: 1.0, power },
            0.0,
            (0.1, 10.0),
            1000,
        )?;
        println!(
            "  γ = {power:<4} {}{}",
            if r.condition_holds { "holds" } else { "fails" },
            r.witness
                .map(|(a, b)| format!(" (witness {a:.3}..{b:.3})"))
                .unwrap_or_default()
        );
        for n in &r.notes {
            println!("      {n}");
        }
    }

    // V(μ) = 1 + μ²: G(μ) = μ + 1/μ has its minimum at μ = 1
    let mu: Vec<f64> = (0..=450).map(|i| 0.5 + i as f64 * 0.01).collect();
    let v = mu.iter().map(|m| 1.0 + m * m).collect();
    let tab = VarianceFunction::Tabulated { mu, v };
    for domain in [(0.5, 5.0), (1.0, 5.0)] {
        let r = check_g_monotone(&tab, 0.0, domain, 1000)?;
        println!(
            "V(μ) = 1 + μ² on {domain:?}: {}",
            if r.condition_holds { "holds" } else { "fails" }
        );
    }
    Ok(())
}
