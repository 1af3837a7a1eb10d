//! Numerical check of the sufficient identifiability condition: with all
//! candidate means on one side of the known component's mean `μ0`, the
//! mixture is identifiable when `G(μ) = V(μ) / (μ - μ0)` is strictly
//! increasing, `V` being the variance function of the unknown family.
//!
//! For natural exponential families with power variance `V(μ) = α μ^γ` and
//! `μ0 = 0`, `G(μ) = α μ^(γ-1)`, which is strictly increasing on `μ > 0`
//! exactly when `γ > 1` (for `α > 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum increment of `G` between adjacent check points.
pub const STRICTNESS_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceFunction {
    /// `V(μ) = scale · μ^power`.
    NefPvf { scale: f64, power: f64 },
    /// Piecewise-linear through `(mu[i], v[i])`.
    Tabulated { mu: Vec<f64>, v: Vec<f64> },
}

impl VarianceFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            VarianceFunction::NefPvf { scale, power } => {
                if *scale == 0.0 || !scale.is_finite() || !power.is_finite() {
                    return Err(Error::Identifiability(format!(
                        "power variance function needs finite nonzero scale and finite power, got ({scale}, {power})"
                    )));
                }
            }
            VarianceFunction::Tabulated { mu, v } => {
                if mu.len() != v.len() || mu.len() < 2 {
                    return Err(Error::Identifiability(
                        "tabulated variance function needs at least two (mu, V) pairs of equal length".into(),
                    ));
                }
                if mu.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Identifiability(
                        "tabulated mu values must be strictly increasing".into(),
                    ));
                }
                if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Identifiability(
                        "tabulated V values must be positive and finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, mu: f64) -> Result<f64> {
        let v = match self {
            VarianceFunction::NefPvf { scale, power } => scale * mu.powf(*power),
            VarianceFunction::Tabulated { mu: xs, v } => {
                let (first, last) = (xs[0], xs[xs.len() - 1]);
                if mu < first || mu > last {
                    return Err(Error::Identifiability(format!(
                        "mu = {mu} lies outside the tabulated range [{first}, {last}]"
                    )));
                }
                let k = xs.partition_point(|&x| x <= mu).clamp(1, xs.len() - 1);
                let t = (mu - xs[k - 1]) / (xs[k] - xs[k - 1]);
                v[k - 1] + t * (v[k] - v[k - 1])
            }
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Identifiability(format!(
                "variance function is not positive at mu = {mu} (V = {v})"
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub condition_holds: bool,
    /// First adjacent pair `(μ1, μ2)`, `μ1 < μ2`, with `G(μ2) - G(μ1) <= margin`.
    pub witness: Option<(f64, f64)>,
    pub notes: Vec<String>,
}

/// Evaluates `G` at `n_check` equispaced means in `domain` and reports
/// whether it is strictly increasing.
pub fn check_g_monotone(
    v: &VarianceFunction,
    mu_f0: f64,
    domain: (f64, f64),
    n_check: usize,
) -> Result<IdentifiabilityReport> {
    v.validate()?;
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Identifiability(format!(
            "domain must satisfy lo < hi, got ({lo}, {hi})"
        )));
    }
    if !mu_f0.is_finite() || (lo <= mu_f0 && mu_f0 <= hi) {
        return Err(Error::Identifiability(format!(
            "domain ({lo}, {hi}) must lie entirely above or below mu_f0 = {mu_f0}"
        )));
    }
    if n_check < 2 {
        return Err(Error::Identifiability(
            "need at least two check points".into(),
        ));
    }
    let step = (hi - lo) / (n_check - 1) as f64;
    let mus: Vec<f64> = (0..n_check)
        .map(|k| {
            if k + 1 == n_check {
                hi
            } else {
                lo + k as f64 * step
            }
        })
        .collect();
    let g: Vec<f64> = mus
        .iter()
        .map(|&m| v.eval(m).map(|val| val / (m - mu_f0)))
        .collect::<Result<_>>()?;

    let mut witness = None;
    let mut near_flat = 0usize;
    for k in 0..n_check - 1 {
        let inc = g[k + 1] - g[k];
        if inc <= STRICTNESS_MARGIN {
            witness = Some((mus[k], mus[k + 1]));
            break;
        }
        if inc < 1e-8 * g[k].abs().max(1.0) {
            near_flat += 1;
        }
    }

    let mut notes = Vec::new();
    if near_flat > 0 {
        notes.push(format!(
            "{near_flat} step(s) increase G by less than 1e-8 relative; monotonicity there is close to rounding level"
        ));
    }
    if let VarianceFunction::NefPvf { power, .. } = v {
        if *power == 1.0 {
            notes.push("power 1 is the Poisson family, a discrete family outside the estimator's scope; G is constant".into());
        } else if *power < 0.0 || (*power > 0.0 && *power < 1.0) {
            notes.push(format!(
                "power {power} does not correspond to any natural exponential family; G was evaluated formally"
            ));
        }
    }
    if let Some((a, b)) = witness {
        notes.push(format!(
            "G fails to increase strictly between mu = {a} and mu = {b}"
        ));
    }
    Ok(IdentifiabilityReport {
        condition_holds: witness.is_none(),
        witness,
        notes,
    })
}
