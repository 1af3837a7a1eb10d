//! Parametric densities, grid-tabulated densities, seeded samplers and
//! quadrature functionals (moments, integrated squared error).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::{erf, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::smoothing::{Grid, GridFn};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Fraction of a density's mass a grid must capture in [`tabulate`].
pub const MIN_COVERAGE: f64 = 0.995;

/// Renormalization factors further than this from one attach a warning.
pub const RENORM_WARN: f64 = 1e-3;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Closed-form density used for the known component and for simulation truths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParametricDensity {
    Normal {
        mu: f64,
        sigma: f64,
    },
    /// Normal restricted to `(0, ∞)` and renormalized by its positive-tail mass.
    PositiveTruncNormal {
        mu: f64,
        sigma: f64,
    },
    /// Shape/rate parametrization.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Exponential {
        rate: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
}

impl ParametricDensity {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        ParametricDensity::Normal { mu, sigma }.validated()
    }

    pub fn positive_trunc_normal(mu: f64, sigma: f64) -> Result<Self> {
        ParametricDensity::PositiveTruncNormal { mu, sigma }.validated()
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        ParametricDensity::Gamma { shape, rate }.validated()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        ParametricDensity::Exponential { rate }.validated()
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        ParametricDensity::Uniform { a, b }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        use ParametricDensity::*;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Normal { mu, sigma } => {
                if !mu.is_finite() || !pos(sigma) {
                    return bad(format!(
                        "normal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    ));
                }
            }
            PositiveTruncNormal { mu, sigma } => {
                if !mu.is_finite() || !pos(sigma) {
                    return bad(format!(
                        "positive truncated normal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    ));
                }
                if self.positive_mass() < 1e-3 {
                    return bad(format!(
                        "positive truncated normal ({mu}, {sigma}) has almost no mass above zero"
                    ));
                }
            }
            Gamma { shape, rate } => {
                if !pos(shape) || !pos(rate) {
                    return bad(format!(
                        "gamma needs shape > 0 and rate > 0, got ({shape}, {rate})"
                    ));
                }
            }
            Exponential { rate } => {
                if !pos(rate) {
                    return bad(format!("exponential needs rate > 0, got {rate}"));
                }
            }
            Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad(format!("uniform needs finite a < b, got ({a}, {b})"));
                }
            }
        }
        Ok(())
    }

    fn positive_mass(&self) -> f64 {
        match *self {
            ParametricDensity::PositiveTruncNormal { mu, sigma } => std_normal_cdf(mu / sigma),
            _ => 1.0,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        use ParametricDensity::*;
        match *self {
            Normal { mu, sigma } => std_normal_pdf((x - mu) / sigma) / sigma,
            PositiveTruncNormal { mu, sigma } => {
                if x > 0.0 {
                    std_normal_pdf((x - mu) / sigma) / (sigma * self.positive_mass())
                } else {
                    0.0
                }
            }
            Gamma { shape, rate } => {
                if x < 0.0 {
                    0.0
                } else if x == 0.0 {
                    if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        rate
                    } else {
                        0.0
                    }
                } else {
                    ((shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(shape)).exp()
                }
            }
            Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Uniform { a, b } => {
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        use ParametricDensity::*;
        match *self {
            Normal { mu, sigma } => std_normal_cdf((x - mu) / sigma),
            PositiveTruncNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let lower = std_normal_cdf(-mu / sigma);
                    (std_normal_cdf((x - mu) / sigma) - lower) / self.positive_mass()
                }
            }
            Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    statrs::function::gamma::gamma_lr(shape, rate * x)
                }
            }
            Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        use ParametricDensity::*;
        match *self {
            Normal { mu, .. } => mu,
            PositiveTruncNormal { mu, sigma } => {
                let a = -mu / sigma;
                mu + sigma * std_normal_pdf(a) / self.positive_mass()
            }
            Gamma { shape, rate } => shape / rate,
            Exponential { rate } => 1.0 / rate,
            Uniform { a, b } => 0.5 * (a + b),
        }
    }

    /// True when the density vanishes on the negative half-line.
    pub fn is_nonnegative(&self) -> bool {
        use ParametricDensity::*;
        match *self {
            Normal { .. } => false,
            PositiveTruncNormal { .. } | Gamma { .. } | Exponential { .. } => true,
            Uniform { a, .. } => a >= 0.0,
        }
    }

    /// Interval holding at least 99.99% of the mass.
    pub fn default_support(&self) -> (f64, f64) {
        use ParametricDensity::*;
        match *self {
            Normal { mu, sigma } => (mu - 6.0 * sigma, mu + 6.0 * sigma),
            PositiveTruncNormal { mu, sigma } => ((mu - 6.0 * sigma).max(0.0), mu + 6.0 * sigma),
            Gamma { shape, rate } => {
                let q = GammaDist::new(shape, rate)
                    .map(|g| g.inverse_cdf(0.9999))
                    .unwrap_or(shape / rate + 20.0 * shape.sqrt() / rate);
                (0.0, q + 5.0)
            }
            Exponential { rate } => (0.0, -(1e-4f64).ln() / rate + 5.0),
            Uniform { a, b } => (a, b),
        }
    }

    pub fn default_grid(&self, n_points: usize) -> Result<Grid> {
        let (lo, hi) = self.default_support();
        Grid::new(lo, hi, n_points)
    }

    /// One draw using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use ParametricDensity::*;
        match *self {
            Normal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            PositiveTruncNormal { mu, sigma } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let x = mu + sigma * z;
                if x > 0.0 {
                    break x;
                }
            },
            Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            Exponential { rate } => {
                let u: f64 = rng.random();
                -(-u).ln_1p() / rate
            }
            Uniform { a, b } => {
                let u: f64 = rng.random();
                a + (b - a) * u
            }
        }
    }

    pub fn label(&self) -> String {
        use ParametricDensity::*;
        match *self {
            Normal { mu, sigma } => format!("Normal({mu}, {sigma})"),
            PositiveTruncNormal { mu, sigma } => format!("PositiveTruncNormal({mu}, {sigma})"),
            Gamma { shape, rate } => format!("Gamma({shape}, {rate})"),
            Exponential { rate } => format!("Exponential({rate})"),
            Uniform { a, b } => format!("Uniform({a}, {b})"),
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub source: String,
}

/// Observed data: a nonempty array of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Sample {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(index) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Sample {
            points,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, seed: u64, source: impl Into<String>) -> Self {
        self.provenance = Some(Provenance {
            seed,
            source: source.into(),
        });
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The points in ascending order. Sums over this order do not depend on
    /// how the input was arranged.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.points.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn mean(&self) -> f64 {
        self.sorted().iter().sum::<f64>() / self.len() as f64
    }

    /// Standard deviation with divisor `n - 1` (zero for a single point).
    pub fn sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.sorted().iter().map(|x| (x - m) * (x - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Two-component mixture `(1 - p) f0 + p f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub p: f64,
    pub known: ParametricDensity,
    pub unknown: ParametricDensity,
}

impl MixtureSpec {
    /// `p` may sit on either end of `[0, 1]` so that one-component samples
    /// can be drawn.
    pub fn new(p: f64, known: ParametricDensity, unknown: ParametricDensity) -> Result<Self> {
        let spec = MixtureSpec { p, known, unknown };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "mixing proportion must lie in [0, 1], got {}",
                self.p
            )));
        }
        self.known.validate()?;
        self.unknown.validate()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (1.0 - self.p) * self.known.pdf(x) + self.p * self.unknown.pdf(x)
    }
}

/// `n` i.i.d. draws from `d`; identical for identical `(d, n, seed)`.
pub fn sample(d: &ParametricDensity, n: usize, seed: u64) -> Result<Sample> {
    d.validate()?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng: ChaCha8Rng = substream(seed, 0);
    let points = (0..n).map(|_| d.draw(&mut rng)).collect();
    Ok(Sample::new(points)?.with_provenance(seed, d.label()))
}

/// Streams used by [`sample_mixture`].
const STREAM_LABELS: u64 = 1;
const STREAM_KNOWN: u64 = 2;
const STREAM_UNKNOWN: u64 = 3;

/// Draws from the mixture: labels, known draws and unknown draws each come
/// from their own substream of `seed`.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut labels: ChaCha8Rng = substream(seed, STREAM_LABELS);
    let mut known: ChaCha8Rng = substream(seed, STREAM_KNOWN);
    let mut unknown: ChaCha8Rng = substream(seed, STREAM_UNKNOWN);
    let points = (0..n)
        .map(|_| {
            let u: f64 = labels.random();
            if u < spec.p {
                spec.unknown.draw(&mut unknown)
            } else {
                spec.known.draw(&mut known)
            }
        })
        .collect();
    let source = format!(
        "{}*{} + {}*{}",
        1.0 - spec.p,
        spec.known.label(),
        spec.p,
        spec.unknown.label()
    );
    Ok(Sample::new(points)?.with_provenance(seed, source))
}

/// Nonnegative function on a grid with unit trapezoidal mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub table: GridFn,
    /// Trapezoidal mass before normalization.
    pub raw_mass: f64,
}

impl GridDensity {
    /// Rescales `table` to unit mass, recording the original mass.
    pub fn normalize(table: GridFn) -> Result<Self> {
        if let Some(j) = table.values.iter().position(|v| *v < 0.0) {
            return Err(Error::InvalidGrid(format!(
                "negative density value at node {j}"
            )));
        }
        let raw_mass = table.integral();
        if !(raw_mass > 0.0) || !raw_mass.is_finite() {
            return Err(Error::DegenerateFit(format!(
                "density has no mass on the grid (mass = {raw_mass})"
            )));
        }
        let values = table.values.iter().map(|v| v / raw_mass).collect();
        Ok(GridDensity {
            table: GridFn::new(table.grid, values)?,
            raw_mass,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.table.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.table.values
    }

    pub fn mass(&self) -> f64 {
        self.table.integral()
    }

    /// Linear interpolation, zero off the grid.
    pub fn eval(&self, x: f64) -> f64 {
        self.table.interpolate(x)
    }

    /// A note when the normalization moved the mass by more than [`RENORM_WARN`].
    pub fn renormalization_warning(&self) -> Option<String> {
        ((self.raw_mass - 1.0).abs() > RENORM_WARN).then(|| {
            format!(
                "grid renormalization factor {:.6} differs from 1 by more than {RENORM_WARN}",
                self.raw_mass
            )
        })
    }
}

/// Tabulates `d` on `[lo, hi]` and renormalizes to unit trapezoidal mass.
///
/// Rejects grids that miss more than 0.5% of the analytic mass.
pub fn tabulate(d: &ParametricDensity, lo: f64, hi: f64, n_points: usize) -> Result<GridDensity> {
    d.validate()?;
    let grid = Grid::new(lo, hi, n_points)?;
    let captured = d.cdf(hi) - d.cdf(lo);
    if captured < MIN_COVERAGE {
        return Err(Error::InsufficientCoverage { lo, hi, captured });
    }
    let out = tabulate_on(d, grid)?;
    if let Some(w) = out.renormalization_warning() {
        log::warn!("tabulating {}: {w}", d.label());
    }
    Ok(out)
}

/// Tabulates `d` on `grid` without a coverage check (used for initializers,
/// whose support may be wider than the data grid).
pub fn tabulate_on(d: &ParametricDensity, grid: Grid) -> Result<GridDensity> {
    let table = GridFn::from_fn(grid, |x| {
        let v = d.pdf(x);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    })?;
    GridDensity::normalize(table)
}

/// `∫ x^k f(x) dx` by trapezoidal quadrature.
pub fn moment(f: &GridDensity, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("moment order must be >= 1".into()));
    }
    let g = f.grid();
    Ok((0..g.n_points)
        .map(|j| g.weight(j) * g.x(j).powi(k as i32) * f.values()[j])
        .sum())
}

/// `∫ (f - g_true)^2 dx` over the union of the grid and the truth's default
/// support; `f` is taken as zero off its grid.
pub fn ise(f: &GridDensity, g_true: &ParametricDensity) -> f64 {
    let g = f.grid();
    let on_grid: f64 = (0..g.n_points)
        .map(|j| {
            let d = f.values()[j] - finite_pdf(g_true, g.x(j));
            g.weight(j) * d * d
        })
        .sum();
    let (tlo, thi) = g_true.default_support();
    let mut off_grid = 0.0;
    for (a, b) in [(tlo, g.lo.min(thi)), (g.hi.max(tlo), thi)] {
        if b > a {
            let n = (((b - a) / g.step()).ceil() as usize).max(64) + 1;
            if let Ok(tail) = Grid::new(a, b, n) {
                let sq: Vec<f64> = (0..n)
                    .map(|j| finite_pdf(g_true, tail.x(j)).powi(2))
                    .collect();
                off_grid += tail.integrate(&sq);
            }
        }
    }
    on_grid + off_grid
}

fn finite_pdf(d: &ParametricDensity, x: f64) -> f64 {
    let v = d.pdf(x);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}
