//! Kernels and the two smoothing operators on uniformly tabulated functions.
//!
//! The linear smoother is `S f(x) = ∫ K_h(x - u) f(u) du` and the nonlinear
//! smoother is `N f(x) = exp(S log f(x))`. Both are evaluated by trapezoidal
//! quadrature over a [`Grid`]. The quadrature weights of the kernel at each
//! evaluation point are rescaled so that they sum to exactly one; with a
//! padded grid this only removes discretization error, and it makes the
//! discrete operators preserve constants and satisfy Jensen's inequality
//! exactly (`N f <= S f` pointwise).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Unit-bandwidth smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `max(0, 1 - |u|)`
    Triangular,
    /// Standard normal density, truncated at `|u| <= 6` in quadrature loops.
    Gaussian,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Triangular => (1.0 - u.abs()).max(0.0),
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// Half-width of the region (in units of `h`) over which quadrature runs.
    pub fn support_radius(self) -> f64 {
        match self {
            Kernel::Triangular => 1.0,
            Kernel::Gaussian => 6.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Triangular => "triangular",
            Kernel::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" => Ok(Kernel::Triangular),
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            other => Err(Error::InvalidParameter(format!(
                "unknown kernel `{other}` (expected triangular or gaussian)"
            ))),
        }
    }
}

/// A strictly positive, finite bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Bandwidth(h))
        } else {
            Err(Error::InvalidBandwidth {
                h,
                reason: "bandwidth must be positive and finite".into(),
            })
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Bandwidth::new(h)
    }
}

impl From<Bandwidth> for f64 {
    fn from(h: Bandwidth) -> f64 {
        h.0
    }
}

/// `K(u)` for the unit-bandwidth kernel.
pub fn kernel_eval(kernel: Kernel, u: f64) -> f64 {
    kernel.eval(u)
}

/// `K_h(x) = K(x / h) / h`.
pub fn rescaled_eval(kernel: Kernel, h: Bandwidth, x: f64) -> f64 {
    let h = h.get();
    kernel.eval(x / h) / h
}

/// Uniform grid over `[lo, hi]` with `n_points` abscissae including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidGrid(format!(
                "need finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {n_points}"
            )));
        }
        Ok(Grid { lo, hi, n_points })
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n_points {
            self.hi
        } else {
            self.lo + j as f64 * self.step()
        }
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Trapezoidal quadrature weight of node `j`.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        let inner: f64 = values[1..values.len() - 1].iter().sum();
        self.step() * (inner + 0.5 * (values[0] + values[values.len() - 1]))
    }

    /// Node indices whose abscissae lie within `radius` of `x`, clamped to the grid.
    fn node_range(&self, x: f64, radius: f64) -> (usize, usize) {
        let s = self.step();
        let last = (self.n_points - 1) as f64;
        let a = ((x - radius - self.lo) / s).ceil().clamp(0.0, last) as usize;
        let b = ((x + radius - self.lo) / s).floor().clamp(0.0, last) as usize;
        (a, b)
    }

    /// Default grid spanning the data padded by the kernel reach.
    ///
    /// The padding is `max(3, R) * h`, where `R` is the kernel's quadrature
    /// radius, so every kernel centred on a data point lies inside the grid.
    pub fn padded(points: &[f64], kernel: Kernel, h: Bandwidth, n_points: usize) -> Result<Self> {
        let (mn, mx) = min_max(points).ok_or(Error::EmptySample)?;
        let pad = kernel.support_radius().max(3.0) * h.get();
        Grid::new(mn - pad, mx + pad, n_points)
    }
}

pub(crate) fn min_max(points: &[f64]) -> Option<(f64, f64)> {
    let first = *points.first()?;
    Some(
        points
            .iter()
            .fold((first, first), |(a, b), &x| (a.min(x), b.max(x))),
    )
}

/// A function tabulated on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.n_points
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "value at node {j} is not finite"
            )));
        }
        Ok(GridFn { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n_points).map(|j| f(grid.x(j))).collect();
        GridFn::new(grid, values)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Piecewise-linear interpolation; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let t = (x - self.grid.lo) / self.grid.step();
        let j = (t.floor() as usize).min(self.grid.n_points - 2);
        let frac = t - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }
}

/// Normalized kernel quadrature weights for a set of evaluation points.
///
/// Row `i` stores `K_h(x_i - u_j) / Z_i` for the grid nodes `u_j` in the
/// kernel's reach, where `Z_i = Σ_j c_j K_h(x_i - u_j)` and `c_j` are the
/// trapezoidal weights. Smoothing a tabulated `f` at `x_i` is then
/// `Σ_j c_j row_ij f_j`, and the rows double as the discrete kernel bumps
/// of a weighted KDE, each of which has unit trapezoidal mass.
#[derive(Debug, Clone)]
pub struct KernelRows {
    grid: Grid,
    rows: Vec<(usize, Vec<f64>)>,
    norms: Vec<f64>,
}

impl KernelRows {
    pub fn build(kernel: Kernel, h: Bandwidth, grid: Grid, points: &[f64]) -> Result<Self> {
        let radius = kernel.support_radius() * h.get();
        let mut rows = Vec::with_capacity(points.len());
        let mut norms = Vec::with_capacity(points.len());
        for &x in points {
            if !grid.contains(x) {
                return Err(Error::OutsideGrid {
                    x,
                    lo: grid.lo,
                    hi: grid.hi,
                });
            }
            let (a, b) = grid.node_range(x, radius);
            let mut vals: Vec<f64> = (a..=b)
                .map(|j| rescaled_eval(kernel, h, x - grid.x(j)))
                .collect();
            let z: f64 = vals
                .iter()
                .enumerate()
                .map(|(k, v)| grid.weight(a + k) * v)
                .sum();
            if !(z > 0.0) {
                return Err(Error::InvalidBandwidth {
                    h: h.get(),
                    reason: format!("no grid node inside the kernel support at x = {x}"),
                });
            }
            vals.iter_mut().for_each(|v| *v /= z);
            rows.push((a, vals));
            norms.push(z);
        }
        Ok(KernelRows { grid, rows, norms })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Quadrature mass `Z_i` of the unnormalized kernel at each row point.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// `Σ_j c_j row_ij g(v_j)` for every row.
    fn smooth_with(&self, values: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(a, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, r)| self.grid.weight(a + k) * r * g(values[a + k]))
                    .sum()
            })
            .collect()
    }

    /// Linear smoother evaluated at the row points.
    pub fn linear(&self, values: &[f64]) -> Vec<f64> {
        self.smooth_with(values, |v| v)
    }

    /// Nonlinear smoother `exp(S log max(f, floor))` at the row points.
    pub fn nonlinear(&self, values: &[f64], floor: f64) -> Vec<f64> {
        self.smooth_with(values, |v| v.max(floor).ln())
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// `Σ_i w_i row_i(u_j)` tabulated on the grid.
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        debug_assert_eq!(weights.len(), self.rows.len());
        let mut out = vec![0.0; self.grid.n_points];
        for ((a, row), &w) in self.rows.iter().zip(weights) {
            for (k, r) in row.iter().enumerate() {
                out[a + k] += w * r;
            }
        }
        out
    }
}

fn check_domain(h: Bandwidth, grid: &Grid) -> Result<()> {
    let half = 0.5 * (grid.hi - grid.lo);
    if h.get() > half {
        return Err(Error::InvalidBandwidth {
            h: h.get(),
            reason: format!("kernel support exceeds the domain (h > {half})"),
        });
    }
    Ok(())
}

/// `S f` on the grid of `f`.
pub fn linear_smooth(kernel: Kernel, h: Bandwidth, f: &GridFn) -> Result<GridFn> {
    check_domain(h, &f.grid)?;
    let rows = KernelRows::build(kernel, h, f.grid, &f.grid.abscissae())?;
    GridFn::new(f.grid, rows.linear(&f.values))
}

/// `N f = exp(S log max(f, floor))` on the grid of `f`.
pub fn nonlinear_smooth(kernel: Kernel, h: Bandwidth, f: &GridFn, floor: f64) -> Result<GridFn> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "log floor must be positive, got {floor}"
        )));
    }
    check_domain(h, &f.grid)?;
    let rows = KernelRows::build(kernel, h, f.grid, &f.grid.abscissae())?;
    GridFn::new(f.grid, rows.nonlinear(&f.values, floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bw(h: f64) -> Bandwidth {
        Bandwidth::new(h).unwrap()
    }

    /// Composite Simpson over [a, b], used as an independent quadrature.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let s = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * s);
        }
        acc * s / 3.0
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(Kernel::Triangular, 0.0), 1.0);
        assert_eq!(kernel_eval(Kernel::Triangular, 1.0), 0.0);
        assert_eq!(kernel_eval(Kernel::Triangular, -3.0), 0.0);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(
            kernel_eval(Kernel::Gaussian, 0.0),
            phi0,
            max_relative = 1e-15
        );
        assert!((kernel_eval(Kernel::Gaussian, 0.0) - 0.3989423).abs() < 5e-8);
    }

    #[test]
    fn rescaled_values() {
        assert_eq!(rescaled_eval(Kernel::Triangular, bw(0.5), 0.0), 2.0);
        assert_eq!(rescaled_eval(Kernel::Triangular, bw(0.5), 0.5), 0.0);
        assert!((rescaled_eval(Kernel::Gaussian, bw(2.0), 0.0) - 0.1994711).abs() < 5e-8);
    }

    #[test]
    fn kernels_are_symmetric_and_integrate_to_one() {
        for k in [Kernel::Triangular, Kernel::Gaussian] {
            for i in 0..200 {
                let u = -7.0 + 0.0713 * i as f64;
                assert_eq!(k.eval(u), k.eval(-u));
                assert!(k.eval(u) >= 0.0);
            }
            for h in [0.1, 0.5, 1.0] {
                let r = k.support_radius() * h;
                // Triangular has kinks at 0 and ±h: integrate the pieces separately.
                let mass = simpson(|x| rescaled_eval(k, bw(h), x), -r, 0.0, 20_000)
                    + simpson(|x| rescaled_eval(k, bw(h), x), 0.0, r, 20_000);
                assert!((mass - 1.0).abs() < 1e-6, "{k:?} h={h} mass={mass}");
            }
        }
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(Bandwidth::new(0.0).is_err());
        assert!(Bandwidth::new(-1.0).is_err());
        assert!(Bandwidth::new(f64::NAN).is_err());
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        assert!(GridFn::new(g, vec![0.0; 10]).is_err());
        assert!(GridFn::new(g, vec![f64::NAN; 11]).is_err());
    }

    #[test]
    fn smoothing_constant_gives_constant() {
        let g = Grid::new(-5.0, 5.0, 401).unwrap();
        let f = GridFn::new(g, vec![1.0; 401]).unwrap();
        for k in [Kernel::Triangular, Kernel::Gaussian] {
            let sf = linear_smooth(k, bw(0.37), &f).unwrap();
            for v in &sf.values {
                assert!((v - 1.0).abs() < 1e-12);
            }
            let c = GridFn::new(g, vec![0.3; 401]).unwrap();
            let nf = nonlinear_smooth(k, bw(0.37), &c, 1e-12).unwrap();
            for v in &nf.values {
                assert!((v - 0.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bandwidth_wider_than_half_domain() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let f = GridFn::new(g, vec![1.0; 101]).unwrap();
        assert!(linear_smooth(Kernel::Triangular, bw(0.6), &f).is_err());
        assert!(nonlinear_smooth(Kernel::Triangular, bw(0.6), &f, 1e-12).is_err());
    }

    #[test]
    fn spike_reproduces_rescaled_kernel() {
        // h is a multiple of the step, so trapezoid integrates the triangle exactly.
        let g = Grid::new(-2.0, 2.0, 401).unwrap();
        let s = g.step();
        let mut vals = vec![0.0; 401];
        vals[200] = 1.0 / s;
        let f = GridFn::new(g, vals).unwrap();
        let h = bw(0.25);
        let sf = linear_smooth(Kernel::Triangular, h, &f).unwrap();
        for j in [175usize, 190, 200, 213, 224] {
            // direct convolution with a unit-mass spike at 0
            let oracle = (1.0 - (g.x(j) / 0.25).abs()).max(0.0) / 0.25;
            assert!((sf.values[j] - oracle).abs() < 1e-9, "j={j}");
        }
    }

    #[test]
    fn small_bandwidth_is_near_identity() {
        let g = Grid::new(0.0, 10.0, 1001).unwrap();
        let f = GridFn::from_fn(g, |x| 1.0 + (x * 0.8).sin() * 0.5 + 0.1 * x).unwrap();
        let sf = linear_smooth(Kernel::Triangular, bw(g.step()), &f).unwrap();
        for j in 10..990 {
            assert!(((sf.values[j] - f.values[j]) / f.values[j]).abs() < 0.05);
        }
        let sf = linear_smooth(Kernel::Gaussian, bw(g.step()), &f).unwrap();
        for j in 10..990 {
            assert!(((sf.values[j] - f.values[j]) / f.values[j]).abs() < 0.05);
        }
    }

    #[test]
    fn nonlinear_step_matches_direct_quadrature() {
        // f = 1 left of 0.3 and 4 right of it (geometric midpoint at the jump node).
        // N f = exp(∫ K_h(x-u) log f(u) du) with the integral taken analytically
        // for the triangular kernel.
        let g = Grid::new(-1.0, 1.6, 2601).unwrap();
        let f = GridFn::from_fn(g, |x| {
            if (x - 0.3).abs() < 1e-9 {
                2.0
            } else if x < 0.3 {
                1.0
            } else {
                4.0
            }
        })
        .unwrap();
        let h = 0.2;
        let nf = nonlinear_smooth(Kernel::Triangular, bw(h), &f, 1e-12).unwrap();
        // Node 1300 sits at 0.3. Half of the kernel mass sees log 4.
        let j = 1300;
        assert!((g.x(j) - 0.3).abs() < 1e-12);
        let oracle = (0.5 * 4f64.ln()).exp();
        assert!((nf.values[j] - oracle).abs() < 1e-9 * oracle);
        // A point a quarter bandwidth to the right: mass of the triangle right of
        // u = x - h/4 equals 1 - (1 - 0.25)^2 / 2.
        let j = 1300 + 50;
        let right_mass = 1.0 - 0.75f64.powi(2) / 2.0;
        let oracle = (right_mass * 4f64.ln()).exp();
        assert!((nf.values[j] - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn jensen_dominance_and_mass() {
        let g = Grid::new(-6.0, 12.0, 1024).unwrap();
        let raw = GridFn::from_fn(g, |x| {
            0.4 * (-(x - 1.0).powi(2) / 0.5).exp() + 0.6 * (-(x - 5.0).powi(2) / 2.0).exp() + 1e-9
        })
        .unwrap();
        let mass = raw.integral();
        let f = GridFn::new(g, raw.values.iter().map(|v| v / mass).collect()).unwrap();
        for k in [Kernel::Triangular, Kernel::Gaussian] {
            let sf = linear_smooth(k, bw(0.4), &f).unwrap();
            let nf = nonlinear_smooth(k, bw(0.4), &f, 1e-12).unwrap();
            for j in 0..g.n_points {
                assert!(nf.values[j] <= sf.values[j] + 1e-9);
            }
            assert!(nf.integral() <= sf.integral() + 1e-12);
            assert!(sf.integral() <= 1.0 + 1e-6);
            assert!((sf.integral() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = Grid::new(0.0, 2.0, 5).unwrap();
        let f = GridFn::new(g, vec![0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        assert_eq!(f.interpolate(1.0), 2.0);
        assert_eq!(f.interpolate(0.25), 0.5);
        assert_eq!(f.interpolate(2.0), 0.0);
        assert_eq!(f.interpolate(-0.1), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn bump_grid() -> Grid {
            Grid::new(-4.0, 4.0, 257).unwrap()
        }

        fn interior_fn(coefs: &[f64]) -> Vec<f64> {
            let g = bump_grid();
            (0..g.n_points)
                .map(|j| {
                    let x = g.x(j);
                    if x.abs() > 2.5 {
                        0.0
                    } else {
                        coefs
                            .iter()
                            .enumerate()
                            .map(|(k, c)| c * (x * (k as f64 + 1.0)).cos().abs())
                            .sum::<f64>()
                            * (2.5 - x.abs())
                    }
                })
                .collect()
        }

        proptest! {
            #[test]
            fn linearity(a in -3.0..3.0f64, b in -3.0..3.0f64,
                         c1 in proptest::collection::vec(0.0..1.0f64, 3),
                         c2 in proptest::collection::vec(0.0..1.0f64, 3),
                         h in 0.1..1.2f64) {
                let g = bump_grid();
                let f = GridFn::new(g, interior_fn(&c1)).unwrap();
                let q = GridFn::new(g, interior_fn(&c2)).unwrap();
                let comb = GridFn::new(g, f.values.iter().zip(&q.values).map(|(x, y)| a * x + b * y).collect()).unwrap();
                for k in [Kernel::Triangular, Kernel::Gaussian] {
                    let lhs = linear_smooth(k, bw(h), &comb).unwrap();
                    let sf = linear_smooth(k, bw(h), &f).unwrap();
                    let sq = linear_smooth(k, bw(h), &q).unwrap();
                    for j in 0..g.n_points {
                        prop_assert!((lhs.values[j] - (a * sf.values[j] + b * sq.values[j])).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn mass_preserved_for_interior_support(c in proptest::collection::vec(0.0..1.0f64, 3),
                                                   h in 0.05..0.25f64) {
                // support within ±2.5, kernel reach ≤ 6 * 0.25 = 1.5 < 4 - 2.5
                let g = bump_grid();
                let f = GridFn::new(g, interior_fn(&c)).unwrap();
                for k in [Kernel::Triangular, Kernel::Gaussian] {
                    let sf = linear_smooth(k, bw(h), &f).unwrap();
                    prop_assert!((sf.integral() - f.integral()).abs() < 1e-6);
                }
            }
        }
    }
}
