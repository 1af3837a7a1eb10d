//! The empirical MM iteration for `g = (1 - p) f0 + p f`.
//!
//! Each step computes the responsibilities
//! `w_i = p N f(X_i) / ((1 - p) f0(X_i) + p N f(X_i))`, sets the new
//! proportion to their mean and the new density to the weighted kernel
//! estimate `(α / n) Σ_i K_h(x - X_i) w_i` with `α = n / Σ_i w_i`. The
//! objective `ℓ_n = -Σ_i log((1 - p) f0(X_i) + p N f(X_i))` never increases.
//!
//! The density is carried on a [`Grid`]; `N f` at the sample points and the
//! kernel bumps of the update share one set of normalized quadrature rows
//! ([`KernelRows`]), which makes the grid update the exact minimizer of the
//! discretized majorizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{tabulate_on, GridDensity, ParametricDensity, Sample};
use crate::smoothing::{rescaled_eval, Bandwidth, Grid, GridFn, Kernel, KernelRows};

pub const DEFAULT_GRID_POINTS: usize = 1024;
pub const DEFAULT_LOG_FLOOR: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_P_INIT: f64 = 0.3;
pub const DEFAULT_TOL: f64 = 1e-5;

/// Starting density for the unknown component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FInit {
    /// Gamma(4, 2) when the data and `f0` live on the positive half-line,
    /// otherwise a normal matching the sample mean and standard deviation.
    Auto,
    Parametric(ParametricDensity),
    /// Interpolated onto the fit grid and renormalized.
    Grid(GridDensity),
}

/// How the fit grid is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    /// Data range padded by `max(3, R) h`, where `R` is the kernel reach.
    Padded {
        n_points: usize,
    },
    Fixed(Grid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub grid: GridSpec,
    pub p_init: f64,
    pub f_init: FInit,
    /// Stop once `|p_{t+1} - p_t| < tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub log_floor: f64,
}

impl MmConfig {
    pub fn new(kernel: Kernel, bandwidth: Bandwidth) -> Self {
        MmConfig {
            kernel,
            bandwidth,
            grid: GridSpec::Padded {
                n_points: DEFAULT_GRID_POINTS,
            },
            p_init: DEFAULT_P_INIT,
            f_init: FInit::Auto,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_init > 0.0 && self.p_init < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p_init must lie in (0, 1), got {}",
                self.p_init
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stopping tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "log floor must be positive, got {}",
                self.log_floor
            )));
        }
        if let GridSpec::Padded { n_points } = self.grid {
            if n_points < 2 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 2 points, got {n_points}"
                )));
            }
        }
        Ok(())
    }

    pub fn resolve_grid(&self, points: &[f64]) -> Result<Grid> {
        match self.grid {
            GridSpec::Padded { n_points } => {
                Grid::padded(points, self.kernel, self.bandwidth, n_points)
            }
            GridSpec::Fixed(g) => Ok(g),
        }
    }

    /// Initial density on `grid` for a problem with known component `f0`.
    pub fn initial_density(
        &self,
        sample: &Sample,
        f0: &ParametricDensity,
        grid: Grid,
    ) -> Result<GridDensity> {
        match &self.f_init {
            FInit::Auto => tabulate_on(&auto_init(sample, f0)?, grid),
            FInit::Parametric(d) => {
                d.validate()?;
                tabulate_on(d, grid)
            }
            FInit::Grid(g) => {
                GridDensity::normalize(GridFn::from_fn(grid, |x| g.eval(x).max(0.0))?)
            }
        }
    }
}

fn auto_init(sample: &Sample, f0: &ParametricDensity) -> Result<ParametricDensity> {
    if f0.is_nonnegative() && sample.points.iter().all(|&x| x > 0.0) {
        ParametricDensity::gamma(4.0, 2.0)
    } else {
        let sd = sample.sd();
        ParametricDensity::normal(sample.mean(), if sd > 0.0 { sd } else { 1.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    pub p: f64,
    pub objective: f64,
    /// Normalizer `n / Σ w` of the update that produced this iterate (absent at `t = 0`).
    pub alpha: Option<f64>,
    pub f_mass: f64,
    /// Trapezoidal mass of `N f` on the grid.
    pub nf_mass: f64,
}

/// Weighted kernel estimate `Σ_i c_i K_h(x - X_i)`, with `c_i = α w_i / (n Z_i)`
/// and `Z_i` the quadrature mass of the `i`-th bump on the fit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKde {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub centers: Vec<f64>,
    pub coefs: Vec<f64>,
}

impl WeightedKde {
    pub fn eval(&self, x: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefs)
            .map(|(&c, &a)| a * rescaled_eval(self.kernel, self.bandwidth, x - c))
            .sum()
    }
}

/// Output of [`update_f`].
#[derive(Debug, Clone)]
pub struct FUpdate {
    pub density: GridDensity,
    pub alpha: f64,
    pub kde: WeightedKde,
}

/// Responsibilities together with the indices where they were undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    /// Points where both `(1 - p) f0` and `p N f` vanished; their weight is 0.5.
    pub undefined: Vec<usize>,
}

/// `w = p nf / ((1 - p) f0 + p nf)` elementwise.
pub fn compute_weights(p: f64, f0_vals: &[f64], nf_vals: &[f64]) -> Result<Weights> {
    if f0_vals.len() != nf_vals.len() {
        return Err(Error::InvalidParameter(format!(
            "misaligned arrays: {} known-density values, {} smoothed values",
            f0_vals.len(),
            nf_vals.len()
        )));
    }
    let mut undefined = Vec::new();
    let values = f0_vals
        .iter()
        .zip(nf_vals)
        .enumerate()
        .map(|(i, (&f0, &nf))| {
            let num = p * nf;
            let den = (1.0 - p) * f0 + num;
            if den > 0.0 {
                num / den
            } else {
                undefined.push(i);
                0.5
            }
        })
        .collect();
    if !undefined.is_empty() {
        log::warn!(
            "{} sample point(s) have zero mixture density; their weight was set to 0.5",
            undefined.len()
        );
    }
    Ok(Weights { values, undefined })
}

/// Mean of the weights.
pub fn update_p(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(weights.iter().sum::<f64>() / weights.len() as f64)
}

/// `N f` at each of `xs` by quadrature over the grid of `f`.
pub fn nf_at_points(
    f: &GridDensity,
    xs: &[f64],
    kernel: Kernel,
    h: Bandwidth,
    floor: f64,
) -> Result<Vec<f64>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "log floor must be positive, got {floor}"
        )));
    }
    let rows = KernelRows::build(kernel, h, *f.grid(), xs)?;
    Ok(rows.nonlinear(f.values(), floor))
}

/// Weighted kernel density update tabulated on `grid`.
pub fn update_f(
    sample: &Sample,
    weights: &[f64],
    kernel: Kernel,
    h: Bandwidth,
    grid: Grid,
) -> Result<FUpdate> {
    if weights.len() != sample.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} sample points",
            weights.len(),
            sample.len()
        )));
    }
    let rows = KernelRows::build(kernel, h, grid, &sample.points)?;
    update_f_with(&rows, &sample.points, weights, kernel, h)
}

fn update_f_with(
    rows: &KernelRows,
    points: &[f64],
    weights: &[f64],
    kernel: Kernel,
    h: Bandwidth,
) -> Result<FUpdate> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFit("all weights are zero".into()));
    }
    let n = weights.len() as f64;
    let alpha = n / total;
    let scale = alpha / n;
    let values: Vec<f64> = rows
        .weighted_sum(weights)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    let density = GridDensity::normalize(GridFn::new(*rows.grid(), values)?)?;
    let kde = WeightedKde {
        kernel,
        bandwidth: h,
        centers: points.to_vec(),
        coefs: weights
            .iter()
            .zip(rows.norms())
            .map(|(w, z)| scale * w / z)
            .collect(),
    };
    Ok(FUpdate {
        density,
        alpha,
        kde,
    })
}

/// `ℓ_n = -Σ log((1 - p) f0(X_i) + p N f(X_i))`.
pub fn objective(
    p: f64,
    f: &GridDensity,
    sample: &Sample,
    f0: &ParametricDensity,
    kernel: Kernel,
    h: Bandwidth,
    floor: f64,
) -> Result<f64> {
    let nf = nf_at_points(f, &sample.points, kernel, h, floor)?;
    let f0_vals: Vec<f64> = sample.points.iter().map(|&x| f0.pdf(x)).collect();
    objective_from(p, &f0_vals, &nf, &sample.points)
}

fn objective_from(p: f64, f0_vals: &[f64], nf: &[f64], points: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (&a, &b)) in f0_vals.iter().zip(nf).enumerate() {
        let g = (1.0 - p) * a + p * b;
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::NonPositiveMixture {
                index: i,
                x: points[i],
                value: g,
            });
        }
        acc -= g.ln();
    }
    Ok(acc)
}

/// Current iterate.
#[derive(Debug, Clone)]
pub struct MmState {
    pub t: usize,
    pub p: f64,
    pub f: GridDensity,
    /// Weights computed from this iterate, in the caller's sample order.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub alpha: Option<f64>,
}

/// Converged (or stopped) estimate.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub p_hat: f64,
    pub f_hat: GridDensity,
    /// Closed form of `f_hat` before tabulation; `None` only if no step was taken.
    pub kde: Option<WeightedKde>,
    pub trace: Vec<TraceEntry>,
    pub n_iters: usize,
    pub stop_reason: StopReason,
    pub bandwidth: Bandwidth,
    pub warnings: Vec<String>,
}

/// Stepwise driver. The sample is sorted internally so that every sum runs
/// in a canonical order, which makes results invariant to permutations of
/// the input.
#[derive(Debug, Clone)]
pub struct MmRunner {
    kernel: Kernel,
    h: Bandwidth,
    floor: f64,
    tol: f64,
    max_iters: usize,
    points: Vec<f64>,
    /// `order[k]` is the caller index of sorted point `k`.
    order: Vec<usize>,
    f0_vals: Vec<f64>,
    rows: KernelRows,
    t: usize,
    p: f64,
    f: GridDensity,
    nf: Vec<f64>,
    objective: f64,
    kde: Option<WeightedKde>,
    trace: Vec<TraceEntry>,
    undefined_weights: usize,
    warnings: Vec<String>,
}

impl MmRunner {
    pub fn new(sample: &Sample, f0: &ParametricDensity, cfg: &MmConfig) -> Result<Self> {
        cfg.validate()?;
        f0.validate()?;
        let grid = cfg.resolve_grid(&sample.points)?;
        let f_init = cfg.initial_density(sample, f0, grid)?;
        Self::with_initial(sample, f0, cfg, cfg.p_init, f_init)
    }

    /// Starts from an explicit `(p, f)` whose grid becomes the fit grid.
    pub fn with_initial(
        sample: &Sample,
        f0: &ParametricDensity,
        cfg: &MmConfig,
        p_init: f64,
        f_init: GridDensity,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(p_init > 0.0 && p_init < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p_init must lie in (0, 1), got {p_init}"
            )));
        }
        let grid = *f_init.grid();
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.sort_by(|&a, &b| sample.points[a].total_cmp(&sample.points[b]));
        let points: Vec<f64> = order.iter().map(|&i| sample.points[i]).collect();
        let rows = KernelRows::build(cfg.kernel, cfg.bandwidth, grid, &points)?;
        let f0_vals: Vec<f64> = points.iter().map(|&x| f0.pdf(x)).collect();
        let nf = rows.nonlinear(f_init.values(), cfg.log_floor);
        let objective = objective_from(p_init, &f0_vals, &nf, &points)?;
        let mut warnings = Vec::new();
        if let Some(w) = f_init.renormalization_warning() {
            warnings.push(format!("initial density: {w}"));
        }
        let mut runner = MmRunner {
            kernel: cfg.kernel,
            h: cfg.bandwidth,
            floor: cfg.log_floor,
            tol: cfg.tol,
            max_iters: cfg.max_iters,
            points,
            order,
            f0_vals,
            rows,
            t: 0,
            p: p_init,
            f: f_init,
            nf,
            objective,
            kde: None,
            trace: Vec::new(),
            undefined_weights: 0,
            warnings,
        };
        runner.record(None);
        Ok(runner)
    }

    fn nf_mass(&self) -> f64 {
        let grid = *self.f.grid();
        let floor = self.floor;
        KernelRows::build(self.kernel, self.h, grid, &grid.abscissae())
            .map(|rows| grid.integrate(&rows.nonlinear(self.f.values(), floor)))
            .unwrap_or(f64::NAN)
    }

    fn record(&mut self, alpha: Option<f64>) {
        self.trace.push(TraceEntry {
            t: self.t,
            p: self.p,
            objective: self.objective,
            alpha,
            f_mass: self.f.mass(),
            nf_mass: f64::NAN,
        });
    }

    /// Grid mass of `N f` for the current iterate.
    pub fn current_nf_mass(&self) -> f64 {
        self.nf_mass()
    }

    fn sorted_weights(&mut self) -> Result<Vec<f64>> {
        let w = compute_weights(self.p, &self.f0_vals, &self.nf)?;
        self.undefined_weights += w.undefined.len();
        Ok(w.values)
    }

    /// One MM update. Returns the absolute change in `p`.
    pub fn step(&mut self) -> Result<f64> {
        let w = self.sorted_weights()?;
        let p_next = update_p(&w)?;
        let upd = update_f_with(&self.rows, &self.points, &w, self.kernel, self.h)?;
        let nf = self.rows.nonlinear(upd.density.values(), self.floor);
        let objective = objective_from(p_next, &self.f0_vals, &nf, &self.points)?;
        let dp = (p_next - self.p).abs();
        self.t += 1;
        self.p = p_next;
        self.f = upd.density;
        self.nf = nf;
        self.objective = objective;
        self.kde = Some(upd.kde);
        self.record(Some(upd.alpha));
        Ok(dp)
    }

    /// Iterates until `|Δp| < tol` or `max_iters` total steps.
    pub fn run(mut self) -> Result<FitResult> {
        let stop_reason = loop {
            let dp = self.step()?;
            let mut reason = None;
            if self.t >= self.max_iters {
                reason = Some(StopReason::MaxIters);
            }
            if dp < self.tol {
                reason = Some(StopReason::Converged);
            }
            if let Some(r) = reason {
                break r;
            }
        };
        Ok(self.finish(stop_reason))
    }

    /// Runs exactly `steps` updates without checking the stopping rule.
    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self, stop_reason: StopReason) -> FitResult {
        if self.undefined_weights > 0 {
            self.warnings.push(format!(
                "{} weight evaluation(s) had a zero mixture density and were set to 0.5",
                self.undefined_weights
            ));
        }
        if stop_reason == StopReason::MaxIters {
            self.warnings.push(format!(
                "stopped after max_iters = {} without converging",
                self.max_iters
            ));
        }
        FitResult {
            p_hat: self.p,
            f_hat: self.f,
            kde: self.kde,
            trace: self.trace,
            n_iters: self.t,
            stop_reason,
            bandwidth: self.h,
            warnings: self.warnings,
        }
    }

    pub fn state(&self) -> Result<MmState> {
        let sorted = compute_weights(self.p, &self.f0_vals, &self.nf)?.values;
        let mut weights = vec![0.0; sorted.len()];
        for (k, &i) in self.order.iter().enumerate() {
            weights[i] = sorted[k];
        }
        Ok(MmState {
            t: self.t,
            p: self.p,
            f: self.f.clone(),
            weights,
            objective: self.objective,
            alpha: self.trace.last().and_then(|e| e.alpha),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn density(&self) -> &GridDensity {
        &self.f
    }

    pub fn kde(&self) -> Option<&WeightedKde> {
        self.kde.as_ref()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn grid(&self) -> &Grid {
        self.f.grid()
    }
}

/// Runs the MM iteration to convergence.
pub fn fit(sample: &Sample, f0: &ParametricDensity, cfg: &MmConfig) -> Result<FitResult> {
    MmRunner::new(sample, f0, cfg)?.run()
}

/// As [`fit`], additionally filling `nf_mass` (the grid mass of `N f`) on every
/// trace entry. Costs one grid-wide smoothing per iteration.
pub fn fit_with_diagnostics(
    sample: &Sample,
    f0: &ParametricDensity,
    cfg: &MmConfig,
) -> Result<FitResult> {
    let mut runner = MmRunner::new(sample, f0, cfg)?;
    let mut masses = vec![runner.current_nf_mass()];
    let reason = loop {
        let dp = runner.step()?;
        masses.push(runner.current_nf_mass());
        let mut reason = None;
        if runner.t >= runner.max_iters {
            reason = Some(StopReason::MaxIters);
        }
        if dp < runner.tol {
            reason = Some(StopReason::Converged);
        }
        if let Some(r) = reason {
            break r;
        }
    };
    let mut out = runner.finish(reason);
    for (e, m) in out.trace.iter_mut().zip(masses) {
        e.nf_mass = m;
    }
    Ok(out)
}
