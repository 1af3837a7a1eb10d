//! Bandwidth selection: Silverman's rule of thumb and warm-up K-fold
//! cross-validation.
//!
//! The cross-validation score of a candidate `h` is
//!
//! ```text
//! CV(h) = ||f_T||² - (2/n) Σ_k Σ_{x_i ∈ fold k} f_T^{(-k)}(x_i)
//! ```
//!
//! where `f_T` is the density after `T` MM steps on the full sample and
//! `f_T^{(-k)}` the density after `T` steps with fold `k` held out. All
//! warm-up runs start from the same `(p_init, f_init)` and share one grid.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mm::{FitResult, GridSpec, MmConfig, MmRunner, StopReason};
use crate::model::{GridDensity, ParametricDensity, Sample};
use crate::rng::substream;
use crate::smoothing::{Bandwidth, Grid};

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// `h = 0.9 min{SD, IQR / 1.34} n^{-1/5}`.
pub fn silverman(sample: &Sample) -> Result<Bandwidth> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::ZeroScale(
            "Silverman's rule needs at least two points".into(),
        ));
    }
    let sd = sample.sd();
    if !(sd > 0.0) {
        return Err(Error::ZeroScale("sample standard deviation is zero".into()));
    }
    let sorted = sample.sorted();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = sd.min(iqr / 1.34);
    if !(scale > 0.0) {
        return Err(Error::ZeroScale("interquartile range is zero".into()));
    }
    Bandwidth::new(0.9 * scale * (n as f64).powf(-0.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    /// Number of folds `K`.
    pub folds: usize,
    /// Half-width `l` of the candidate range around the Silverman bandwidth.
    pub half_range: f64,
    /// Steps `M` on each side of the centre; the curve has `2M + 1` points.
    pub grid_steps: usize,
    /// Warm-up iterations `T`.
    pub warmup: usize,
    pub fold_seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 50,
            half_range: 0.4,
            grid_steps: 10,
            warmup: 5,
            fold_seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self, n: usize, h_s: f64) -> Result<()> {
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidParameter(format!(
                "folds must lie in [2, n = {n}], got {}",
                self.folds
            )));
        }
        if self.warmup == 0 {
            return Err(Error::InvalidParameter(
                "warm-up iterations must be >= 1".into(),
            ));
        }
        if !(self.half_range > 0.0) || self.half_range >= h_s {
            return Err(Error::InvalidParameter(format!(
                "half range must lie in (0, h_s = {h_s}), got {} (candidate bandwidths must stay positive)",
                self.half_range
            )));
        }
        Ok(())
    }

    /// Candidate bandwidths `h_s + (i / M) l`, `i = -M..=M`.
    pub fn candidates(&self, h_s: f64) -> Vec<f64> {
        let m = self.grid_steps as i64;
        if m == 0 {
            return vec![h_s];
        }
        (-m..=m)
            .map(|i| h_s + (i as f64 / m as f64) * self.half_range)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub h: f64,
    /// `None` when a warm-up fit failed at this bandwidth.
    pub cv: Option<f64>,
    pub l2_norm_sq: Option<f64>,
    pub heldout_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub points: Vec<CvPoint>,
    pub h_star: f64,
    pub h_silverman: f64,
}

impl CvCurve {
    /// True when the minimum is attained strictly inside the candidate range.
    pub fn has_interior_minimum(&self) -> bool {
        let idx = self.points.iter().position(|p| p.h == self.h_star);
        matches!(idx, Some(i) if i > 0 && i + 1 < self.points.len())
    }
}

/// Seeded split of `0..n` into `k` near-equal folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, 0));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Shared setup for every warm-up run.
struct CvSetup {
    grid: Grid,
    f_init: GridDensity,
    p_init: f64,
}

fn cv_setup(
    sample: &Sample,
    f0: &ParametricDensity,
    cfg_mm: &MmConfig,
    h_max: f64,
) -> Result<CvSetup> {
    let mut cfg = cfg_mm.clone();
    cfg.bandwidth = Bandwidth::new(h_max)?;
    let grid = cfg.resolve_grid(&sample.points)?;
    let f_init = cfg.initial_density(sample, f0, grid)?;
    Ok(CvSetup {
        grid,
        f_init,
        p_init: cfg_mm.p_init,
    })
}

fn warm_runner(
    sample: &Sample,
    f0: &ParametricDensity,
    cfg_mm: &MmConfig,
    setup: &CvSetup,
    h: f64,
    steps: usize,
) -> Result<MmRunner> {
    let mut cfg = cfg_mm.clone();
    cfg.bandwidth = Bandwidth::new(h)?;
    cfg.grid = GridSpec::Fixed(setup.grid);
    let mut runner = MmRunner::with_initial(sample, f0, &cfg, setup.p_init, setup.f_init.clone())?;
    runner.advance(steps)?;
    Ok(runner)
}

enum Task {
    Full(usize),
    Fold(usize, usize),
}

/// Selects `h* = argmin CV(h)` (ties go to the smaller `h`).
pub fn cv_bandwidth(
    sample: &Sample,
    f0: &ParametricDensity,
    cfg_mm: &MmConfig,
    cfg_cv: &CvConfig,
) -> Result<(Bandwidth, CvCurve)> {
    cfg_mm.validate()?;
    let h_s = silverman(sample)?.get();
    cfg_cv.validate(sample.len(), h_s)?;
    let hs = cfg_cv.candidates(h_s);
    let h_max = hs.iter().cloned().fold(f64::MIN, f64::max);
    let setup = cv_setup(sample, f0, cfg_mm, h_max)?;
    let folds = fold_assignment(sample.len(), cfg_cv.folds, cfg_cv.fold_seed);

    let reduced: Vec<Sample> = folds
        .iter()
        .map(|held| {
            let mut keep = vec![true; sample.len()];
            held.iter().for_each(|&i| keep[i] = false);
            let pts = sample
                .points
                .iter()
                .zip(&keep)
                .filter_map(|(&x, &k)| k.then_some(x))
                .collect();
            Sample::new(pts)
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<Task> = (0..hs.len())
        .flat_map(|hi| {
            std::iter::once(Task::Full(hi)).chain((0..folds.len()).map(move |k| Task::Fold(hi, k)))
        })
        .collect();

    let results: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|task| match *task {
            Task::Full(hi) => {
                let r = warm_runner(sample, f0, cfg_mm, &setup, hs[hi], cfg_cv.warmup)?;
                let sq: Vec<f64> = r.density().values().iter().map(|v| v * v).collect();
                Ok(setup.grid.integrate(&sq))
            }
            Task::Fold(hi, k) => {
                let r = warm_runner(&reduced[k], f0, cfg_mm, &setup, hs[hi], cfg_cv.warmup)?;
                let kde = r.kde().expect("warm-up runs at least one step");
                Ok(folds[k].iter().map(|&i| kde.eval(sample.points[i])).sum())
            }
        })
        .collect();

    let n = sample.len() as f64;
    let per_h = 1 + folds.len();
    let mut points = Vec::with_capacity(hs.len());
    for (hi, &h) in hs.iter().enumerate() {
        let chunk = &results[hi * per_h..(hi + 1) * per_h];
        let mut error = None;
        let mut norm = None;
        let mut held = 0.0;
        for (j, r) in chunk.iter().enumerate() {
            match r {
                Ok(v) if j == 0 => norm = Some(*v),
                Ok(v) => held += v,
                Err(e) => {
                    error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        let valid = error.is_none();
        points.push(CvPoint {
            h,
            cv: if valid {
                norm.map(|s| s - 2.0 / n * held)
            } else {
                None
            },
            l2_norm_sq: norm,
            heldout_sum: valid.then_some(held),
            error,
        });
    }

    let mut best: Option<(f64, f64)> = None;
    for p in &points {
        if let Some(cv) = p.cv {
            if best.is_none_or(|(_, b)| cv < b) {
                best = Some((p.h, cv));
            }
        }
    }
    let (h_star, _) = best.ok_or(Error::AllBandwidthsInvalid)?;
    Ok((
        Bandwidth::new(h_star)?,
        CvCurve {
            points,
            h_star,
            h_silverman: h_s,
        },
    ))
}

/// What the final fit does after cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfterCv {
    /// Keep iterating from the full-sample warm-up state at `h*`.
    #[default]
    Continue,
    /// Start a fresh fit at `h*`.
    Restart,
}

/// Cross-validates the bandwidth and then runs the full fit at `h*`.
pub fn cv_fit(
    sample: &Sample,
    f0: &ParametricDensity,
    cfg_mm: &MmConfig,
    cfg_cv: &CvConfig,
    mode: AfterCv,
) -> Result<(CvCurve, FitResult)> {
    let (h_star, curve) = cv_bandwidth(sample, f0, cfg_mm, cfg_cv)?;
    let mut cfg = cfg_mm.clone();
    cfg.bandwidth = h_star;
    let fit = match mode {
        AfterCv::Restart => crate::mm::fit(sample, f0, &cfg)?,
        AfterCv::Continue => {
            let h_max = cfg_cv
                .candidates(curve.h_silverman)
                .into_iter()
                .fold(f64::MIN, f64::max);
            let setup = cv_setup(sample, f0, cfg_mm, h_max)?;
            let runner = warm_runner(sample, f0, cfg_mm, &setup, h_star.get(), cfg_cv.warmup)?;
            let mut last_dp = f64::INFINITY;
            if let Some(w) = runner.trace().windows(2).last() {
                last_dp = (w[1].p - w[0].p).abs();
            }
            if last_dp < cfg.tol {
                runner.finish(StopReason::Converged)
            } else {
                runner.run()?
            }
        }
    };
    Ok((curve, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::Kernel;

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.25), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.75), 4.0);
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.25), 1.75);
        assert_eq!(quantile_sorted(&xs, 0.75), 3.25);
    }

    #[test]
    fn silverman_rejects_constant_and_tiny_samples() {
        assert!(silverman(&Sample::new(vec![2.0; 10]).unwrap()).is_err());
        assert!(silverman(&Sample::new(vec![2.0]).unwrap()).is_err());
    }

    #[test]
    fn silverman_is_scale_equivariant() {
        let s = crate::model::sample(&ParametricDensity::gamma(2.0, 1.0).unwrap(), 300, 5).unwrap();
        let h = silverman(&s).unwrap().get();
        let doubled = Sample::new(s.points.iter().map(|x| 2.0 * x).collect()).unwrap();
        assert!((silverman(&doubled).unwrap().get() - 2.0 * h).abs() < 1e-12 * h);
    }

    #[test]
    fn candidate_grid() {
        let c = CvConfig {
            grid_steps: 4,
            half_range: 0.2,
            ..CvConfig::default()
        };
        let hs = c.candidates(1.0);
        assert_eq!(hs.len(), 9);
        assert!((hs[0] - 0.8).abs() < 1e-15 && (hs[8] - 1.2).abs() < 1e-15);
        assert_eq!(hs[4], 1.0);
        let c = CvConfig {
            grid_steps: 0,
            ..CvConfig::default()
        };
        assert_eq!(c.candidates(0.7), vec![0.7]);
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let a = fold_assignment(103, 10, 9);
        let b = fold_assignment(103, 10, 9);
        assert_eq!(a, b);
        let sizes: Vec<usize> = a.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_ne!(a, fold_assignment(103, 10, 10));
    }

    #[test]
    fn config_errors() {
        let s = crate::model::sample(&ParametricDensity::normal(0.0, 1.0).unwrap(), 50, 1).unwrap();
        let f0 = ParametricDensity::normal(3.0, 1.0).unwrap();
        let cfg = MmConfig::new(Kernel::Triangular, Bandwidth::new(0.5).unwrap());
        let big_l = CvConfig {
            half_range: 10.0,
            folds: 5,
            ..CvConfig::default()
        };
        assert!(cv_bandwidth(&s, &f0, &cfg, &big_l).is_err());
        let too_many = CvConfig {
            folds: 51,
            half_range: 0.05,
            ..CvConfig::default()
        };
        assert!(cv_bandwidth(&s, &f0, &cfg, &too_many).is_err());
    }
}
