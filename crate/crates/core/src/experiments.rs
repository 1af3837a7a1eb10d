//! Seeded Monte Carlo replication: draw a mixture sample per replication,
//! choose a bandwidth, fit, and summarize `p̂`, the ISE of `f̂` and the mean
//! of `f̂`.
//!
//! Replication `r` uses the seed `derive_seed(master_seed, r)`, so rows do not
//! depend on execution order or on how many threads run them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{cv_fit, silverman, AfterCv, CvConfig};
use crate::error::{Error, Result};
use crate::mm::{fit, FInit, FitResult, GridSpec, MmConfig, StopReason, DEFAULT_GRID_POINTS};
use crate::model::{ise, moment, sample_mixture, MixtureSpec};
use crate::rng::derive_seed;
use crate::smoothing::{Bandwidth, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    Silverman,
    /// Cross-validated per replication; the fold split is seeded with the
    /// replication seed, `fold_seed` is ignored.
    Cv(CvConfig),
    Fixed(f64),
}

/// Fields left `None` take the [`MmConfig::new`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmOverrides {
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default)]
    pub p_init: Option<f64>,
    #[serde(default)]
    pub f_init: Option<FInit>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub ise: bool,
    #[serde(default = "yes")]
    pub mu: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            ise: true,
            mu: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mixture: MixtureSpec,
    pub n: usize,
    pub reps: usize,
    pub master_seed: u64,
    #[serde(default = "default_mode")]
    pub bandwidth_mode: BandwidthMode,
    #[serde(default)]
    pub mm: MmOverrides,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_mode() -> BandwidthMode {
    BandwidthMode::Silverman
}

impl ExperimentSpec {
    pub fn new(mixture: MixtureSpec, n: usize, reps: usize, master_seed: u64) -> Self {
        ExperimentSpec {
            mixture,
            n,
            reps,
            master_seed,
            bandwidth_mode: BandwidthMode::Silverman,
            mm: MmOverrides::default(),
            outputs: Outputs::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if let BandwidthMode::Fixed(h) = self.bandwidth_mode {
            Bandwidth::new(h)?;
        }
        self.mm_config(Bandwidth::new(1.0)?).validate()
    }

    /// The fit configuration at bandwidth `h`.
    pub fn mm_config(&self, h: Bandwidth) -> MmConfig {
        let o = &self.mm;
        let mut cfg = MmConfig::new(o.kernel.unwrap_or(Kernel::Triangular), h);
        if let Some(p) = o.p_init {
            cfg.p_init = p;
        }
        if let Some(f) = &o.f_init {
            cfg.f_init = f.clone();
        }
        if let Some(t) = o.tol {
            cfg.tol = t;
        }
        if let Some(m) = o.max_iters {
            cfg.max_iters = m;
        }
        cfg.grid = GridSpec::Padded {
            n_points: o.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
        };
        cfg
    }

    /// Human-readable notes carried into every summary.
    pub fn metadata(&self) -> Vec<String> {
        let mode = match self.bandwidth_mode {
            BandwidthMode::Silverman => "bandwidth: Silverman rule of thumb per replication".to_string(),
            BandwidthMode::Cv(c) => format!(
                "bandwidth: {}-fold warm-up cross-validation (T = {}, M = {}, l = {}) per replication, continuing from the warm state",
                c.folds, c.warmup, c.grid_steps, c.half_range
            ),
            BandwidthMode::Fixed(h) => format!("bandwidth: fixed h = {h}"),
        };
        vec![
            mode,
            format!("replication seeds: derive_seed({}, rep)", self.master_seed),
        ]
    }
}

/// One replication. Statistics are `None` for failed replications or when
/// not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub seed: u64,
    pub bandwidth: Option<f64>,
    pub p_hat: Option<f64>,
    pub ise: Option<f64>,
    pub mu_hat: Option<f64>,
    pub n_iters: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_not_converged: usize,
    pub mse_p: Option<f64>,
    pub mise: Option<f64>,
    pub mean_p: Option<f64>,
    pub sd_p: Option<f64>,
    pub mean_mu: Option<f64>,
    pub sd_mu: Option<f64>,
}

impl Aggregates {
    /// Summaries over the successful rows; standard deviations use `n - 1`.
    pub fn from_rows(rows: &[RepRow], p_true: f64) -> Self {
        let ok: Vec<&RepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        let ps: Vec<f64> = ok.iter().filter_map(|r| r.p_hat).collect();
        let ises: Vec<f64> = ok.iter().filter_map(|r| r.ise).collect();
        let mus: Vec<f64> = ok.iter().filter_map(|r| r.mu_hat).collect();
        let sq: Vec<f64> = ps.iter().map(|p| (p - p_true) * (p - p_true)).collect();
        Aggregates {
            n_ok: ok.len(),
            n_failed: rows.len() - ok.len(),
            n_not_converged: ok.iter().filter(|r| r.converged == Some(false)).count(),
            mse_p: mean(&sq),
            mise: mean(&ises),
            mean_p: mean(&ps),
            sd_p: sd(&ps),
            mean_mu: mean(&mus),
            sd_mu: sd(&mus),
        }
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub spec: ExperimentSpec,
    pub rows: Vec<RepRow>,
    pub aggregates: Aggregates,
    pub metadata: Vec<String>,
}

fn run_rep(spec: &ExperimentSpec, rep: usize) -> RepRow {
    let seed = derive_seed(spec.master_seed, rep as u64);
    let mut row = RepRow {
        rep,
        seed,
        bandwidth: None,
        p_hat: None,
        ise: None,
        mu_hat: None,
        n_iters: None,
        converged: None,
        error: None,
    };
    match fit_rep(spec, seed) {
        Ok(res) => {
            row.bandwidth = Some(res.bandwidth.get());
            row.p_hat = Some(res.p_hat);
            row.n_iters = Some(res.n_iters);
            row.converged = Some(res.stop_reason == StopReason::Converged);
            if spec.outputs.ise {
                row.ise = Some(ise(&res.f_hat, &spec.mixture.unknown));
            }
            if spec.outputs.mu {
                match moment(&res.f_hat, 1) {
                    Ok(m) => row.mu_hat = Some(m),
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if let Some(e) = &row.error {
        log::warn!("replication {rep} (seed {seed}) failed: {e}");
    }
    row
}

fn fit_rep(spec: &ExperimentSpec, seed: u64) -> Result<FitResult> {
    let sample = sample_mixture(&spec.mixture, spec.n, seed)?;
    let f0 = &spec.mixture.known;
    match spec.bandwidth_mode {
        BandwidthMode::Silverman => fit(&sample, f0, &spec.mm_config(silverman(&sample)?)),
        BandwidthMode::Fixed(h) => fit(&sample, f0, &spec.mm_config(Bandwidth::new(h)?)),
        BandwidthMode::Cv(mut cv) => {
            cv.fold_seed = seed;
            let cfg = spec.mm_config(silverman(&sample)?);
            cv_fit(&sample, f0, &cfg, &cv, AfterCv::Continue).map(|(_, r)| r)
        }
    }
}

/// Runs all replications; failed ones are kept as rows with an error and
/// left out of the aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentSummary> {
    spec.validate()?;
    let rows: Vec<RepRow> = (0..spec.reps)
        .into_par_iter()
        .map(|r| run_rep(spec, r))
        .collect();
    let aggregates = Aggregates::from_rows(&rows, spec.mixture.p);
    let mut metadata = spec.metadata();
    if aggregates.n_failed > 0 {
        metadata.push(format!(
            "{} replication(s) failed and were excluded",
            aggregates.n_failed
        ));
    }
    Ok(ExperimentSummary {
        spec: spec.clone(),
        rows,
        aggregates,
        metadata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub p: f64,
    pub n: usize,
    pub mse: Option<f64>,
    pub mise: Option<f64>,
    pub n_failed: usize,
}

/// Runs `template` once per true proportion in `p_values`.
pub fn mse_curve(
    template: &ExperimentSpec,
    p_values: &[f64],
) -> Result<(Vec<CurveRow>, Vec<ExperimentSummary>)> {
    if p_values.is_empty() {
        return Err(Error::InvalidParameter("p_values must not be empty".into()));
    }
    let mut rows = Vec::with_capacity(p_values.len());
    let mut summaries = Vec::with_capacity(p_values.len());
    for &p in p_values {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "curve proportions must lie in (0, 1), got {p}"
            )));
        }
        let mut spec = template.clone();
        spec.mixture.p = p;
        let s = run_experiment(&spec)?;
        rows.push(CurveRow {
            p,
            n: spec.n,
            mse: s.aggregates.mse_p,
            mise: s.aggregates.mise,
            n_failed: s.aggregates.n_failed,
        });
        summaries.push(s);
    }
    Ok((rows, summaries))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "spearman needs two equally long series of length >= 2".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx).unwrap_or(0.0), mean(&ry).unwrap_or(0.0));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::InvalidParameter(
            "spearman is undefined for a constant series".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| r[k] = avg);
        i = j + 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParametricDensity;

    fn small_spec(reps: usize) -> ExperimentSpec {
        let mix = MixtureSpec::new(
            0.5,
            ParametricDensity::normal(0.0, 1.0).unwrap(),
            ParametricDensity::normal(4.0, 1.0).unwrap(),
        )
        .unwrap();
        let mut s = ExperimentSpec::new(mix, 150, reps, 11);
        s.mm.grid_points = Some(256);
        s.mm.tol = Some(1e-4);
        s
    }

    #[test]
    fn single_rep_mse_is_squared_error() {
        let s = run_experiment(&small_spec(1)).unwrap();
        let p = s.rows[0].p_hat.unwrap();
        assert_eq!(s.aggregates.mse_p.unwrap(), (p - 0.5) * (p - 0.5));
        assert!(s.aggregates.sd_p.is_none());
    }

    #[test]
    fn rows_are_deterministic_and_aggregates_recompute() {
        let a = run_experiment(&small_spec(3)).unwrap();
        let b = run_experiment(&small_spec(3)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(Aggregates::from_rows(&a.rows, 0.5), a.aggregates);
    }

    #[test]
    fn rep_rows_do_not_depend_on_rep_count() {
        let a = run_experiment(&small_spec(2)).unwrap();
        let b = run_experiment(&small_spec(3)).unwrap();
        assert_eq!(a.rows[..], b.rows[..2]);
    }

    #[test]
    fn failed_rows_are_excluded() {
        let rows = vec![
            RepRow {
                rep: 0,
                seed: 0,
                bandwidth: Some(1.0),
                p_hat: Some(0.4),
                ise: Some(0.1),
                mu_hat: Some(1.0),
                n_iters: Some(3),
                converged: Some(true),
                error: None,
            },
            RepRow {
                rep: 1,
                seed: 1,
                bandwidth: None,
                p_hat: None,
                ise: None,
                mu_hat: None,
                n_iters: None,
                converged: None,
                error: Some("boom".into()),
            },
        ];
        let a = Aggregates::from_rows(&rows, 0.5);
        assert_eq!((a.n_ok, a.n_failed), (1, 1));
        assert!((a.mse_p.unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn singleton_curve_matches_experiment() {
        let spec = small_spec(2);
        let (rows, _) = mse_curve(&spec, &[0.5]).unwrap();
        let s = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mse, s.aggregates.mse_p);
        assert_eq!(rows[0].mise, s.aggregates.mise);
        assert!(mse_curve(&spec, &[1.0]).is_err());
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.75f64.sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let js = r#"{"mixture":{"p":0.3,"known":{"family":"normal","mu":0,"sigma":1},
            "unknown":{"family":"normal","mu":6,"sigma":1}},"n":100,"reps":2,"master_seed":1}"#;
        let s: ExperimentSpec = serde_json::from_str(js).unwrap();
        assert_eq!(s.bandwidth_mode, BandwidthMode::Silverman);
        let back: ExperimentSpec =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec(0);
        assert!(s.validate().is_err());
        s.reps = 1;
        s.bandwidth_mode = BandwidthMode::Fixed(-1.0);
        assert!(s.validate().is_err());
    }
}
