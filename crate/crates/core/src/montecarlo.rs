//! Path ensembles: moments of Bochner norms and sup-masses, and the
//! frequency of `τ_n = T`.
//!
//! Paths run in parallel but every reduction walks results in path-index
//! order, so summaries are bitwise reproducible for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::solver::Problem;

/// Environment variable capping the worker count (`0` or unset: automatic).
pub const THREADS_ENV: &str = "SNLS_THREADS";

/// Powers `p` reported for `E sup_t ‖u(t)‖₂^p`.
pub const SUP_MASS_POWERS: [u32; 3] = [1, 2, 4];

/// Sample mean with standard error `std/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            f64::NAN
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Estimate { mean, stderr, samples: n }
    }
}

/// Statistics of one solved path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathStats {
    pub path_index: u64,
    pub tau: f64,
    /// `‖u‖_{L^q(0,T;L^{α+1})}`
    pub yt_norm: f64,
    pub sup_l2: f64,
    pub z_final: f64,
    pub truncation_ever_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path_index: u64,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub truncation_level: Option<f64>,
    pub mean_yt_norm: Estimate,
    /// Keyed by the power `p`.
    pub mean_sup_mass_p: BTreeMap<String, Estimate>,
    /// Failed paths count in the denominator and never as `τ = T`.
    pub tau_equals_t_frequency: Estimate,
    pub mean_z_final: Estimate,
    /// Per path in index order; `None` for failed paths.
    pub taus: Vec<Option<f64>>,
    pub z_final: Vec<Option<f64>>,
    pub failures: Vec<PathFailure>,
}

impl EnsembleSummary {
    pub fn successful(&self) -> usize {
        self.n_paths - self.failures.len()
    }
}

fn pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

fn is_path_failure(e: &Error) -> bool {
    matches!(e, Error::NoContraction { .. } | Error::MaxItersExceeded { .. } | Error::NonFinite(_))
}

/// Solves paths `0..n_paths` of `problem`, each optionally negated, in index order.
pub fn solve_paths(
    problem: &Problem,
    n_paths: usize,
    antithetic: bool,
) -> Result<Vec<std::result::Result<PathStats, PathFailure>>> {
    let horizon = problem.config().horizon;
    let run = |i: u64| -> Result<std::result::Result<PathStats, PathFailure>> {
        let path: BrownianPath = problem.sample_path(i)?;
        let path = if antithetic { path.negated() } else { path };
        match problem.solve(&path, false) {
            Ok(rep) => {
                let acc = rep.trajectory.accumulator();
                Ok(Ok(PathStats {
                    path_index: i,
                    tau: rep.tau.min(horizon),
                    yt_norm: acc.components().0,
                    sup_l2: rep.trajectory.sup_l2(),
                    z_final: acc.value(),
                    truncation_ever_active: rep.truncation_ever_active,
                }))
            }
            Err(e) if is_path_failure(&e) => {
                Ok(Err(PathFailure { path_index: i, kind: e.kind(), message: e.to_string() }))
            }
            Err(e) => Err(e),
        }
    };
    pool()?.install(|| (0..n_paths as u64).into_par_iter().map(run).collect())
}

pub fn summarize(
    config: &SimConfig,
    results: &[std::result::Result<PathStats, PathFailure>],
) -> EnsembleSummary {
    let horizon = config.horizon;
    let tol = 1e-12 * horizon;
    let ok: Vec<&PathStats> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let yt: Vec<f64> = ok.iter().map(|s| s.yt_norm).collect();
    let z: Vec<f64> = ok.iter().map(|s| s.z_final).collect();
    let full: Vec<f64> = results
        .iter()
        .map(|r| match r {
            Ok(s) if s.tau >= horizon - tol => 1.0,
            _ => 0.0,
        })
        .collect();
    let mean_sup_mass_p = SUP_MASS_POWERS
        .iter()
        .map(|&p| {
            let xs: Vec<f64> = ok.iter().map(|s| s.sup_l2.powi(p as i32)).collect();
            (p.to_string(), Estimate::from_samples(&xs))
        })
        .collect();
    EnsembleSummary {
        n_paths: results.len(),
        seed: config.seed,
        horizon,
        truncation_level: config.truncation_level,
        mean_yt_norm: Estimate::from_samples(&yt),
        mean_sup_mass_p,
        tau_equals_t_frequency: Estimate::from_samples(&full),
        mean_z_final: Estimate::from_samples(&z),
        taus: results.iter().map(|r| r.as_ref().ok().map(|s| s.tau)).collect(),
        z_final: results.iter().map(|r| r.as_ref().ok().map(|s| s.z_final)).collect(),
        failures: results.iter().filter_map(|r| r.as_ref().err().cloned()).collect(),
    }
}

fn ensemble(config: &SimConfig, n_paths: usize, seed: u64, antithetic: bool) -> Result<EnsembleSummary> {
    if n_paths < 2 {
        return Err(Error::InvalidParams(format!("an ensemble needs at least 2 paths, got {n_paths}")));
    }
    let mut c = config.clone();
    c.seed = seed;
    let problem = Problem::new(&c)?;
    let results = solve_paths(&problem, n_paths, antithetic)?;
    Ok(summarize(&c, &results))
}

/// Paths `0..n_paths` of the Brownian family keyed by `seed`.
pub fn run_ensemble(config: &SimConfig, n_paths: usize, seed: u64) -> Result<EnsembleSummary> {
    ensemble(config, n_paths, seed, false)
}

/// The same ensemble on the negated paths `−β`.
pub fn run_antithetic_ensemble(config: &SimConfig, n_paths: usize, seed: u64) -> Result<EnsembleSummary> {
    ensemble(config, n_paths, seed, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: f64,
    pub mean_yt_norm: Estimate,
    pub tau_equals_t_frequency: Estimate,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityTable {
    pub rows: Vec<LevelRow>,
    /// `max/min` of the level means of `‖u_n‖_{Y_T}`.
    pub max_min_ratio: f64,
    pub summaries: Vec<EnsembleSummary>,
}

/// `E‖u_n‖_{Y_T}` at each level on shared Brownian paths.
pub fn truncation_uniformity_study(
    config: &SimConfig,
    levels: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<UniformityTable> {
    if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) || !(levels[0] > 0.0) {
        return Err(Error::InvalidParams(format!("levels must be positive and increasing, got {levels:?}")));
    }
    let summaries = levels
        .iter()
        .map(|&level| {
            let mut c = config.clone();
            c.truncation_level = Some(level);
            run_ensemble(&c, n_paths, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<LevelRow> = levels
        .iter()
        .zip(&summaries)
        .map(|(&level, s)| LevelRow {
            level,
            mean_yt_norm: s.mean_yt_norm,
            tau_equals_t_frequency: s.tau_equals_t_frequency,
            failures: s.failures.len(),
        })
        .collect();
    let means = rows.iter().map(|r| r.mean_yt_norm.mean);
    let max = means.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = means.fold(f64::INFINITY, f64::min);
    Ok(UniformityTable { rows, max_min_ratio: max / min, summaries })
}

/// One row of the Markov–Chebyshev comparison `P(Z_T ≥ n) ≤ E[Z_T]/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevRow {
    pub level: f64,
    pub frequency: f64,
    /// `(mean + 3·stderr)/n`
    pub bound: f64,
    pub holds: bool,
}

/// Compares the empirical tail of `Z_T` with its mean at each level.
pub fn chebyshev_check(summary: &EnsembleSummary, levels: &[f64]) -> Vec<ChebyshevRow> {
    let z: Vec<f64> = summary.z_final.iter().flatten().copied().collect();
    let est = Estimate::from_samples(&z);
    let slack = if est.stderr.is_finite() { 3.0 * est.stderr } else { 0.0 };
    levels
        .iter()
        .map(|&n| {
            let frequency = z.iter().filter(|&&x| x >= n).count() as f64 / z.len().max(1) as f64;
            let bound = (est.mean + slack) / n;
            ChebyshevRow { level: n, frequency, bound, holds: frequency <= bound }
        })
        .collect()
}
