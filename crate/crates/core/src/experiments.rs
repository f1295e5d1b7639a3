//! Monte Carlo checks of the classifications and of the birth-death balance
//! relation.
//!
//! Recurrence of an `R`-valued walk is measured through a band proxy: a path
//! "returns" if, after first reaching `|Z| >= L`, it re-enters `[-a, a]`
//! before the horizon.

use std::io;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::classifier::BDChain;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::simulator::WalkModel;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceExperiment {
    pub model: WalkModel,
    pub n_paths: usize,
    pub horizon: f64,
    /// Excursion level `L`.
    pub level: f64,
    /// Return band half-width `a`.
    pub band: f64,
    pub seed: u64,
}

impl RecurrenceExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        if !(self.band.is_finite() && self.band > 0.0) {
            return Err(invalid("band", format!("must be positive, got {}", self.band)));
        }
        if !(self.level.is_finite() && self.level > self.band) {
            return Err(invalid(
                "level",
                format!("must exceed band = {}, got {}", self.band, self.level),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(invalid(
                "horizon",
                format!("must be finite and nonnegative, got {}", self.horizon),
            ));
        }
        Ok(())
    }
}

/// Per-path record, written as one CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub path: usize,
    pub seed: u64,
    #[serde(rename = "reached_L")]
    pub reached_level: bool,
    pub first_hit_time: Option<f64>,
    pub returned: bool,
    pub final_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_paths: usize,
    #[serde(rename = "reached_L_fraction")]
    pub reached_level_fraction: f64,
    /// Among paths that reached `L`; NaN when none did.
    pub returned_fraction: f64,
    /// 95% Wilson interval for `returned_fraction`.
    pub returned_ci: [f64; 2],
    pub mean_final_position: f64,
    pub runtime_secs: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub paths: Vec<PathOutcome>,
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> [f64; 2] {
    if trials == 0 {
        return [f64::NAN, f64::NAN];
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The interval contains p analytically; keep that exact under rounding.
    [(center - half).max(0.0).min(p), (center + half).min(1.0).max(p)]
}

fn run_path(exp: &RecurrenceExperiment, path: usize, seed: u64) -> Result<PathOutcome> {
    let mut events = exp.model.events(0.0, exp.horizon, seed)?;
    let mut first_hit_time = None;
    let mut returned = false;
    for e in events.by_ref() {
        match first_hit_time {
            None if e.z_after.abs() >= exp.level => first_hit_time = Some(e.tau),
            Some(_) if !returned && e.z_after.abs() <= exp.band => returned = true,
            _ => {}
        }
    }
    Ok(PathOutcome {
        path,
        seed,
        reached_level: first_hit_time.is_some(),
        first_hit_time,
        returned,
        final_z: events.position(),
    })
}

/// Runs every path of the experiment. Identical inputs give identical
/// outcomes regardless of the worker count.
pub fn run_recurrence_experiment(exp: &RecurrenceExperiment) -> Result<ExperimentRun> {
    exp.validate()?;
    let start = Instant::now();
    let mut warnings = Vec::new();
    if exp.horizon < 4.0 * exp.level * exp.level {
        warnings.push(format!(
            "horizon {} is below 4 L^2 = {}; most paths may not reach L",
            exp.horizon,
            4.0 * exp.level * exp.level
        ));
    }
    let paths = rng::map_paths(exp.n_paths, exp.seed, |i, s| run_path(exp, i, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let n = paths.len() as f64;
    let reached = paths.iter().filter(|p| p.reached_level).count();
    let returned = paths.iter().filter(|p| p.returned).count();
    let reached_level_fraction = reached as f64 / n;
    if reached_level_fraction < 0.5 {
        warnings.push(format!(
            "only {:.1}% of paths reached L = {}",
            100.0 * reached_level_fraction,
            exp.level
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    let returned_fraction = if reached == 0 {
        f64::NAN
    } else {
        returned as f64 / reached as f64
    };
    let mean_final_position = paths.iter().map(|p| p.final_z).sum::<f64>() / n;
    Ok(ExperimentRun {
        report: ExperimentReport {
            n_paths: exp.n_paths,
            reached_level_fraction,
            returned_fraction,
            returned_ci: wilson_interval(returned, reached),
            mean_final_position,
            runtime_secs: start.elapsed().as_secs_f64(),
            warnings,
        },
        paths,
    })
}

/// Writes `path,seed,reached_L,first_hit_time,returned,final_z`.
pub fn write_paths_csv<W: io::Write>(paths: &[PathOutcome], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if paths.is_empty() {
        w.write_record(["path", "seed", "reached_L", "first_hit_time", "returned", "final_z"])?;
    }
    for p in paths {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Time-average fraction of `[0, total_time]` spent in each unit cell
/// `[n - 1, n)` of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    pub n_min: i64,
    pub n_max: i64,
    pub p_star: Vec<f64>,
    pub total_time: f64,
}

impl OccupancyEstimate {
    pub fn get(&self, n: i64) -> Option<f64> {
        if (self.n_min..=self.n_max).contains(&n) {
            Some(self.p_star[(n - self.n_min) as usize])
        } else {
            None
        }
    }

    pub fn scaled(&self, factor: f64) -> OccupancyEstimate {
        OccupancyEstimate {
            p_star: self.p_star.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }
}

/// Cell index containing `z`.
pub fn cell_of(z: f64) -> i64 {
    z.floor() as i64 + 1
}

/// Occupancy of a mean-reverting walk, averaged over `n_paths` independent
/// paths of length `total_time` each.
pub fn estimate_occupancy(
    model: &WalkModel,
    total_time: f64,
    n_min: i64,
    n_max: i64,
    n_paths: usize,
    seed: u64,
) -> Result<OccupancyEstimate> {
    if !model.rates.drift().is_signed() {
        return Err(Error::NotErgodic);
    }
    if !(total_time.is_finite() && total_time >= 0.0) {
        return Err(invalid(
            "total_time",
            format!("must be finite and nonnegative, got {total_time}"),
        ));
    }
    if n_min > n_max {
        return Err(invalid("window", format!("n_min {n_min} exceeds n_max {n_max}")));
    }
    if n_paths < 1 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    let cells = (n_max - n_min + 1) as usize;
    if total_time == 0.0 {
        return Ok(OccupancyEstimate {
            n_min,
            n_max,
            p_star: vec![0.0; cells],
            total_time,
        });
    }
    let per_path = rng::map_paths(n_paths, seed, |_, s| -> Result<Vec<f64>> {
        let mut time_in = vec![0.0; cells];
        let mut add = |z: f64, dt: f64| {
            let n = cell_of(z);
            if (n_min..=n_max).contains(&n) {
                time_in[(n - n_min) as usize] += dt;
            }
        };
        let mut events = model.events(0.0, total_time, s)?;
        let mut z = 0.0;
        let mut last = 0.0;
        for e in events.by_ref() {
            add(z, e.tau - last);
            last = e.tau;
            z = e.z_after;
        }
        add(z, total_time - last);
        Ok(time_in)
    });
    let mut p_star = vec![0.0; cells];
    for time_in in per_path {
        for (acc, t) in p_star.iter_mut().zip(time_in?) {
            *acc += t;
        }
    }
    let norm = total_time * n_paths as f64;
    p_star.iter_mut().for_each(|p| *p /= norm);
    Ok(OccupancyEstimate {
        n_min,
        n_max,
        p_star,
        total_time,
    })
}

/// Per-cell residuals of the balance relation
/// `P_{n+1} mu_{n+1} + P_{n-1} lambda_{n-1} - P_n (lambda_n + mu_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    /// Cell index of `residuals[0]`.
    pub first_cell: i64,
    pub residuals: Vec<f64>,
    pub l1_norm: f64,
}

/// Residuals on the interior cells `n_min + 1 ..= n_max - 1` of the
/// occupancy window, where all three occupancies are known. The chain must
/// cover the occupancy window.
pub fn balance_residual(occ: &OccupancyEstimate, chain: &BDChain) -> Result<BalanceResidual> {
    if occ.p_star.len() as i64 != occ.n_max - occ.n_min + 1 {
        return Err(Error::WindowMismatch(
            "occupancy length does not match its window".into(),
        ));
    }
    if !(chain.contains(occ.n_min) && chain.contains(occ.n_max)) {
        return Err(Error::WindowMismatch(format!(
            "chain [{}, {}] does not cover occupancy window [{}, {}]",
            chain.n_min(),
            chain.n_max(),
            occ.n_min,
            occ.n_max
        )));
    }
    if occ.n_max - occ.n_min < 2 {
        return Err(Error::WindowMismatch(
            "occupancy window needs at least three cells".into(),
        ));
    }
    let p = |n: i64| occ.p_star[(n - occ.n_min) as usize];
    let mut residuals = Vec::with_capacity(occ.p_star.len() - 2);
    for n in occ.n_min + 1..occ.n_max {
        let (_, mu_up) = chain.rates(n + 1)?;
        let (lambda_down, _) = chain.rates(n - 1)?;
        let (lambda, mu) = chain.rates(n)?;
        residuals.push(p(n + 1) * mu_up + p(n - 1) * lambda_down - p(n) * (lambda + mu));
    }
    let l1_norm = residuals.iter().map(|r| r.abs()).sum();
    Ok(BalanceResidual {
        first_cell: occ.n_min + 1,
        residuals,
        l1_norm,
    })
}

/// Stationary law of the chain restricted to `[n_min, n_max]` with
/// reflecting ends, from detailed balance `P_{n+1} mu_{n+1} = P_n lambda_n`.
pub fn reflecting_stationary(chain: &BDChain, n_min: i64, n_max: i64) -> Result<OccupancyEstimate> {
    if n_min >= n_max || !chain.contains(n_min) || !chain.contains(n_max) {
        return Err(Error::WindowMismatch(format!(
            "window [{n_min}, {n_max}] must be non-trivial and inside the chain"
        )));
    }
    let mut log_p = vec![0.0];
    for n in n_min..n_max {
        let (lambda, _) = chain.rates(n)?;
        let (_, mu_next) = chain.rates(n + 1)?;
        let last = *log_p.last().unwrap();
        log_p.push(last + (lambda / mu_next).ln());
    }
    let peak = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_p.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(OccupancyEstimate {
        n_min,
        n_max,
        p_star: weights.iter().map(|w| w / total).collect(),
        total_time: f64::INFINITY,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
