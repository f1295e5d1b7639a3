//! Command execution.

use std::io::Write;
use std::path::Path;

use driftlab_core::classifier::{mv_critical_field, BilateralClassification};
use driftlab_core::experiments::{reflecting_stationary, with_workers, write_paths_csv};
use driftlab_core::simulator::{compensator_report, Side, TrajectoryRate};
use driftlab_core::{
    balance_residual, classify_bilateral, classify_mv_critical, classify_theorem1, discretize_to_bd,
    estimate_occupancy, experiments, rng, run_recurrence_experiment, simulator, wald_second_moment_check, BDChain,
    ChainCriterion, Classification, DriftFamily, DriftField, Method, OccupancyEstimate, RateField,
    RecurrenceExperiment, Verdict, WalkModel,
};
use log::info;
use serde::Serialize;

use crate::config::{ChainSpec, ClassifyMethod, Command, ExperimentKind, Format, RunConfig};
use crate::error::CliError;
use crate::output::{csv_error, sidecar_path, write_atomic, write_json, Record};

/// What a finished run reports back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One-line human summary for stdout.
    pub summary: String,
    /// True when the verdict was inconclusive or a check failed.
    pub inconclusive: bool,
}

impl RunOutcome {
    pub fn exit_code(&self, strict: bool) -> u8 {
        u8::from(strict && self.inconclusive)
    }
}

fn field(cfg: &RunConfig) -> Result<DriftField, CliError> {
    Ok(DriftField::with_x_floor(cfg.field.clone(), cfg.x_floor)?)
}

fn rate_field(cfg: &RunConfig) -> Result<RateField, CliError> {
    Ok(RateField::with_t_proxy(field(cfg)?, cfg.t_proxy)?)
}

fn model(cfg: &RunConfig) -> Result<WalkModel, CliError> {
    Ok(WalkModel::new(rate_field(cfg)?, cfg.up_jump, cfg.down_jump)?)
}

/// Writes the full record as JSON, or `rows` as CSV plus a JSON sidecar
/// holding `meta`.
fn emit<T: Serialize, M: Serialize>(
    cfg: &RunConfig,
    full: T,
    meta: M,
    rows: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let Some(path) = cfg.output.as_deref() else {
        return Ok(());
    };
    match cfg.format {
        Format::Json => write_json(path, &Record::new(cfg, full)),
        Format::Csv => {
            write_atomic(path, rows)?;
            write_json(&sidecar_path(path), &Record::new(cfg, meta))
        }
    }
}

fn csv_rows<R: Serialize>(w: &mut dyn Write, rows: &[R]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    out.flush()
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    info!("running {} with seed {}", cfg.command, cfg.seed());
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Classify => classify(cfg),
        Command::BdOracle => bd_oracle(cfg),
        Command::Experiment => match cfg.experiment {
            ExperimentKind::Recurrence => recurrence(cfg),
            ExperimentKind::Occupancy => occupancy(cfg),
        },
        Command::Check => check(cfg),
    }
}

#[derive(Serialize)]
struct SimulateMeta {
    seed: u64,
    z0: f64,
    horizon: f64,
    n_events: usize,
    final_z: f64,
}

fn simulate(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let traj = model(cfg)?.simulate_from(cfg.z0, cfg.horizon, cfg.seed())?;
    let meta = SimulateMeta {
        seed: traj.seed,
        z0: traj.z0,
        horizon: traj.horizon,
        n_events: traj.events.len(),
        final_z: traj.final_z(),
    };
    let summary = format!(
        "events={} final_z={:.3} horizon={} seed={}",
        meta.n_events, meta.final_z, meta.horizon, meta.seed
    );
    emit(cfg, &traj, &meta, |w| traj.write_csv(w).map_err(csv_error))?;
    Ok(RunOutcome {
        summary,
        inconclusive: false,
    })
}

#[derive(Serialize)]
struct ClassRow {
    verdict: Verdict,
    c_estimate: f64,
    window_lo: f64,
    window_hi: f64,
    argext: f64,
    method: Method,
}

impl From<&Classification> for ClassRow {
    fn from(c: &Classification) -> Self {
        ClassRow {
            verdict: c.verdict,
            c_estimate: c.c_estimate,
            window_lo: c.window[0],
            window_hi: c.window[1],
            argext: c.argext,
            method: c.method,
        }
    }
}

fn one_line(c: &Classification) -> String {
    format!(
        "verdict={} c_estimate={:.3} method={}",
        c.verdict, c.c_estimate, c.method
    )
}

fn classify(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    match cfg.method {
        ClassifyMethod::Theorem1 => {
            let c = classify_theorem1(&field(cfg)?, cfg.x0, cfg.x_max, cfg.grid)?;
            emit(cfg, c, c, |w| csv_rows(w, &[ClassRow::from(&c)]))?;
            Ok(RunOutcome {
                summary: one_line(&c),
                inconclusive: c.verdict == Verdict::Inconclusive,
            })
        }
        ClassifyMethod::MvCritical => {
            let DriftFamily::PowerLaw { rho, beta, .. } = cfg.field else {
                return Err(CliError::Config("mv_critical needs a power_law field".into()));
            };
            mv_critical_field(rho, beta)?;
            let r = classify_mv_critical(rho, beta)?;
            let summary = format!("{} theorem1={}", one_line(&r.analytic), r.theorem1.verdict);
            emit(cfg, r, r, |w| {
                csv_rows(w, &[ClassRow::from(&r.analytic), ClassRow::from(&r.theorem1)])
            })?;
            Ok(RunOutcome {
                summary,
                inconclusive: r.analytic.verdict == Verdict::Inconclusive,
            })
        }
    }
}

#[derive(Serialize)]
struct OracleResult {
    verdict: Verdict,
    ratio_test: BilateralClassification,
    series_criterion: BilateralClassification,
}

#[derive(Serialize)]
struct OracleRow {
    criterion: &'static str,
    tail: &'static str,
    verdict: Verdict,
    c_estimate: f64,
    window_lo: f64,
    window_hi: f64,
    argext: f64,
}

fn oracle_rows(name: &'static str, b: &BilateralClassification) -> Vec<OracleRow> {
    let row = |tail, c: &Classification| OracleRow {
        criterion: name,
        tail,
        verdict: c.verdict,
        c_estimate: c.c_estimate,
        window_lo: c.window[0],
        window_hi: c.window[1],
        argext: c.argext,
    };
    let mut rows = vec![row("right", &b.right)];
    rows.extend(b.left.as_ref().map(|l| row("left", l)));
    rows
}

fn ratio_chain(c: f64, lo: i64, hi: i64) -> Result<BDChain, CliError> {
    Ok(BDChain::from_fn(lo, hi, move |n| {
        let r = 1.0 + c / n as f64;
        (r / (1.0 + r), 1.0 / (1.0 + r))
    })?)
}

fn bd_oracle(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let [lo, hi] = cfg.window;
    let chain = match cfg.chain {
        Some(ChainSpec::Ratio { c }) => ratio_chain(c, lo, hi)?,
        None => discretize_to_bd(&rate_field(cfg)?, lo, hi, cfg.quadrature_points)?,
    };
    let ratio = classify_bilateral(&chain, cfg.n0, ChainCriterion::Ratio)?;
    let series = classify_bilateral(
        &chain,
        cfg.n0,
        ChainCriterion::Series {
            tail_extension: cfg.tail_extension,
        },
    )?;
    let verdict = if ratio.verdict == series.verdict {
        ratio.verdict
    } else {
        Verdict::Inconclusive
    };
    let summary = format!(
        "verdict={verdict} ratio_test={} series_criterion={} c_estimate={:.3}",
        ratio.verdict, series.verdict, ratio.right.c_estimate
    );
    let result = OracleResult {
        verdict,
        ratio_test: ratio,
        series_criterion: series,
    };
    let mut rows = oracle_rows("ratio_test", &result.ratio_test);
    rows.extend(oracle_rows("series_criterion", &result.series_criterion));
    emit(cfg, &result, &result, |w| csv_rows(w, &rows))?;
    Ok(RunOutcome {
        summary,
        inconclusive: verdict == Verdict::Inconclusive,
    })
}

fn recurrence(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let exp = RecurrenceExperiment {
        model: model(cfg)?,
        n_paths: cfg.n_paths,
        horizon: cfg.horizon,
        level: cfg.level,
        band: cfg.band,
        seed: cfg.seed(),
    };
    let run = with_workers(cfg.workers, || run_recurrence_experiment(&exp))?;
    let r = &run.report;
    let summary = format!(
        "returned_fraction={:.3} ci=[{:.3}, {:.3}] reached_L_fraction={:.3} n_paths={}",
        r.returned_fraction, r.returned_ci[0], r.returned_ci[1], r.reached_level_fraction, r.n_paths
    );
    emit(cfg, &run, r, |w| write_paths_csv(&run.paths, w).map_err(csv_error))?;
    Ok(RunOutcome {
        summary,
        inconclusive: false,
    })
}

#[derive(Serialize)]
struct OccupancyResult {
    occupancy: OccupancyEstimate,
    reflecting: OccupancyEstimate,
    balance: experiments::BalanceResidual,
}

#[derive(Serialize)]
struct OccupancyRow {
    cell: i64,
    p_star: f64,
    p_reflecting: f64,
    residual: Option<f64>,
}

fn occupancy(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let [lo, hi] = cfg.occupancy_window;
    let m = model(cfg)?;
    let occ = with_workers(cfg.workers, || {
        estimate_occupancy(&m, cfg.total_time, lo, hi, cfg.n_paths, cfg.seed())
    })?;
    let chain = discretize_to_bd(&m.rates, lo - 1, hi + 1, cfg.quadrature_points)?;
    let balance = balance_residual(&occ, &chain)?;
    let reflecting = reflecting_stationary(&chain, lo, hi)?;
    let summary = format!(
        "l1_residual={:.3e} total_time={} cells={}",
        balance.l1_norm,
        cfg.total_time,
        hi - lo + 1
    );
    let rows: Vec<OccupancyRow> = (lo..=hi)
        .map(|n| OccupancyRow {
            cell: n,
            p_star: occ.get(n).unwrap_or(f64::NAN),
            p_reflecting: reflecting.get(n).unwrap_or(f64::NAN),
            residual: usize::try_from(n - balance.first_cell)
                .ok()
                .and_then(|i| balance.residuals.get(i).copied()),
        })
        .collect();
    let result = OccupancyResult {
        occupancy: occ,
        reflecting,
        balance,
    };
    emit(cfg, &result, &result.balance, |w| csv_rows(w, &rows))?;
    Ok(RunOutcome {
        summary,
        inconclusive: false,
    })
}

#[derive(Serialize)]
struct ResidualStat {
    mode: &'static str,
    mean: f64,
    std_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CheckResult {
    wald: simulator::WaldCheck,
    residuals: Vec<ResidualStat>,
    pass: bool,
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    statistic: f64,
    std_error: f64,
    bound: f64,
    pass: bool,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Second-moment bound plus the compensated up-component at `tau`.
fn check(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let m = model(cfg)?;
    let seed = cfg.seed();
    let wald = with_workers(cfg.workers, || {
        wald_second_moment_check(&m, cfg.window_start, cfg.sigma, cfg.n_paths, seed)
    })?;
    // Simulate past tau so the literal compensator sees the next mark.
    let horizon = cfg.tau + 50.0;
    let pairs = with_workers(cfg.workers, || {
        rng::map_paths(cfg.n_paths, seed ^ 0x5eed, |_, s| -> Result<(f64, f64), CliError> {
            let traj = m.simulate(horizon, s)?;
            let rate = TrajectoryRate::new(&traj, &m.rates, Side::Up);
            let r = compensator_report(&traj.component(Side::Up), &rate, cfg.tau)?;
            Ok((r.residual_literal, r.residual_ensemble))
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let literal: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ensemble: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let residuals: Vec<ResidualStat> = [("literal", literal), ("ensemble", ensemble)]
        .into_iter()
        .map(|(mode, xs)| {
            let (mean, std_error) = mean_se(&xs);
            ResidualStat {
                mode,
                mean,
                std_error,
                pass: mean.abs() <= 3.0 * std_error,
            }
        })
        .collect();
    let pass = wald.pass && residuals.iter().all(|r| r.pass);
    let word = |p: bool| if p { "pass" } else { "fail" };
    let summary = format!(
        "wald={} second_moment={:.3} bound={:.3} residual_literal={:+.3} residual_ensemble={:+.3} residuals={}",
        word(wald.pass),
        wald.empirical_second_moment,
        wald.bound,
        residuals[0].mean,
        residuals[1].mean,
        word(residuals.iter().all(|r| r.pass))
    );
    let mut rows = vec![CheckRow {
        check: "wald",
        statistic: wald.empirical_second_moment,
        std_error: wald.std_error,
        bound: wald.bound,
        pass: wald.pass,
    }];
    for (check, r) in ["residual_literal", "residual_ensemble"].into_iter().zip(&residuals) {
        rows.push(CheckRow {
            check,
            statistic: r.mean,
            std_error: r.std_error,
            bound: 3.0 * r.std_error,
            pass: r.pass,
        });
    }
    let result = CheckResult { wald, residuals, pass };
    emit(cfg, &result, &result, |w| csv_rows(w, &rows))?;
    Ok(RunOutcome {
        summary,
        inconclusive: !pass,
    })
}

pub fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
