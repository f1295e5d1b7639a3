//! Event-driven simulation of the walk `Z = Lambda - M` and the compensator
//! and second-moment diagnostics built on top of it.
//!
//! Because `lambda + mu = 1` everywhere, a constant majorant of 2 accepts every
//! candidate with probability exactly 1/2. The thinned clock is therefore a
//! rate-1 Poisson clock: each event fires at an `Exp(1)` gap and goes up with
//! probability `lambda_{Z(tau-), tau}`, down otherwise.

use std::io;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{JumpLaw, JumpSampler, RateField};
use crate::rng::{self, Stream};

/// Sub-step used when integrating time-dependent rates along a trajectory.
pub const RATE_SUBSTEP: f64 = 0.01;

/// One jump of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tau: f64,
    /// Positive for an up-jump, negative for a down-jump.
    pub signed_jump: f64,
    pub z_after: f64,
}

/// Which compound Poisson component of the walk fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Up,
    Down,
}

/// A simulated path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub z0: f64,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl Trajectory {
    /// `Z(tau)`, right-continuous.
    pub fn z_at(&self, tau: f64) -> f64 {
        let k = self.events.partition_point(|e| e.tau <= tau);
        if k == 0 {
            self.z0
        } else {
            self.events[k - 1].z_after
        }
    }

    /// `Z(tau-)`.
    pub fn z_before(&self, tau: f64) -> f64 {
        let k = self.events.partition_point(|e| e.tau < tau);
        if k == 0 {
            self.z0
        } else {
            self.events[k - 1].z_after
        }
    }

    pub fn final_z(&self) -> f64 {
        self.events.last().map_or(self.z0, |e| e.z_after)
    }

    /// Positions obtained by summing the signed jumps from `z0`.
    pub fn replay(&self) -> Vec<f64> {
        self.events
            .iter()
            .scan(self.z0, |z, e| {
                *z += e.signed_jump;
                Some(*z)
            })
            .collect()
    }

    /// Marks of one component, with down-jump sizes reported as positive.
    pub fn component(&self, side: Side) -> Vec<Mark> {
        self.events
            .iter()
            .filter(|e| match side {
                Side::Up => e.signed_jump > 0.0,
                Side::Down => e.signed_jump < 0.0,
            })
            .map(|e| Mark {
                tau: e.tau,
                size: e.signed_jump.abs(),
            })
            .collect()
    }

    /// Writes `tau,signed_jump,z_after`, one event per row.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.events.is_empty() {
            w.write_record(["tau", "signed_jump", "z_after"])?;
        }
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rate field together with the up- and down-jump laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkModel {
    pub rates: RateField,
    pub up: JumpLaw,
    pub down: JumpLaw,
}

impl WalkModel {
    pub fn new(rates: RateField, up: JumpLaw, down: JumpLaw) -> Result<Self> {
        up.validate()?;
        down.validate()?;
        Ok(WalkModel { rates, up, down })
    }

    /// Lazily generated events on `(0, horizon]` starting from `z0`.
    pub fn events(&self, z0: f64, horizon: f64, seed: u64) -> Result<WalkEvents<'_>> {
        check_horizon(horizon)?;
        if !z0.is_finite() {
            return Err(invalid("z0", "must be finite"));
        }
        Ok(WalkEvents {
            rates: &self.rates,
            up: self.up.sampler(),
            down: self.down.sampler(),
            rng: rng::stream(seed),
            tau: 0.0,
            z: z0,
            horizon,
        })
    }

    pub fn simulate(&self, horizon: f64, seed: u64) -> Result<Trajectory> {
        self.simulate_from(0.0, horizon, seed)
    }

    pub fn simulate_from(&self, z0: f64, horizon: f64, seed: u64) -> Result<Trajectory> {
        let events = self.events(z0, horizon, seed)?.collect();
        Ok(Trajectory {
            seed,
            z0,
            horizon,
            events,
        })
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "horizon",
            format!("must be finite and nonnegative, got {horizon}"),
        ))
    }
}

/// Iterator over the events of one path.
pub struct WalkEvents<'a> {
    rates: &'a RateField,
    up: JumpSampler,
    down: JumpSampler,
    rng: Stream,
    tau: f64,
    z: f64,
    horizon: f64,
}

impl WalkEvents<'_> {
    /// Current position (after the last yielded event).
    pub fn position(&self) -> f64 {
        self.z
    }
}

impl Iterator for WalkEvents<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let gap: f64 = Exp1.sample(&mut self.rng);
        let tau = self.tau + gap;
        if tau > self.horizon {
            // Park the clock so later calls keep returning None.
            self.tau = f64::INFINITY;
            return None;
        }
        self.tau = tau;
        let (lambda, _) = self.rates.eval(self.z, tau);
        let signed_jump = if self.rng.random::<f64>() < lambda {
            self.up.sample(&mut self.rng)
        } else {
            -self.down.sample(&mut self.rng)
        };
        self.z += signed_jump;
        Some(Event {
            tau,
            signed_jump,
            z_after: self.z,
        })
    }
}

/// Simulates one path of the walk from `Z(0) = 0`.
pub fn simulate_walk(
    rf: &RateField,
    up_law: &JumpLaw,
    down_law: &JumpLaw,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory> {
    WalkModel::new(rf.clone(), *up_law, *down_law)?.simulate(horizon, seed)
}

/// A jump time and its (positive) size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub tau: f64,
    pub size: f64,
}

/// Instantaneous rate of one component along a realized path.
pub trait RatePath {
    fn rate(&self, s: f64) -> f64;

    /// `int_a^b rate(s) ds`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        quadrature::integrate(|s| self.rate(s), a, b, 1e-12).integral
    }
}

impl<F: Fn(f64) -> f64> RatePath for F {
    fn rate(&self, s: f64) -> f64 {
        self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl RatePath for ConstantRate {
    fn rate(&self, _s: f64) -> f64 {
        self.0
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.0 * (b - a)
        }
    }
}

/// `lambda_{Z(s-), s}` or `mu_{Z(s-), s}` along a trajectory. The state is
/// frozen between events; the time dependence is integrated by composite
/// Simpson with steps of at most [`RATE_SUBSTEP`].
pub struct TrajectoryRate<'a> {
    traj: &'a Trajectory,
    rates: &'a RateField,
    side: Side,
}

impl<'a> TrajectoryRate<'a> {
    pub fn new(traj: &'a Trajectory, rates: &'a RateField, side: Side) -> Self {
        TrajectoryRate { traj, rates, side }
    }

    fn pick(&self, z: f64, s: f64) -> f64 {
        let (l, m) = self.rates.eval(z, s);
        match self.side {
            Side::Up => l,
            Side::Down => m,
        }
    }

    fn segment(&self, z: f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if self.rates.drift().is_time_homogeneous() {
            return self.pick(z, a) * (b - a);
        }
        let n = 2 * ((b - a) / (2.0 * RATE_SUBSTEP)).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        let mut acc = self.pick(z, a) + self.pick(z, b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.pick(z, a + h * i as f64);
        }
        acc * h / 3.0
    }
}

impl RatePath for TrajectoryRate<'_> {
    fn rate(&self, s: f64) -> f64 {
        self.pick(self.traj.z_before(s), s)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let events = &self.traj.events;
        let mut k = events.partition_point(|e| e.tau <= a);
        let mut z = if k == 0 { self.traj.z0 } else { events[k - 1].z_after };
        let mut lo = a;
        let mut acc = 0.0;
        while k < events.len() && events[k].tau < b {
            acc += self.segment(z, lo, events[k].tau);
            lo = events[k].tau;
            z = events[k].z_after;
            k += 1;
        }
        acc + self.segment(z, lo, b)
    }
}

/// How the final partial interval of the literal compensator was weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// The first mark after `tau` was available and used.
    NextMark,
    /// No later mark was supplied; the mean mark 1 was used.
    MeanMark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteralCompensator {
    pub value: f64,
    pub tail: TailMode,
}

fn check_marks(marks: &[Mark]) -> Result<()> {
    let mut prev = 0.0;
    for (index, m) in marks.iter().enumerate() {
        if !m.tau.is_finite() || m.tau <= prev {
            return Err(Error::MalformedEvents {
                index,
                prev,
                next: m.tau,
            });
        }
        prev = m.tau;
    }
    Ok(())
}

/// `sum_i X_i int_{tau ^ tau_{i-1}}^{tau ^ tau_i} rate(s) ds`.
///
/// `marks` may extend past `tau`; the first mark beyond `tau` weights the
/// final partial interval. Without one, the mean mark 1 is used instead.
pub fn compensator_literal<R: RatePath + ?Sized>(marks: &[Mark], rate: &R, tau: f64) -> Result<LiteralCompensator> {
    check_marks(marks)?;
    if tau.is_nan() || tau < 0.0 {
        return Err(invalid("tau", format!("must be nonnegative, got {tau}")));
    }
    let mut value = 0.0;
    let mut prev = 0.0;
    for m in marks {
        if m.tau <= tau {
            value += m.size * rate.integral(prev, m.tau);
            prev = m.tau;
        } else {
            value += m.size * rate.integral(prev, tau);
            return Ok(LiteralCompensator {
                value,
                tail: TailMode::NextMark,
            });
        }
    }
    value += rate.integral(prev, tau);
    Ok(LiteralCompensator {
        value,
        tail: TailMode::MeanMark,
    })
}

/// `int_0^tau rate(s) ds` times the mean mark (1).
pub fn compensator_ensemble<R: RatePath + ?Sized>(rate: &R, tau: f64) -> f64 {
    rate.integral(0.0, tau.max(0.0))
}

/// Raw process value and both compensators at `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatorReport {
    pub tau: f64,
    pub raw_value: f64,
    pub literal_value: f64,
    pub ensemble_value: f64,
    pub residual_literal: f64,
    pub residual_ensemble: f64,
    pub tail: TailMode,
}

pub fn compensator_report<R: RatePath + ?Sized>(marks: &[Mark], rate: &R, tau: f64) -> Result<CompensatorReport> {
    let literal = compensator_literal(marks, rate, tau)?;
    let ensemble_value = compensator_ensemble(rate, tau);
    let raw_value: f64 = marks.iter().take_while(|m| m.tau <= tau).map(|m| m.size).sum();
    Ok(CompensatorReport {
        tau,
        raw_value,
        literal_value: literal.value,
        ensemble_value,
        residual_literal: raw_value - literal.value,
        residual_ensemble: raw_value - ensemble_value,
        tail: literal.tail,
    })
}

/// Marks of a homogeneous compound Poisson process on `[0, horizon]` plus the
/// first mark after the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoissonPath {
    pub marks: Vec<Mark>,
    pub next: Mark,
}

impl CompoundPoissonPath {
    /// Marks on `[0, horizon]` followed by the first later one.
    pub fn with_next(&self) -> Vec<Mark> {
        let mut all = self.marks.clone();
        all.push(self.next);
        all
    }
}

pub fn simulate_compound_poisson(rate: f64, law: &JumpLaw, horizon: f64, seed: u64) -> Result<CompoundPoissonPath> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(invalid("rate", format!("must be positive and finite, got {rate}")));
    }
    check_horizon(horizon)?;
    law.validate()?;
    let sampler = law.sampler();
    let mut rng = rng::stream(seed);
    let mut marks = Vec::new();
    let mut tau = 0.0;
    loop {
        let gap: f64 = Exp1.sample(&mut rng);
        tau += gap / rate;
        let mark = Mark {
            tau,
            size: sampler.sample(&mut rng),
        };
        if tau > horizon {
            return Ok(CompoundPoissonPath { marks, next: mark });
        }
        marks.push(mark);
    }
}

/// Outcome of the second-moment bound check on increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldCheck {
    pub empirical_second_moment: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
    pub n_paths: usize,
}

/// Slack allowed on the bound.
pub const WALD_SLACK: f64 = 0.05;

/// Estimates `E[(Z(start + sigma) - Z(start))^2]` over fresh paths from 0 and
/// compares it with `sigma (2 + Var X + Var Y)`.
pub fn wald_second_moment_check(
    model: &WalkModel,
    window_start: f64,
    sigma: f64,
    n_paths: usize,
    seed: u64,
) -> Result<WaldCheck> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be finite and nonnegative, got {sigma}")));
    }
    if !(window_start.is_finite() && window_start >= 0.0) {
        return Err(invalid(
            "window_start",
            format!("must be finite and nonnegative, got {window_start}"),
        ));
    }
    if n_paths < 100 {
        return Err(invalid("n_paths", format!("must be at least 100, got {n_paths}")));
    }
    let end = window_start + sigma;
    let squares = rng::map_paths(n_paths, seed, |_, path_seed| -> Result<f64> {
        let mut events = model.events(0.0, end, path_seed)?;
        let mut z_start = 0.0;
        let mut z = 0.0;
        for e in events.by_ref() {
            if e.tau <= window_start {
                z_start = e.z_after;
            }
            z = e.z_after;
        }
        Ok((z - z_start).powi(2))
    });
    let squares = squares.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = n_paths as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let bound = sigma * (2.0 + model.up.variance() + model.down.variance());
    Ok(WaldCheck {
        empirical_second_moment: mean,
        std_error: (var / n).sqrt(),
        bound,
        pass: mean <= bound * (1.0 + WALD_SLACK),
        n_paths,
    })
}
