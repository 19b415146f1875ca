//! T-state demand: windowed histograms, capacity enforcement and a
//! distillation supply simulation.
//!
//! A gate consumes a T state if it is `t`, `tdg`, or an `init` of the
//! magic state label, so the same analyses run before and after ICM
//! decomposition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gatelang::{metrics, Circuit, MetricsReport, Time};
use crate::schedule::{retime, DelayRecord, Offer, Retimed, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("analysis needs a fully scheduled circuit")]
    Unscheduled,
    #[error("{0} must be at least 1")]
    BadParam(&'static str),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn require_scheduled(c: &Circuit) -> Result<Time, AnalysisError> {
    c.depth().ok_or(AnalysisError::Unscheduled)
}

/// Index of the aligned window holding `t`; windows start at 1, 1+W, ...
pub fn window_index(t: Time, window: Time) -> Time {
    (t - 1) / window
}

pub fn window_start(index: Time, window: Time) -> Time {
    1 + index * window
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TDistribution {
    pub window: Time,
    /// `(window start, consumer count)`.
    pub bins: Vec<(Time, u64)>,
}

impl TDistribution {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.1).sum()
    }
}

pub fn t_histogram(c: &Circuit, window: Time) -> Result<TDistribution, AnalysisError> {
    let depth = require_scheduled(c)?;
    if window == 0 {
        return Err(AnalysisError::BadParam("window"));
    }
    let count = depth.div_ceil(window) as usize;
    let mut bins: Vec<(Time, u64)> = (0..count as Time)
        .map(|i| (window_start(i, window), 0))
        .collect();
    for g in c.gates.iter().filter(|g| g.is_t_consumer()) {
        let t = g.time().expect("scheduled");
        bins[window_index(t, window) as usize].1 += 1;
    }
    Ok(TDistribution { window, bins })
}

/// Delays T consumers so that no aligned window holds more than `capacity`.
/// Excess consumers move to the start of the next window, earliest first
/// and ties by wire.
pub fn enforce_t_capacity(
    c: &Circuit,
    window: Time,
    capacity: u64,
) -> Result<Retimed, AnalysisError> {
    require_scheduled(c)?;
    if window == 0 {
        return Err(AnalysisError::BadParam("window"));
    }
    if capacity == 0 {
        return Err(AnalysisError::BadParam("capacity"));
    }
    let mut current = (0, 0u64);
    Ok(retime(c, |_, g, t| {
        if !g.is_t_consumer() {
            return Offer::Accept;
        }
        let w = window_index(t, window);
        if current.0 != w {
            current = (w, 0);
        }
        if current.1 < capacity {
            current.1 += 1;
            Offer::Accept
        } else {
            Offer::DelayTo(window_start(w + 1, window))
        }
    })?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactoryConfig {
    pub concurrent: u64,
    pub duration: Time,
    /// Production began early enough that a batch is ready at time 1.
    pub warmup: bool,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        FactoryConfig {
            concurrent: 1,
            duration: 5,
            warmup: true,
        }
    }
}

impl FactoryConfig {
    fn validate(&self) -> Result<(), AnalysisError> {
        if self.concurrent == 0 {
            return Err(AnalysisError::BadParam("concurrent"));
        }
        if self.duration == 0 {
            return Err(AnalysisError::BadParam("duration"));
        }
        Ok(())
    }

    /// Batches completed by time `t` (inclusive).
    fn batches_by(&self, t: Time) -> u64 {
        if t == 0 {
            return 0;
        }
        (t - 1) / self.duration + u64::from(self.warmup)
    }

    pub fn produced_by(&self, t: Time) -> u64 {
        self.concurrent * self.batches_by(t)
    }

    /// Earliest time at which more than `consumed` states exist.
    pub fn earliest_supply(&self, consumed: u64) -> Time {
        let batches = (consumed + 1).div_ceil(self.concurrent);
        let steps = batches - u64::from(self.warmup);
        1 + steps * self.duration
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityTrace {
    pub duration: Time,
    pub concurrent: u64,
    pub warmup: bool,
    /// Entry `t - 1` holds the value for time step `t`.
    pub produced: Vec<u64>,
    pub consumed: Vec<u64>,
    /// Negative only for circuits that were not passed through the simulation.
    pub available: Vec<i64>,
}

impl AvailabilityTrace {
    pub fn total_consumed(&self) -> u64 {
        self.consumed.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Availability {
    pub trace: AvailabilityTrace,
    pub retimed: Retimed,
}

/// Feeds T consumers from the factory in (time, wire) order. A consumer
/// that finds no state claims the next one to be produced and waits for it,
/// so starved consumers are served first come, first served.
pub fn simulate_availability(c: &Circuit, f: FactoryConfig) -> Result<Availability, AnalysisError> {
    require_scheduled(c)?;
    f.validate()?;
    let mut claimed = 0u64;
    let mut waiting = vec![false; c.len()];
    let retimed = retime(c, |i, g, t| {
        if !g.is_t_consumer() || waiting[i] {
            return Offer::Accept;
        }
        let ready = f.produced_by(t) > claimed;
        let supply = f.earliest_supply(claimed);
        claimed += 1;
        if ready {
            Offer::Accept
        } else {
            waiting[i] = true;
            Offer::DelayTo(supply)
        }
    })?;
    let trace = availability_trace(&retimed.circuit, f)?;
    Ok(Availability { trace, retimed })
}

/// Supply and demand per step for a circuit taken as is.
pub fn availability_trace(
    c: &Circuit,
    f: FactoryConfig,
) -> Result<AvailabilityTrace, AnalysisError> {
    let depth = require_scheduled(c)?;
    f.validate()?;
    let steps = depth as usize;
    let mut consumed = vec![0u64; steps];
    for g in c.gates.iter().filter(|g| g.is_t_consumer()) {
        consumed[g.time().expect("scheduled") as usize - 1] += 1;
    }
    let mut produced = Vec::with_capacity(steps);
    let mut available = Vec::with_capacity(steps);
    let mut balance: i64 = 0;
    for t in 1..=depth {
        let batch = f.produced_by(t) - f.produced_by(t - 1);
        produced.push(batch);
        balance += batch as i64 - consumed[t as usize - 1] as i64;
        available.push(balance);
    }
    Ok(AvailabilityTrace {
        duration: f.duration,
        concurrent: f.concurrent,
        warmup: f.warmup,
        produced,
        consumed,
        available,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metrics: MetricsReport,
    pub histogram: TDistribution,
    pub availability: AvailabilityTrace,
    pub delays_applied: Vec<DelayRecord>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Histogram and metrics of `c` plus the availability simulation and the
/// delays it had to apply. `window` defaults to the factory duration.
pub fn analysis_report(
    c: &Circuit,
    window: Option<Time>,
    f: FactoryConfig,
) -> Result<(AnalysisReport, Retimed), AnalysisError> {
    let histogram = t_histogram(c, window.unwrap_or(f.duration))?;
    let sim = simulate_availability(c, f)?;
    let report = AnalysisReport {
        metrics: metrics(c),
        histogram,
        availability: sim.trace,
        delays_applied: sim.retimed.delays.clone(),
    };
    Ok((report, sim.retimed))
}
