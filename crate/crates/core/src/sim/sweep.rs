use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::pki::VehicleId;

use super::config::{AttackerSpec, ScenarioConfig};
use super::engine::run;
use super::metrics::{Aggregates, ScenarioMetrics};
use super::world::build_world;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Vehicles,
    Messages,
    Attackers,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Vehicles => "vehicles",
            SweepAxis::Messages => "messages",
            SweepAxis::Attackers => "attackers",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vehicles" => Ok(SweepAxis::Vehicles),
            "messages" => Ok(SweepAxis::Messages),
            "attackers" => Ok(SweepAxis::Attackers),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected vehicles, messages or attackers)"
            )),
        }
    }
}

/// How a batch of independent scenarios is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// On the rayon pool; sequential when the `parallel` feature is off.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: u64,
    pub aggregates: Aggregates,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioMetrics, SimError> {
    build_world(config).map(|w| run(&w))
}

/// Runs every scenario independently; results come back in input order.
pub fn run_batch(configs: &[ScenarioConfig], execution: Execution) -> Vec<Result<ScenarioMetrics, SimError>> {
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => configs.par_iter().map(run_scenario).collect(),
        _ => configs.iter().map(run_scenario).collect(),
    }
}

/// The scenario run for one sweep point. Its seed is `base.seed ^ value`.
pub fn point_config(base: &ScenarioConfig, axis: SweepAxis, value: u64) -> Result<ScenarioConfig, SimError> {
    let mut config = base.clone();
    config.seed = base.seed ^ value;
    let count = usize::try_from(value).map_err(|_| SimError::InvalidScenario(format!("{value} is too large")))?;
    match axis {
        SweepAxis::Vehicles => config.vehicles = count,
        SweepAxis::Messages => config.accident_messages = count,
        SweepAxis::Attackers => {
            // attacker k (vehicle k) spoofs vehicle n-1-k
            let n = config.vehicles;
            if 2 * count > n {
                return Err(SimError::InvalidScenario(format!(
                    "{count} attackers need at least {} vehicles, have {n}",
                    2 * count
                )));
            }
            config.attackers = (0..count)
                .map(|k| AttackerSpec {
                    attacker: VehicleId::from_index(k as u64),
                    spoofs: vec![VehicleId::from_index((n - 1 - k) as u64)],
                })
                .collect();
        }
    }
    Ok(config)
}

pub fn sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[u64]) -> Result<Vec<SweepRow>, SimError> {
    sweep_with(base, axis, values, Execution::default())
}

/// One run per value, rows in input order. `values` must be non-empty and
/// strictly ascending.
pub fn sweep_with(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[u64],
    execution: Execution,
) -> Result<Vec<SweepRow>, SimError> {
    if values.is_empty() {
        return Err(SimError::EmptySweep);
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::UnsortedSweep);
    }
    let tag = |value: u64| {
        move |e: SimError| SimError::SweepPoint {
            axis,
            value,
            source: Box::new(e),
        }
    };
    let configs = values
        .iter()
        .map(|&v| point_config(base, axis, v).map_err(tag(v)))
        .collect::<Result<Vec<_>, _>>()?;
    run_batch(&configs, execution)
        .into_iter()
        .zip(values)
        .map(|(result, &value)| {
            result.map_err(tag(value)).map(|m| SweepRow {
                axis,
                value,
                aggregates: m.aggregates,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str =
    "axis,value,messages_born,mean_total_us,max_total_us,detections,false_positives,faults,escrow_errors";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let a = &r.aggregates;
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{},{},{},{},{}",
            r.axis,
            r.value,
            a.messages_born,
            a.mean_total_us(),
            a.max_total_us,
            a.detections,
            a.false_positives,
            a.faults,
            a.escrow_errors
        );
    }
    out
}
