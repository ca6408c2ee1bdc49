use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use crate::pki::{check_disjoint, CaId, Rect, VehicleId};

use super::SimError;

/// Simulated time and durations, in whole microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub fn as_u64(self) -> u64 {
        self.0
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0.checked_add(rhs.0).expect("simulated time overflow"))
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        *self = *self + rhs;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0.checked_sub(rhs.0).expect("negative simulated duration"))
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueuePolicy {
    /// Every component serves arrivals immediately.
    Unlimited,
    /// Each RSU, each local CA and the home CA is one FIFO server.
    FifoSingleServer,
}

/// Latency and service-time parameters. Defaults are illustrative, not measured.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub propagation_speed_mps: f64,
    pub per_byte_tx_ns: u64,
    pub rsu_proc: Micros,
    pub rsu_ca_link: Micros,
    pub ca_decrypt_proc: Micros,
    pub escrow_rtt_base: Micros,
    pub ca_home_proc: Micros,
    pub ca_verify_proc: Micros,
    pub queue_policy: QueuePolicy,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            propagation_speed_mps: 299_792_458.0,
            // ~6 Mbit/s channel
            per_byte_tx_ns: 1_333,
            rsu_proc: Micros(200),
            rsu_ca_link: Micros(2_000),
            ca_decrypt_proc: Micros(1_500),
            escrow_rtt_base: Micros(10_000),
            ca_home_proc: Micros(300),
            ca_verify_proc: Micros(100),
            queue_policy: QueuePolicy::FifoSingleServer,
        }
    }
}

impl DelayModel {
    /// A model where every delay is zero.
    pub fn zero() -> Self {
        Self {
            propagation_speed_mps: 299_792_458.0,
            per_byte_tx_ns: 0,
            rsu_proc: Micros::ZERO,
            rsu_ca_link: Micros::ZERO,
            ca_decrypt_proc: Micros::ZERO,
            escrow_rtt_base: Micros::ZERO,
            ca_home_proc: Micros::ZERO,
            ca_verify_proc: Micros::ZERO,
            queue_policy: QueuePolicy::Unlimited,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.propagation_speed_mps.is_nan() || self.propagation_speed_mps <= 0.0 {
            return Err(SimError::InvalidDelayModel(format!(
                "propagation speed must be positive, got {}",
                self.propagation_speed_mps
            )));
        }
        Ok(())
    }

    /// Propagation over `distance_m`, rounded to the nearest microsecond.
    pub fn propagation(&self, distance_m: f64) -> Micros {
        Micros((distance_m * 1e6 / self.propagation_speed_mps).round() as u64)
    }

    /// Serialization of `bytes` onto the channel, rounded up.
    pub fn transmission(&self, bytes: usize) -> Micros {
        Micros((bytes as u64 * self.per_byte_tx_ns).div_ceil(1_000))
    }

    pub fn broadcast(&self, distance_m: f64, bytes: usize) -> Micros {
        self.propagation(distance_m) + self.transmission(bytes)
    }

    /// Request leg of the escrow round trip; the reply leg is the remainder.
    pub fn escrow_uplink(&self) -> Micros {
        Micros(self.escrow_rtt_base.0 / 2)
    }

    pub fn escrow_downlink(&self) -> Micros {
        self.escrow_rtt_base - self.escrow_uplink()
    }
}

/// Where vehicles sit inside their region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Uniformly at random over the region; served by the nearest RSU.
    Uniform,
    /// At exactly this distance (meters) from the region's first RSU, random bearing.
    FixedRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub id: CaId,
    pub bounds: Rect,
    /// RSU positions; empty means one RSU at the centroid.
    pub rsus: Vec<(f64, f64)>,
}

impl RegionSpec {
    pub fn new(id: CaId, bounds: Rect) -> Self {
        Self {
            id,
            bounds,
            rsus: Vec::new(),
        }
    }

    pub fn rsu_positions(&self) -> Vec<(f64, f64)> {
        if self.rsus.is_empty() {
            vec![self.bounds.centroid()]
        } else {
            self.rsus.clone()
        }
    }
}

/// An insider that sends one forged message per spoofed identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSpec {
    pub attacker: VehicleId,
    pub spoofs: Vec<VehicleId>,
}

/// The scripted move of one vehicle into another region.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossRegionMove {
    pub vehicle: VehicleId,
    pub from_region: CaId,
    pub to_region: CaId,
    pub move_time: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub home_ca: CaId,
    pub regions: Vec<RegionSpec>,
    /// Vehicles are `VehicleId::from_index(0..vehicles)`.
    pub vehicles: usize,
    pub placement: Placement,
    pub accident_messages: usize,
    /// Spacing between consecutive message births; zero sends everything at t = 0.
    pub message_interval: Micros,
    pub attackers: Vec<AttackerSpec>,
    /// Vehicles holding an adversary certificate before group keys are issued.
    pub flagged: Vec<VehicleId>,
    pub key_cache: bool,
    pub delay_model: DelayModel,
    pub cross_region_move: Option<CrossRegionMove>,
}

pub const DEFAULT_ACCIDENT_MESSAGES: usize = 5;

impl ScenarioConfig {
    pub fn new(regions: Vec<RegionSpec>, vehicles: usize) -> Self {
        Self {
            seed: 0,
            home_ca: CaId::from_u64(0),
            regions,
            vehicles,
            placement: Placement::Uniform,
            accident_messages: DEFAULT_ACCIDENT_MESSAGES,
            message_interval: Micros::ZERO,
            attackers: Vec::new(),
            flagged: Vec::new(),
            key_cache: false,
            delay_model: DelayModel::default(),
            cross_region_move: None,
        }
    }

    /// Index of a registered vehicle, if `id` is one.
    pub fn vehicle_index(&self, id: VehicleId) -> Option<usize> {
        let n = u128::from_be_bytes(*id.as_bytes());
        (n < self.vehicles as u128).then_some(n as usize)
    }

    pub fn is_attacker(&self, index: usize) -> bool {
        let id = VehicleId::from_index(index as u64);
        self.attackers.iter().any(|a| a.attacker == id)
    }

    fn region_index(&self, id: CaId) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// Everything `build_world` checks before generating key material.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.regions.is_empty() {
            return Err(SimError::InvalidScenario("at least one region is required".into()));
        }
        let bounds: Vec<_> = self.regions.iter().map(|r| (r.id, r.bounds)).collect();
        check_disjoint(&bounds).map_err(SimError::InvalidRegionMap)?;
        if self.region_index(self.home_ca).is_some() {
            return Err(SimError::InvalidScenario(format!(
                "home CA id {} collides with a region id",
                self.home_ca
            )));
        }
        for region in &self.regions {
            for &(x, y) in &region.rsus {
                if !region.bounds.contains(x, y) {
                    return Err(SimError::InvalidScenario(format!(
                        "RSU at ({x}, {y}) lies outside region {}",
                        region.id
                    )));
                }
            }
        }
        self.delay_model.validate()?;

        if let Placement::FixedRange(range) = self.placement {
            if !(range >= 0.0 && range.is_finite()) {
                return Err(SimError::InvalidScenario(format!(
                    "placement range must be non-negative, got {range}"
                )));
            }
            for region in &self.regions {
                let (x, y) = region.rsu_positions()[0];
                let b = region.bounds;
                let room = (x - b.x0).min(b.x1 - x).min(y - b.y0).min(b.y1 - y);
                if range > room {
                    return Err(SimError::InvalidScenario(format!(
                        "placement range {range} m leaves region {} around its first RSU",
                        region.id
                    )));
                }
            }
        }

        let registered = |id: VehicleId, role: &str| {
            self.vehicle_index(id)
                .map(|_| ())
                .ok_or_else(|| SimError::InvalidScenario(format!("{role} {id} is not a registered vehicle")))
        };
        for a in &self.attackers {
            registered(a.attacker, "attacker")?;
            for &s in &a.spoofs {
                registered(s, "spoofed identity")?;
                if s == a.attacker {
                    return Err(SimError::InvalidScenario(format!("attacker {s} spoofs itself")));
                }
            }
        }
        for &f in &self.flagged {
            registered(f, "flagged vehicle")?;
        }
        if let Some(m) = &self.cross_region_move {
            registered(m.vehicle, "moving vehicle")?;
            for r in [m.from_region, m.to_region] {
                if self.region_index(r).is_none() {
                    return Err(SimError::InvalidScenario(format!("move references unknown region {r}")));
                }
            }
            if m.from_region == m.to_region {
                return Err(SimError::InvalidScenario("move must change region".into()));
            }
        }
        if self.accident_messages > 0 && (0..self.vehicles).all(|i| self.is_attacker(i)) {
            return Err(SimError::InvalidScenario(
                "no honest vehicle left to report the accident".into(),
            ));
        }
        Ok(())
    }
}
