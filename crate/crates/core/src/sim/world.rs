use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use crate::crypto::{PublicKey, SymmetricKey};
use crate::pki::{CaStore, CertificateKind, PkiError, Region, RegionMap, VehicleId};

use super::config::{Micros, Placement, ScenarioConfig};
use super::SimError;

/// Per-scenario seed for one labelled purpose.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"vanet-sybil/sim/");
    h.update(label.as_bytes());
    h.update(seed.to_be_bytes());
    h.update(index.to_be_bytes());
    h.finalize().into()
}

#[derive(Debug, Clone)]
pub struct Rsu {
    pub region: usize,
    pub position: (f64, f64),
}

/// What a vehicle knows and where it sends while in one region.
#[derive(Debug, Clone)]
pub struct Attachment {
    pub region: usize,
    pub position: (f64, f64),
    pub rsu: usize,
    pub rsu_range_m: f64,
    /// Outcome of the certificate-gated key request in this region.
    pub group_key: Result<SymmetricKey, PkiError>,
    /// The local CA key the vehicle seals its identity to.
    pub ca_public: PublicKey,
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: VehicleId,
    pub key: SymmetricKey,
    pub attachment: Attachment,
    /// Attachment after the scripted move, effective from the given time.
    pub relocation: Option<(Micros, Attachment)>,
}

impl Vehicle {
    pub fn attachment_at(&self, time: Micros) -> &Attachment {
        match &self.relocation {
            Some((at, moved)) if time >= *at => moved,
            _ => &self.attachment,
        }
    }
}

/// One planned transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct SendPlan {
    pub message_id: u64,
    pub sender: usize,
    pub claimed: VehicleId,
    pub honest: bool,
    pub born: Micros,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: ScenarioConfig,
    pub regions: RegionMap,
    pub home_ca: CaStore,
    pub rsus: Vec<Rsu>,
    pub vehicles: Vec<Vehicle>,
    pub plans: Vec<SendPlan>,
}

impl World {
    pub fn region(&self, index: usize) -> &Region {
        &self.regions.regions()[index]
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.config.vehicle_index(id).map(|i| &self.vehicles[i])
    }
}

fn nearest_rsu(rsus: &[Rsu], region: usize, (x, y): (f64, f64)) -> (usize, f64) {
    rsus.iter()
        .enumerate()
        .filter(|(_, r)| r.region == region)
        .map(|(i, r)| (i, (r.position.0 - x).hypot(r.position.1 - y)))
        .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((i, d)),
        })
        .expect("every region has an RSU")
}

fn first_rsu(rsus: &[Rsu], region: usize) -> usize {
    rsus.iter()
        .position(|r| r.region == region)
        .expect("every region has an RSU")
}

fn place(
    rng: &mut ChaCha8Rng,
    placement: Placement,
    regions: &RegionMap,
    rsus: &[Rsu],
    region: usize,
) -> ((f64, f64), usize, f64) {
    match placement {
        Placement::Uniform => {
            let b = regions.regions()[region].bounds;
            let pos = (
                b.x0 + rng.gen::<f64>() * b.width(),
                b.y0 + rng.gen::<f64>() * b.height(),
            );
            let (rsu, range) = nearest_rsu(rsus, region, pos);
            (pos, rsu, range)
        }
        Placement::FixedRange(range) => {
            let rsu = first_rsu(rsus, region);
            let bearing = rng.gen::<f64>() * TAU;
            let (cx, cy) = rsus[rsu].position;
            ((cx + range * bearing.cos(), cy + range * bearing.sin()), rsu, range)
        }
    }
}

/// Registers every vehicle at the home CA, applies adversary flags, places
/// vehicles and RSUs, issues group keys through the certificate gate and
/// lays out the send schedule.
pub fn build_world(config: &ScenarioConfig) -> Result<World, SimError> {
    config.validate()?;
    let seed = config.seed;

    let regions = config
        .regions
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            Region::generate(
                spec.id,
                spec.bounds,
                &derive_seed(seed, "region/group-key", i as u64),
                &derive_seed(seed, "region/ca-keys", i as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(SimError::InvalidRegionMap)?;
    let regions = RegionMap::new(regions).map_err(SimError::InvalidRegionMap)?;

    let mut home_ca = CaStore::new(config.home_ca);
    for r in regions.regions() {
        home_ca.authorize_local_ca(r.id);
    }

    let rsus: Vec<Rsu> = config
        .regions
        .iter()
        .enumerate()
        .flat_map(|(i, spec)| {
            spec.rsu_positions()
                .into_iter()
                .map(move |position| Rsu { region: i, position })
        })
        .collect();

    let mut keys = Vec::with_capacity(config.vehicles);
    for i in 0..config.vehicles {
        let id = VehicleId::from_index(i as u64);
        let reg = home_ca
            .register_vehicle(
                id,
                CertificateKind::ValidCertificate,
                &derive_seed(seed, "vehicle/key", i as u64),
            )
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        keys.push(reg.vehicle_key);
    }
    for &f in &config.flagged {
        home_ca
            .flag_adversary(f)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    }

    let moving = config.cross_region_move.as_ref().map(|m| {
        (
            config.vehicle_index(m.vehicle).expect("validated"),
            regions.index_of(m.from_region).expect("validated"),
            regions.index_of(m.to_region).expect("validated"),
            m.move_time,
        )
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vehicles = Vec::with_capacity(config.vehicles);
    for (i, key) in keys.into_iter().enumerate() {
        let id = VehicleId::from_index(i as u64);
        let region = match moving {
            Some((v, from, _, _)) if v == i => from,
            _ => i % regions.len(),
        };
        let (position, rsu, rsu_range_m) = place(&mut rng, config.placement, &regions, &rsus, region);
        let home_region = &regions.regions()[region];
        let attachment = Attachment {
            region,
            position,
            rsu,
            rsu_range_m,
            group_key: home_ca.issue_group_key(home_region, id),
            ca_public: home_region.ca_keys.public.clone(),
        };
        let relocation = match moving {
            Some((v, _, to, at)) if v == i => {
                let (position, rsu, rsu_range_m) = place(&mut rng, config.placement, &regions, &rsus, to);
                // The vehicle picks up the new region's group key but still
                // seals its identity to the CA it registered with.
                let moved = Attachment {
                    region: to,
                    position,
                    rsu,
                    rsu_range_m,
                    group_key: home_ca.issue_group_key(&regions.regions()[to], id),
                    ca_public: attachment.ca_public.clone(),
                };
                Some((at, moved))
            }
            _ => None,
        };
        vehicles.push(Vehicle {
            id,
            key,
            attachment,
            relocation,
        });
    }

    let plans = schedule(config, moving.map(|(v, _, _, at)| (v, at)));
    Ok(World {
        config: config.clone(),
        regions,
        home_ca,
        rsus,
        vehicles,
        plans,
    })
}

/// Accident reports round-robin over non-attacker vehicles, then one forged
/// message per spoofed identity, then one report from the moved vehicle at
/// its move time.
fn schedule(config: &ScenarioConfig, moving: Option<(usize, Micros)>) -> Vec<SendPlan> {
    let reporters: Vec<usize> = (0..config.vehicles).filter(|&i| !config.is_attacker(i)).collect();
    let interval = config.message_interval.0;
    let mut plans = Vec::new();
    let mut next = |sender: usize, claimed: VehicleId, honest: bool, born: Option<Micros>| {
        let message_id = plans.len() as u64;
        plans.push(SendPlan {
            message_id,
            sender,
            claimed,
            honest,
            born: born.unwrap_or(Micros(message_id * interval)),
        });
    };
    for k in 0..config.accident_messages {
        let sender = reporters[k % reporters.len()];
        next(sender, VehicleId::from_index(sender as u64), true, None);
    }
    for a in &config.attackers {
        let sender = config.vehicle_index(a.attacker).expect("validated");
        for &victim in &a.spoofs {
            next(sender, victim, false, None);
        }
    }
    if let Some((v, at)) = moving {
        next(v, VehicleId::from_index(v as u64), true, Some(at));
    }
    plans
}
