use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::crypto::SymmetricKey;
use crate::pki::{PkiError, VehicleId};
use crate::protocol::{
    build_safety_message, detect_sybil, encode_message, forge_sybil_message, open_obu_id, rsu_check, ObuIdPlain,
    RsuVerdict, SafetyMessage, Verdict,
};

use super::config::{Micros, QueuePolicy};
use super::delay::{charge_delays, MessageTrace, Stage};
use super::metrics::{MessageRecord, PipelineFailure, RejectedSend, ScenarioMetrics};
use super::world::{derive_seed, World};

/// Event kinds, in tie-break order for events at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    MessageBorn,
    ArriveRsu,
    RsuDone,
    ArriveLocalCa,
    EscrowRequest,
    EscrowReply,
    VerdictReady,
    FaultReported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Actor {
    Vehicle(usize),
    Rsu(usize),
    LocalCa(usize),
    HomeCa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub time: Micros,
    pub kind: EventKind,
    pub message_id: u64,
    pub actor: Actor,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind, self.message_id).cmp(&(other.time, other.kind, other.message_id))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Server {
    free_at: Micros,
}

impl Server {
    /// Returns when service of a job arriving at `arrival` begins.
    fn admit(&mut self, arrival: Micros, service: Micros, policy: QueuePolicy) -> Micros {
        match policy {
            QueuePolicy::Unlimited => arrival,
            QueuePolicy::FifoSingleServer => {
                let start = arrival.max(self.free_at);
                self.free_at = start + service;
                start
            }
        }
    }
}

struct InFlight {
    plan: usize,
    rsu: usize,
    region: usize,
    msg: SafetyMessage,
    wire: Vec<u8>,
    trace: MessageTrace,
    rsu_verdict: Option<RsuVerdict>,
    plain: Option<ObuIdPlain>,
    escrowed: Option<Result<SymmetricKey, PkiError>>,
    detection: Option<Verdict>,
    error: Option<PipelineFailure>,
}

/// Fixed-size accident report body.
fn payload(message_id: u64, born: Micros, region: &[u8; 8]) -> [u8; 32] {
    let mut p = [0u8; 32];
    p[..8].copy_from_slice(b"ACCIDENT");
    p[8..16].copy_from_slice(&message_id.to_be_bytes());
    p[16..24].copy_from_slice(&born.0.to_be_bytes());
    p[24..].copy_from_slice(region);
    p
}

struct Engine<'w> {
    world: &'w World,
    queue: BinaryHeap<Reverse<Event>>,
    flights: BTreeMap<u64, InFlight>,
    rsu_servers: Vec<Server>,
    ca_servers: Vec<Server>,
    home_server: Server,
    key_caches: Vec<BTreeMap<VehicleId, SymmetricKey>>,
    records: Vec<MessageRecord>,
    log: Option<Vec<Event>>,
}

impl<'w> Engine<'w> {
    fn new(world: &'w World, keep_log: bool) -> Self {
        Self {
            world,
            queue: BinaryHeap::new(),
            flights: BTreeMap::new(),
            rsu_servers: vec![Server::default(); world.rsus.len()],
            ca_servers: vec![Server::default(); world.regions.len()],
            home_server: Server::default(),
            key_caches: vec![BTreeMap::new(); world.regions.len()],
            records: Vec::new(),
            log: keep_log.then(Vec::new),
        }
    }

    fn policy(&self) -> QueuePolicy {
        self.world.config.delay_model.queue_policy
    }

    fn schedule(&mut self, time: Micros, kind: EventKind, message_id: u64, actor: Actor) {
        self.queue.push(Reverse(Event {
            time,
            kind,
            message_id,
            actor,
        }));
    }

    fn flight(&mut self, id: u64) -> &mut InFlight {
        self.flights.get_mut(&id).expect("event for a live message")
    }

    /// Builds every message whose sender holds a group key and schedules its
    /// birth; the rest are refused before broadcast.
    fn seed(&mut self) -> Vec<RejectedSend> {
        let world = self.world;
        let mut rejected = Vec::new();
        for (index, plan) in world.plans.iter().enumerate() {
            let vehicle = &world.vehicles[plan.sender];
            let attach = vehicle.attachment_at(plan.born);
            let group_key = match &attach.group_key {
                Ok(k) => k,
                Err(e) => {
                    rejected.push(RejectedSend {
                        message_id: plan.message_id,
                        vehicle: vehicle.id,
                        reason: e.clone(),
                    });
                    continue;
                }
            };
            let region = world.region(attach.region);
            let body = payload(plan.message_id, plan.born, region.id.as_bytes());
            let nonce = derive_seed(world.config.seed, "message/nonce", plan.message_id);
            let home = world.home_ca.id();
            let msg = if plan.honest {
                build_safety_message(
                    &body,
                    group_key,
                    vehicle.id,
                    &vehicle.key,
                    home,
                    &attach.ca_public,
                    &nonce,
                )
            } else {
                forge_sybil_message(
                    &body,
                    group_key,
                    plan.claimed,
                    &vehicle.key,
                    home,
                    &attach.ca_public,
                    &nonce,
                )
            }
            .expect("fixed-size payload");
            let wire = encode_message(&msg);
            let trace = MessageTrace {
                message_id: plan.message_id,
                rsu_distance_m: attach.rsu_range_m,
                encoded_len: wire.len(),
                ..Default::default()
            };
            self.flights.insert(
                plan.message_id,
                InFlight {
                    plan: index,
                    rsu: attach.rsu,
                    region: attach.region,
                    msg,
                    wire,
                    trace,
                    rsu_verdict: None,
                    plain: None,
                    escrowed: None,
                    detection: None,
                    error: None,
                },
            );
            self.schedule(
                plan.born,
                EventKind::MessageBorn,
                plan.message_id,
                Actor::Vehicle(plan.sender),
            );
        }
        rejected
    }

    fn run(&mut self) {
        while let Some(Reverse(event)) = self.queue.pop() {
            if let Some(log) = self.log.as_mut() {
                log.push(event);
            }
            self.handle(event);
        }
    }

    fn handle(&mut self, ev: Event) {
        let world = self.world;
        let model = &world.config.delay_model;
        let policy = self.policy();
        let now = ev.time;
        let id = ev.message_id;
        match ev.kind {
            EventKind::MessageBorn => {
                let f = self.flight(id);
                f.trace.born = Some(now);
                let arrival = now + model.broadcast(f.trace.rsu_distance_m, f.trace.encoded_len);
                let rsu = f.rsu;
                self.schedule(arrival, EventKind::ArriveRsu, id, Actor::Rsu(rsu));
            }
            EventKind::ArriveRsu => {
                let rsu = self.flight(id).rsu;
                let start = self.rsu_servers[rsu].admit(now, model.rsu_proc, policy);
                let f = self.flight(id);
                f.trace.arrive_rsu = Some(now);
                f.trace.rsu_start = Some(start);
                self.schedule(start + model.rsu_proc, EventKind::RsuDone, id, Actor::Rsu(rsu));
            }
            EventKind::RsuDone => {
                let f = self.flight(id);
                f.trace.rsu_done = Some(now);
                let verdict = rsu_check(&f.msg, &world.region(f.region).group_key);
                f.rsu_verdict = Some(verdict);
                let (rsu, region) = (f.rsu, f.region);
                match verdict {
                    RsuVerdict::Fault => {
                        f.trace.stage = Some(Stage::Fault);
                        self.schedule(now, EventKind::FaultReported, id, Actor::Rsu(rsu));
                    }
                    RsuVerdict::IntegrityOk => {
                        self.schedule(
                            now + model.rsu_ca_link,
                            EventKind::ArriveLocalCa,
                            id,
                            Actor::LocalCa(region),
                        );
                    }
                }
            }
            EventKind::ArriveLocalCa => {
                let region = self.flight(id).region;
                let start = self.ca_servers[region].admit(now, model.ca_decrypt_proc, policy);
                let done = start + model.ca_decrypt_proc;
                let f = self.flights.get_mut(&id).expect("live message");
                f.trace.ca_arrive = Some(now);
                f.trace.decrypt_start = Some(start);
                f.trace.decrypt_done = Some(done);
                let plain = match open_obu_id(&f.msg.obu_id, &world.region(region).ca_keys.secret) {
                    Ok(p) => p,
                    Err(e) => {
                        f.error = Some(PipelineFailure::Open(e));
                        f.trace.stage = Some(Stage::OpenFailed);
                        self.schedule(done, EventKind::VerdictReady, id, Actor::LocalCa(region));
                        return;
                    }
                };
                f.plain = Some(plain);
                let cached = if world.config.key_cache {
                    self.key_caches[region].get(&plain.vehicle).cloned()
                } else {
                    None
                };
                match cached {
                    Some(key) => self.verify(id, region, done, key),
                    None => self.schedule(
                        done + model.escrow_uplink(),
                        EventKind::EscrowRequest,
                        id,
                        Actor::HomeCa,
                    ),
                }
            }
            EventKind::EscrowRequest => {
                let start = self.home_server.admit(now, model.ca_home_proc, policy);
                let f = self.flight(id);
                f.trace.home_arrive = Some(now);
                f.trace.home_start = Some(start);
                let vehicle = f.plain.expect("opened before escrow").vehicle;
                let region = f.region;
                f.escrowed = Some(world.home_ca.escrow_key(world.region(region).id, vehicle));
                let reply = start + model.ca_home_proc + model.escrow_downlink();
                self.schedule(reply, EventKind::EscrowReply, id, Actor::LocalCa(region));
            }
            EventKind::EscrowReply => {
                let key_cache = world.config.key_cache;
                let f = self.flight(id);
                f.trace.reply_arrive = Some(now);
                let region = f.region;
                match f.escrowed.take().expect("escrow answered") {
                    Ok(key) => {
                        if key_cache {
                            let vehicle = f.plain.expect("opened").vehicle;
                            self.key_caches[region].insert(vehicle, key.clone());
                        }
                        self.verify(id, region, now, key);
                    }
                    Err(e) => {
                        f.error = Some(PipelineFailure::Escrow(e));
                        f.trace.stage = Some(Stage::EscrowFailed);
                        self.schedule(now, EventKind::VerdictReady, id, Actor::LocalCa(region));
                    }
                }
            }
            EventKind::VerdictReady | EventKind::FaultReported => self.finish(id, now),
        }
    }

    fn verify(&mut self, id: u64, region: usize, ready: Micros, key: SymmetricKey) {
        let world = self.world;
        let model = &world.config.delay_model;
        let policy = self.policy();
        let start = self.ca_servers[region].admit(ready, model.ca_verify_proc, policy);
        let f = self.flight(id);
        f.trace.verify_ready = Some(ready);
        f.trace.verify_start = Some(start);
        let result = detect_sybil(&f.plain.expect("opened"), &f.msg.outer_digest, &key);
        f.detection = Some(result.verdict);
        f.trace.stage = Some(Stage::Verdict);
        self.schedule(
            start + model.ca_verify_proc,
            EventKind::VerdictReady,
            id,
            Actor::LocalCa(region),
        );
    }

    fn finish(&mut self, id: u64, now: Micros) {
        let world = self.world;
        let mut f = self.flights.remove(&id).expect("live message");
        f.trace.terminal = Some(now);
        let delays = charge_delays(&f.trace, &world.config.delay_model).expect("engine records a complete trace");
        let born = f.trace.born.expect("born");
        debug_assert_eq!(
            delays.total(),
            now - born,
            "phase charges disagree with the event clock"
        );
        let plan = &world.plans[f.plan];
        self.records.push(MessageRecord {
            message_id: id,
            sender_claimed: plan.claimed,
            sender: world.vehicles[plan.sender].id,
            honest: plan.honest,
            serving_region: world.region(f.region).id,
            rsu_verdict: f.rsu_verdict.expect("rsu ran"),
            detection: f.detection,
            error: f.error,
            delays,
            born,
            completed: now,
            wire: f.wire,
        });
    }
}

fn execute(world: &World, keep_log: bool) -> (ScenarioMetrics, Vec<Event>) {
    let mut engine = Engine::new(world, keep_log);
    let rejected = engine.seed();
    engine.run();
    assert!(engine.flights.is_empty(), "every born message reaches a terminal state");
    let log = engine.log.take().unwrap_or_default();
    (ScenarioMetrics::new(engine.records, rejected), log)
}

/// Runs the scenario to completion. The world is not modified, so a world
/// can be run any number of times with identical results.
pub fn run(world: &World) -> ScenarioMetrics {
    execute(world, false).0
}

/// Like [`run`], also returning every processed event in order.
pub fn run_logged(world: &World) -> (ScenarioMetrics, Vec<Event>) {
    execute(world, true)
}
