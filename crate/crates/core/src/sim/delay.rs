use super::config::{DelayModel, Micros};
use super::SimError;

/// Per-phase delay of one message. `total()` is always the exact sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PhaseDelays {
    /// Broadcast from the vehicle to its RSU.
    pub t1: Micros,
    /// RSU queueing and integrity check.
    pub t2: Micros,
    /// Link to the local CA, queueing and envelope decryption.
    pub t3: Micros,
    /// Key escrow round trip, home CA queueing and final verification.
    pub t4: Micros,
}

impl PhaseDelays {
    pub fn new(t1: Micros, t2: Micros, t3: Micros, t4: Micros) -> Self {
        Self { t1, t2, t3, t4 }
    }

    pub fn total(&self) -> Micros {
        self.t1 + self.t2 + self.t3 + self.t4
    }
}

/// How far a message got.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Fault,
    OpenFailed,
    EscrowFailed,
    Verdict,
}

/// Timestamps collected for one message as it moves through the components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageTrace {
    pub message_id: u64,
    pub rsu_distance_m: f64,
    pub encoded_len: usize,
    pub born: Option<Micros>,
    pub arrive_rsu: Option<Micros>,
    pub rsu_start: Option<Micros>,
    pub rsu_done: Option<Micros>,
    pub ca_arrive: Option<Micros>,
    pub decrypt_start: Option<Micros>,
    pub decrypt_done: Option<Micros>,
    pub home_arrive: Option<Micros>,
    pub home_start: Option<Micros>,
    pub reply_arrive: Option<Micros>,
    /// When the verification job joined the local CA queue.
    pub verify_ready: Option<Micros>,
    pub verify_start: Option<Micros>,
    pub terminal: Option<Micros>,
    pub stage: Option<Stage>,
}

impl MessageTrace {
    fn stamp(&self, value: Option<Micros>, name: &'static str) -> Result<Micros, SimError> {
        value.ok_or(SimError::TraceIncomplete {
            message_id: self.message_id,
            missing: name,
        })
    }

    fn wait(
        &self,
        from: (Option<Micros>, &'static str),
        to: (Option<Micros>, &'static str),
    ) -> Result<Micros, SimError> {
        let a = self.stamp(from.0, from.1)?;
        let b = self.stamp(to.0, to.1)?;
        if b < a {
            return Err(SimError::TraceIncomplete {
                message_id: self.message_id,
                missing: to.1,
            });
        }
        Ok(b - a)
    }
}

/// Charges each phase from the model's constants plus the queue waits seen in
/// the trace.
pub fn charge_delays(trace: &MessageTrace, model: &DelayModel) -> Result<PhaseDelays, SimError> {
    let stage = trace.stage.ok_or(SimError::TraceIncomplete {
        message_id: trace.message_id,
        missing: "terminal stage",
    })?;
    trace.stamp(trace.born, "born")?;

    let t1 = model.broadcast(trace.rsu_distance_m, trace.encoded_len);
    let t2 = trace.wait((trace.arrive_rsu, "arrive_rsu"), (trace.rsu_start, "rsu_start"))? + model.rsu_proc;
    if stage == Stage::Fault {
        return Ok(PhaseDelays::new(t1, t2, Micros::ZERO, Micros::ZERO));
    }

    let t3 = model.rsu_ca_link
        + trace.wait((trace.ca_arrive, "ca_arrive"), (trace.decrypt_start, "decrypt_start"))?
        + model.ca_decrypt_proc;
    if stage == Stage::OpenFailed {
        return Ok(PhaseDelays::new(t1, t2, t3, Micros::ZERO));
    }

    let mut t4 = Micros::ZERO;
    if trace.home_arrive.is_some() || stage == Stage::EscrowFailed {
        t4 += model.escrow_rtt_base
            + trace.wait((trace.home_arrive, "home_arrive"), (trace.home_start, "home_start"))?
            + model.ca_home_proc;
    }
    if stage == Stage::Verdict {
        t4 += trace.wait(
            (trace.verify_ready, "verify_ready"),
            (trace.verify_start, "verify_start"),
        )? + model.ca_verify_proc;
    }
    Ok(PhaseDelays::new(t1, t2, t3, t4))
}
