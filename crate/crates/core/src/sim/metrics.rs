use std::fmt::Write as _;

use crate::pki::{CaId, PkiError, VehicleId};
use crate::protocol::{ProtocolError, RsuVerdict, Verdict};

use super::config::Micros;
use super::delay::PhaseDelays;

/// Why a message that passed the RSU never got a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineFailure {
    Open(ProtocolError),
    Escrow(PkiError),
}

impl PipelineFailure {
    pub fn code(&self) -> String {
        match self {
            PipelineFailure::Open(e) => format!("open:{}", e.code()),
            PipelineFailure::Escrow(e) => format!("escrow:{}", e.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub message_id: u64,
    pub sender_claimed: VehicleId,
    /// The vehicle that actually transmitted.
    pub sender: VehicleId,
    pub honest: bool,
    /// Region of the RSU and local CA that handled the message.
    pub serving_region: CaId,
    pub rsu_verdict: RsuVerdict,
    pub detection: Option<Verdict>,
    pub error: Option<PipelineFailure>,
    pub delays: PhaseDelays,
    pub born: Micros,
    pub completed: Micros,
    /// Encoded message exactly as broadcast.
    pub wire: Vec<u8>,
}

impl MessageRecord {
    pub fn total(&self) -> Micros {
        self.delays.total()
    }
}

/// A send attempt refused before broadcast because the vehicle holds no group key.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedSend {
    pub message_id: u64,
    pub vehicle: VehicleId,
    pub reason: PkiError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregates {
    pub messages_born: u64,
    pub verdicts: u64,
    pub detections: u64,
    pub false_positives: u64,
    /// Forged messages that passed the RSU but were judged legitimate.
    pub misses: u64,
    pub faults: u64,
    /// Open failures and escrow failures.
    pub escrow_errors: u64,
    pub rejected_sends: u64,
    pub total_sum_us: u64,
    pub max_total_us: u64,
}

impl Aggregates {
    /// Mean total delay over every born message.
    pub fn mean_total_us(&self) -> f64 {
        if self.messages_born == 0 {
            0.0
        } else {
            self.total_sum_us as f64 / self.messages_born as f64
        }
    }

    pub fn from_records(records: &[MessageRecord], rejected: &[RejectedSend]) -> Self {
        let mut a = Aggregates {
            rejected_sends: rejected.len() as u64,
            ..Default::default()
        };
        for r in records {
            a.messages_born += 1;
            let total = r.total().as_u64();
            a.total_sum_us += total;
            a.max_total_us = a.max_total_us.max(total);
            if r.rsu_verdict == RsuVerdict::Fault {
                a.faults += 1;
            }
            if r.error.is_some() {
                a.escrow_errors += 1;
            }
            match r.detection {
                Some(Verdict::SybilDetected) => {
                    a.verdicts += 1;
                    a.detections += 1;
                    if r.honest {
                        a.false_positives += 1;
                    }
                }
                Some(Verdict::Legitimate) => {
                    a.verdicts += 1;
                    if !r.honest {
                        a.misses += 1;
                    }
                }
                None => {}
            }
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMetrics {
    pub records: Vec<MessageRecord>,
    pub rejected: Vec<RejectedSend>,
    pub aggregates: Aggregates,
}

pub const METRICS_HEADER: &str =
    "message_id,claimed_id_hex,honest,rsu_verdict,detection,t1_us,t2_us,t3_us,t4_us,total_us,error";

impl ScenarioMetrics {
    pub fn new(mut records: Vec<MessageRecord>, rejected: Vec<RejectedSend>) -> Self {
        records.sort_by_key(|r| r.message_id);
        let aggregates = Aggregates::from_records(&records, &rejected);
        Self {
            records,
            rejected,
            aggregates,
        }
    }

    /// One row per born message, ordered by message id.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let d = r.delays;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.message_id,
                r.sender_claimed,
                r.honest,
                r.rsu_verdict.as_str(),
                r.detection.map(Verdict::as_str).unwrap_or(""),
                d.t1.as_u64(),
                d.t2.as_u64(),
                d.t3.as_u64(),
                d.t4.as_u64(),
                d.total().as_u64(),
                r.error.as_ref().map(PipelineFailure::code).unwrap_or_default(),
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let a = &self.aggregates;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "messages_born={} verdicts={} detections={} false_positives={} misses={} faults={} escrow_errors={} rejected_sends={}",
            a.messages_born, a.verdicts, a.detections, a.false_positives, a.misses, a.faults, a.escrow_errors, a.rejected_sends
        );
        let _ = writeln!(
            out,
            "mean_total_us={:.3} max_total_us={}",
            a.mean_total_us(),
            a.max_total_us
        );
        for r in &self.records {
            if r.detection == Some(Verdict::SybilDetected) {
                let _ = writeln!(
                    out,
                    "sybil_detected message_id={} claimed_id={}",
                    r.message_id, r.sender_claimed
                );
            }
            if let Some(e) = &r.error {
                let _ = writeln!(
                    out,
                    "escrow_error message_id={} claimed_id={} error={}",
                    r.message_id,
                    r.sender_claimed,
                    e.code()
                );
            }
        }
        for r in &self.rejected {
            let _ = writeln!(
                out,
                "rejected_send message_id={} vehicle={} reason={}",
                r.message_id,
                r.vehicle,
                r.reason.code()
            );
        }
        out
    }
}
