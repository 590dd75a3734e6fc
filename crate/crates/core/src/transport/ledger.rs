//! Byte accounting for everything that crosses the client/server boundary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::transport::frame::MsgType;
use crate::transport::seal::Direction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub client_id: u32,
    #[serde(skip)]
    pub direction: Direction,
    #[serde(skip)]
    pub msg_type: MsgType,
    /// Bytes actually put on the wire (sealed envelope, or the plain frame for attestation).
    pub wire_bytes: usize,
    /// Bytes of f64 payload inside the frame, headers excluded.
    pub payload_value_bytes: usize,
    /// `(rows, cols)` of every matrix the frame carried.
    pub shapes: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Default)]
pub struct TransmissionLedger {
    entries: Vec<LedgerEntry>,
}

impl TransmissionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn extend(&mut self, other: TransmissionLedger) {
        self.entries.extend(other.entries);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClientRoundBytes {
    pub round: u32,
    pub client_id: u32,
    pub upload_wire_bytes: usize,
    pub download_wire_bytes: usize,
    pub upload_payload_bytes: usize,
    /// `upload_payload_bytes / full_model_bytes`.
    pub payload_ratio: f64,
}

/// Per-round, per-client byte totals, sorted by `(round, client)`.
///
/// Attestation traffic (round 0) is included like any other round.
pub fn transmitted_bytes(
    ledger: &TransmissionLedger,
    full_model_bytes: usize,
) -> Vec<ClientRoundBytes> {
    let mut acc: BTreeMap<(u32, u32), ClientRoundBytes> = BTreeMap::new();
    for e in ledger.entries() {
        let slot = acc
            .entry((e.round, e.client_id))
            .or_insert(ClientRoundBytes {
                round: e.round,
                client_id: e.client_id,
                upload_wire_bytes: 0,
                download_wire_bytes: 0,
                upload_payload_bytes: 0,
                payload_ratio: 0.0,
            });
        match e.direction {
            Direction::ClientToServer => {
                slot.upload_wire_bytes += e.wire_bytes;
                if e.msg_type == MsgType::ClientCentroids {
                    slot.upload_payload_bytes += e.payload_value_bytes;
                }
            }
            Direction::ServerToClient => slot.download_wire_bytes += e.wire_bytes,
        }
    }
    acc.into_values()
        .map(|mut b| {
            b.payload_ratio = if full_model_bytes == 0 {
                0.0
            } else {
                b.upload_payload_bytes as f64 / full_model_bytes as f64
            };
            b
        })
        .collect()
}
