//! Wire format, sealing, attestation and byte accounting.

pub mod attest;
pub mod frame;
pub mod ledger;
pub mod seal;
pub mod tcp;

pub use attest::{attest, AttestationClient, AttestationServer};
pub use frame::{decode_frame, encode_frame, CentroidFrame, FrameLayer, FrameMeta, MsgType};
pub use ledger::{transmitted_bytes, ClientRoundBytes, LedgerEntry, TransmissionLedger};
pub use seal::{frame_nonce, seal, unseal, Direction, SealedFrame, SealingChannel, SessionKey};
