//! AES-256-GCM sealing of encoded frames.
//!
//! Sealed layout, integers little-endian:
//!
//! ```text
//! magic "TFSE" | nonce [12] | ciphertext length u64 | ciphertext || tag[16]
//! ```
//!
//! The associated data is the sealed magic followed by the frame version.

use std::collections::HashSet;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};

use crate::error::{Error, Result};
use crate::transport::frame::FRAME_VERSION;

pub const SEALED_MAGIC: [u8; 4] = *b"TFSE";
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const SEALED_HEADER_LEN: usize = 4 + NONCE_LEN + 8;
pub const KEY_LEN: usize = 32;

fn associated_data() -> [u8; 6] {
    let v = FRAME_VERSION.to_le_bytes();
    [
        SEALED_MAGIC[0],
        SEALED_MAGIC[1],
        SEALED_MAGIC[2],
        SEALED_MAGIC[3],
        v[0],
        v[1],
    ]
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    key: [u8; KEY_LEN],
    established: bool,
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKey")
            .field("established", &self.established)
            .finish_non_exhaustive()
    }
}

impl SessionKey {
    /// Key material that has not been through an attestation handshake.
    pub fn pending(key: [u8; KEY_LEN]) -> Self {
        Self {
            key,
            established: false,
        }
    }

    pub(crate) fn established(key: [u8; KEY_LEN]) -> Self {
        Self {
            key,
            established: true,
        }
    }

    pub fn is_established(&self) -> bool {
        self.established
    }

    pub fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.key
    }

    fn cipher(&self) -> Result<Aes256Gcm> {
        if !self.established {
            return Err(Error::NotAttested);
        }
        Ok(Aes256Gcm::new(&self.key.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Direction {
    ClientToServer = 0,
    ServerToClient = 1,
}

/// Deterministic per-message nonce: client id, round and direction.
pub fn frame_nonce(client_id: u32, round: u32, direction: Direction) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[..4].copy_from_slice(&client_id.to_le_bytes());
    n[4..8].copy_from_slice(&round.to_le_bytes());
    n[8] = direction as u8;
    n
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedFrame {
    pub nonce: [u8; NONCE_LEN],
    /// Ciphertext with the authentication tag appended.
    pub ciphertext: Vec<u8>,
}

impl SealedFrame {
    pub fn encoded_len(&self) -> usize {
        SEALED_HEADER_LEN + self.ciphertext.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&SEALED_MAGIC);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SEALED_HEADER_LEN + TAG_LEN {
            return Err(Error::MalformedFrame(format!(
                "sealed frame of {} bytes is shorter than header and tag",
                bytes.len()
            )));
        }
        if bytes[..4] != SEALED_MAGIC {
            return Err(Error::MalformedFrame("bad sealed magic".into()));
        }
        let nonce: [u8; NONCE_LEN] = bytes[4..16].try_into().unwrap();
        let declared = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let actual = (bytes.len() - SEALED_HEADER_LEN) as u64;
        if declared != actual {
            return Err(Error::MalformedFrame(format!(
                "declared ciphertext length {declared}, found {actual}"
            )));
        }
        Ok(Self {
            nonce,
            ciphertext: bytes[SEALED_HEADER_LEN..].to_vec(),
        })
    }
}

pub fn seal(frame: &[u8], key: &SessionKey, nonce: [u8; NONCE_LEN]) -> Result<SealedFrame> {
    let ciphertext = key
        .cipher()?
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: frame,
                aad: &associated_data(),
            },
        )
        .map_err(|_| Error::Transport("encryption failed".into()))?;
    Ok(SealedFrame { nonce, ciphertext })
}

pub fn unseal(sealed: &SealedFrame, key: &SessionKey) -> Result<Vec<u8>> {
    key.cipher()?
        .decrypt(
            Nonce::from_slice(&sealed.nonce),
            Payload {
                msg: &sealed.ciphertext,
                aad: &associated_data(),
            },
        )
        .map_err(|_| Error::AuthenticationFailed)
}

/// One end of an attested channel. Tracks nonces in both directions so that
/// neither a reused nonce on send nor a replayed frame on receive goes unnoticed.
#[derive(Debug)]
pub struct SealingChannel {
    key: SessionKey,
    sent: HashSet<[u8; NONCE_LEN]>,
    received: HashSet<[u8; NONCE_LEN]>,
}

impl SealingChannel {
    pub fn new(key: SessionKey) -> Result<Self> {
        if !key.is_established() {
            return Err(Error::NotAttested);
        }
        Ok(Self {
            key,
            sent: HashSet::new(),
            received: HashSet::new(),
        })
    }

    pub fn key(&self) -> &SessionKey {
        &self.key
    }

    pub fn seal(&mut self, frame: &[u8], nonce: [u8; NONCE_LEN]) -> Result<Vec<u8>> {
        if self.sent.contains(&nonce) {
            return Err(Error::ProtocolViolation(format!(
                "nonce {nonce:02x?} reused"
            )));
        }
        let sealed = seal(frame, &self.key, nonce)?;
        self.sent.insert(nonce);
        Ok(sealed.to_bytes())
    }

    pub fn unseal(&mut self, bytes: &[u8]) -> Result<Vec<u8>> {
        let sealed = SealedFrame::from_bytes(bytes)?;
        if self.received.contains(&sealed.nonce) {
            return Err(Error::ProtocolViolation(format!(
                "replayed nonce {:02x?}",
                sealed.nonce
            )));
        }
        let plain = unseal(&sealed, &self.key)?;
        self.received.insert(sealed.nonce);
        Ok(plain)
    }
}
