//! Two-message attestation handshake over a preshared secret.
//!
//! 1. `ATTEST_REQ`: the client sends a fresh 32-byte nonce.
//! 2. `ATTEST_RESP`: the server answers with its own nonce and
//!    `HMAC(secret, "attest" | client id | client nonce | server nonce)`.
//!
//! Both sides then derive the session key as
//! `HMAC(secret, "session" | client id | client nonce | server nonce)`.

use hmac::{Hmac, Mac};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::transport::frame::{bytes_layer, layer_bytes, CentroidFrame, FrameMeta, MsgType};
use crate::transport::seal::{SessionKey, KEY_LEN};

type HmacSha256 = Hmac<Sha256>;

const NONCE_BYTES: usize = 32;

fn keyed_digest(secret: &[u8], label: &[u8], client_id: u32, cn: &[u8], sn: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(label);
    mac.update(&client_id.to_le_bytes());
    mac.update(cn);
    mac.update(sn);
    mac.finalize().into_bytes().into()
}

fn verify_digest(secret: &[u8], client_id: u32, cn: &[u8], sn: &[u8], tag: &[u8]) -> bool {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(b"attest");
    mac.update(&client_id.to_le_bytes());
    mac.update(cn);
    mac.update(sn);
    mac.verify_slice(tag).is_ok()
}

fn session_key(secret: &[u8], client_id: u32, cn: &[u8], sn: &[u8]) -> SessionKey {
    let k: [u8; KEY_LEN] = keyed_digest(secret, b"session", client_id, cn, sn);
    SessionKey::established(k)
}

fn single_payload(frame: &CentroidFrame, expect: MsgType, len: usize) -> Result<Vec<u8>> {
    if frame.meta.msg_type != expect {
        return Err(Error::AttestationFailed(format!(
            "expected {expect:?}, got {:?}",
            frame.meta.msg_type
        )));
    }
    match frame.layers.as_slice() {
        [layer] => {
            let bytes = layer_bytes(layer);
            if bytes.len() != len {
                return Err(Error::AttestationFailed(format!(
                    "payload of {} bytes, expected {len}",
                    bytes.len()
                )));
            }
            Ok(bytes)
        }
        _ => Err(Error::AttestationFailed(
            "attestation frame must carry one block".into(),
        )),
    }
}

pub struct AttestationClient {
    client_id: u32,
    secret: Vec<u8>,
    nonce: [u8; NONCE_BYTES],
}

impl AttestationClient {
    /// `nonce_seed` keeps the handshake replayable in simulations.
    pub fn new(client_id: u32, secret: &[u8], nonce_seed: u64) -> Self {
        let mut nonce = [0u8; NONCE_BYTES];
        rng_for(nonce_seed, &[0xA7, client_id as u64]).fill_bytes(&mut nonce);
        Self {
            client_id,
            secret: secret.to_vec(),
            nonce,
        }
    }

    pub fn request(&self) -> Result<Vec<u8>> {
        CentroidFrame {
            meta: FrameMeta {
                msg_type: MsgType::AttestReq,
                client_id: self.client_id,
                round: 0,
            },
            layers: vec![bytes_layer(&self.nonce)],
        }
        .encode()
    }

    pub fn finish(&self, response: &[u8]) -> Result<SessionKey> {
        let frame = CentroidFrame::decode(response)
            .map_err(|e| Error::AttestationFailed(format!("unreadable response: {e}")))?;
        if frame.meta.client_id != self.client_id {
            return Err(Error::AttestationFailed(format!(
                "response addressed to client {}",
                frame.meta.client_id
            )));
        }
        let payload = single_payload(&frame, MsgType::AttestResp, 2 * NONCE_BYTES)?;
        let (server_nonce, tag) = payload.split_at(NONCE_BYTES);
        if !verify_digest(&self.secret, self.client_id, &self.nonce, server_nonce, tag) {
            return Err(Error::AttestationFailed("digest mismatch".into()));
        }
        Ok(session_key(
            &self.secret,
            self.client_id,
            &self.nonce,
            server_nonce,
        ))
    }
}

pub struct AttestationServer {
    secret: Vec<u8>,
    rng: ChaCha8Rng,
}

impl AttestationServer {
    pub fn new(secret: &[u8], nonce_seed: u64) -> Self {
        Self {
            secret: secret.to_vec(),
            rng: rng_for(nonce_seed, &[0xA75]),
        }
    }

    /// Answers one request; returns the response frame, the requesting client and its key.
    pub fn respond(&mut self, request: &[u8]) -> Result<(Vec<u8>, u32, SessionKey)> {
        let frame = CentroidFrame::decode(request)
            .map_err(|e| Error::AttestationFailed(format!("unreadable request: {e}")))?;
        let client_nonce = single_payload(&frame, MsgType::AttestReq, NONCE_BYTES)?;
        let client_id = frame.meta.client_id;
        let mut server_nonce = [0u8; NONCE_BYTES];
        self.rng.fill_bytes(&mut server_nonce);
        let tag = keyed_digest(
            &self.secret,
            b"attest",
            client_id,
            &client_nonce,
            &server_nonce,
        );

        let mut payload = server_nonce.to_vec();
        payload.extend_from_slice(&tag);
        let response = CentroidFrame {
            meta: FrameMeta {
                msg_type: MsgType::AttestResp,
                client_id,
                round: 0,
            },
            layers: vec![bytes_layer(&payload)],
        }
        .encode()?;
        let key = session_key(&self.secret, client_id, &client_nonce, &server_nonce);
        Ok((response, client_id, key))
    }
}

/// In-process handshake; returns the client-side and server-side keys.
pub fn attest(
    client_id: u32,
    client_secret: &[u8],
    server: &mut AttestationServer,
    nonce_seed: u64,
) -> Result<(SessionKey, SessionKey)> {
    let client = AttestationClient::new(client_id, client_secret, nonce_seed);
    let (resp, _, server_key) = server.respond(&client.request()?)?;
    Ok((client.finish(&resp)?, server_key))
}
