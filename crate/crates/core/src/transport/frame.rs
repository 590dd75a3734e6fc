//! Plain (unsealed) protocol frames.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "TFSF" | version u16 | msg type u8 | client id u32 | round u32 | layer count u32
//! per layer: layer index u32 | rows u32 | cols u32 | rows*cols f64 values
//! ```
//!
//! Only centroid matrices and attestation material travel in frames;
//! cluster memberships have no representation here.

use crate::error::{Error, Result};
use crate::model::{WeightMatrix, VALUE_BYTES};
use crate::protocol::CentroidSet;

pub const FRAME_MAGIC: [u8; 4] = *b"TFSF";
pub const FRAME_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 19;
pub const LAYER_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    ClientCentroids = 1,
    GlobalCentroids = 2,
    AttestReq = 3,
    AttestResp = 4,
}

impl MsgType {
    pub const ALL: [MsgType; 4] = [
        MsgType::ClientCentroids,
        MsgType::GlobalCentroids,
        MsgType::AttestReq,
        MsgType::AttestResp,
    ];
}

impl TryFrom<u8> for MsgType {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::ClientCentroids),
            2 => Ok(Self::GlobalCentroids),
            3 => Ok(Self::AttestReq),
            4 => Ok(Self::AttestResp),
            other => Err(Error::MalformedFrame(format!(
                "unknown message type {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameMeta {
    pub msg_type: MsgType,
    pub client_id: u32,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayer {
    pub index: u32,
    pub rows: u32,
    pub cols: u32,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidFrame {
    pub meta: FrameMeta,
    pub layers: Vec<FrameLayer>,
}

pub(crate) fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::EncodingOverflow(format!("{what} {value} does not fit in u32")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::MalformedFrame(format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl CentroidFrame {
    pub fn header_only(meta: FrameMeta) -> Self {
        Self {
            meta,
            layers: Vec::new(),
        }
    }

    pub fn from_set(set: &CentroidSet, meta: FrameMeta) -> Result<Self> {
        let layers = set
            .layers()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                Ok(FrameLayer {
                    index: to_u32(i, "layer index")?,
                    rows: to_u32(m.rows(), "row count")?,
                    cols: to_u32(m.cols(), "column count")?,
                    values: m.values().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { meta, layers })
    }

    /// Exact encoded size: `19 + sum(12 + rows * cols * 8)`.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .layers
                .iter()
                .map(|l| LAYER_HEADER_LEN + l.values.len() * VALUE_BYTES)
                .sum::<usize>()
    }

    pub fn payload_value_bytes(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.values.len() * VALUE_BYTES)
            .sum()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let layer_count = to_u32(self.layers.len(), "layer count")?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.push(self.meta.msg_type as u8);
        out.extend_from_slice(&self.meta.client_id.to_le_bytes());
        out.extend_from_slice(&self.meta.round.to_le_bytes());
        out.extend_from_slice(&layer_count.to_le_bytes());
        for l in &self.layers {
            if l.values.len() as u64 != l.rows as u64 * l.cols as u64 {
                return Err(Error::InvalidArgument(format!(
                    "layer {} declares {}x{} but holds {} values",
                    l.index,
                    l.rows,
                    l.cols,
                    l.values.len()
                )));
            }
            out.extend_from_slice(&l.index.to_le_bytes());
            out.extend_from_slice(&l.rows.to_le_bytes());
            out.extend_from_slice(&l.cols.to_le_bytes());
            for v in &l.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a complete frame. Trailing or missing bytes are rejected.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { buf: bytes, pos: 0 };
        if rd.take(4)? != FRAME_MAGIC {
            return Err(Error::MalformedFrame("bad frame magic".into()));
        }
        let version = rd.u16()?;
        if version != FRAME_VERSION {
            return Err(Error::MalformedFrame(format!(
                "unsupported version {version}"
            )));
        }
        let msg_type = MsgType::try_from(rd.take(1)?[0])?;
        let client_id = rd.u32()?;
        let round = rd.u32()?;
        let layer_count = rd.u32()? as usize;

        // every layer needs at least its header, so cap the allocation up front
        let remaining = bytes.len() - rd.pos;
        if layer_count > remaining / LAYER_HEADER_LEN {
            return Err(Error::MalformedFrame(format!(
                "{layer_count} layers cannot fit in {remaining} bytes"
            )));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let index = rd.u32()?;
            let rows = rd.u32()?;
            let cols = rd.u32()?;
            if rows == 0 || cols == 0 {
                return Err(Error::MalformedFrame(format!(
                    "layer {index} has empty shape {rows}x{cols}"
                )));
            }
            let count = rows as usize * cols as usize;
            let raw = rd.take(
                count
                    .checked_mul(VALUE_BYTES)
                    .ok_or_else(|| Error::MalformedFrame("layer size overflows".into()))?,
            )?;
            let values = raw
                .chunks_exact(VALUE_BYTES)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            layers.push(FrameLayer {
                index,
                rows,
                cols,
                values,
            });
        }
        if rd.pos != bytes.len() {
            return Err(Error::MalformedFrame(format!(
                "{} trailing bytes",
                bytes.len() - rd.pos
            )));
        }
        Ok(Self {
            meta: FrameMeta {
                msg_type,
                client_id,
                round,
            },
            layers,
        })
    }

    /// Converts the layers back into a centroid set; indices must run 0, 1, 2, ...
    pub fn into_set(self) -> Result<CentroidSet> {
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                if l.index as usize != i {
                    return Err(Error::MalformedFrame(format!(
                        "layer index {} at position {i}",
                        l.index
                    )));
                }
                WeightMatrix::new(l.rows as usize, l.cols as usize, l.values)
                    .map_err(|e| Error::MalformedFrame(e.to_string()))
            })
            .collect::<Result<_>>()?;
        CentroidSet::new(layers).map_err(|e| Error::MalformedFrame(e.to_string()))
    }
}

pub fn encode_frame(set: &CentroidSet, meta: FrameMeta) -> Result<Vec<u8>> {
    CentroidFrame::from_set(set, meta)?.encode()
}

pub fn decode_frame(bytes: &[u8]) -> Result<(FrameMeta, CentroidSet)> {
    let frame = CentroidFrame::decode(bytes)?;
    let meta = frame.meta;
    Ok((meta, frame.into_set()?))
}

/// Packs opaque 8-byte words (nonces, digests) into a single frame layer.
pub(crate) fn bytes_layer(bytes: &[u8]) -> FrameLayer {
    assert!(bytes.len().is_multiple_of(32) && !bytes.is_empty());
    FrameLayer {
        index: 0,
        rows: (bytes.len() / 32) as u32,
        cols: 4,
        values: bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    }
}

pub(crate) fn layer_bytes(layer: &FrameLayer) -> Vec<u8> {
    layer
        .values
        .iter()
        .flat_map(|v| v.to_bits().to_le_bytes())
        .collect()
}
