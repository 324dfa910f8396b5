//! Message fabric between task-assignment nodes.
//!
//! Every datagram is a [`Packet`]:
//!
//! ```text
//! 0xAF 0x01 | sender u32 LE | counter u32 LE | length u16 LE | payload
//! ```
//!
//! The payload is an export encoded with [`encode_export`]. Receivers drop
//! duplicates and out-of-order packets per sender using serial-number
//! arithmetic on the counter, and drop messages older than the retention
//! time.

mod bus;
mod codec;
mod udp;

pub use bus::{SimBus, SimEndpoint};
pub use codec::{decode_export, encode_export, CODEC_VERSION};
pub use udp::{UdpConfig, UdpTransport, DEFAULT_MAX_PAYLOAD, DEFAULT_PORT};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::xc_core::DeviceId;

pub const MAGIC: [u8; 2] = [0xAF, 0x01];
pub const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("payload of {len} bytes exceeds the {max} byte limit")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub sender: DeviceId,
    pub counter: u32,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn encode(&self) -> Result<Vec<u8>, TransportError> {
        let len = u16::try_from(self.payload.len()).map_err(|_| TransportError::PayloadTooLarge {
            len: self.payload.len(),
            max: usize::from(u16::MAX),
        })?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.sender.0.to_le_bytes());
        out.extend_from_slice(&self.counter.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Packet, TransportError> {
        if bytes.len() < HEADER_LEN {
            return Err(TransportError::Malformed(format!("{} byte datagram", bytes.len())));
        }
        if bytes[..2] != MAGIC {
            return Err(TransportError::Malformed("bad magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let len = usize::from(u16::from_le_bytes([bytes[10], bytes[11]]));
        if bytes.len() != HEADER_LEN + len {
            return Err(TransportError::Malformed(format!(
                "length field {len} but {} payload bytes",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok(Packet {
            sender: DeviceId(u32_at(2)),
            counter: u32_at(6),
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// Whether `a` is newer than `b` in 32-bit serial-number arithmetic.
pub fn counter_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

/// Per-sender filter giving at-most-once, in-order delivery.
#[derive(Debug, Clone, Default)]
pub struct Deduplicator {
    last: BTreeMap<DeviceId, u32>,
}

impl Deduplicator {
    /// Accepts the packet iff its counter is newer than the last accepted
    /// one from the same sender.
    pub fn accept(&mut self, sender: DeviceId, counter: u32) -> bool {
        match self.last.get(&sender) {
            Some(&prev) if !counter_newer(counter, prev) => false,
            _ => {
                self.last.insert(sender, counter);
                true
            }
        }
    }
}

/// A message handed to the round loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub sender: DeviceId,
    pub counter: u32,
    pub payload: Vec<u8>,
    /// Seconds on the transport's clock.
    pub received_at: f64,
}

pub trait Transport {
    fn id(&self) -> DeviceId;

    /// Broadcasts `payload` without blocking.
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError>;

    /// Messages received since the last poll, deduplicated and younger
    /// than the retention time.
    fn poll(&mut self) -> Vec<Received>;

    /// Current time on the transport's clock, in seconds.
    fn now(&self) -> f64;

    /// `false` after an unrecoverable socket failure.
    fn is_up(&self) -> bool {
        true
    }
}
