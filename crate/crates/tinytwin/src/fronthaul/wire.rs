//! Length-prefixed binary framing for the RF plane.
//!
//! Every message starts with a fixed 24-byte little-endian header:
//!
//! ```text
//! offset  field
//!      0  magic       u32 = 0x54545731 ("TTW1")
//!      4  version     u8  = 1
//!      5  msg_type    u8
//!      6  ue_id       u32
//!     10  slot_index  u64
//!     18  payload_len u32
//!     22  reserved    u16 = 0
//! ```
//!
//! IQ payloads are `payload_len / 8` complex samples as interleaved
//! `(f32 I, f32 Q)`. Decoding is total: any byte sequence either yields a
//! message or a typed error, never a panic.

use super::Mode;
use num_complex::Complex32;
use std::io::{Read, Write};

pub const WIRE_MAGIC: u32 = 0x5454_5731;
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

/// Upper bound on a sane payload; guards allocation on hostile headers.
pub const MAX_PAYLOAD_LEN: u32 = 1 << 26;

/// Wire protocol errors.
#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("short read: need {need} bytes, have {have}")]
    ShortRead { need: usize, have: usize },
    #[error("bad magic 0x{found:08x}")]
    BadMagic { found: u32 },
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload length mismatch: declared {declared}, actual {actual}")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD_LEN} byte cap")]
    PayloadTooLarge(u32),
    #[error("malformed {msg} payload: {reason}")]
    MalformedPayload { msg: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Message body, one variant per wire type.
#[derive(Debug, Clone, PartialEq)]
pub enum WireBody {
    /// UE -> gNB: join the session.
    Hello,
    /// gNB -> UE: session parameters.
    HelloAck {
        samples_per_slot: u32,
        mode: Mode,
        sparse_n: u32,
        noise_power: f64,
        session_seed: u64,
    },
    /// gNB -> UE: downlink IQ slot.
    IqDl { samples: Vec<Complex32> },
    /// UE -> gNB: uplink IQ slot.
    IqUl { samples: Vec<Complex32> },
    /// gNB -> UE: session epoch (unix nanos) and slot duration (nanos).
    TimeSync {
        epoch_unix_nanos: u64,
        slot_duration_ns: u64,
    },
    /// gNB -> UE: echo probe riding the downlink stream.
    EchoReq {
        probe_id: u64,
        sent_nanos: u64,
        payload: Vec<u8>,
    },
    /// UE -> gNB: reflected probe.
    EchoResp {
        probe_id: u64,
        sent_nanos: u64,
        payload: Vec<u8>,
    },
    /// Either direction: clean shutdown.
    Bye,
}

impl WireBody {
    pub fn msg_type(&self) -> u8 {
        match self {
            WireBody::Hello => 1,
            WireBody::HelloAck { .. } => 2,
            WireBody::IqDl { .. } => 3,
            WireBody::IqUl { .. } => 4,
            WireBody::TimeSync { .. } => 5,
            WireBody::EchoReq { .. } => 6,
            WireBody::EchoResp { .. } => 7,
            WireBody::Bye => 8,
        }
    }
}

/// One framed message.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub ue_id: u32,
    pub slot_index: u64,
    pub body: WireBody,
}

impl WireMessage {
    pub fn new(ue_id: u32, slot_index: u64, body: WireBody) -> Self {
        Self {
            ue_id,
            slot_index,
            body,
        }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        match &self.body {
            WireBody::Hello | WireBody::Bye => Vec::new(),
            WireBody::HelloAck {
                samples_per_slot,
                mode,
                sparse_n,
                noise_power,
                session_seed,
            } => {
                let mut p = Vec::with_capacity(25);
                p.extend_from_slice(&samples_per_slot.to_le_bytes());
                p.push(mode.to_wire());
                p.extend_from_slice(&sparse_n.to_le_bytes());
                p.extend_from_slice(&noise_power.to_le_bytes());
                p.extend_from_slice(&session_seed.to_le_bytes());
                p
            }
            WireBody::IqDl { samples } | WireBody::IqUl { samples } => {
                let mut p = Vec::with_capacity(samples.len() * 8);
                for s in samples {
                    p.extend_from_slice(&s.re.to_le_bytes());
                    p.extend_from_slice(&s.im.to_le_bytes());
                }
                p
            }
            WireBody::TimeSync {
                epoch_unix_nanos,
                slot_duration_ns,
            } => {
                let mut p = Vec::with_capacity(16);
                p.extend_from_slice(&epoch_unix_nanos.to_le_bytes());
                p.extend_from_slice(&slot_duration_ns.to_le_bytes());
                p
            }
            WireBody::EchoReq {
                probe_id,
                sent_nanos,
                payload,
            }
            | WireBody::EchoResp {
                probe_id,
                sent_nanos,
                payload,
            } => {
                let mut p = Vec::with_capacity(16 + payload.len());
                p.extend_from_slice(&probe_id.to_le_bytes());
                p.extend_from_slice(&sent_nanos.to_le_bytes());
                p.extend_from_slice(payload);
                p
            }
        }
    }

    /// Encode into the framed byte representation.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload_bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&WIRE_MAGIC.to_le_bytes());
        out.push(WIRE_VERSION);
        out.push(self.body.msg_type());
        out.extend_from_slice(&self.ue_id.to_le_bytes());
        out.extend_from_slice(&self.slot_index.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decode a complete message from a buffer; the buffer must hold exactly
    /// the header plus the declared payload.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::ShortRead {
                need: HEADER_LEN,
                have: bytes.len(),
            });
        }
        let (header, rest) = bytes.split_at(HEADER_LEN);
        let (ue_id, slot_index, msg_type, payload_len) = parse_header(header)?;
        if rest.len() != payload_len as usize {
            return Err(WireError::LengthMismatch {
                declared: payload_len,
                actual: rest.len(),
            });
        }
        let body = parse_body(msg_type, rest)?;
        Ok(Self {
            ue_id,
            slot_index,
            body,
        })
    }

    /// Write the framed message to a stream.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), WireError> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    /// Read one framed message from a stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, WireError> {
        let mut header = [0u8; HEADER_LEN];
        read_exact(r, &mut header)?;
        let (ue_id, slot_index, msg_type, payload_len) = parse_header(&header)?;
        let mut payload = vec![0u8; payload_len as usize];
        read_exact(r, &mut payload)?;
        let body = parse_body(msg_type, &payload)?;
        Ok(Self {
            ue_id,
            slot_index,
            body,
        })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), WireError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            WireError::ShortRead {
                need: buf.len(),
                have: 0,
            }
        } else {
            WireError::Io(e)
        }
    })
}

fn parse_header(h: &[u8]) -> Result<(u32, u64, u8, u32), WireError> {
    let magic = u32::from_le_bytes(h[0..4].try_into().unwrap());
    if magic != WIRE_MAGIC {
        return Err(WireError::BadMagic { found: magic });
    }
    let version = h[4];
    if version != WIRE_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let msg_type = h[5];
    if !(1..=8).contains(&msg_type) {
        return Err(WireError::UnknownType(msg_type));
    }
    let ue_id = u32::from_le_bytes(h[6..10].try_into().unwrap());
    let slot_index = u64::from_le_bytes(h[10..18].try_into().unwrap());
    let payload_len = u32::from_le_bytes(h[18..22].try_into().unwrap());
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(WireError::PayloadTooLarge(payload_len));
    }
    Ok((ue_id, slot_index, msg_type, payload_len))
}

fn parse_body(msg_type: u8, p: &[u8]) -> Result<WireBody, WireError> {
    let fixed = |want: usize, msg: &'static str| -> Result<(), WireError> {
        if p.len() != want {
            return Err(WireError::MalformedPayload {
                msg,
                reason: format!("expected {want} bytes, got {}", p.len()),
            });
        }
        Ok(())
    };
    match msg_type {
        1 => {
            fixed(0, "HELLO")?;
            Ok(WireBody::Hello)
        }
        2 => {
            fixed(25, "HELLO_ACK")?;
            let mode = Mode::from_wire(p[4]).ok_or(WireError::MalformedPayload {
                msg: "HELLO_ACK",
                reason: format!("unknown mode {}", p[4]),
            })?;
            let noise_power = f64::from_le_bytes(p[9..17].try_into().unwrap());
            if !noise_power.is_finite() {
                return Err(WireError::MalformedPayload {
                    msg: "HELLO_ACK",
                    reason: "non-finite noise power".into(),
                });
            }
            Ok(WireBody::HelloAck {
                samples_per_slot: u32::from_le_bytes(p[0..4].try_into().unwrap()),
                mode,
                sparse_n: u32::from_le_bytes(p[5..9].try_into().unwrap()),
                noise_power,
                session_seed: u64::from_le_bytes(p[17..25].try_into().unwrap()),
            })
        }
        3 | 4 => {
            if p.len() % 8 != 0 {
                return Err(WireError::MalformedPayload {
                    msg: if msg_type == 3 { "IQ_DL" } else { "IQ_UL" },
                    reason: format!("{} bytes is not a whole number of samples", p.len()),
                });
            }
            let samples = p
                .chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes(c[0..4].try_into().unwrap()),
                        f32::from_le_bytes(c[4..8].try_into().unwrap()),
                    )
                })
                .collect();
            Ok(if msg_type == 3 {
                WireBody::IqDl { samples }
            } else {
                WireBody::IqUl { samples }
            })
        }
        5 => {
            fixed(16, "TIME_SYNC")?;
            Ok(WireBody::TimeSync {
                epoch_unix_nanos: u64::from_le_bytes(p[0..8].try_into().unwrap()),
                slot_duration_ns: u64::from_le_bytes(p[8..16].try_into().unwrap()),
            })
        }
        6 | 7 => {
            if p.len() < 16 {
                return Err(WireError::MalformedPayload {
                    msg: if msg_type == 6 { "ECHO_REQ" } else { "ECHO_RESP" },
                    reason: format!("need at least 16 bytes, got {}", p.len()),
                });
            }
            let probe_id = u64::from_le_bytes(p[0..8].try_into().unwrap());
            let sent_nanos = u64::from_le_bytes(p[8..16].try_into().unwrap());
            let payload = p[16..].to_vec();
            Ok(if msg_type == 6 {
                WireBody::EchoReq {
                    probe_id,
                    sent_nanos,
                    payload,
                }
            } else {
                WireBody::EchoResp {
                    probe_id,
                    sent_nanos,
                    payload,
                }
            })
        }
        8 => {
            fixed(0, "BYE")?;
            Ok(WireBody::Bye)
        }
        other => Err(WireError::UnknownType(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_bodies() -> Vec<WireBody> {
        vec![
            WireBody::Hello,
            WireBody::HelloAck {
                samples_per_slot: 1920,
                mode: Mode::Optimized,
                sparse_n: 5,
                noise_power: 0.01,
                session_seed: 42,
            },
            WireBody::IqDl {
                samples: vec![Complex32::new(1.0, -2.0); 17],
            },
            WireBody::IqUl {
                samples: vec![Complex32::new(-0.5, 0.25); 3],
            },
            WireBody::TimeSync {
                epoch_unix_nanos: 123_456_789,
                slot_duration_ns: 1_000_000,
            },
            WireBody::EchoReq {
                probe_id: 9,
                sent_nanos: 777,
                payload: b"ping".to_vec(),
            },
            WireBody::EchoResp {
                probe_id: 9,
                sent_nanos: 777,
                payload: b"ping".to_vec(),
            },
            WireBody::Bye,
        ]
    }

    #[test]
    fn every_message_type_round_trips() {
        for (i, body) in all_bodies().into_iter().enumerate() {
            let msg = WireMessage::new(7 + i as u32, 1000 + i as u64, body);
            let bytes = msg.encode();
            let back = WireMessage::decode(&bytes).unwrap();
            assert_eq!(msg, back);
            // stream path agrees with buffer path
            let mut cursor = std::io::Cursor::new(&bytes);
            assert_eq!(WireMessage::read_from(&mut cursor).unwrap(), msg);
        }
    }

    #[test]
    fn hello_is_a_bare_24_byte_header() {
        let msg = WireMessage::new(7, 0, WireBody::Hello);
        let bytes = msg.encode();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[0..4], &WIRE_MAGIC.to_le_bytes());
    }

    #[test]
    fn iq_payload_is_eight_bytes_per_sample() {
        let msg = WireMessage::new(
            0,
            5,
            WireBody::IqDl {
                samples: vec![Complex32::new(0.0, 0.0); 1024],
            },
        );
        let bytes = msg.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 8192);
        let declared = u32::from_le_bytes(bytes[18..22].try_into().unwrap());
        assert_eq!(declared, 8192);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = WireMessage::new(1, 2, WireBody::Bye).encode();
        bytes[0] ^= 0xff;
        assert!(matches!(
            WireMessage::decode(&bytes),
            Err(WireError::BadMagic { .. })
        ));
    }

    #[test]
    fn unknown_type_and_version_are_rejected() {
        let mut bytes = WireMessage::new(1, 2, WireBody::Bye).encode();
        bytes[5] = 99;
        assert!(matches!(
            WireMessage::decode(&bytes),
            Err(WireError::UnknownType(99))
        ));
        let mut bytes = WireMessage::new(1, 2, WireBody::Bye).encode();
        bytes[4] = 3;
        assert!(matches!(
            WireMessage::decode(&bytes),
            Err(WireError::BadVersion(3))
        ));
    }

    #[test]
    fn truncated_and_oversized_payloads_are_rejected() {
        let bytes = WireMessage::new(
            1,
            2,
            WireBody::IqUl {
                samples: vec![Complex32::new(1.0, 1.0); 4],
            },
        )
        .encode();
        assert!(matches!(
            WireMessage::decode(&bytes[..bytes.len() - 3]),
            Err(WireError::LengthMismatch { .. })
        ));
        assert!(matches!(
            WireMessage::decode(&bytes[..10]),
            Err(WireError::ShortRead { .. })
        ));
        let mut huge = WireMessage::new(1, 2, WireBody::Bye).encode();
        huge[18..22].copy_from_slice(&(MAX_PAYLOAD_LEN + 1).to_le_bytes());
        assert!(matches!(
            WireMessage::decode(&huge),
            Err(WireError::PayloadTooLarge(_))
        ));
    }

    #[test]
    fn decoder_is_total_on_random_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100_000 {
            let len = rng.gen_range(0..128);
            let mut bytes = vec![0u8; len];
            rng.fill_bytes(&mut bytes);
            let _ = WireMessage::decode(&bytes); // must never panic
        }
        // bit flips of valid messages must not panic either
        for body in all_bodies() {
            let reference = WireMessage::new(3, 9, body).encode();
            for _ in 0..2_000 {
                let mut bytes = reference.clone();
                let at = rng.gen_range(0..bytes.len());
                bytes[at] ^= 1 << rng.gen_range(0..8);
                let _ = WireMessage::decode(&bytes);
            }
        }
    }
}
