//! MQTT 3.1.1 control packets and their bit-exact wire encoding.
//!
//! Encoding only refuses what cannot be put on the wire (oversized strings,
//! QoS 3, a packet id on QoS 0). Everything else that the protocol forbids but
//! an attacker may want to send (packet id 0, non UTF-8 client ids, wildcard
//! publish topics) encodes fine and is reported as a [`Violation`] on decode.
//! [`Packet::Raw`] bypasses all of it.

mod decode;
mod encode;
mod splice;
mod varint;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hexser;
use crate::topics::TopicViolation;

pub use decode::{decode_packet, frame_length, DecodeError, DecodeMode, Decoded};
pub use encode::{encode_packet, EncodeError};
pub use splice::{splice, SpliceError};
pub use varint::{
    decode_remaining_length, encode_remaining_length, VarintError, MAX_REMAINING_LENGTH,
};

/// Longest string or binary field behind a 16-bit length prefix.
pub const MAX_STRING_LEN: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum PacketType {
    Connect = 1,
    Connack = 2,
    Publish = 3,
    Puback = 4,
    Pubrec = 5,
    Pubrel = 6,
    Pubcomp = 7,
    Subscribe = 8,
    Suback = 9,
    Unsubscribe = 10,
    Unsuback = 11,
    Pingreq = 12,
    Pingresp = 13,
    Disconnect = 14,
}

impl PacketType {
    pub fn from_nibble(n: u8) -> Option<Self> {
        use PacketType::*;
        Some(match n {
            1 => Connect,
            2 => Connack,
            3 => Publish,
            4 => Puback,
            5 => Pubrec,
            6 => Pubrel,
            7 => Pubcomp,
            8 => Subscribe,
            9 => Suback,
            10 => Unsubscribe,
            11 => Unsuback,
            12 => Pingreq,
            13 => Pingresp,
            14 => Disconnect,
            _ => return None,
        })
    }

    /// Flags required in the low nibble of the first byte (PUBLISH excepted).
    pub fn required_flags(self) -> u8 {
        match self {
            PacketType::Pubrel | PacketType::Subscribe | PacketType::Unsubscribe => 0b0010,
            _ => 0,
        }
    }
}

impl fmt::Display for PacketType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PacketType::Connect => "CONNECT",
            PacketType::Connack => "CONNACK",
            PacketType::Publish => "PUBLISH",
            PacketType::Puback => "PUBACK",
            PacketType::Pubrec => "PUBREC",
            PacketType::Pubrel => "PUBREL",
            PacketType::Pubcomp => "PUBCOMP",
            PacketType::Subscribe => "SUBSCRIBE",
            PacketType::Suback => "SUBACK",
            PacketType::Unsubscribe => "UNSUBSCRIBE",
            PacketType::Unsuback => "UNSUBACK",
            PacketType::Pingreq => "PINGREQ",
            PacketType::Pingresp => "PINGRESP",
            PacketType::Disconnect => "DISCONNECT",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedHeader {
    pub packet_type: PacketType,
    pub flags: u8,
    pub remaining_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Will {
    #[serde(with = "hexser::bytes")]
    pub topic: Vec<u8>,
    #[serde(with = "hexser::bytes")]
    pub payload: Vec<u8>,
    pub qos: u8,
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connect {
    #[serde(with = "hexser::bytes")]
    pub protocol_name: Vec<u8>,
    pub protocol_level: u8,
    pub clean_session: bool,
    pub will: Option<Will>,
    pub keep_alive: u16,
    #[serde(with = "hexser::bytes")]
    pub client_id: Vec<u8>,
    #[serde(with = "hexser::opt")]
    pub username: Option<Vec<u8>>,
    #[serde(with = "hexser::opt")]
    pub password: Option<Vec<u8>>,
}

impl Connect {
    /// A plain 3.1.1 CONNECT with a clean session and no credentials.
    pub fn new(client_id: impl Into<Vec<u8>>, keep_alive: u16) -> Self {
        Self {
            protocol_name: b"MQTT".to_vec(),
            protocol_level: 4,
            clean_session: true,
            will: None,
            keep_alive,
            client_id: client_id.into(),
            username: None,
            password: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connack {
    pub session_present: bool,
    pub return_code: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publish {
    pub dup: bool,
    pub qos: u8,
    pub retain: bool,
    #[serde(with = "hexser::bytes")]
    pub topic: Vec<u8>,
    pub packet_id: Option<u16>,
    #[serde(with = "hexser::bytes")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscribeEntry {
    #[serde(with = "hexser::bytes")]
    pub filter: Vec<u8>,
    pub qos: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscribe {
    pub packet_id: u16,
    pub entries: Vec<SubscribeEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suback {
    pub packet_id: u16,
    pub return_codes: Vec<u8>,
}

/// SUBACK return code for a refused subscription.
pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unsubscribe {
    pub packet_id: u16,
    #[serde(with = "hexser::list")]
    pub filters: Vec<Vec<u8>>,
}

/// One MQTT 3.1.1 control packet, or raw bytes sent as-is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Packet {
    Connect(Connect),
    Connack(Connack),
    Publish(Publish),
    Puback { packet_id: u16 },
    Pubrec { packet_id: u16 },
    Pubrel { packet_id: u16 },
    Pubcomp { packet_id: u16 },
    Subscribe(Subscribe),
    Suback(Suback),
    Unsubscribe(Unsubscribe),
    Unsuback { packet_id: u16 },
    Pingreq,
    Pingresp,
    Disconnect,
    Raw {
        #[serde(with = "hexser::bytes")]
        bytes: Vec<u8>,
    },
}

impl Packet {
    /// `None` for [`Packet::Raw`].
    pub fn packet_type(&self) -> Option<PacketType> {
        use PacketType as T;
        Some(match self {
            Packet::Connect(_) => T::Connect,
            Packet::Connack(_) => T::Connack,
            Packet::Publish(_) => T::Publish,
            Packet::Puback { .. } => T::Puback,
            Packet::Pubrec { .. } => T::Pubrec,
            Packet::Pubrel { .. } => T::Pubrel,
            Packet::Pubcomp { .. } => T::Pubcomp,
            Packet::Subscribe(_) => T::Subscribe,
            Packet::Suback(_) => T::Suback,
            Packet::Unsubscribe(_) => T::Unsubscribe,
            Packet::Unsuback { .. } => T::Unsuback,
            Packet::Pingreq => T::Pingreq,
            Packet::Pingresp => T::Pingresp,
            Packet::Disconnect => T::Disconnect,
            Packet::Raw { .. } => return None,
        })
    }

    pub fn packet_id(&self) -> Option<u16> {
        match self {
            Packet::Publish(p) => p.packet_id,
            Packet::Puback { packet_id }
            | Packet::Pubrec { packet_id }
            | Packet::Pubrel { packet_id }
            | Packet::Pubcomp { packet_id }
            | Packet::Unsuback { packet_id } => Some(*packet_id),
            Packet::Subscribe(s) => Some(s.packet_id),
            Packet::Suback(s) => Some(s.packet_id),
            Packet::Unsubscribe(u) => Some(u.packet_id),
            _ => None,
        }
    }

    /// Short human label, e.g. `PUBLISH(qos=2,id=1)`.
    pub fn summary(&self) -> String {
        match self {
            Packet::Publish(p) => match p.packet_id {
                Some(id) => format!("PUBLISH(qos={},id={id})", p.qos),
                None => format!("PUBLISH(qos={})", p.qos),
            },
            Packet::Raw { bytes } => format!("RAW({} bytes)", bytes.len()),
            other => {
                let ty = other.packet_type().expect("non-raw");
                match other.packet_id() {
                    Some(id) => format!("{ty}(id={id})"),
                    None => ty.to_string(),
                }
            }
        }
    }
}

/// A protocol rule broken by a frame that was still parseable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ReservedFlags {
        packet_type: PacketType,
        expected: u8,
        found: u8,
    },
    InvalidQos {
        field: &'static str,
        qos: u8,
    },
    DupOnQos0,
    ZeroPacketId,
    InvalidUtf8 {
        field: &'static str,
    },
    Topic {
        field: &'static str,
        violation: TopicViolation,
    },
    Filter {
        index: usize,
        violation: TopicViolation,
    },
    UnsupportedProtocolName,
    UnsupportedProtocolLevel(u8),
    ConnectReservedFlag,
    WillFlagsWithoutWill,
    PasswordWithoutUsername,
    ConnackReservedBits(u8),
    InvalidReturnCode(u8),
    InvalidSubackCode(u8),
    SubscriptionOptionBits(u8),
    NoTopicFilters,
    NoReturnCodes,
    NonMinimalLength,
    TrailingBytes(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ReservedFlags {
                packet_type,
                expected,
                found,
            } => write!(
                f,
                "reserved flags nonzero on {packet_type} (expected {expected:#06b}, found {found:#06b})"
            ),
            Violation::InvalidQos { field, qos } => write!(f, "{field} invalid QoS {qos}"),
            Violation::DupOnQos0 => write!(f, "DUP flag set on QoS 0 publish"),
            Violation::ZeroPacketId => write!(f, "packet_id is 0"),
            Violation::InvalidUtf8 { field } => write!(f, "{field} not valid UTF-8"),
            Violation::Topic { field, violation } => write!(f, "{field} {violation}"),
            Violation::Filter { index, violation } => {
                write!(f, "topic filter #{index} {violation}")
            }
            Violation::UnsupportedProtocolName => write!(f, "protocol_name is not \"MQTT\""),
            Violation::UnsupportedProtocolLevel(l) => {
                write!(f, "protocol_level {l} is not 4")
            }
            Violation::ConnectReservedFlag => write!(f, "CONNECT reserved flag set"),
            Violation::WillFlagsWithoutWill => {
                write!(f, "will QoS/retain set without will flag")
            }
            Violation::PasswordWithoutUsername => write!(f, "password without username"),
            Violation::ConnackReservedBits(b) => {
                write!(f, "CONNACK acknowledge flags reserved bits {b:#04x}")
            }
            Violation::InvalidReturnCode(rc) => write!(f, "CONNACK return code {rc} out of range"),
            Violation::InvalidSubackCode(rc) => write!(f, "SUBACK return code {rc:#04x} invalid"),
            Violation::SubscriptionOptionBits(b) => {
                write!(f, "subscription options reserved bits {b:#04x}")
            }
            Violation::NoTopicFilters => write!(f, "no topic filters"),
            Violation::NoReturnCodes => write!(f, "no return codes"),
            Violation::NonMinimalLength => {
                write!(f, "remaining length not minimally encoded")
            }
            Violation::TrailingBytes(n) => write!(f, "{n} trailing bytes after packet body"),
        }
    }
}
