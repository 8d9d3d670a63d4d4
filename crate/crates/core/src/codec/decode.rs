use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::varint::{decode_remaining_length, encoded_len, VarintError};
use super::{
    Connack, Connect, Packet, PacketType, Publish, Suback, Subscribe, SubscribeEntry,
    Unsubscribe, Violation, Will, SUBACK_FAILURE,
};
use crate::topics::{validate_filter, validate_topic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Reject any protocol violation.
    Strict,
    /// Return the packet whenever it is structurally parseable and list what it breaks.
    #[default]
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub packet: Packet,
    pub annotations: Vec<Violation>,
    pub consumed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// More bytes are needed before anything can be said.
    #[error("incomplete frame")]
    Incomplete,
    /// `frame_len` is known whenever the fixed header was readable, so a
    /// stream reader can skip the bad frame and carry on.
    #[error("malformed frame: {reason}")]
    Malformed {
        reason: String,
        frame_len: Option<usize>,
    },
}

/// Total length of the frame starting at `bytes[0]`, header included.
pub fn frame_length(bytes: &[u8]) -> Result<usize, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Incomplete);
    }
    match decode_remaining_length(&bytes[1..]) {
        Ok((len, used)) => Ok(1 + used + len as usize),
        Err(VarintError::Incomplete) => Err(DecodeError::Incomplete),
        Err(e) => Err(DecodeError::Malformed {
            reason: e.to_string(),
            frame_len: None,
        }),
    }
}

/// Decode one frame from the start of `bytes`.
pub fn decode_packet(bytes: &[u8], mode: DecodeMode) -> Result<Decoded, DecodeError> {
    let total = frame_length(bytes)?;
    if bytes.len() < total {
        return Err(DecodeError::Incomplete);
    }
    let (remaining, used) = decode_remaining_length(&bytes[1..]).expect("checked by frame_length");
    let malformed = |reason: String| DecodeError::Malformed {
        reason,
        frame_len: Some(total),
    };

    let nibble = bytes[0] >> 4;
    let flags = bytes[0] & 0x0f;
    let ty = PacketType::from_nibble(nibble)
        .ok_or_else(|| malformed(format!("reserved packet type {nibble}")))?;

    let mut notes = Vec::new();
    if used != encoded_len(remaining) {
        notes.push(Violation::NonMinimalLength);
    }
    if ty != PacketType::Publish && flags != ty.required_flags() {
        notes.push(Violation::ReservedFlags {
            packet_type: ty,
            expected: ty.required_flags(),
            found: flags,
        });
    }

    let mut cur = Cursor {
        buf: &bytes[1 + used..total],
        pos: 0,
    };
    let packet = parse_body(ty, flags, &mut cur, &mut notes).map_err(malformed)?;
    if cur.remaining() > 0 {
        notes.push(Violation::TrailingBytes(cur.remaining()));
    }

    if mode == DecodeMode::Strict {
        if let Some(first) = notes.first() {
            return Err(malformed(first.to_string()));
        }
    }
    Ok(Decoded {
        packet,
        annotations: notes,
        consumed: total,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self, what: &str) -> Result<u8, String> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| format!("body ends before {what}"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self, what: &str) -> Result<u16, String> {
        if self.remaining() < 2 {
            return Err(format!("body ends before {what}"));
        }
        let v = u16::from_be_bytes([self.buf[self.pos], self.buf[self.pos + 1]]);
        self.pos += 2;
        Ok(v)
    }

    fn prefixed(&mut self, what: &str) -> Result<&'a [u8], String> {
        let len = self.u16(what)? as usize;
        if self.remaining() < len {
            return Err(format!(
                "{what} length {len} exceeds the {} bytes left in the body",
                self.remaining()
            ));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
}

fn packet_id(cur: &mut Cursor<'_>, notes: &mut Vec<Violation>) -> Result<u16, String> {
    let id = cur.u16("packet_id")?;
    if id == 0 {
        notes.push(Violation::ZeroPacketId);
    }
    Ok(id)
}

fn utf8(field: &'static str, bytes: &[u8], notes: &mut Vec<Violation>) {
    if std::str::from_utf8(bytes).is_err() {
        notes.push(Violation::InvalidUtf8 { field });
    }
}

fn topic(field: &'static str, bytes: &[u8], notes: &mut Vec<Violation>) {
    notes.extend(
        validate_topic(bytes)
            .into_iter()
            .map(|violation| Violation::Topic { field, violation }),
    );
}

fn parse_body(
    ty: PacketType,
    flags: u8,
    cur: &mut Cursor<'_>,
    notes: &mut Vec<Violation>,
) -> Result<Packet, String> {
    Ok(match ty {
        PacketType::Connect => Packet::Connect(parse_connect(cur, notes)?),
        PacketType::Connack => {
            let ack = cur.u8("acknowledge flags")?;
            let rc = cur.u8("return code")?;
            if ack & 0xfe != 0 {
                notes.push(Violation::ConnackReservedBits(ack & 0xfe));
            }
            if rc > 5 {
                notes.push(Violation::InvalidReturnCode(rc));
            }
            Packet::Connack(Connack {
                session_present: ack & 0x01 != 0,
                return_code: rc,
            })
        }
        PacketType::Publish => {
            let qos = (flags >> 1) & 0x03;
            let dup = flags & 0x08 != 0;
            if qos == 3 {
                notes.push(Violation::InvalidQos { field: "qos", qos });
            }
            if dup && qos == 0 {
                notes.push(Violation::DupOnQos0);
            }
            let name = cur.prefixed("topic")?.to_vec();
            topic("topic", &name, notes);
            let id = if qos > 0 {
                Some(packet_id(cur, notes)?)
            } else {
                None
            };
            Packet::Publish(Publish {
                dup,
                qos,
                retain: flags & 0x01 != 0,
                topic: name,
                packet_id: id,
                payload: cur.rest().to_vec(),
            })
        }
        PacketType::Puback => Packet::Puback {
            packet_id: packet_id(cur, notes)?,
        },
        PacketType::Pubrec => Packet::Pubrec {
            packet_id: packet_id(cur, notes)?,
        },
        PacketType::Pubrel => Packet::Pubrel {
            packet_id: packet_id(cur, notes)?,
        },
        PacketType::Pubcomp => Packet::Pubcomp {
            packet_id: packet_id(cur, notes)?,
        },
        PacketType::Subscribe => {
            let id = packet_id(cur, notes)?;
            let mut entries = Vec::new();
            while cur.remaining() > 0 {
                let filter = cur.prefixed("topic filter")?.to_vec();
                let options = cur.u8("requested QoS")?;
                if options & 0xfc != 0 {
                    notes.push(Violation::SubscriptionOptionBits(options & 0xfc));
                }
                let qos = options & 0x03;
                if qos == 3 {
                    notes.push(Violation::InvalidQos {
                        field: "requested qos",
                        qos,
                    });
                }
                let index = entries.len();
                notes.extend(
                    validate_filter(&filter)
                        .into_iter()
                        .map(|violation| Violation::Filter { index, violation }),
                );
                entries.push(SubscribeEntry { filter, qos });
            }
            if entries.is_empty() {
                notes.push(Violation::NoTopicFilters);
            }
            Packet::Subscribe(Subscribe {
                packet_id: id,
                entries,
            })
        }
        PacketType::Suback => {
            let id = packet_id(cur, notes)?;
            let codes = cur.rest().to_vec();
            if codes.is_empty() {
                notes.push(Violation::NoReturnCodes);
            }
            for &rc in &codes {
                if rc > 2 && rc != SUBACK_FAILURE {
                    notes.push(Violation::InvalidSubackCode(rc));
                }
            }
            Packet::Suback(Suback {
                packet_id: id,
                return_codes: codes,
            })
        }
        PacketType::Unsubscribe => {
            let id = packet_id(cur, notes)?;
            let mut filters = Vec::new();
            while cur.remaining() > 0 {
                let filter = cur.prefixed("topic filter")?.to_vec();
                let index = filters.len();
                notes.extend(
                    validate_filter(&filter)
                        .into_iter()
                        .map(|violation| Violation::Filter { index, violation }),
                );
                filters.push(filter);
            }
            if filters.is_empty() {
                notes.push(Violation::NoTopicFilters);
            }
            Packet::Unsubscribe(Unsubscribe {
                packet_id: id,
                filters,
            })
        }
        PacketType::Unsuback => Packet::Unsuback {
            packet_id: packet_id(cur, notes)?,
        },
        PacketType::Pingreq => Packet::Pingreq,
        PacketType::Pingresp => Packet::Pingresp,
        PacketType::Disconnect => Packet::Disconnect,
    })
}

fn parse_connect(cur: &mut Cursor<'_>, notes: &mut Vec<Violation>) -> Result<Connect, String> {
    let protocol_name = cur.prefixed("protocol name")?.to_vec();
    let protocol_level = cur.u8("protocol level")?;
    let flags = cur.u8("connect flags")?;
    let keep_alive = cur.u16("keep alive")?;

    if protocol_name != b"MQTT" {
        notes.push(Violation::UnsupportedProtocolName);
    }
    if protocol_level != 4 {
        notes.push(Violation::UnsupportedProtocolLevel(protocol_level));
    }
    if flags & 0x01 != 0 {
        notes.push(Violation::ConnectReservedFlag);
    }

    let client_id = cur.prefixed("client_id")?.to_vec();
    utf8("client_id", &client_id, notes);

    let will_flag = flags & 0x04 != 0;
    let will_qos = (flags >> 3) & 0x03;
    let will_retain = flags & 0x20 != 0;
    let will = if will_flag {
        if will_qos == 3 {
            notes.push(Violation::InvalidQos {
                field: "will qos",
                qos: will_qos,
            });
        }
        let topic_bytes = cur.prefixed("will topic")?.to_vec();
        topic("will topic", &topic_bytes, notes);
        let payload = cur.prefixed("will message")?.to_vec();
        Some(Will {
            topic: topic_bytes,
            payload,
            qos: will_qos,
            retain: will_retain,
        })
    } else {
        if will_qos != 0 || will_retain {
            notes.push(Violation::WillFlagsWithoutWill);
        }
        None
    };

    let username = if flags & 0x80 != 0 {
        let u = cur.prefixed("username")?.to_vec();
        utf8("username", &u, notes);
        Some(u)
    } else {
        None
    };
    let password = if flags & 0x40 != 0 {
        if username.is_none() {
            notes.push(Violation::PasswordWithoutUsername);
        }
        Some(cur.prefixed("password")?.to_vec())
    } else {
        None
    };

    Ok(Connect {
        protocol_name,
        protocol_level,
        clean_session: flags & 0x02 != 0,
        will,
        keep_alive,
        client_id,
        username,
        password,
    })
}
