use thiserror::Error;

use super::varint::encode_remaining_length;
use super::{Connect, Packet, PacketType, Publish, MAX_STRING_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("cannot encode {field}: {reason}")]
    InvariantViolation { field: String, reason: String },
}

fn violation(field: impl Into<String>, reason: impl Into<String>) -> EncodeError {
    EncodeError::InvariantViolation {
        field: field.into(),
        reason: reason.into(),
    }
}

struct Body(Vec<u8>);

impl Body {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }

    fn prefixed(&mut self, field: &str, bytes: &[u8]) -> Result<(), EncodeError> {
        if bytes.len() > MAX_STRING_LEN {
            return Err(violation(
                field,
                format!("{} bytes exceeds {MAX_STRING_LEN}", bytes.len()),
            ));
        }
        self.u16(bytes.len() as u16);
        self.0.extend_from_slice(bytes);
        Ok(())
    }

    fn raw(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }
}

fn check_qos(field: &str, qos: u8) -> Result<(), EncodeError> {
    if qos > 2 {
        return Err(violation(field, format!("qos={qos} is not 0, 1 or 2")));
    }
    Ok(())
}

/// Fixed header, remaining length, body. Raw packets are emitted verbatim.
pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, EncodeError> {
    let mut body = Body(Vec::new());
    let (ty, flags) = match packet {
        Packet::Raw { bytes } => return Ok(bytes.clone()),
        Packet::Connect(c) => {
            connect_body(c, &mut body)?;
            (PacketType::Connect, 0)
        }
        Packet::Connack(c) => {
            body.u8(u8::from(c.session_present));
            body.u8(c.return_code);
            (PacketType::Connack, 0)
        }
        Packet::Publish(p) => (PacketType::Publish, publish_body(p, &mut body)?),
        Packet::Puback { packet_id } => {
            body.u16(*packet_id);
            (PacketType::Puback, 0)
        }
        Packet::Pubrec { packet_id } => {
            body.u16(*packet_id);
            (PacketType::Pubrec, 0)
        }
        Packet::Pubrel { packet_id } => {
            body.u16(*packet_id);
            (PacketType::Pubrel, 0b0010)
        }
        Packet::Pubcomp { packet_id } => {
            body.u16(*packet_id);
            (PacketType::Pubcomp, 0)
        }
        Packet::Subscribe(s) => {
            body.u16(s.packet_id);
            for (i, entry) in s.entries.iter().enumerate() {
                body.prefixed(&format!("entries[{i}].filter"), &entry.filter)?;
                check_qos(&format!("entries[{i}].qos"), entry.qos)?;
                body.u8(entry.qos);
            }
            (PacketType::Subscribe, 0b0010)
        }
        Packet::Suback(s) => {
            body.u16(s.packet_id);
            body.raw(&s.return_codes);
            (PacketType::Suback, 0)
        }
        Packet::Unsubscribe(u) => {
            body.u16(u.packet_id);
            for (i, filter) in u.filters.iter().enumerate() {
                body.prefixed(&format!("filters[{i}]"), filter)?;
            }
            (PacketType::Unsubscribe, 0b0010)
        }
        Packet::Unsuback { packet_id } => {
            body.u16(*packet_id);
            (PacketType::Unsuback, 0)
        }
        Packet::Pingreq => (PacketType::Pingreq, 0),
        Packet::Pingresp => (PacketType::Pingresp, 0),
        Packet::Disconnect => (PacketType::Disconnect, 0),
    };

    let length = encode_remaining_length(body.0.len() as u64)
        .map_err(|e| violation("remaining_length", e.to_string()))?;
    let mut frame = Vec::with_capacity(1 + length.len() + body.0.len());
    frame.push(((ty as u8) << 4) | flags);
    frame.extend_from_slice(&length);
    frame.extend_from_slice(&body.0);
    Ok(frame)
}

fn connect_body(c: &Connect, body: &mut Body) -> Result<(), EncodeError> {
    body.prefixed("protocol_name", &c.protocol_name)?;
    body.u8(c.protocol_level);

    let mut flags = 0u8;
    if c.clean_session {
        flags |= 0x02;
    }
    if let Some(will) = &c.will {
        check_qos("will.qos", will.qos)?;
        flags |= 0x04 | (will.qos << 3);
        if will.retain {
            flags |= 0x20;
        }
    }
    if c.password.is_some() {
        flags |= 0x40;
    }
    if c.username.is_some() {
        flags |= 0x80;
    }
    body.u8(flags);
    body.u16(c.keep_alive);

    body.prefixed("client_id", &c.client_id)?;
    if let Some(will) = &c.will {
        body.prefixed("will.topic", &will.topic)?;
        body.prefixed("will.payload", &will.payload)?;
    }
    if let Some(username) = &c.username {
        body.prefixed("username", username)?;
    }
    if let Some(password) = &c.password {
        body.prefixed("password", password)?;
    }
    Ok(())
}

fn publish_body(p: &Publish, body: &mut Body) -> Result<u8, EncodeError> {
    check_qos("qos", p.qos)?;
    body.prefixed("topic", &p.topic)?;
    match (p.qos, p.packet_id) {
        (0, None) => {}
        (0, Some(_)) => return Err(violation("packet_id", "present on a QoS 0 publish")),
        (_, Some(id)) => body.u16(id),
        (_, None) => return Err(violation("packet_id", "missing on a QoS > 0 publish")),
    }
    body.raw(&p.payload);

    let mut flags = p.qos << 1;
    if p.dup {
        flags |= 0x08;
    }
    if p.retain {
        flags |= 0x01;
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pingreq() {
        assert_eq!(encode_packet(&Packet::Pingreq).unwrap(), [0xC0, 0x00]);
    }

    #[test]
    fn pubrel() {
        assert_eq!(
            encode_packet(&Packet::Pubrel { packet_id: 1 }).unwrap(),
            [0x62, 0x02, 0x00, 0x01]
        );
    }

    #[test]
    fn connect_layout() {
        let frame = encode_packet(&Packet::Connect(Connect::new("f1", 60))).unwrap();
        assert_eq!(
            frame,
            [
                0x10, 14, // header
                0, 4, b'M', b'Q', b'T', b'T', // protocol name
                4,    // level
                0x02, // clean session
                0, 60, // keep alive
                0, 2, b'f', b'1',
            ]
        );
    }

    #[test]
    fn publish_qos_checks() {
        let mut p = Publish {
            dup: false,
            qos: 3,
            retain: false,
            topic: b"t".to_vec(),
            packet_id: Some(1),
            payload: vec![],
        };
        let err = encode_packet(&Packet::Publish(p.clone())).unwrap_err();
        assert!(matches!(err, EncodeError::InvariantViolation { ref field, .. } if field == "qos"));
        p.qos = 0;
        let err = encode_packet(&Packet::Publish(p.clone())).unwrap_err();
        assert!(
            matches!(err, EncodeError::InvariantViolation { ref field, .. } if field == "packet_id")
        );
        p.packet_id = None;
        assert_eq!(
            encode_packet(&Packet::Publish(p)).unwrap(),
            [0x30, 0x03, 0x00, 0x01, b't']
        );
    }

    #[test]
    fn overlong_topic_rejected() {
        let p = Publish {
            dup: false,
            qos: 0,
            retain: false,
            topic: vec![b'a'; MAX_STRING_LEN + 1],
            packet_id: None,
            payload: vec![],
        };
        let err = encode_packet(&Packet::Publish(p)).unwrap_err();
        assert!(matches!(err, EncodeError::InvariantViolation { ref field, .. } if field == "topic"));
    }

    #[test]
    fn raw_is_verbatim() {
        let bytes = vec![0xff, 0x00, 0x13];
        assert_eq!(encode_packet(&Packet::Raw { bytes: bytes.clone() }).unwrap(), bytes);
    }
}
