use std::collections::{HashMap, HashSet, VecDeque};

use crate::codec::{Connack, Packet, Publish, Suback, Violation};

/// A message accepted from a publisher, ready for fan-out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: Vec<u8>,
    pub payload: Vec<u8>,
    pub qos: u8,
}

/// What the router should do after a packet was handled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send(Packet),
    Route(Message),
    /// Connection authenticated under this client id.
    Register(Vec<u8>),
    Subscribe(Vec<(Vec<u8>, u8)>),
    Unsubscribe(Vec<Vec<u8>>),
    Close(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
/// The acknowledgement an outbound message is waiting for.
enum Outbound {
    Puback,
    Pubrec,
    Pubcomp,
}

/// Per-connection protocol state. Pure: all I/O is expressed as [`Effect`]s.
#[derive(Debug, Default)]
pub struct SessionState {
    connected: bool,
    client_id: Vec<u8>,
    keep_alive: u16,
    /// QoS 2 ids received and answered with PUBREC, awaiting PUBREL.
    inbound_qos2: HashSet<u16>,
    /// Publishes parked behind an unfinished QoS 2 handshake on the same id.
    held: VecDeque<Publish>,
    outbound: HashMap<u16, Outbound>,
    next_outbound_id: u16,
}

fn close(reason: impl Into<String>) -> Vec<Effect> {
    vec![Effect::Close(reason.into())]
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn client_id(&self) -> &[u8] {
        &self.client_id
    }

    pub fn keep_alive(&self) -> u16 {
        self.keep_alive
    }

    pub fn inbound_qos2(&self) -> &HashSet<u16> {
        &self.inbound_qos2
    }

    /// Handle one decoded packet along with whatever the permissive decoder
    /// flagged about it.
    pub fn handle(&mut self, packet: &Packet, annotations: &[Violation]) -> Vec<Effect> {
        if !self.connected {
            return self.handle_connect(packet, annotations);
        }
        if let Some(v) = annotations.first() {
            return close(format!("protocol violation: {v}"));
        }
        match packet {
            Packet::Connect(_) => close("second CONNECT"),
            Packet::Publish(p) => self.handle_publish(p),
            Packet::Pubrel { packet_id } => self.handle_pubrel(*packet_id),
            Packet::Puback { packet_id } => {
                if self.outbound.get(packet_id) == Some(&Outbound::Puback) {
                    self.outbound.remove(packet_id);
                }
                vec![]
            }
            Packet::Pubrec { packet_id } => match self.outbound.get_mut(packet_id) {
                Some(state @ (Outbound::Pubrec | Outbound::Pubcomp)) => {
                    *state = Outbound::Pubcomp;
                    vec![Effect::Send(Packet::Pubrel {
                        packet_id: *packet_id,
                    })]
                }
                _ => vec![],
            },
            Packet::Pubcomp { packet_id } => {
                if self.outbound.get(packet_id) == Some(&Outbound::Pubcomp) {
                    self.outbound.remove(packet_id);
                }
                vec![]
            }
            Packet::Subscribe(s) => {
                let granted: Vec<(Vec<u8>, u8)> =
                    s.entries.iter().map(|e| (e.filter.clone(), e.qos)).collect();
                let return_codes = granted.iter().map(|(_, q)| *q).collect();
                vec![
                    Effect::Subscribe(granted),
                    Effect::Send(Packet::Suback(Suback {
                        packet_id: s.packet_id,
                        return_codes,
                    })),
                ]
            }
            Packet::Unsubscribe(u) => vec![
                Effect::Unsubscribe(u.filters.clone()),
                Effect::Send(Packet::Unsuback {
                    packet_id: u.packet_id,
                }),
            ],
            Packet::Pingreq => vec![Effect::Send(Packet::Pingresp)],
            Packet::Disconnect => close("client disconnected"),
            other => close(format!("unexpected {}", other.summary())),
        }
    }

    fn handle_connect(&mut self, packet: &Packet, annotations: &[Violation]) -> Vec<Effect> {
        let Packet::Connect(c) = packet else {
            return close(format!("{} before CONNECT", packet.summary()));
        };
        let refuse = |code: u8, why: String| {
            vec![
                Effect::Send(Packet::Connack(Connack {
                    session_present: false,
                    return_code: code,
                })),
                Effect::Close(why),
            ]
        };
        for v in annotations {
            match v {
                Violation::UnsupportedProtocolName | Violation::UnsupportedProtocolLevel(_) => {
                    return refuse(1, v.to_string());
                }
                Violation::InvalidUtf8 { field } if *field == "client_id" => {
                    return refuse(2, v.to_string());
                }
                _ => {}
            }
        }
        if let Some(v) = annotations.first() {
            return close(format!("malformed CONNECT: {v}"));
        }
        if c.client_id.is_empty() && !c.clean_session {
            return refuse(2, "empty client id without clean session".into());
        }
        self.connected = true;
        self.keep_alive = c.keep_alive;
        self.client_id = c.client_id.clone();
        vec![
            Effect::Register(c.client_id.clone()),
            Effect::Send(Packet::Connack(Connack {
                session_present: false,
                return_code: 0,
            })),
        ]
    }

    fn handle_publish(&mut self, p: &Publish) -> Vec<Effect> {
        // A QoS 2 resend of an id still awaiting PUBREL is a retransmission,
        // whatever its payload: acknowledge again, never route again.
        if p.qos == 2 {
            let id = p.packet_id.expect("decoder guarantees an id on QoS 2");
            if self.inbound_qos2.contains(&id) {
                return vec![Effect::Send(Packet::Pubrec { packet_id: id })];
            }
        }
        if !self.held.is_empty() || self.blocked(p) {
            self.held.push_back(p.clone());
            return vec![];
        }
        self.accept(p)
    }

    /// A QoS 1 publish reusing an id whose QoS 2 handshake is still open.
    fn blocked(&self, p: &Publish) -> bool {
        p.qos == 1 && p.packet_id.is_some_and(|id| self.inbound_qos2.contains(&id))
    }

    fn accept(&mut self, p: &Publish) -> Vec<Effect> {
        let route = Effect::Route(Message {
            topic: p.topic.clone(),
            payload: p.payload.clone(),
            qos: p.qos,
        });
        match (p.qos, p.packet_id) {
            (1, Some(id)) => vec![route, Effect::Send(Packet::Puback { packet_id: id })],
            (2, Some(id)) => {
                self.inbound_qos2.insert(id);
                vec![route, Effect::Send(Packet::Pubrec { packet_id: id })]
            }
            _ => vec![route],
        }
    }

    fn handle_pubrel(&mut self, id: u16) -> Vec<Effect> {
        self.inbound_qos2.remove(&id);
        let mut effects = vec![Effect::Send(Packet::Pubcomp { packet_id: id })];
        while let Some(front) = self.held.front() {
            if front.qos == 2 && front.packet_id.is_some_and(|i| self.inbound_qos2.contains(&i)) {
                let p = self.held.pop_front().expect("front exists");
                effects.push(Effect::Send(Packet::Pubrec {
                    packet_id: p.packet_id.expect("qos 2"),
                }));
                continue;
            }
            if self.blocked(front) {
                break;
            }
            let p = self.held.pop_front().expect("front exists");
            effects.extend(self.accept(&p));
        }
        effects
    }

    /// Build the outbound PUBLISH for a delivery to this connection.
    pub fn deliver(&mut self, message: &Message, qos: u8) -> Packet {
        let mut qos = qos;
        let packet_id = if qos == 0 {
            None
        } else {
            match self.allocate_id() {
                Some(id) => {
                    let state = if qos == 1 {
                        Outbound::Puback
                    } else {
                        Outbound::Pubrec
                    };
                    self.outbound.insert(id, state);
                    Some(id)
                }
                None => {
                    log::warn!("all outbound packet ids in flight, delivering at QoS 0");
                    qos = 0;
                    None
                }
            }
        };
        Packet::Publish(Publish {
            dup: false,
            qos,
            retain: false,
            topic: message.topic.clone(),
            packet_id,
            payload: message.payload.clone(),
        })
    }

    fn allocate_id(&mut self) -> Option<u16> {
        for _ in 0..u16::MAX {
            self.next_outbound_id = self.next_outbound_id.wrapping_add(1);
            if self.next_outbound_id == 0 {
                self.next_outbound_id = 1;
            }
            if !self.outbound.contains_key(&self.next_outbound_id) {
                return Some(self.next_outbound_id);
            }
        }
        None
    }

    pub fn outbound_in_flight(&self) -> usize {
        self.outbound.len()
    }
}
