//! Hand-written traces that replay reported broker behaviour on the builtin
//! corpus, event by event, as the runner would have recorded it.

#![allow(dead_code)]

use mqttprobe::codec::{Connack, Packet, Publish, Suback, Subscribe, SubscribeEntry};
use mqttprobe::experiment::{builtin_corpus, Action, Experiment, Step};
use mqttprobe::runner::{CorpusResult, CorpusRun, Endpoint, EventKind, Liveness, Outcome, Trace, TraceEvent};

pub const SESSION: &str = "fuzzer";

pub struct Script {
    name: String,
    events: Vec<TraceEvent>,
    closed: bool,
    next_out_id: u16,
}

impl Script {
    pub fn new(name: &str) -> Self {
        let mut s = Script {
            name: name.to_string(),
            events: Vec::new(),
            closed: false,
            next_out_id: 0,
        };
        s.push(EventKind::Connected);
        s
    }

    fn push(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            t_ms: seq,
            session: SESSION.to_string(),
            kind,
        });
    }

    pub fn sent(&mut self, packet: Packet) -> &mut Self {
        self.push(EventKind::Sent { packet, auto: false });
        self
    }

    pub fn auto(&mut self, packet: Packet) -> &mut Self {
        self.push(EventKind::Sent { packet, auto: true });
        self
    }

    pub fn recv(&mut self, packet: Packet) -> &mut Self {
        self.push(EventKind::Received {
            packet,
            annotations: vec![],
        });
        self
    }

    pub fn close(&mut self) -> &mut Self {
        self.push(EventKind::TcpClosedByPeer);
        self.closed = true;
        self
    }

    /// The broker forwards a message to us; our auto-acks follow.
    pub fn deliver(&mut self, topic: &[u8], payload: &[u8], qos: u8) -> &mut Self {
        let packet_id = (qos > 0).then(|| {
            self.next_out_id += 1;
            self.next_out_id
        });
        self.recv(Packet::Publish(Publish {
            dup: false,
            qos,
            retain: false,
            topic: topic.to_vec(),
            packet_id,
            payload: payload.to_vec(),
        }));
        match (qos, packet_id) {
            (1, Some(id)) => {
                self.auto(Packet::Puback { packet_id: id });
            }
            (2, Some(id)) => {
                self.auto(Packet::Pubrec { packet_id: id });
                self.recv(Packet::Pubrel { packet_id: id });
                self.auto(Packet::Pubcomp { packet_id: id });
            }
            _ => {}
        }
        self
    }

    pub fn trace(&self) -> Trace {
        Trace {
            experiment_name: self.name.clone(),
            endpoint: Endpoint::new("documented", 1883),
            started_at_ms: 0,
            events: self.events.clone(),
            outcome: if self.closed {
                Outcome::AbortedByPeer
            } else {
                Outcome::Completed
            },
        }
    }
}

pub fn publish(topic: &[u8], qos: u8, id: u16, payload: &[u8]) -> Packet {
    Packet::Publish(Publish {
        dup: false,
        qos,
        retain: false,
        topic: topic.to_vec(),
        packet_id: (qos > 0).then_some(id),
        payload: payload.to_vec(),
    })
}

pub fn connack(rc: u8) -> Packet {
    Packet::Connack(Connack {
        session_present: false,
        return_code: rc,
    })
}

fn experiment(name: &str) -> Experiment {
    builtin_corpus().into_iter().find(|e| e.name == name).unwrap()
}

/// Client packets of an experiment in order, flattening repeats.
pub fn client_packets(e: &Experiment) -> Vec<Packet> {
    fn walk(e: &Experiment, steps: &[Step], out: &mut Vec<Packet>) {
        let mut splice = None;
        for s in steps {
            match &s.action {
                Action::Repeat(r) => (0..r.count).for_each(|_| walk(e, &r.steps, out)),
                Action::SpliceNext(sp) => splice = Some(sp.clone()),
                a => {
                    let session = e.session(s.session.as_deref().unwrap()).unwrap();
                    if let Some(p) = a.to_packet(session) {
                        match splice.take() {
                            Some(sp) => {
                                let frame = mqttprobe::codec::encode_packet(&p).unwrap();
                                let bytes = mqttprobe::codec::splice(
                                    &frame,
                                    sp.offset,
                                    sp.remove,
                                    &sp.insert_hex,
                                    sp.fixup_length,
                                )
                                .unwrap();
                                out.push(Packet::Raw { bytes });
                            }
                            None => out.push(p),
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &e.steps, &mut out);
    out
}

fn subscribe_of(e: &Experiment) -> (Vec<u8>, u8) {
    for p in client_packets(e) {
        if let Packet::Subscribe(Subscribe { entries, .. }) = p {
            let SubscribeEntry { filter, qos } = entries[0].clone();
            return (filter, qos);
        }
    }
    panic!("no subscribe in {}", e.name)
}

fn publishes(e: &Experiment) -> Vec<Publish> {
    client_packets(e)
        .into_iter()
        .filter_map(|p| match p {
            Packet::Publish(p) => Some(p),
            _ => None,
        })
        .collect()
}

fn connect_and_subscribe(s: &mut Script, e: &Experiment) {
    let packets = client_packets(e);
    s.sent(packets[0].clone()).recv(connack(0));
    let (_, qos) = subscribe_of(e);
    s.sent(packets[1].clone()).recv(Packet::Suback(Suback {
        packet_id: 1,
        return_codes: vec![qos],
    }));
}

const TOPIC: &[u8] = b"fuzz/qos";

fn qos_reuse(broker: &str, e: &Experiment) -> Script {
    let mut s = Script::new(&e.name);
    connect_and_subscribe(&mut s, e);
    let pubs = publishes(e);
    let (first, second) = (&pubs[0], &pubs[1]);
    let (p1, p2) = (first.payload.as_slice(), second.payload.as_slice());
    let second_ack = match second.qos {
        1 => Some(Packet::Puback { packet_id: 1 }),
        2 => Some(Packet::Pubrec { packet_id: 1 }),
        _ => None,
    };
    let send_second = |s: &mut Script| {
        s.sent(Packet::Publish(second.clone()));
    };
    let pubrel = Packet::Pubrel { packet_id: 1 };
    let pubrec = Packet::Pubrec { packet_id: 1 };
    let pubcomp = Packet::Pubcomp { packet_id: 1 };
    s.sent(Packet::Publish(first.clone()));
    let double = e.name == "double_qos2_same_id";

    match (broker, double) {
        // second publish held until the first flow completes
        ("conformant" | "EMQX" | "Moquette", false) => {
            s.recv(pubrec.clone()).deliver(TOPIC, p1, 2);
            send_second(&mut s);
            s.sent(pubrel).recv(pubcomp).deliver(TOPIC, p2, second.qos);
            if let Some(a) = second_ack {
                s.recv(a);
            }
        }
        ("Mosquitto", false) if second.qos == 1 => {
            s.recv(pubrec).deliver(TOPIC, p1, 2);
            send_second(&mut s);
            s.sent(pubrel).recv(pubcomp);
        }
        ("Mosquitto" | "Aedes", false) => {
            // QoS 0 packet goes out first, the QoS 2 one after PUBREL
            s.recv(pubrec);
            send_second(&mut s);
            s.deliver(TOPIC, p2, 0);
            s.sent(pubrel).deliver(TOPIC, p1, 2).recv(pubcomp);
        }
        ("HiveMQ", false) => {
            s.deliver(TOPIC, p1, 2);
            send_second(&mut s);
            s.sent(pubrel).recv(pubcomp).recv(pubrec).deliver(TOPIC, p2, second.qos);
            if let Some(a) = second_ack {
                s.recv(a);
            }
        }
        (other, false) => panic!("no QoS reuse script for {other}"),
        (_, true) => {
            s.recv(pubrec.clone()).deliver(TOPIC, p1, 2);
            send_second(&mut s);
            s.recv(pubrec);
            match broker {
                "HiveMQ" | "Moquette" => {
                    s.deliver(TOPIC, p2, 2);
                }
                "Aedes" => {
                    s.deliver(TOPIC, p1, 2);
                }
                _ => {}
            }
            s.sent(pubrel.clone()).recv(pubcomp.clone()).sent(pubrel).recv(pubcomp);
        }
    }
    s
}

fn aedes_qos21(e: &Experiment) -> Script {
    let mut s = Script::new(&e.name);
    connect_and_subscribe(&mut s, e);
    let pubs = publishes(e);
    s.sent(Packet::Publish(pubs[0].clone()))
        .recv(Packet::Pubrec { packet_id: 1 })
        .deliver(TOPIC, &pubs[0].payload, 2)
        .sent(Packet::Publish(pubs[1].clone()))
        .sent(Packet::Pubrel { packet_id: 1 })
        .deliver(TOPIC, &pubs[1].payload, 1)
        .recv(Packet::Puback { packet_id: 1 })
        // PUBCOMP only after both publications
        .recv(Packet::Pubcomp { packet_id: 1 });
    s
}

/// Subscribe + publish at QoS 1, with the broker optionally cutting the topic
/// or dropping the connection after SUBSCRIBE.
fn sub_then_publish(e: &Experiment, reaction: Reaction) -> Script {
    let mut s = Script::new(&e.name);
    let packets = client_packets(e);
    s.sent(packets[0].clone()).recv(connack(0));
    if reaction == Reaction::CloseOnSubscribe {
        s.sent(packets[1].clone()).close();
        return s;
    }
    connect_tail(&mut s, e, reaction);
    s
}

fn connect_tail(s: &mut Script, e: &Experiment, reaction: Reaction) {
    let packets = client_packets(e);
    let (_, qos) = subscribe_of(e);
    s.sent(packets[1].clone()).recv(Packet::Suback(Suback {
        packet_id: 1,
        return_codes: vec![qos],
    }));
    let pubs = publishes(e);
    for p in &pubs {
        s.sent(Packet::Publish(p.clone()));
        if p.qos == 1 {
            s.recv(Packet::Puback { packet_id: 1 });
        }
    }
    for p in &pubs {
        let topic = match reaction {
            Reaction::Truncate => {
                let cut = if p.topic.len() > 4096 { 4096 } else { p.topic.len() / 2 };
                p.topic[..cut].to_vec()
            }
            _ => p.topic.clone(),
        };
        s.deliver(&topic, &p.payload, p.qos.min(qos));
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Reaction {
    Normal,
    Truncate,
    CloseOnSubscribe,
}

/// One trace per builtin experiment for `broker` (`"conformant"` for the
/// baseline), with the liveness seen afterwards.
pub fn synthetic_results(broker: &str) -> Vec<CorpusResult> {
    builtin_corpus()
        .into_iter()
        .map(|e| {
            let (script, alive) = synthetic(broker, &e);
            let liveness = if alive {
                Liveness::Alive
            } else {
                Liveness::Dead {
                    detail: "connection refused".into(),
                }
            };
            CorpusResult {
                run: CorpusRun::Ran {
                    trace: script.trace(),
                    liveness,
                },
                experiment: e,
            }
        })
        .collect()
}

fn synthetic(broker: &str, e: &Experiment) -> (Script, bool) {
    let name = e.name.as_str();
    let packets = client_packets(e);
    match name {
        "qos2_then_qos1_same_id" if broker == "Aedes" => (aedes_qos21(e), true),
        "qos2_then_qos1_same_id" | "qos2_then_qos0_same_id" | "double_qos2_same_id" => {
            (qos_reuse(broker, e), true)
        }
        "long_topic_5000" | "long_topic_65535" => match broker {
            "EMQX" | "Moquette" => (sub_then_publish(e, Reaction::CloseOnSubscribe), true),
            "Aedes" => (sub_then_publish(e, Reaction::CloseOnSubscribe), false),
            "HiveMQ" => (sub_then_publish(e, Reaction::Truncate), true),
            _ => (sub_then_publish(e, Reaction::Normal), true),
        },
        "many_slashes_topic" => match broker {
            "HiveMQ" => (sub_then_publish(e, Reaction::Truncate), true),
            "conformant" => (sub_then_publish(e, Reaction::Normal), true),
            _ => (sub_then_publish(e, Reaction::CloseOnSubscribe), true),
        },
        "payload_zlib" | "payload_bz2" | "payload_base64" | "qos0_flood" => {
            (sub_then_publish(e, Reaction::Normal), true)
        }
        "non_utf8_client_id" => {
            let mut s = Script::new(name);
            s.sent(packets[0].clone()).recv(connack(2)).close();
            (s, true)
        }
        "bad_protocol_name" | "bad_protocol_level" => {
            let mut s = Script::new(name);
            s.sent(packets[0].clone()).recv(connack(1)).close();
            (s, true)
        }
        "keepalive_as_string" => {
            let mut s = Script::new(name);
            s.sent(packets[0].clone()).close();
            (s, true)
        }
        "invalid_wildcard_subscribe" | "invalid_wildcard_publish" | "topic_utf16" => {
            let mut s = Script::new(name);
            s.sent(packets[0].clone()).recv(connack(0)).sent(packets[1].clone()).close();
            (s, true)
        }
        "orphan_pubrel" => {
            let mut s = Script::new(name);
            s.sent(packets[0].clone()).recv(connack(0)).sent(packets[1].clone());
            if broker == "Aedes" {
                s.close();
            } else {
                s.recv(Packet::Pubcomp { packet_id: 77 });
            }
            (s, true)
        }
        other => panic!("no synthetic trace for {other}"),
    }
}
