//! proptest strategies for packets that a strict decoder must accept.

#![allow(dead_code)]

use mqttprobe::codec::{
    Connack, Connect, Packet, PacketType, Publish, Suback, Subscribe, SubscribeEntry, Unsubscribe, Will,
};
use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

pub const ALL_TYPES: [PacketType; 14] = [
    PacketType::Connect,
    PacketType::Connack,
    PacketType::Publish,
    PacketType::Puback,
    PacketType::Pubrec,
    PacketType::Pubrel,
    PacketType::Pubcomp,
    PacketType::Subscribe,
    PacketType::Suback,
    PacketType::Unsubscribe,
    PacketType::Unsuback,
    PacketType::Pingreq,
    PacketType::Pingresp,
    PacketType::Disconnect,
];

fn level() -> impl Strategy<Value = String> {
    "[a-z0-9 _.é]{0,6}"
}

/// Valid topic name: no wildcards, at least one byte.
pub fn topic() -> impl Strategy<Value = Vec<u8>> {
    vec(level(), 1..6).prop_map(|l| l.join("/")).prop_filter_map("empty topic", |t| {
        (!t.is_empty()).then(|| t.into_bytes())
    })
}

/// Valid filter: `+` whole levels, an optional trailing `#`.
pub fn filter() -> impl Strategy<Value = Vec<u8>> {
    let lvl = prop_oneof![3 => level(), 1 => Just("+".to_string())];
    (vec(lvl, 0..5), any::<bool>()).prop_filter_map("empty filter", |(mut levels, hash)| {
        if hash {
            levels.push("#".into());
        }
        let f = levels.join("/");
        (!f.is_empty()).then(|| f.into_bytes())
    })
}

fn text(max: usize) -> impl Strategy<Value = Vec<u8>> {
    proptest::string::string_regex(&format!("[a-zA-Z0-9\\-ü]{{0,{max}}}"))
        .unwrap()
        .prop_map(String::into_bytes)
}

fn packet_id() -> impl Strategy<Value = u16> {
    1..=u16::MAX
}

fn bytes(max: usize) -> impl Strategy<Value = Vec<u8>> {
    vec(any::<u8>(), 0..max)
}

fn connect() -> impl Strategy<Value = Packet> {
    let will = option::of((topic(), bytes(32), 0u8..=2, any::<bool>()).prop_map(|(topic, payload, qos, retain)| Will {
        topic,
        payload,
        qos,
        retain,
    }));
    let creds = option::of((text(12), option::of(bytes(12))));
    (text(23), any::<bool>(), any::<u16>(), will, creds).prop_map(|(client_id, clean, keep_alive, will, creds)| {
        let (username, password) = match creds {
            Some((u, p)) => (Some(u), p),
            None => (None, None),
        };
        Packet::Connect(Connect {
            protocol_name: b"MQTT".to_vec(),
            protocol_level: 4,
            clean_session: clean || client_id.is_empty(),
            will,
            keep_alive,
            client_id,
            username,
            password,
        })
    })
}

fn publish() -> impl Strategy<Value = Packet> {
    (0u8..=2, any::<bool>(), any::<bool>(), topic(), packet_id(), bytes(64)).prop_map(
        |(qos, dup, retain, topic, id, payload)| {
            Packet::Publish(Publish {
                dup: dup && qos > 0,
                qos,
                retain,
                topic,
                packet_id: (qos > 0).then_some(id),
                payload,
            })
        },
    )
}

pub fn packet_of(ty: PacketType) -> BoxedStrategy<Packet> {
    use PacketType as T;
    match ty {
        T::Connect => connect().boxed(),
        T::Connack => (0u8..=5, any::<bool>())
            .prop_map(|(return_code, sp)| {
                Packet::Connack(Connack {
                    session_present: sp && return_code == 0,
                    return_code,
                })
            })
            .boxed(),
        T::Publish => publish().boxed(),
        T::Puback => packet_id().prop_map(|packet_id| Packet::Puback { packet_id }).boxed(),
        T::Pubrec => packet_id().prop_map(|packet_id| Packet::Pubrec { packet_id }).boxed(),
        T::Pubrel => packet_id().prop_map(|packet_id| Packet::Pubrel { packet_id }).boxed(),
        T::Pubcomp => packet_id().prop_map(|packet_id| Packet::Pubcomp { packet_id }).boxed(),
        T::Subscribe => (packet_id(), vec((filter(), 0u8..=2), 1..5))
            .prop_map(|(packet_id, entries)| {
                Packet::Subscribe(Subscribe {
                    packet_id,
                    entries: entries.into_iter().map(|(filter, qos)| SubscribeEntry { filter, qos }).collect(),
                })
            })
            .boxed(),
        T::Suback => (packet_id(), vec(prop_oneof![Just(0u8), Just(1), Just(2), Just(0x80)], 1..6))
            .prop_map(|(packet_id, return_codes)| Packet::Suback(Suback { packet_id, return_codes }))
            .boxed(),
        T::Unsubscribe => (packet_id(), vec(filter(), 1..5))
            .prop_map(|(packet_id, filters)| Packet::Unsubscribe(Unsubscribe { packet_id, filters }))
            .boxed(),
        T::Unsuback => packet_id().prop_map(|packet_id| Packet::Unsuback { packet_id }).boxed(),
        T::Pingreq => Just(Packet::Pingreq).boxed(),
        T::Pingresp => Just(Packet::Pingresp).boxed(),
        T::Disconnect => Just(Packet::Disconnect).boxed(),
    }
}

pub fn any_packet() -> impl Strategy<Value = Packet> {
    proptest::sample::select(ALL_TYPES.to_vec()).prop_flat_map(packet_of)
}
