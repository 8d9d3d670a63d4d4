//! The builtin experiment corpus.

use super::*;

/// Names of the builtin experiments, in execution order.
pub const CORPUS_NAMES: [&str; 18] = [
    "qos2_then_qos1_same_id",
    "qos2_then_qos0_same_id",
    "double_qos2_same_id",
    "non_utf8_client_id",
    "keepalive_as_string",
    "long_topic_5000",
    "long_topic_65535",
    "invalid_wildcard_subscribe",
    "invalid_wildcard_publish",
    "topic_utf16",
    "payload_zlib",
    "payload_bz2",
    "payload_base64",
    "many_slashes_topic",
    "qos0_flood",
    "bad_protocol_name",
    "bad_protocol_level",
    "orphan_pubrel",
];

const S: &str = "fuzzer";

// {"state":"on","brightness":100} under three encodings.
const ZLIB_HEX: &str = "789cab562a2e492c4955b252cacf53d2514a2aca4ccf28c94b2d2e56b2323430a80500a5d40a2d";
const BZ2_HEX: &str = "425a6839314159265359e35416d400000e99801004601032e19c0a2000229a64341b4d414d3231313138e1b270eecb4289a104df13016d27c3e2ee48a70a121c6a82da80";
const BASE64_TEXT: &str = "eyJzdGF0ZSI6Im9uIiwiYnJpZ2h0bmVzcyI6MTAwfQ==";

fn step(action: Action) -> Step {
    Step::on(S, action)
}

fn subscribe(filter: &[u8], qos: u8) -> Step {
    step(Action::Subscribe(SubscribeStep {
        filter: ByteString(filter.to_vec()),
        qos,
        packet_id: 1,
    }))
}

fn publish(topic: &[u8], qos: u8, packet_id: u16, payload: &[u8]) -> Step {
    step(Action::Publish(PublishStep {
        topic: ByteString(topic.to_vec()),
        payload: Payload(payload.to_vec()),
        qos,
        retain: false,
        dup: false,
        packet_id: (qos > 0).then_some(packet_id),
    }))
}

fn pubrel(packet_id: u16) -> Step {
    step(Action::Pubrel(AckStep { packet_id }))
}

fn experiment(
    name: &str,
    description: &str,
    peer_close: PeerClosePolicy,
    sessions: Vec<SessionDecl>,
    steps: Vec<Step>,
) -> Experiment {
    Experiment {
        name: name.to_string(),
        description: description.to_string(),
        sessions,
        steps,
        settle_ms: DEFAULT_SETTLE_MS,
        peer_close,
    }
}

fn simple(name: &str, description: &str, peer_close: PeerClosePolicy, steps: Vec<Step>) -> Experiment {
    let mut all = vec![step(Action::Connect)];
    all.extend(steps);
    experiment(name, description, peer_close, vec![SessionDecl::new(S)], all)
}

fn with_connect(name: &str, description: &str, connect: ConnectParams) -> Experiment {
    let mut session = SessionDecl::new(S);
    session.connect = connect;
    experiment(
        name,
        description,
        PeerClosePolicy::Required,
        vec![session],
        vec![step(Action::Connect)],
    )
}

fn exact_topic(len: usize) -> Vec<u8> {
    let mut topic = b"fuzz/".to_vec();
    topic.resize(len, b'a');
    topic
}

fn long_topic(len: usize) -> Experiment {
    let topic = exact_topic(len);
    simple(
        &format!("long_topic_{len}"),
        &format!("subscribe to and publish on a {len} byte topic"),
        PeerClosePolicy::Forbidden,
        vec![subscribe(&topic, 1), publish(&topic, 1, 1, b"long")],
    )
}

fn encoded_payload(name: &str, description: &str, payload: &[u8]) -> Experiment {
    simple(
        name,
        description,
        PeerClosePolicy::Forbidden,
        vec![
            subscribe(b"fuzz/encoded", 1),
            publish(b"fuzz/encoded", 1, 1, payload),
        ],
    )
}

fn qos2_reuse(name: &str, description: &str, second_qos: u8, second_pubrel: bool) -> Experiment {
    let second_payload: &[u8] = if second_qos == 0 { b"payload-0" } else { b"payload-2" };
    let mut steps = vec![
        subscribe(b"fuzz/qos", 2),
        publish(b"fuzz/qos", 2, 1, b"payload-1"),
        publish(b"fuzz/qos", second_qos, 1, second_payload),
        pubrel(1),
    ];
    if second_pubrel {
        steps.push(pubrel(1));
    }
    simple(name, description, PeerClosePolicy::Forbidden, steps)
}

fn utf16le(s: &str) -> Vec<u8> {
    s.encode_utf16().flat_map(u16::to_le_bytes).collect()
}

/// Every builtin experiment, in [`CORPUS_NAMES`] order.
pub fn builtin_corpus() -> Vec<Experiment> {
    use PeerClosePolicy::*;

    let mut slashes = b"fuzz".to_vec();
    slashes.extend(std::iter::repeat_n(b'/', 300));
    slashes.push(b'x');

    let mut non_utf8 = ConnectParams::for_client(&[0xff, 0xfe]);
    non_utf8.clean_session = true;
    let non_utf8_session = SessionDecl {
        id: S.to_string(),
        connect: non_utf8,
        auto_ack: true,
    };

    let mut bad_name = ConnectParams::for_client(S.as_bytes());
    bad_name.protocol_name = ByteString::from("MQQT");
    let mut bad_level = ConnectParams::for_client(S.as_bytes());
    bad_level.protocol_level = 42;

    let mut flood = simple(
        "qos0_flood",
        "10000 back to back QoS 0 publishes to our own subscription",
        Forbidden,
        vec![
            subscribe(b"fuzz/flood", 0),
            step(Action::Repeat(RepeatStep {
                count: 10_000,
                steps: vec![publish(b"fuzz/flood", 0, 0, b"flood")],
            })),
        ],
    );
    flood.settle_ms = 2_000;

    vec![
        qos2_reuse(
            "qos2_then_qos1_same_id",
            "QoS 2 publish, then a QoS 1 publish reusing the id before PUBREL",
            1,
            false,
        ),
        qos2_reuse(
            "qos2_then_qos0_same_id",
            "QoS 2 publish, then a QoS 0 publish before PUBREL",
            0,
            false,
        ),
        qos2_reuse(
            "double_qos2_same_id",
            "two QoS 2 publishes with one id and different payloads",
            2,
            true,
        ),
        experiment(
            "non_utf8_client_id",
            "CONNECT whose client id is not UTF-8",
            Either,
            vec![non_utf8_session],
            vec![step(Action::Connect)],
        ),
        experiment(
            "keepalive_as_string",
            "CONNECT with the keep alive field replaced by a length-prefixed string",
            Required,
            vec![SessionDecl::new(S)],
            vec![
                step(Action::SpliceNext(SpliceStep {
                    offset: 10,
                    remove: 2,
                    insert_hex: vec![0x00, 0x02, b'6', b'0'],
                    fixup_length: true,
                })),
                step(Action::Connect),
            ],
        ),
        long_topic(5_000),
        long_topic(65_535),
        simple(
            "invalid_wildcard_subscribe",
            "subscribe to a filter with '#' before the last level",
            Required,
            vec![subscribe(b"fuzz/#/bad", 0)],
        ),
        simple(
            "invalid_wildcard_publish",
            "publish to a topic that contains '+'",
            Required,
            vec![publish(b"fuzz/+/bad", 0, 0, b"wild")],
        ),
        simple(
            "topic_utf16",
            "subscribe with a UTF-16LE encoded filter",
            Required,
            vec![subscribe(&utf16le("fuzz/utf16/#"), 0)],
        ),
        encoded_payload(
            "payload_zlib",
            "zlib compressed JSON payload",
            &hex::decode(ZLIB_HEX).expect("valid hex"),
        ),
        encoded_payload(
            "payload_bz2",
            "bzip2 compressed JSON payload",
            &hex::decode(BZ2_HEX).expect("valid hex"),
        ),
        encoded_payload(
            "payload_base64",
            "base64 encoded JSON payload",
            BASE64_TEXT.as_bytes(),
        ),
        simple(
            "many_slashes_topic",
            "topic made of 300 empty levels",
            Either,
            vec![subscribe(&slashes, 1), publish(&slashes, 1, 1, b"slashes")],
        ),
        flood,
        with_connect("bad_protocol_name", "CONNECT with protocol name MQQT", bad_name),
        with_connect("bad_protocol_level", "CONNECT with protocol level 42", bad_level),
        simple(
            "orphan_pubrel",
            "PUBREL for a packet id that was never published",
            Forbidden,
            vec![pubrel(77)],
        ),
    ]
}
