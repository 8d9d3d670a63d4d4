mod gen;

use mqttprobe::codec::{
    decode_packet, decode_remaining_length, encode_packet, encode_remaining_length, frame_length, splice,
    DecodeMode, Packet, MAX_REMAINING_LENGTH,
};
use mqttprobe::experiment::{builtin_corpus, parse_experiment, render_experiment, Action, ByteString, Experiment, Payload, PublishStep, Step};
use mqttprobe::runner::{Endpoint, EventKind, Outcome, Trace, TraceEvent};
use mqttprobe::topics::{matches_bytes, Topic, TopicFilter};
use proptest::prelude::*;

fn brute_match(filter: &[u8], topic: &[u8]) -> bool {
    let f: Vec<&[u8]> = filter.split(|&b| b == b'/').collect();
    let t: Vec<&[u8]> = topic.split(|&b| b == b'/').collect();
    fn go(f: &[&[u8]], t: &[&[u8]]) -> bool {
        match (f.first(), t.first()) {
            (None, None) => true,
            (Some(&b"#"), _) => true,
            (Some(&b"+"), Some(_)) => go(&f[1..], &t[1..]),
            (Some(a), Some(b)) if a == b => go(&f[1..], &t[1..]),
            _ => false,
        }
    }
    go(&f, &t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn strict_round_trip(p in gen::any_packet()) {
        let frame = encode_packet(&p).unwrap();
        let d = decode_packet(&frame, DecodeMode::Strict).unwrap();
        prop_assert_eq!(&d.packet, &p);
        prop_assert_eq!(d.consumed, frame.len());
        prop_assert!(d.annotations.is_empty());
        prop_assert_eq!(frame_length(&frame).unwrap(), frame.len());
    }

    #[test]
    fn every_prefix_is_incomplete(p in gen::any_packet()) {
        let frame = encode_packet(&p).unwrap();
        for cut in 0..frame.len() {
            prop_assert!(decode_packet(&frame[..cut], DecodeMode::Permissive).is_err());
        }
    }

    #[test]
    fn permissive_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(d) = decode_packet(&bytes, DecodeMode::Permissive) {
            prop_assert!(d.consumed <= bytes.len());
            // anything strict accepts, permissive accepts identically
            if let Ok(s) = decode_packet(&bytes, DecodeMode::Strict) {
                prop_assert_eq!(s.packet, d.packet);
            }
        }
    }

    #[test]
    fn varint_inverse(n in 0..=MAX_REMAINING_LENGTH) {
        let enc = encode_remaining_length(u64::from(n)).unwrap();
        prop_assert_eq!(decode_remaining_length(&enc).unwrap(), (n, enc.len()));
        prop_assert!(enc.last().unwrap() & 0x80 == 0);
    }

    #[test]
    fn identity_splice(p in gen::any_packet(), at in 0usize..64) {
        let frame = encode_packet(&p).unwrap();
        let at = at.min(frame.len());
        prop_assert_eq!(splice(&frame, at, 0, &[], true).unwrap(), frame.clone());
        prop_assert_eq!(splice(&frame, at, 0, &[], false).unwrap(), frame);
    }

    #[test]
    fn matcher_agrees_with_level_lists(f in gen::filter(), t in gen::topic()) {
        let filter = TopicFilter::new(&f).unwrap();
        let topic = Topic::new(&t).unwrap();
        prop_assert_eq!(mqttprobe::topics::match_filter(&filter, &topic), brute_match(&f, &t));
    }

    #[test]
    fn exact_filter_matches_itself(t in gen::topic()) {
        prop_assert_eq!(matches_bytes(&t, &t), Some(true));
    }

    #[test]
    fn publish_experiment_round_trip(
        topic in proptest::collection::vec(any::<u8>(), 0..40),
        payload in proptest::collection::vec(any::<u8>(), 0..40),
        qos in 0u8..=2,
        retain in any::<bool>(),
        settle in 0u64..5000,
    ) {
        let mut e: Experiment = builtin_corpus().remove(0);
        e.settle_ms = settle;
        e.steps.push(Step::on("fuzzer", Action::Publish(PublishStep {
            topic: ByteString(topic),
            payload: Payload(payload),
            qos,
            retain,
            dup: false,
            packet_id: (qos > 0).then_some(9),
        })));
        let text = render_experiment(&e);
        prop_assert_eq!(parse_experiment(&text).unwrap(), e);
    }

    #[test]
    fn trace_jsonl_round_trip(packets in proptest::collection::vec(gen::any_packet(), 0..20)) {
        let events = packets
            .into_iter()
            .enumerate()
            .map(|(i, packet)| TraceEvent {
                seq: i as u64,
                t_ms: i as u64 * 3,
                session: if i % 2 == 0 { "a".into() } else { "b".into() },
                kind: if i % 3 == 0 {
                    EventKind::Sent { packet, auto: false }
                } else {
                    EventKind::Received { packet, annotations: vec!["x".into()] }
                },
            })
            .collect();
        let trace = Trace {
            experiment_name: "t".into(),
            endpoint: Endpoint::new("127.0.0.1", 1883),
            started_at_ms: 1,
            events,
            outcome: Outcome::Completed,
        };
        prop_assert_eq!(Trace::from_jsonl(&trace.to_jsonl()).unwrap(), trace);
    }
}

#[test]
fn raw_packet_bypasses_validation() {
    let raw = Packet::Raw { bytes: vec![0xff, 0x00, 0x01] };
    assert_eq!(encode_packet(&raw).unwrap(), [0xff, 0x00, 0x01]);
}
