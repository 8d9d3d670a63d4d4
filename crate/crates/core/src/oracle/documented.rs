//! Broker behaviour as reported for five production brokers, transcribed by
//! hand into profiles that can be diffed against live runs.
//!
//! Delivery labels follow the corpus: `m1` is the first distinct message an
//! experiment publishes, `m2` the second. Experiments after a crash are still
//! listed as run, since the reported results come from restarted brokers.
//! Mosquitto's version string is reproduced exactly as reported, although no
//! upstream release carries that number.

use std::collections::BTreeMap;

use super::{AnomalyCode, BehaviorProfile, OutcomeSummary};
use crate::experiment::CORPUS_NAMES;

use AnomalyCode::*;

/// (label, version) of every documented broker.
pub const DOCUMENTED_BROKERS: [(&str, &str); 5] = [
    ("Mosquitto", "1.16.12"),
    ("EMQX", "4.2.1"),
    ("HiveMQ", "2020.5"),
    ("Moquette", "0.13"),
    ("Aedes", "0.43.0"),
];

/// What a conformant broker delivers for each builtin experiment.
fn conformant_delivery(experiment: &str) -> &'static [&'static str] {
    match experiment {
        "qos2_then_qos1_same_id" | "qos2_then_qos0_same_id" => &["m1", "m2"],
        "double_qos2_same_id" => &["m1"],
        "long_topic_5000" | "long_topic_65535" | "many_slashes_topic" => &["m1"],
        "payload_zlib" | "payload_bz2" | "payload_base64" => &["m1"],
        "qos0_flood" => &["m1*10000"],
        _ => &[],
    }
}

type Deviation = (&'static str, &'static [&'static str], &'static [AnomalyCode]);

const LONG: [&str; 2] = ["long_topic_5000", "long_topic_65535"];

fn deviations(broker: &str) -> Vec<Deviation> {
    let mut out: Vec<Deviation> = match broker {
        "Mosquitto" => vec![
            // publishes the first packet, loses the second
            ("qos2_then_qos1_same_id", &["m1"], &[LostMessage]),
            // QoS 0 packet handled first
            ("qos2_then_qos0_same_id", &["m2", "m1"], &[ReorderedDelivery]),
            ("many_slashes_topic", &[], &[]),
        ],
        "EMQX" => vec![("many_slashes_topic", &[], &[])],
        "HiveMQ" => vec![
            ("qos2_then_qos1_same_id", &["m1", "m2"], &[AckBeforePrerequisite]),
            ("qos2_then_qos0_same_id", &["m1", "m2"], &[AckBeforePrerequisite]),
            ("double_qos2_same_id", &["m1", "m2"], &[IdReuseMishandled]),
            ("many_slashes_topic", &["m1~"], &[TopicTruncation]),
        ],
        "Moquette" => vec![
            ("double_qos2_same_id", &["m1", "m2"], &[IdReuseMishandled]),
            ("many_slashes_topic", &[], &[]),
        ],
        "Aedes" => vec![
            ("qos2_then_qos1_same_id", &["m1", "m2"], &[LateCompletion]),
            ("qos2_then_qos0_same_id", &["m2", "m1"], &[ReorderedDelivery]),
            // the same packet twice
            ("double_qos2_same_id", &["m1*2"], &[DuplicateDelivery]),
            ("many_slashes_topic", &[], &[]),
            ("orphan_pubrel", &[], &[OrphanPubrelRejected]),
        ],
        _ => vec![],
    };
    let long: Option<(&'static [&'static str], &'static [AnomalyCode])> = match broker {
        "EMQX" | "Moquette" => Some((&[], &[UnexpectedDisconnect])),
        "HiveMQ" => Some((&["m1~"], &[TopicTruncation])),
        "Aedes" => Some((&[], &[UnexpectedDisconnect, BrokerCrash])),
        _ => None,
    };
    if let Some((delivered, codes)) = long {
        out.extend(LONG.iter().map(|name| (*name, delivered, codes)));
    }
    out
}

fn build(label: &str, version: Option<&str>, deviations: &[Deviation]) -> BehaviorProfile {
    let outcomes = CORPUS_NAMES
        .iter()
        .map(|name| {
            let summary = match deviations.iter().find(|(n, _, _)| n == name) {
                Some((_, delivered, codes)) => OutcomeSummary::ran(delivered, codes),
                None => OutcomeSummary::ran(conformant_delivery(name), &[]),
            };
            (name.to_string(), summary)
        })
        .collect();
    BehaviorProfile {
        broker_label: label.to_string(),
        version: version.map(str::to_string),
        outcomes,
    }
}

/// The profile a fully conformant broker produces on the builtin corpus.
pub fn conformant_profile() -> BehaviorProfile {
    build("conformant", None, &[])
}

/// The five documented brokers, keyed by label.
pub fn documented_profiles() -> BTreeMap<String, BehaviorProfile> {
    DOCUMENTED_BROKERS
        .iter()
        .map(|(label, version)| (label.to_string(), build(label, Some(version), &deviations(label))))
        .collect()
}

/// Case- and space-insensitive lookup, so `"EMQ X"` finds `EMQX`.
pub fn documented_profile(label: &str) -> Option<BehaviorProfile> {
    let wanted: String = label.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    documented_profiles()
        .into_iter()
        .find(|(k, _)| k.to_lowercase() == wanted)
        .map(|(_, v)| v)
}
