mod common;

use mqttprobe::oracle::{
    conformant_profile, diff_profiles, documented_profiles, evaluate_trace, fingerprint, AnomalyCode,
};
use mqttprobe::runner::CorpusRun;

#[test]
fn synthetic_traces_reproduce_documented_profiles() {
    for (label, documented) in documented_profiles() {
        let profile = fingerprint(&label, &common::synthetic_results(&label)).unwrap();
        let divergences = diff_profiles(&profile, &documented).unwrap();
        assert!(divergences.is_empty(), "{label}: {divergences:#?}");
    }
}

#[test]
fn conformant_synthetic_traces_are_clean() {
    let profile = fingerprint("conformant", &common::synthetic_results("conformant")).unwrap();
    assert_eq!(diff_profiles(&profile, &conformant_profile()).unwrap(), []);
}

#[test]
fn quoted_behaviours() {
    let find = |broker: &str, name: &str| {
        let results = common::synthetic_results(broker);
        let r = results.into_iter().find(|r| r.experiment.name == name).unwrap();
        let CorpusRun::Ran { trace, .. } = &r.run else { unreachable!() };
        evaluate_trace(&r.experiment, trace).unwrap()
    };
    let lost = find("Mosquitto", "qos2_then_qos1_same_id");
    assert_eq!(lost.anomalies.len(), 1);
    assert_eq!(lost.anomalies[0].code, AnomalyCode::LostMessage);
    assert!(lost.anomalies[0].explanation.contains("payload-2"), "{}", lost.anomalies[0].explanation);

    let dup = find("Aedes", "double_qos2_same_id");
    assert_eq!(dup.codes().into_iter().collect::<Vec<_>>(), [AnomalyCode::DuplicateDelivery]);
    assert!(dup.anomalies.iter().all(|a| !a.evidence.is_empty()));

    let cut = find("HiveMQ", "long_topic_5000");
    assert!(cut.anomalies[0].explanation.contains("4096 bytes"), "{}", cut.anomalies[0].explanation);
}

#[test]
fn fingerprint_is_deterministic() {
    let a = fingerprint("x", &common::synthetic_results("Aedes")).unwrap();
    let b = fingerprint("x", &common::synthetic_results("Aedes")).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
