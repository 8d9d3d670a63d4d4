//! Turns traces into anomalies and comparable behaviour profiles.
//!
//! Rules, each applied per experiment:
//!
//! * R1 every QoS > 0 message the client fully handed over reaches each live
//!   subscriber exactly once ([`AnomalyCode::LostMessage`],
//!   [`AnomalyCode::DuplicateDelivery`]);
//! * R2 deliveries keep per-publisher publish order;
//! * R3 PUBCOMP comes after PUBREC and after our PUBREL;
//! * R4 a later publish reusing a QoS 2 packet id is not forwarded before the
//!   earlier handshake's PUBCOMP;
//! * R5 delivered topics are not shortened;
//! * R6 the broker closes the connection exactly when the experiment says it
//!   should;
//! * R7 an orphan PUBREL is answered with PUBCOMP.
//!
//! A message's identity is its (topic, payload) pair; broker-assigned packet
//! ids on forwarded publishes say nothing about the original message.

mod documented;
mod profile;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Packet;
use crate::experiment::{Experiment, PeerClosePolicy};
use crate::hexser;
use crate::runner::{EventKind, Outcome, Trace};
use crate::topics::matches_bytes;

pub use documented::{conformant_profile, documented_profile, documented_profiles, DOCUMENTED_BROKERS};
pub use profile::{
    diff_profiles, evaluate_results, fingerprint, profile_of, BehaviorProfile, DiffError,
    Divergence, EvaluatedRun, OutcomeSummary, RunStatus,
};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum AnomalyCode {
    LostMessage,
    DuplicateDelivery,
    ReorderedDelivery,
    AckBeforePrerequisite,
    LateCompletion,
    TopicTruncation,
    UnexpectedDisconnect,
    BrokerCrash,
    OrphanPubrelRejected,
    IdReuseMishandled,
    ProtocolViolationTolerated,
}

impl AnomalyCode {
    pub const ALL: [AnomalyCode; 11] = [
        AnomalyCode::LostMessage,
        AnomalyCode::DuplicateDelivery,
        AnomalyCode::ReorderedDelivery,
        AnomalyCode::AckBeforePrerequisite,
        AnomalyCode::LateCompletion,
        AnomalyCode::TopicTruncation,
        AnomalyCode::UnexpectedDisconnect,
        AnomalyCode::BrokerCrash,
        AnomalyCode::OrphanPubrelRejected,
        AnomalyCode::IdReuseMishandled,
        AnomalyCode::ProtocolViolationTolerated,
    ];

    pub fn severity(self) -> Severity {
        use AnomalyCode::*;
        match self {
            BrokerCrash | UnexpectedDisconnect | OrphanPubrelRejected => Severity::DoS,
            LostMessage | DuplicateDelivery | ReorderedDelivery | AckBeforePrerequisite
            | LateCompletion | TopicTruncation => Severity::Warning,
            IdReuseMishandled | ProtocolViolationTolerated => Severity::Info,
        }
    }
}

impl fmt::Display for AnomalyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Severity {
    Info,
    Warning,
    DoS,
    Critical,
}

impl Severity {
    /// Wording for the security column of reports.
    pub fn label(self) -> &'static str {
        match self {
            Severity::Info => "informational",
            Severity::Warning => "unwanted application scenarios",
            Severity::DoS => "possible denial of service",
            Severity::Critical => "critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub code: AnomalyCode,
    pub severity: Severity,
    /// Sequence numbers of the trace events that show the problem.
    pub evidence: Vec<u64>,
    pub explanation: String,
}

impl Anomaly {
    pub fn new(code: AnomalyCode, evidence: Vec<u64>, explanation: impl Into<String>) -> Self {
        Anomaly {
            code,
            severity: code.severity(),
            evidence,
            explanation: explanation.into(),
        }
    }
}

/// A PUBLISH the broker sent to one of our sessions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub seq: u64,
    pub session: String,
    #[serde(with = "hexser::bytes")]
    pub topic: Vec<u8>,
    #[serde(with = "hexser::bytes")]
    pub payload: Vec<u8>,
    pub qos: u8,
    /// `m<k>` for the k-th distinct published (topic, payload), with a `~`
    /// suffix when the topic arrived shortened; `?` when unrecognised.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckEvent {
    pub seq: u64,
    pub session: String,
    pub direction: Direction,
    pub packet: String,
    pub packet_id: u16,
    pub auto: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub experiment_name: String,
    pub delivered: Vec<Delivery>,
    pub ack_flow: Vec<AckEvent>,
    pub anomalies: Vec<Anomaly>,
}

impl ScenarioOutcome {
    pub fn codes(&self) -> BTreeSet<AnomalyCode> {
        self.anomalies.iter().map(|a| a.code).collect()
    }

    pub fn max_severity(&self) -> Option<Severity> {
        self.anomalies.iter().map(|a| a.severity).max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("trace belongs to {trace:?}, not experiment {experiment:?}")]
    TraceMismatch { experiment: String, trace: String },
}

type Identity = (Vec<u8>, Vec<u8>);

struct Published {
    seq: u64,
    topic: Vec<u8>,
    payload: Vec<u8>,
    identity: usize,
}

struct Group {
    publisher: String,
    qos: u8,
    packet_id: Option<u16>,
    members: Vec<usize>,
    first_seq: u64,
    pubrel_seq: Option<u64>,
    pubrec_seq: Option<u64>,
    /// PUBACK for QoS 1, PUBCOMP for QoS 2.
    completion_seq: Option<u64>,
    /// Sessions whose subscriptions matched when a member was published.
    recipients: BTreeSet<String>,
    /// Subscriber session → index into `deliveries`.
    delivered: HashMap<String, usize>,
}

struct Orphan {
    seq: u64,
    session: String,
    packet_id: u16,
    answered: bool,
}

struct Subscription {
    filter: Vec<u8>,
}

#[derive(Default)]
struct SessionView {
    pending_subs: HashMap<u16, Vec<Vec<u8>>>,
    subscriptions: Vec<Subscription>,
    /// First connection loss the session did not ask for.
    peer_close: Option<u64>,
    /// Last DISCONNECT we sent.
    local_disconnect: Option<u64>,
}

struct Analysis {
    published: Vec<Published>,
    identities: Vec<Identity>,
    groups: Vec<Group>,
    orphans: Vec<Orphan>,
    deliveries: Vec<Delivery>,
    ack_flow: Vec<AckEvent>,
    sessions: HashMap<String, SessionView>,
    last_sent: Option<u64>,
    last_seq: Option<u64>,
}

impl Analysis {
    fn identity_of(&mut self, topic: &[u8], payload: &[u8]) -> usize {
        let key = (topic.to_vec(), payload.to_vec());
        match self.identities.iter().position(|i| *i == key) {
            Some(k) => k,
            None => {
                self.identities.push(key);
                self.identities.len() - 1
            }
        }
    }

    fn session(&mut self, id: &str) -> &mut SessionView {
        self.sessions.entry(id.to_string()).or_default()
    }

    fn on_publish_sent(&mut self, seq: u64, session: &str, p: &crate::codec::Publish) {
        let identity = self.identity_of(&p.topic, &p.payload);
        let index = self.published.len();
        self.published.push(Published {
            seq,
            topic: p.topic.clone(),
            payload: p.payload.clone(),
            identity,
        });
        let recipients: Vec<String> = self
            .sessions
            .iter()
            .filter(|(_, v)| {
                v.subscriptions
                    .iter()
                    .any(|s| matches_bytes(&s.filter, &p.topic) == Some(true))
            })
            .map(|(k, _)| k.clone())
            .collect();
        let open = (p.qos == 2)
            .then(|| {
                self.groups.iter().position(|g| {
                    g.publisher == session
                        && g.qos == 2
                        && g.packet_id == p.packet_id
                        && g.pubrel_seq.is_none()
                })
            })
            .flatten();
        let group = match open {
            Some(g) => g,
            None => {
                self.groups.push(Group {
                    publisher: session.to_string(),
                    qos: p.qos,
                    packet_id: if p.qos == 0 { None } else { p.packet_id },
                    members: Vec::new(),
                    first_seq: seq,
                    pubrel_seq: None,
                    pubrec_seq: None,
                    completion_seq: None,
                    recipients: BTreeSet::new(),
                    delivered: HashMap::new(),
                });
                self.groups.len() - 1
            }
        };
        let g = &mut self.groups[group];
        g.members.push(index);
        g.recipients.extend(recipients);
    }

    fn first_group(&mut self, pred: impl Fn(&Group) -> bool) -> Option<&mut Group> {
        self.groups.iter_mut().find(|g| pred(g))
    }

    fn walk(&mut self, trace: &Trace) {
        for event in &trace.events {
            let seq = event.seq;
            let s = event.session.as_str();
            self.last_seq = Some(seq);
            match &event.kind {
                EventKind::Connected => {}
                EventKind::Sent { packet, auto } => {
                    if !auto {
                        self.last_sent = Some(seq);
                    }
                    if let Some(ack) = ack_event(seq, s, Direction::Sent, packet, *auto) {
                        self.ack_flow.push(ack);
                    }
                    match packet {
                        Packet::Publish(p) if !auto => self.on_publish_sent(seq, s, p),
                        Packet::Subscribe(sub) => {
                            let filters = sub.entries.iter().map(|e| e.filter.clone()).collect();
                            self.session(s).pending_subs.insert(sub.packet_id, filters);
                        }
                        Packet::Unsubscribe(u) => {
                            let view = self.session(s);
                            view.subscriptions.retain(|x| !u.filters.contains(&x.filter));
                        }
                        Packet::Pubrel { packet_id } if !auto => {
                            let id = Some(*packet_id);
                            match self.first_group(|g| {
                                g.publisher == s && g.qos == 2 && g.packet_id == id && g.pubrel_seq.is_none()
                            }) {
                                Some(g) => g.pubrel_seq = Some(seq),
                                None => self.orphans.push(Orphan {
                                    seq,
                                    session: s.to_string(),
                                    packet_id: *packet_id,
                                    answered: false,
                                }),
                            }
                        }
                        Packet::Disconnect => {
                            // Clean sessions: subscriptions die with the connection.
                            let view = self.session(s);
                            view.local_disconnect = Some(seq);
                            view.subscriptions.clear();
                        }
                        _ => {}
                    }
                }
                EventKind::Received { packet, .. } => {
                    if let Some(ack) = ack_event(seq, s, Direction::Received, packet, false) {
                        self.ack_flow.push(ack);
                    }
                    self.on_received(seq, s, packet);
                }
                EventKind::TcpClosedByPeer | EventKind::TcpError { .. } => {
                    let view = self.session(s);
                    view.peer_close.get_or_insert(seq);
                    view.subscriptions.clear();
                }
                EventKind::Timeout { .. } => {}
            }
        }
    }

    fn on_received(&mut self, seq: u64, s: &str, packet: &Packet) {
        match packet {
            Packet::Suback(ack) => {
                let view = self.session(s);
                if let Some(filters) = view.pending_subs.remove(&ack.packet_id) {
                    for (filter, code) in filters.into_iter().zip(&ack.return_codes) {
                        if *code <= 2 {
                            view.subscriptions.retain(|x| x.filter != filter);
                            view.subscriptions.push(Subscription { filter });
                        }
                    }
                }
            }
            Packet::Puback { packet_id } => {
                let id = Some(*packet_id);
                if let Some(g) = self.first_group(|g| {
                    g.publisher == s && g.qos == 1 && g.packet_id == id && g.completion_seq.is_none()
                }) {
                    g.completion_seq = Some(seq);
                }
            }
            Packet::Pubrec { packet_id } => {
                let id = Some(*packet_id);
                if let Some(g) = self.first_group(|g| {
                    g.publisher == s && g.qos == 2 && g.packet_id == id && g.pubrec_seq.is_none()
                }) {
                    g.pubrec_seq = Some(seq);
                }
            }
            Packet::Pubcomp { packet_id } => {
                let id = Some(*packet_id);
                let claimed = match self.first_group(|g| {
                    g.publisher == s
                        && g.qos == 2
                        && g.packet_id == id
                        && g.completion_seq.is_none()
                        && g.pubrel_seq.is_some_and(|r| r < seq)
                }) {
                    Some(g) => {
                        g.completion_seq = Some(seq);
                        true
                    }
                    None => false,
                };
                // A PUBCOMP ahead of our PUBREL still belongs to the group.
                let claimed = claimed
                    || match self.first_group(|g| {
                        g.publisher == s && g.qos == 2 && g.packet_id == id && g.completion_seq.is_none()
                    }) {
                        Some(g) => {
                            g.completion_seq = Some(seq);
                            true
                        }
                        None => false,
                    };
                if !claimed {
                    if let Some(o) = self
                        .orphans
                        .iter_mut()
                        .find(|o| o.session == s && o.packet_id == *packet_id && !o.answered && o.seq < seq)
                    {
                        o.answered = true;
                    }
                }
            }
            Packet::Publish(p) => {
                let label = self.label_for(&p.topic, &p.payload);
                self.deliveries.push(Delivery {
                    seq,
                    session: s.to_string(),
                    topic: p.topic.clone(),
                    payload: p.payload.clone(),
                    qos: p.qos,
                    label,
                });
            }
            _ => {}
        }
    }

    fn label_for(&self, topic: &[u8], payload: &[u8]) -> String {
        if let Some(k) = self
            .identities
            .iter()
            .position(|(t, p)| t == topic && p == payload)
        {
            return format!("m{}", k + 1);
        }
        match self
            .identities
            .iter()
            .position(|(t, p)| p == payload && is_truncation(topic, t))
        {
            Some(k) => format!("m{}~", k + 1),
            None => "?".to_string(),
        }
    }

    /// Whether `session` kept its connection from `since` to the end of the trace.
    fn alive_to_end(&self, session: &str, since: u64) -> bool {
        self.sessions
            .get(session)
            .is_some_and(|v| v.peer_close.is_none() && v.local_disconnect.is_none_or(|d| d < since))
    }
}

fn is_truncation(delivered: &[u8], published: &[u8]) -> bool {
    delivered.len() < published.len() && published.starts_with(delivered)
}

fn ack_event(seq: u64, session: &str, direction: Direction, packet: &Packet, auto: bool) -> Option<AckEvent> {
    let (name, id) = match packet {
        Packet::Puback { packet_id } => ("PUBACK", packet_id),
        Packet::Pubrec { packet_id } => ("PUBREC", packet_id),
        Packet::Pubrel { packet_id } => ("PUBREL", packet_id),
        Packet::Pubcomp { packet_id } => ("PUBCOMP", packet_id),
        _ => return None,
    };
    Some(AckEvent {
        seq,
        session: session.to_string(),
        direction,
        packet: name.to_string(),
        packet_id: *id,
        auto,
    })
}

fn preview(bytes: &[u8]) -> String {
    const MAX: usize = 24;
    let shown = &bytes[..bytes.len().min(MAX)];
    let text = String::from_utf8_lossy(shown);
    if bytes.len() > MAX {
        format!("{text:?}... ({} bytes)", bytes.len())
    } else {
        format!("{text:?}")
    }
}

/// Apply the rule set to one trace.
pub fn evaluate_trace(experiment: &Experiment, trace: &Trace) -> Result<ScenarioOutcome, OracleError> {
    if experiment.name != trace.experiment_name {
        return Err(OracleError::TraceMismatch {
            experiment: experiment.name.clone(),
            trace: trace.experiment_name.clone(),
        });
    }
    let mut a = Analysis {
        published: Vec::new(),
        identities: Vec::new(),
        groups: Vec::new(),
        orphans: Vec::new(),
        deliveries: Vec::new(),
        ack_flow: Vec::new(),
        sessions: experiment
            .sessions
            .iter()
            .map(|s| (s.id.clone(), SessionView::default()))
            .collect(),
        last_sent: None,
        last_seq: None,
    };
    a.walk(trace);

    let mut anomalies = Vec::new();
    if !matches!(trace.outcome, Outcome::RunnerError { .. }) {
        match_deliveries(&mut a, &mut anomalies);
        check_order(&a, &mut anomalies);
        check_handshakes(&a, &mut anomalies);
        check_connection(experiment, &a, &mut anomalies);
    }
    Ok(ScenarioOutcome {
        experiment_name: experiment.name.clone(),
        delivered: a.deliveries,
        ack_flow: a.ack_flow,
        anomalies,
    })
}

/// R1 and R5: pair each handshake with at most one delivery per subscriber.
fn match_deliveries(a: &mut Analysis, out: &mut Vec<Anomaly>) {
    // Per subscriber: identity index -> unconsumed delivery indices in order.
    let mut queues: HashMap<(String, usize), VecDeque<usize>> = HashMap::new();
    for (i, d) in a.deliveries.iter().enumerate() {
        if let Some(k) = a.identities.iter().position(|(t, p)| *t == d.topic && *p == d.payload) {
            queues.entry((d.session.clone(), k)).or_default().push_back(i);
        }
    }
    let mut consumed = vec![false; a.deliveries.len()];

    for gi in 0..a.groups.len() {
        let recipients: Vec<String> = a.groups[gi].recipients.iter().cloned().collect();
        for r in recipients {
            let g = &a.groups[gi];
            let members: Vec<usize> = g.members.iter().map(|&m| a.published[m].identity).collect();
            let exact = members
                .iter()
                .filter_map(|&k| {
                    let q = queues.get_mut(&(r.clone(), k))?;
                    while q.front().is_some_and(|&i| consumed[i]) {
                        q.pop_front();
                    }
                    q.front().copied()
                })
                .min();
            let found = exact.or_else(|| {
                a.deliveries.iter().enumerate().position(|(i, d)| {
                    !consumed[i]
                        && d.session == r
                        && members.iter().any(|&k| {
                            let (t, p) = &a.identities[k];
                            d.payload == *p && is_truncation(&d.topic, t)
                        })
                })
            });
            match found {
                Some(i) => {
                    consumed[i] = true;
                    let first_member = g.members[0];
                    a.groups[gi].delivered.insert(r.clone(), i);
                    let d = &a.deliveries[i];
                    if d.label.ends_with('~') {
                        let published = &a.published[first_member];
                        out.push(Anomaly::new(
                            AnomalyCode::TopicTruncation,
                            vec![published.seq, d.seq],
                            format!(
                                "published topic of {} bytes ({} levels) delivered as {} bytes ({} levels)",
                                published.topic.len(),
                                published.topic.split(|&b| b == b'/').count(),
                                d.topic.len(),
                                d.topic.split(|&b| b == b'/').count(),
                            ),
                        ));
                    }
                }
                None => {
                    let owed = match g.qos {
                        1 => true,
                        2 => g.pubrel_seq.is_some(),
                        _ => false,
                    };
                    let first = g.first_seq;
                    if owed && a.alive_to_end(&r, first) && a.alive_to_end(&g.publisher.clone(), first) {
                        let m = &a.published[*g.members.last().expect("groups are never empty")];
                        let mut evidence: Vec<u64> = g.members.iter().map(|&m| a.published[m].seq).collect();
                        evidence.extend(g.pubrel_seq);
                        out.push(Anomaly::new(
                            AnomalyCode::LostMessage,
                            evidence,
                            format!(
                                "QoS {} payload {} on {} never reached {r}",
                                g.qos,
                                preview(&m.payload),
                                preview(&m.topic)
                            ),
                        ));
                    }
                }
            }
        }
    }

    for (i, d) in a.deliveries.iter().enumerate() {
        if consumed[i] {
            continue;
        }
        let Some(k) = a.identities.iter().position(|(t, p)| *t == d.topic && *p == d.payload) else {
            continue;
        };
        let mut same = None;
        let mut other = None;
        for g in &a.groups {
            if !g.members.iter().any(|&m| a.published[m].identity == k) {
                continue;
            }
            if let Some(&j) = g.delivered.get(&d.session) {
                let e = &a.deliveries[j];
                if e.topic == d.topic && e.payload == d.payload {
                    same = Some(j);
                } else {
                    other = other.or(Some(j));
                }
            }
        }
        if let Some(j) = same {
            out.push(Anomaly::new(
                AnomalyCode::DuplicateDelivery,
                vec![a.deliveries[j].seq, d.seq],
                format!("payload {} delivered to {} more than once", preview(&d.payload), d.session),
            ));
        } else if let Some(j) = other {
            out.push(Anomaly::new(
                AnomalyCode::IdReuseMishandled,
                vec![a.deliveries[j].seq, d.seq],
                format!(
                    "payload {} was sent as a retransmission of an open QoS 2 id but delivered as a new message",
                    preview(&d.payload)
                ),
            ));
        }
    }
}

/// R2: per subscriber, deliveries from one publisher follow publish order.
fn check_order(a: &Analysis, out: &mut Vec<Anomaly>) {
    let mut by_subscriber: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for (gi, g) in a.groups.iter().enumerate() {
        for (r, &di) in &g.delivered {
            by_subscriber.entry(r.as_str()).or_default().push((di, gi));
        }
    }
    let mut subscribers: Vec<_> = by_subscriber.into_iter().collect();
    subscribers.sort();
    for (r, mut pairs) in subscribers {
        pairs.sort();
        let mut latest: HashMap<&str, (u64, usize)> = HashMap::new();
        for (di, gi) in pairs {
            let g = &a.groups[gi];
            let d = &a.deliveries[di];
            match latest.get(g.publisher.as_str()) {
                Some(&(first, prev)) if g.first_seq < first => {
                    out.push(Anomaly::new(
                        AnomalyCode::ReorderedDelivery,
                        vec![a.deliveries[prev].seq, d.seq],
                        format!(
                            "{r} received {} after a message {} published later",
                            preview(&d.payload),
                            g.publisher
                        ),
                    ));
                }
                _ => {
                    latest.insert(g.publisher.as_str(), (g.first_seq, di));
                }
            }
        }
    }
}

/// R3 and R4.
fn check_handshakes(a: &Analysis, out: &mut Vec<Anomaly>) {
    for g in a.groups.iter().filter(|g| g.qos == 2) {
        let id = g.packet_id.unwrap_or(0);
        if let Some(c) = g.completion_seq {
            let before_pubrec = g.pubrec_seq.is_none_or(|r| r > c);
            let before_pubrel = g.pubrel_seq.is_none_or(|r| r > c);
            if before_pubrec || before_pubrel {
                let mut evidence = vec![c];
                evidence.extend(g.pubrec_seq);
                evidence.extend(g.pubrel_seq);
                evidence.sort_unstable();
                let what = if before_pubrec { "PUBREC" } else { "our PUBREL" };
                out.push(Anomaly::new(
                    AnomalyCode::AckBeforePrerequisite,
                    evidence,
                    format!("PUBCOMP for id {id} arrived before {what}"),
                ));
            }
        }
        if g.pubrel_seq.is_none() {
            continue;
        }
        let completion = g.completion_seq.unwrap_or(u64::MAX);
        for h in &a.groups {
            if h.publisher != g.publisher || h.qos == 0 || h.packet_id != g.packet_id || h.first_seq <= g.first_seq {
                continue;
            }
            let early: Vec<u64> = h
                .delivered
                .values()
                .map(|&di| a.deliveries[di].seq)
                .filter(|&s| s < completion)
                .collect();
            if let Some(&first) = early.iter().min() {
                let mut evidence = vec![first];
                evidence.extend(g.completion_seq);
                out.push(Anomaly::new(
                    AnomalyCode::LateCompletion,
                    evidence,
                    format!(
                        "a later publish reusing id {id} was forwarded before the PUBCOMP closing the QoS 2 flow; a delayed PUBCOMP lets the id be replayed"
                    ),
                ));
                break;
            }
        }
    }
}

/// R6 and R7.
fn check_connection(e: &Experiment, a: &Analysis, out: &mut Vec<Anomaly>) {
    let mut explained: BTreeSet<&str> = BTreeSet::new();
    for o in a.orphans.iter().filter(|o| !o.answered) {
        let mut evidence = vec![o.seq];
        let close = a.sessions.get(&o.session).and_then(|v| v.peer_close);
        if let Some(c) = close.filter(|&c| c > o.seq) {
            evidence.push(c);
            explained.insert(o.session.as_str());
        }
        out.push(Anomaly::new(
            AnomalyCode::OrphanPubrelRejected,
            evidence,
            format!(
                "PUBREL for unknown id {} got no PUBCOMP{}",
                o.packet_id,
                if close.is_some() { "; the connection was dropped" } else { "" }
            ),
        ));
    }

    let mut sessions: Vec<(&String, &SessionView)> = a.sessions.iter().collect();
    sessions.sort_by_key(|(id, _)| id.as_str());
    let closes: Vec<(&str, u64)> = sessions
        .iter()
        .filter_map(|(id, v)| v.peer_close.map(|c| (id.as_str(), c)))
        .collect();
    match e.peer_close {
        PeerClosePolicy::Forbidden => {
            for (id, c) in closes.iter().filter(|(id, _)| !explained.contains(id)) {
                out.push(Anomaly::new(
                    AnomalyCode::UnexpectedDisconnect,
                    vec![*c],
                    format!("broker dropped {id} while handling conformant input"),
                ));
            }
        }
        PeerClosePolicy::Required if closes.is_empty() => {
            let evidence = a.last_sent.or(a.last_seq).into_iter().collect();
            out.push(Anomaly::new(
                AnomalyCode::ProtocolViolationTolerated,
                evidence,
                "broker kept the connection open after malformed input",
            ));
        }
        _ => {}
    }
}
