//! JSON experiment scripts.
//!
//! An experiment declares one or more client sessions and an ordered list of
//! steps. Packet identifiers are always explicit: reusing an id on purpose is
//! what most experiments are about, so nothing is ever allocated implicitly.
//!
//! ```json
//! {
//!   "name": "qos2_then_qos1_same_id",
//!   "sessions": [{ "id": "fuzzer" }],
//!   "steps": [
//!     { "session": "fuzzer", "action": "connect" },
//!     { "session": "fuzzer", "action": { "subscribe": { "filter": "fuzz/qos", "qos": 2 } } },
//!     { "session": "fuzzer", "action": { "publish": { "topic": "fuzz/qos", "qos": 2, "packet_id": 1,
//!                                                     "payload": { "hex": "7061796c6f61642d31" } } } },
//!     { "session": "fuzzer", "action": { "pubrel": { "packet_id": 1 } } }
//!   ]
//! }
//! ```
//!
//! Byte fields (topics, filters, client ids, payloads) accept either a plain
//! string or `{"hex": "..."}`.

mod corpus;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{
    Connect, Packet, Publish, Subscribe, SubscribeEntry, Unsubscribe, Will, MAX_STRING_LEN,
};
use crate::hexser;

pub use corpus::{builtin_corpus, CORPUS_NAMES};

pub const DEFAULT_SETTLE_MS: u64 = 500;
pub const MAX_WAIT_MS: u64 = 60_000;
pub const MAX_REPEAT: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExperimentError {
    #[error("{path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("session id {id:?} declared more than once")]
    DuplicateSession { id: String },
    #[error("{path}: unknown session {session:?}")]
    UnknownSessionRef { path: String, session: String },
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

/// A byte string that renders as text when it is valid UTF-8.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ByteString(pub Vec<u8>);

/// A byte string that always renders as `{"hex": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Payload(pub Vec<u8>);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HexObject {
    hex: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BytesRepr {
    Text(String),
    Hex(HexObject),
}

#[derive(Serialize)]
struct HexOut<'a> {
    hex: &'a str,
}

fn read_bytes<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    match BytesRepr::deserialize(d).map_err(|_| {
        serde::de::Error::custom("expected a string or an object {\"hex\": \"...\"}")
    })? {
        BytesRepr::Text(s) => Ok(s.into_bytes()),
        BytesRepr::Hex(h) => hex::decode(&h.hex).map_err(serde::de::Error::custom),
    }
}

impl<'de> Deserialize<'de> for ByteString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        read_bytes(d).map(ByteString)
    }
}

impl Serialize for ByteString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(text) => s.serialize_str(text),
            Err(_) => HexOut {
                hex: &hex::encode(&self.0),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        read_bytes(d).map(Payload)
    }
}

impl Serialize for Payload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HexOut {
            hex: &hex::encode(&self.0),
        }
        .serialize(s)
    }
}

impl From<&str> for ByteString {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl From<&[u8]> for ByteString {
    fn from(s: &[u8]) -> Self {
        Self(s.to_vec())
    }
}

impl From<&str> for Payload {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl fmt::Display for ByteString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => f.write_str(s),
            Err(_) => write!(f, "hex:{}", hex::encode(&self.0)),
        }
    }
}

/// What a peer-initiated disconnect means for this experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerClosePolicy {
    /// Input is conformant: a broker closing the connection is an anomaly.
    #[default]
    Forbidden,
    /// Input is malformed: the broker must close the connection.
    Required,
    /// Input hits implementation-defined limits: either reaction is acceptable.
    Either,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub sessions: Vec<SessionDecl>,
    pub steps: Vec<Step>,
    /// How long to keep capturing after the last step.
    #[serde(default = "default_settle_ms")]
    pub settle_ms: u64,
    #[serde(default)]
    pub peer_close: PeerClosePolicy,
}

fn default_settle_ms() -> u64 {
    DEFAULT_SETTLE_MS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawSessionDecl")]
pub struct SessionDecl {
    pub id: String,
    pub connect: ConnectParams,
    /// Answer broker-initiated QoS 1/2 handshakes automatically.
    pub auto_ack: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSessionDecl {
    id: String,
    #[serde(default)]
    connect: RawConnectParams,
    #[serde(default = "default_true")]
    auto_ack: bool,
}

impl From<RawSessionDecl> for SessionDecl {
    fn from(raw: RawSessionDecl) -> Self {
        let c = raw.connect;
        SessionDecl {
            connect: ConnectParams {
                client_id: c.client_id.unwrap_or_else(|| ByteString::from(raw.id.as_str())),
                clean_session: c.clean_session,
                keep_alive: c.keep_alive,
                protocol_name: c.protocol_name,
                protocol_level: c.protocol_level,
                username: c.username,
                password: c.password,
                will: c.will,
            },
            id: raw.id,
            auto_ack: raw.auto_ack,
        }
    }
}

impl SessionDecl {
    pub fn new(id: &str) -> Self {
        SessionDecl {
            id: id.to_string(),
            connect: ConnectParams::for_client(id.as_bytes()),
            auto_ack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConnectParams {
    pub client_id: ByteString,
    pub clean_session: bool,
    pub keep_alive: u16,
    pub protocol_name: ByteString,
    pub protocol_level: u8,
    pub username: Option<ByteString>,
    pub password: Option<Payload>,
    pub will: Option<WillParams>,
}

impl ConnectParams {
    pub fn for_client(client_id: &[u8]) -> Self {
        ConnectParams {
            client_id: ByteString(client_id.to_vec()),
            clean_session: true,
            keep_alive: 60,
            protocol_name: ByteString::from("MQTT"),
            protocol_level: 4,
            username: None,
            password: None,
            will: None,
        }
    }

    pub fn to_packet(&self) -> Packet {
        Packet::Connect(Connect {
            protocol_name: self.protocol_name.0.clone(),
            protocol_level: self.protocol_level,
            clean_session: self.clean_session,
            will: self.will.as_ref().map(|w| Will {
                topic: w.topic.0.clone(),
                payload: w.payload.0.clone(),
                qos: w.qos,
                retain: w.retain,
            }),
            keep_alive: self.keep_alive,
            client_id: self.client_id.0.clone(),
            username: self.username.as_ref().map(|u| u.0.clone()),
            password: self.password.as_ref().map(|p| p.0.clone()),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConnectParams {
    client_id: Option<ByteString>,
    #[serde(default = "default_true")]
    clean_session: bool,
    #[serde(default = "default_keep_alive")]
    keep_alive: u16,
    #[serde(default = "default_protocol_name")]
    protocol_name: ByteString,
    #[serde(default = "default_protocol_level")]
    protocol_level: u8,
    #[serde(default)]
    username: Option<ByteString>,
    #[serde(default)]
    password: Option<Payload>,
    #[serde(default)]
    will: Option<WillParams>,
}

impl Default for RawConnectParams {
    fn default() -> Self {
        RawConnectParams {
            client_id: None,
            clean_session: true,
            keep_alive: default_keep_alive(),
            protocol_name: default_protocol_name(),
            protocol_level: default_protocol_level(),
            username: None,
            password: None,
            will: None,
        }
    }
}

fn default_keep_alive() -> u16 {
    60
}

fn default_protocol_name() -> ByteString {
    ByteString::from("MQTT")
}

fn default_protocol_level() -> u8 {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WillParams {
    pub topic: ByteString,
    #[serde(default)]
    pub payload: Payload,
    #[serde(default)]
    pub qos: u8,
    #[serde(default)]
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    /// Required for every action except `wait` and `repeat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    pub action: Action,
}

impl Step {
    pub fn on(session: &str, action: Action) -> Self {
        Step {
            session: Some(session.to_string()),
            action,
        }
    }

    pub fn global(action: Action) -> Self {
        Step {
            session: None,
            action,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Connect,
    Disconnect,
    Pingreq,
    Subscribe(SubscribeStep),
    Unsubscribe(UnsubscribeStep),
    Publish(PublishStep),
    Puback(AckStep),
    Pubrec(AckStep),
    Pubrel(AckStep),
    Pubcomp(AckStep),
    SendRaw(RawStep),
    SpliceNext(SpliceStep),
    Wait(WaitStep),
    Repeat(RepeatStep),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscribeStep {
    pub filter: ByteString,
    #[serde(default)]
    pub qos: u8,
    #[serde(default = "default_packet_id")]
    pub packet_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsubscribeStep {
    pub filter: ByteString,
    #[serde(default = "default_packet_id")]
    pub packet_id: u16,
}

fn default_packet_id() -> u16 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishStep {
    pub topic: ByteString,
    #[serde(default)]
    pub payload: Payload,
    #[serde(default)]
    pub qos: u8,
    #[serde(default)]
    pub retain: bool,
    #[serde(default)]
    pub dup: bool,
    /// Mandatory for QoS 1 and 2. On QoS 0 it is kept in the script but not
    /// transmitted, since a QoS 0 frame has no packet identifier field.
    #[serde(default)]
    pub packet_id: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckStep {
    pub packet_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    #[serde(with = "hexser::bytes")]
    pub hex: Vec<u8>,
}

/// Patch applied to the next frame this session sends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpliceStep {
    pub offset: usize,
    #[serde(default)]
    pub remove: usize,
    #[serde(with = "hexser::bytes", default)]
    pub insert_hex: Vec<u8>,
    #[serde(default)]
    pub fixup_length: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitStep {
    pub ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatStep {
    pub count: u32,
    pub steps: Vec<Step>,
}

impl Action {
    /// Whether executing this action puts a frame on the wire.
    pub fn emits_packet(&self) -> bool {
        !matches!(
            self,
            Action::SpliceNext(_) | Action::Wait(_) | Action::Repeat(_)
        )
    }

    fn needs_session(&self) -> bool {
        !matches!(self, Action::Wait(_) | Action::Repeat(_))
    }

    /// The packet this action sends; `None` for non-emitting actions.
    pub fn to_packet(&self, session: &SessionDecl) -> Option<Packet> {
        Some(match self {
            Action::Connect => session.connect.to_packet(),
            Action::Disconnect => Packet::Disconnect,
            Action::Pingreq => Packet::Pingreq,
            Action::Subscribe(s) => Packet::Subscribe(Subscribe {
                packet_id: s.packet_id,
                entries: vec![SubscribeEntry {
                    filter: s.filter.0.clone(),
                    qos: s.qos,
                }],
            }),
            Action::Unsubscribe(u) => Packet::Unsubscribe(Unsubscribe {
                packet_id: u.packet_id,
                filters: vec![u.filter.0.clone()],
            }),
            Action::Publish(p) => Packet::Publish(Publish {
                dup: p.dup,
                qos: p.qos,
                retain: p.retain,
                topic: p.topic.0.clone(),
                packet_id: if p.qos == 0 { None } else { p.packet_id },
                payload: p.payload.0.clone(),
            }),
            Action::Puback(a) => Packet::Puback {
                packet_id: a.packet_id,
            },
            Action::Pubrec(a) => Packet::Pubrec {
                packet_id: a.packet_id,
            },
            Action::Pubrel(a) => Packet::Pubrel {
                packet_id: a.packet_id,
            },
            Action::Pubcomp(a) => Packet::Pubcomp {
                packet_id: a.packet_id,
            },
            Action::SendRaw(r) => Packet::Raw {
                bytes: r.hex.clone(),
            },
            Action::SpliceNext(_) | Action::Wait(_) | Action::Repeat(_) => return None,
        })
    }
}

impl Experiment {
    pub fn session(&self, id: &str) -> Option<&SessionDecl> {
        self.sessions.iter().find(|s| s.id == id)
    }

    /// Structural checks beyond what the JSON schema expresses.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() {
            return Err(schema("name", "must not be empty"));
        }
        let mut seen = HashSet::new();
        for (i, s) in self.sessions.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(ExperimentError::DuplicateSession { id: s.id.clone() });
            }
            let path = format!("sessions[{i}].connect");
            check_len(&format!("{path}.client_id"), &s.connect.client_id.0)?;
            check_len(&format!("{path}.protocol_name"), &s.connect.protocol_name.0)?;
            if let Some(w) = &s.connect.will {
                check_qos(&format!("{path}.will.qos"), w.qos)?;
                check_len(&format!("{path}.will.topic"), &w.topic.0)?;
            }
        }
        validate_steps(&self.steps, "steps", &seen)
    }
}

fn check_len(path: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
    if bytes.len() > MAX_STRING_LEN {
        return Err(schema(
            path,
            format!("{} bytes exceeds {MAX_STRING_LEN}", bytes.len()),
        ));
    }
    Ok(())
}

fn check_qos(path: &str, qos: u8) -> Result<(), ExperimentError> {
    if qos > 2 {
        return Err(schema(path, format!("qos {qos} is not 0, 1 or 2")));
    }
    Ok(())
}

fn validate_steps(
    steps: &[Step],
    base: &str,
    sessions: &HashSet<&str>,
) -> Result<(), ExperimentError> {
    for (i, step) in steps.iter().enumerate() {
        let path = format!("{base}[{i}]");
        match (&step.session, step.action.needs_session()) {
            (Some(id), _) if !sessions.contains(id.as_str()) => {
                return Err(ExperimentError::UnknownSessionRef {
                    path: format!("{path}.session"),
                    session: id.clone(),
                });
            }
            (None, true) => return Err(schema(format!("{path}.session"), "required")),
            _ => {}
        }
        let apath = format!("{path}.action");
        match &step.action {
            Action::Subscribe(s) => {
                check_qos(&format!("{apath}.subscribe.qos"), s.qos)?;
                check_len(&format!("{apath}.subscribe.filter"), &s.filter.0)?;
            }
            Action::Unsubscribe(u) => {
                check_len(&format!("{apath}.unsubscribe.filter"), &u.filter.0)?;
            }
            Action::Publish(p) => {
                check_qos(&format!("{apath}.publish.qos"), p.qos)?;
                check_len(&format!("{apath}.publish.topic"), &p.topic.0)?;
                if p.qos > 0 && p.packet_id.is_none() {
                    return Err(schema(
                        format!("{apath}.publish.packet_id"),
                        "required when qos > 0",
                    ));
                }
            }
            Action::Wait(w) if w.ms > MAX_WAIT_MS => {
                return Err(schema(
                    format!("{apath}.wait.ms"),
                    format!("{} exceeds {MAX_WAIT_MS}", w.ms),
                ));
            }
            Action::Repeat(r) => {
                if r.count > MAX_REPEAT {
                    return Err(schema(
                        format!("{apath}.repeat.count"),
                        format!("{} exceeds {MAX_REPEAT}", r.count),
                    ));
                }
                validate_steps(&r.steps, &format!("{apath}.repeat.steps"), sessions)?;
            }
            Action::SpliceNext(_) => {
                let next = steps.get(i + 1);
                let ok = next.is_some_and(|n| n.action.emits_packet() && n.session == step.session);
                if !ok {
                    return Err(schema(
                        format!("{apath}.splice_next"),
                        "must be followed by a packet-sending step on the same session",
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Parse and validate an experiment document.
pub fn parse_experiment(text: &str) -> Result<Experiment, ExperimentError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let experiment: Experiment = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        schema(if path == "." { "$".to_string() } else { path }, err.into_inner().to_string())
    })?;
    de.end().map_err(|e| schema("$", e.to_string()))?;
    experiment.validate()?;
    Ok(experiment)
}

/// Pretty JSON with every default written out.
pub fn render_experiment(experiment: &Experiment) -> String {
    serde_json::to_string_pretty(experiment).expect("experiment serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let e = parse_experiment(
            r#"{"name":"m","sessions":[{"id":"a"}],"steps":[{"session":"a","action":"connect"}]}"#,
        )
        .unwrap();
        assert_eq!(e.settle_ms, 500);
        assert_eq!(e.peer_close, PeerClosePolicy::Forbidden);
        let s = &e.sessions[0];
        assert_eq!(s.connect.client_id.0, b"a");
        assert!(s.connect.clean_session);
        assert_eq!(s.connect.keep_alive, 60);
        assert!(s.auto_ack);
        assert_eq!(e.steps.len(), 1);
    }

    #[test]
    fn qos21_document() {
        let text = r#"{
          "name": "qos21",
          "sessions": [{"id": "fuzzer"}],
          "steps": [
            {"session": "fuzzer", "action": {"subscribe": {"filter": "t", "qos": 2}}},
            {"session": "fuzzer", "action": {"publish": {"topic": "t", "qos": 2, "packet_id": 1, "payload": "one"}}},
            {"session": "fuzzer", "action": {"publish": {"topic": "t", "qos": 1, "packet_id": 1, "payload": {"hex": "74776f"}}}},
            {"session": "fuzzer", "action": {"pubrel": {"packet_id": 1}}}
          ]
        }"#;
        let e = parse_experiment(text).unwrap();
        assert_eq!(e.steps.len(), 4);
        let Action::Publish(p) = &e.steps[2].action else { panic!() };
        assert_eq!(p.payload.0, b"two");
        assert_eq!(p.qos, 1);
        assert_eq!(p.packet_id, Some(1));
    }

    #[test]
    fn unknown_session() {
        let err = parse_experiment(
            r#"{"name":"g","sessions":[{"id":"a"}],"steps":[{"session":"ghost","action":"connect"}]}"#,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ExperimentError::UnknownSessionRef {
                path: "steps[0].session".into(),
                session: "ghost".into()
            }
        );
    }

    #[test]
    fn duplicate_session() {
        let err =
            parse_experiment(r#"{"name":"d","sessions":[{"id":"a"},{"id":"a"}],"steps":[]}"#)
                .unwrap_err();
        assert_eq!(err, ExperimentError::DuplicateSession { id: "a".into() });
    }

    #[test]
    fn unknown_key_has_path() {
        let err = parse_experiment(
            r#"{"name":"u","sessions":[{"id":"a"}],"steps":[{"session":"a","action":{"publish":{"topic":"t","colour":1}}}]}"#,
        )
        .unwrap_err();
        let ExperimentError::Schema { path, reason } = err else { panic!("{err:?}") };
        assert_eq!(path, "steps[0].action.publish.colour");
        assert!(reason.contains("colour"), "{reason}");
    }

    #[test]
    fn publish_requires_id_above_qos0() {
        let err = parse_experiment(
            r#"{"name":"p","sessions":[{"id":"a"}],"steps":[{"session":"a","action":{"publish":{"topic":"t","qos":1}}}]}"#,
        )
        .unwrap_err();
        assert_eq!(err, schema("steps[0].action.publish.packet_id", "required when qos > 0"));
    }

    #[test]
    fn limits() {
        let err = parse_experiment(
            r#"{"name":"w","sessions":[],"steps":[{"action":{"wait":{"ms":60001}}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Schema { ref path, .. } if path == "steps[0].action.wait.ms"));
        let err = parse_experiment(
            r#"{"name":"r","sessions":[],"steps":[{"action":{"repeat":{"count":100001,"steps":[]}}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Schema { ref path, .. } if path == "steps[0].action.repeat.count"));
    }

    #[test]
    fn splice_must_precede_a_frame() {
        let err = parse_experiment(
            r#"{"name":"s","sessions":[{"id":"a"}],"steps":[
                {"session":"a","action":{"splice_next":{"offset":1}}},
                {"action":{"wait":{"ms":1}}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::Schema { ref path, .. } if path == "steps[0].action.splice_next"));
    }

    #[test]
    fn garbage_is_an_error_not_a_panic() {
        for text in ["", "[]", "{", "null", r#"{"name":1}"#, "{} trailing"] {
            assert!(parse_experiment(text).is_err(), "{text}");
        }
    }

    #[test]
    fn render_is_explicit_and_hex() {
        let e = parse_experiment(
            r#"{"name":"r","sessions":[{"id":"a","connect":{"client_id":{"hex":"fffe"}}}],
                "steps":[{"session":"a","action":{"publish":{"topic":"t","payload":"hi"}}}]}"#,
        )
        .unwrap();
        let text = render_experiment(&e);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["settle_ms"], 500);
        assert_eq!(v["sessions"][0]["connect"]["client_id"]["hex"], "fffe");
        assert_eq!(v["sessions"][0]["connect"]["keep_alive"], 60);
        assert_eq!(v["steps"][0]["action"]["publish"]["payload"]["hex"], "6869");
        assert_eq!(parse_experiment(&text).unwrap(), e);
    }
}
