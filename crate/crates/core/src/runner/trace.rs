use std::fmt;
use std::net::{SocketAddr, ToSocketAddrs};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Packet;

pub const DEFAULT_PORT: u16 = 1883;

/// Where a broker listens, plus the runner's patience with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    #[serde(default = "default_connect_timeout")]
    pub connect_timeout_ms: u64,
    #[serde(default = "default_io_timeout")]
    pub io_timeout_ms: u64,
}

fn default_connect_timeout() -> u64 {
    3_000
}

fn default_io_timeout() -> u64 {
    5_000
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid endpoint {input:?}: {reason}")]
pub struct EndpointError {
    pub input: String,
    pub reason: String,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Endpoint {
            host: host.into(),
            port,
            connect_timeout_ms: default_connect_timeout(),
            io_timeout_ms: default_io_timeout(),
        }
    }

    /// `host`, `host:port` or `[v6addr]:port`.
    pub fn parse(input: &str) -> Result<Self, EndpointError> {
        let err = |reason: &str| EndpointError {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let (host, port) = if let Some(rest) = input.strip_prefix('[') {
            let (host, tail) = rest.split_once(']').ok_or_else(|| err("unclosed '['"))?;
            match tail.strip_prefix(':') {
                Some(p) => (host, Some(p)),
                None if tail.is_empty() => (host, None),
                None => return Err(err("unexpected text after ']'")),
            }
        } else {
            match input.rsplit_once(':') {
                Some((h, p)) if !h.contains(':') => (h, Some(p)),
                _ => (input, None),
            }
        };
        if host.is_empty() {
            return Err(err("empty host"));
        }
        let port = match port {
            None => DEFAULT_PORT,
            Some(p) => match p.parse::<u16>() {
                Ok(0) | Err(_) => return Err(err("port must be 1-65535")),
                Ok(n) => n,
            },
        };
        Ok(Endpoint::new(host, port))
    }

    pub fn resolve(&self) -> std::io::Result<Vec<SocketAddr>> {
        Ok((self.host.as_str(), self.port).to_socket_addrs()?.collect())
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.host.contains(':') {
            write!(f, "[{}]:{}", self.host, self.port)
        } else {
            write!(f, "{}:{}", self.host, self.port)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `auto` marks acknowledgements the runner generated itself.
    Sent {
        packet: Packet,
        #[serde(default)]
        auto: bool,
    },
    Received {
        packet: Packet,
        #[serde(default)]
        annotations: Vec<String>,
    },
    Connected,
    TcpClosedByPeer,
    TcpError {
        detail: String,
    },
    Timeout {
        awaiting: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub t_ms: u64,
    pub session: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn sent(&self) -> Option<&Packet> {
        match &self.kind {
            EventKind::Sent { packet, .. } => Some(packet),
            _ => None,
        }
    }

    pub fn received(&self) -> Option<&Packet> {
        match &self.kind {
            EventKind::Received { packet, .. } => Some(packet),
            _ => None,
        }
    }

    /// The connection ended without us asking for it.
    pub fn is_peer_close(&self) -> bool {
        matches!(
            self.kind,
            EventKind::TcpClosedByPeer | EventKind::TcpError { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    AbortedByPeer,
    RunnerError { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub experiment_name: String,
    pub endpoint: Endpoint,
    /// Unix time in milliseconds.
    pub started_at_ms: u64,
    pub events: Vec<TraceEvent>,
    pub outcome: Outcome,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Trace {
        experiment_name: String,
        endpoint: Endpoint,
        started_at_ms: u64,
        outcome: Outcome,
    },
    Event(TraceEvent),
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("missing trace header line")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    Structure { line: usize, reason: String },
}

impl Trace {
    /// One header line, then one line per event.
    pub fn to_jsonl(&self) -> String {
        let header = Line::Trace {
            experiment_name: self.experiment_name.clone(),
            endpoint: self.endpoint.clone(),
            started_at_ms: self.started_at_ms,
            outcome: self.outcome.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("serializable");
        out.push('\n');
        for event in &self.events {
            out.push_str(&serde_json::to_string(&Line::Event(event.clone())).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, TraceParseError> {
        let mut trace: Option<Trace> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(raw).map_err(|source| TraceParseError::Json { line, source })?;
            match (parsed, trace.as_mut()) {
                (
                    Line::Trace {
                        experiment_name,
                        endpoint,
                        started_at_ms,
                        outcome,
                    },
                    None,
                ) => {
                    trace = Some(Trace {
                        experiment_name,
                        endpoint,
                        started_at_ms,
                        events: Vec::new(),
                        outcome,
                    })
                }
                (Line::Trace { .. }, Some(_)) => {
                    return Err(TraceParseError::Structure {
                        line,
                        reason: "second trace header".into(),
                    })
                }
                (Line::Event(_), None) => return Err(TraceParseError::MissingHeader),
                (Line::Event(e), Some(t)) => {
                    if e.seq != t.events.len() as u64 {
                        return Err(TraceParseError::Structure {
                            line,
                            reason: format!("expected seq {}, found {}", t.events.len(), e.seq),
                        });
                    }
                    t.events.push(e);
                }
            }
        }
        trace.ok_or(TraceParseError::MissingHeader)
    }
}
