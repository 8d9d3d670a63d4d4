//! Plays an experiment against a TCP endpoint and records what happened.
//!
//! Steps run sequentially on the calling thread. Each session has its own
//! reader thread; every event, sent or received, passes through one shared
//! recorder that hands out sequence numbers, so the trace is a total order
//! across sessions.

mod trace;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::codec::{
    decode_packet, encode_packet, splice, Connect, DecodeError, DecodeMode, Packet, PacketType,
};
use crate::experiment::{Action, Experiment, SessionDecl, SpliceStep, Step};

pub use trace::{
    Endpoint, EndpointError, EventKind, Outcome, Trace, TraceEvent, TraceParseError, DEFAULT_PORT,
};

const READ_CHUNK: usize = 64 * 1024;

struct Recorder {
    start: Instant,
    events: Mutex<Vec<TraceEvent>>,
    arrived: Condvar,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            start: Instant::now(),
            events: Mutex::new(Vec::new()),
            arrived: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Vec<TraceEvent>> {
        self.events.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn record(&self, session: &str, kind: EventKind) {
        let mut events = self.lock();
        let seq = events.len() as u64;
        // Taken under the lock so t_ms never goes backwards.
        let t_ms = self.start.elapsed().as_millis() as u64;
        events.push(TraceEvent {
            seq,
            t_ms,
            session: session.to_string(),
            kind,
        });
        drop(events);
        self.arrived.notify_all();
    }

    fn len(&self) -> usize {
        self.lock().len()
    }

    /// Block until `session` receives a packet of type `ty` or its connection
    /// ends, looking only at events from index `from` on.
    fn wait_for(&self, session: &str, ty: PacketType, from: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut events = self.lock();
        let mut scanned = from;
        loop {
            for e in &events[scanned..] {
                if e.session != session {
                    continue;
                }
                if e.is_peer_close() || e.received().and_then(Packet::packet_type) == Some(ty) {
                    return true;
                }
            }
            scanned = events.len();
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            events = self
                .arrived
                .wait_timeout(events, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }
}

/// State shared between a session's step executor and its reader thread.
struct Link {
    id: String,
    auto_ack: bool,
    stream: Mutex<Option<TcpStream>>,
    /// Set once the peer closed or the socket failed; first setter records it.
    peer_closed: AtomicBool,
    /// Set when we closed the socket ourselves.
    local_closed: AtomicBool,
}

impl Link {
    fn mark_peer_closed(&self, rec: &Recorder, kind: EventKind) {
        if self.local_closed.load(Ordering::SeqCst) {
            return;
        }
        if !self.peer_closed.swap(true, Ordering::SeqCst) {
            rec.record(&self.id, kind);
        }
    }

    /// Record `packet` as sent, then write `frame`. Both happen under the
    /// stream lock so per-session trace order equals wire order.
    fn send(&self, rec: &Recorder, packet: Packet, frame: &[u8], auto: bool) {
        let mut guard = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        let Some(stream) = guard.as_mut() else { return };
        if self.peer_closed.load(Ordering::SeqCst) || self.local_closed.load(Ordering::SeqCst) {
            return;
        }
        rec.record(&self.id, EventKind::Sent { packet, auto });
        if let Err(e) = stream.write_all(frame) {
            drop(guard);
            self.mark_peer_closed(
                rec,
                EventKind::TcpError {
                    detail: e.to_string(),
                },
            );
        }
    }

    fn close_locally(&self) {
        self.local_closed.store(true, Ordering::SeqCst);
        let guard = self.stream.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(stream) = guard.as_ref() {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

fn auto_reply(packet: &Packet) -> Option<Packet> {
    match packet {
        Packet::Publish(p) if p.qos == 1 => p.packet_id.map(|packet_id| Packet::Puback { packet_id }),
        Packet::Publish(p) if p.qos == 2 => p.packet_id.map(|packet_id| Packet::Pubrec { packet_id }),
        Packet::Pubrel { packet_id } => Some(Packet::Pubcomp {
            packet_id: *packet_id,
        }),
        _ => None,
    }
}

fn reader_loop(mut stream: TcpStream, link: Arc<Link>, rec: Arc<Recorder>) {
    let mut buf: Vec<u8> = Vec::new();
    let mut chunk = vec![0u8; READ_CHUNK];
    loop {
        match stream.read(&mut chunk) {
            Ok(0) => {
                flush_leftover(&mut buf, &link, &rec);
                link.mark_peer_closed(&rec, EventKind::TcpClosedByPeer);
                return;
            }
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                drain_frames(&mut buf, &link, &rec);
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => {
                flush_leftover(&mut buf, &link, &rec);
                link.mark_peer_closed(
                    &rec,
                    EventKind::TcpError {
                        detail: e.to_string(),
                    },
                );
                return;
            }
        }
    }
}

fn record_raw(link: &Link, rec: &Recorder, bytes: Vec<u8>, note: String) {
    rec.record(
        &link.id,
        EventKind::Received {
            packet: Packet::Raw { bytes },
            annotations: vec![note],
        },
    );
}

fn flush_leftover(buf: &mut Vec<u8>, link: &Link, rec: &Recorder) {
    if !buf.is_empty() && !link.local_closed.load(Ordering::SeqCst) {
        let bytes = std::mem::take(buf);
        record_raw(link, rec, bytes, "truncated: connection ended mid-frame".into());
    }
}

fn drain_frames(buf: &mut Vec<u8>, link: &Link, rec: &Recorder) {
    loop {
        if buf.is_empty() {
            return;
        }
        match decode_packet(buf, DecodeMode::Permissive) {
            Ok(decoded) => {
                let reply = if link.auto_ack {
                    auto_reply(&decoded.packet)
                } else {
                    None
                };
                rec.record(
                    &link.id,
                    EventKind::Received {
                        packet: decoded.packet,
                        annotations: decoded.annotations.iter().map(ToString::to_string).collect(),
                    },
                );
                buf.drain(..decoded.consumed);
                if let Some(reply) = reply {
                    if let Ok(frame) = encode_packet(&reply) {
                        link.send(rec, reply, &frame, true);
                    }
                }
            }
            Err(DecodeError::Incomplete) => return,
            Err(DecodeError::Malformed {
                reason,
                frame_len: Some(n),
            }) => {
                let bytes: Vec<u8> = buf.drain(..n).collect();
                record_raw(link, rec, bytes, format!("malformed: {reason}"));
            }
            Err(DecodeError::Malformed {
                reason,
                frame_len: None,
            }) => {
                // No way to find the next frame boundary.
                let bytes = std::mem::take(buf);
                record_raw(link, rec, bytes, format!("unframeable: {reason}"));
                return;
            }
        }
    }
}

struct SessionRun {
    decl: SessionDecl,
    link: Arc<Link>,
    reader: Option<JoinHandle<()>>,
    splice: Option<SpliceStep>,
}

enum Fatal {
    Local(String),
}

fn open_stream(ep: &Endpoint) -> Result<TcpStream, String> {
    let addrs = ep.resolve().map_err(|e| format!("cannot resolve {ep}: {e}"))?;
    if addrs.is_empty() {
        return Err(format!("cannot resolve {ep}: no addresses"));
    }
    let timeout = Duration::from_millis(ep.connect_timeout_ms.max(1));
    let mut last = String::new();
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(stream) => {
                let _ = stream.set_nodelay(true);
                // a peer that stops reading must not stall the runner
                let _ = stream.set_write_timeout(Some(Duration::from_millis(ep.io_timeout_ms.max(1))));
                return Ok(stream);
            }
            Err(e) => last = format!("cannot connect to {ep}: {e}"),
        }
    }
    Err(last)
}

struct Executor<'a> {
    ep: &'a Endpoint,
    rec: Arc<Recorder>,
    sessions: HashMap<String, SessionRun>,
}

impl Executor<'_> {
    fn attach(&mut self, id: &str, stream: TcpStream) -> Result<(), Fatal> {
        let reader_stream = stream
            .try_clone()
            .map_err(|e| Fatal::Local(format!("cannot clone socket: {e}")))?;
        let session = self.sessions.get_mut(id).expect("validated session id");
        let link = Arc::new(Link {
            id: id.to_string(),
            auto_ack: session.decl.auto_ack,
            stream: Mutex::new(Some(stream)),
            peer_closed: AtomicBool::new(false),
            local_closed: AtomicBool::new(false),
        });
        self.rec.record(id, EventKind::Connected);
        let (l, r) = (Arc::clone(&link), Arc::clone(&self.rec));
        let reader = thread::Builder::new()
            .name(format!("mqttprobe-read-{id}"))
            .spawn(move || reader_loop(reader_stream, l, r))
            .map_err(|e| Fatal::Local(format!("cannot spawn reader: {e}")))?;
        if let Some(old) = session.reader.replace(reader) {
            let _ = old.join();
        }
        session.link = link;
        Ok(())
    }

    fn run_steps(&mut self, steps: &[Step]) -> Result<(), Fatal> {
        for step in steps {
            match &step.action {
                Action::Wait(w) => thread::sleep(Duration::from_millis(w.ms)),
                Action::Repeat(r) => {
                    for _ in 0..r.count {
                        self.run_steps(&r.steps)?;
                    }
                }
                action => {
                    let id = step.session.as_deref().expect("validated session reference");
                    self.run_session_step(id, action)?;
                }
            }
        }
        Ok(())
    }

    fn run_session_step(&mut self, id: &str, action: &Action) -> Result<(), Fatal> {
        let session = self.sessions.get_mut(id).expect("validated session id");
        let link = Arc::clone(&session.link);
        if link.peer_closed.load(Ordering::SeqCst) {
            return Ok(());
        }
        if link.local_closed.load(Ordering::SeqCst) {
            if !matches!(action, Action::Connect) {
                return Ok(());
            }
            match open_stream(self.ep) {
                Ok(stream) => self.attach(id, stream)?,
                Err(detail) => {
                    self.rec.record(id, EventKind::TcpError { detail });
                    let s = self.sessions.get_mut(id).expect("validated session id");
                    s.link.local_closed.store(false, Ordering::SeqCst);
                    s.link.peer_closed.store(true, Ordering::SeqCst);
                    return Ok(());
                }
            }
        }
        let session = self.sessions.get_mut(id).expect("validated session id");
        if let Action::SpliceNext(s) = action {
            session.splice = Some(s.clone());
            return Ok(());
        }
        let packet = action
            .to_packet(&session.decl)
            .expect("remaining actions all emit a packet");
        let mut frame = encode_packet(&packet).map_err(|e| Fatal::Local(e.to_string()))?;
        let mut logged = packet.clone();
        if let Some(s) = session.splice.take() {
            frame = splice(&frame, s.offset, s.remove, &s.insert_hex, s.fixup_length)
                .map_err(|e| Fatal::Local(format!("splice_next: {e}")))?;
            logged = Packet::Raw {
                bytes: frame.clone(),
            };
        }
        let link = Arc::clone(&session.link);
        let awaiting = match action {
            Action::Connect => Some(PacketType::Connack),
            Action::Subscribe(_) => Some(PacketType::Suback),
            Action::Unsubscribe(_) => Some(PacketType::Unsuback),
            _ => None,
        };
        let mark = self.rec.len();
        link.send(&self.rec, logged, &frame, false);
        if let Some(ty) = awaiting {
            let timeout = Duration::from_millis(self.ep.io_timeout_ms);
            if !self.rec.wait_for(id, ty, mark, timeout) {
                self.rec.record(
                    id,
                    EventKind::Timeout {
                        awaiting: ty.to_string().to_lowercase(),
                    },
                );
            }
        }
        if matches!(action, Action::Disconnect) {
            link.close_locally();
        }
        Ok(())
    }

    fn finish(&mut self) {
        for session in self.sessions.values_mut() {
            session.link.close_locally();
            if let Some(reader) = session.reader.take() {
                let _ = reader.join();
            }
        }
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Execute `experiment` against `ep` and return the captured trace.
///
/// Misbehaving peers end up in the trace; only local faults (resolution,
/// refused initial connections, unencodable packets) yield
/// [`Outcome::RunnerError`].
pub fn run_experiment(experiment: &Experiment, ep: &Endpoint) -> Trace {
    let started_at_ms = unix_ms();
    let rec = Arc::new(Recorder::new());
    let mut exec = Executor {
        ep,
        rec: Arc::clone(&rec),
        sessions: HashMap::new(),
    };

    let mut fatal = None;
    for decl in &experiment.sessions {
        exec.sessions.insert(
            decl.id.clone(),
            SessionRun {
                decl: decl.clone(),
                link: Arc::new(Link {
                    id: decl.id.clone(),
                    auto_ack: decl.auto_ack,
                    stream: Mutex::new(None),
                    peer_closed: AtomicBool::new(false),
                    local_closed: AtomicBool::new(true),
                }),
                reader: None,
                splice: None,
            },
        );
        match open_stream(ep) {
            Ok(stream) => {
                if let Err(Fatal::Local(detail)) = exec.attach(&decl.id, stream) {
                    fatal = Some(detail);
                    break;
                }
            }
            Err(detail) => {
                fatal = Some(detail);
                break;
            }
        }
    }

    if fatal.is_none() {
        match exec.run_steps(&experiment.steps) {
            Ok(()) => thread::sleep(Duration::from_millis(experiment.settle_ms)),
            Err(Fatal::Local(detail)) => fatal = Some(detail),
        }
    }
    exec.finish();

    let aborted = exec
        .sessions
        .values()
        .any(|s| s.link.peer_closed.load(Ordering::SeqCst));
    drop(exec);
    let events = match Arc::try_unwrap(rec) {
        Ok(r) => r.events.into_inner().unwrap_or_else(|p| p.into_inner()),
        Err(shared) => shared.lock().clone(),
    };
    let outcome = match fatal {
        Some(detail) => Outcome::RunnerError { detail },
        None if aborted => Outcome::AbortedByPeer,
        None => Outcome::Completed,
    };
    Trace {
        experiment_name: experiment.name.clone(),
        endpoint: ep.clone(),
        started_at_ms,
        events,
        outcome,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Liveness {
    Alive,
    Dead { detail: String },
}

impl Liveness {
    pub fn is_alive(&self) -> bool {
        matches!(self, Liveness::Alive)
    }
}

/// CONNECT with a fresh client id and wait for CONNACK.
pub fn probe_liveness(ep: &Endpoint) -> Liveness {
    let dead = |detail: String| Liveness::Dead { detail };
    let mut stream = match open_stream(ep) {
        Ok(s) => s,
        Err(detail) => return dead(detail),
    };
    let deadline = Instant::now() + Duration::from_millis(ep.connect_timeout_ms.max(1));
    let client_id = format!("mqttprobe-probe-{}", unix_ms());
    let frame = encode_packet(&Packet::Connect(Connect::new(client_id, 10))).expect("valid connect");
    if let Err(e) = stream.write_all(&frame) {
        return dead(format!("write failed: {e}"));
    }
    let mut buf = Vec::new();
    let mut chunk = [0u8; 512];
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return dead("timed out waiting for CONNACK".into());
        }
        let _ = stream.set_read_timeout(Some(left));
        match stream.read(&mut chunk) {
            Ok(0) => return dead("connection closed before CONNACK".into()),
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(e) => return dead(format!("read failed: {e}")),
        }
        match decode_packet(&buf, DecodeMode::Permissive) {
            Ok(d) if matches!(d.packet, Packet::Connack(_)) => {
                let _ = stream.write_all(&encode_packet(&Packet::Disconnect).expect("valid"));
                return Liveness::Alive;
            }
            Ok(d) => return dead(format!("expected CONNACK, got {}", d.packet.summary())),
            Err(DecodeError::Incomplete) => {}
            Err(e) => return dead(format!("bad CONNACK: {e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorpusRun {
    Ran { trace: Trace, liveness: Liveness },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub experiment: Experiment,
    pub run: CorpusRun,
}

/// Run experiments in order, probing the broker after each one. Once the
/// broker stops answering, the rest are skipped.
pub fn run_corpus(experiments: &[Experiment], ep: &Endpoint) -> Vec<CorpusResult> {
    let mut results = Vec::with_capacity(experiments.len());
    let mut dead_after: Option<String> = None;
    for experiment in experiments {
        let run = match &dead_after {
            Some(name) => CorpusRun::Skipped {
                reason: format!("broker_dead after {name}"),
            },
            None => {
                log::info!("running {}", experiment.name);
                let trace = run_experiment(experiment, ep);
                let liveness = probe_liveness(ep);
                if !liveness.is_alive() {
                    log::warn!("broker dead after {}: {liveness:?}", experiment.name);
                    dead_after = Some(experiment.name.clone());
                }
                CorpusRun::Ran { trace, liveness }
            }
        };
        results.push(CorpusResult {
            experiment: experiment.clone(),
            run,
        });
    }
    results
}
