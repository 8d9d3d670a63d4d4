//! A small MQTT 3.1.1 broker that follows the standard where it is clear and
//! picks the conservative reading where it is not.
//!
//! Connections get a reader and a writer thread each. All protocol decisions
//! happen on a single router thread, which owns every [`SessionState`] and the
//! subscription table, so routing has one total order.
//!
//! Clean sessions only: no persistence, no retained messages, wills are parsed
//! but never published.

mod state;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::codec::{decode_packet, encode_packet, DecodeError, DecodeMode, Packet, Violation};
use crate::topics::matches_bytes;

pub use state::{Effect, Message, SessionState};

/// How long a fresh connection may stay silent before sending CONNECT.
const CONNECT_GRACE: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("cannot start broker thread: {0}")]
    Spawn(std::io::Error),
}

type ConnId = u64;

enum RouterMsg {
    Open {
        conn: ConnId,
        peer: SocketAddr,
        writer: Sender<WriterMsg>,
    },
    Packet {
        conn: ConnId,
        packet: Packet,
        annotations: Vec<Violation>,
    },
    Gone {
        conn: ConnId,
        reason: String,
    },
    Stop,
}

enum WriterMsg {
    Frame(Vec<u8>),
    Close,
}

struct Conn {
    peer: SocketAddr,
    state: SessionState,
    writer: Sender<WriterMsg>,
    subscriptions: Vec<(Vec<u8>, u8)>,
}

struct Router {
    conns: HashMap<ConnId, Conn>,
    /// Insertion order, so fan-out order is deterministic.
    order: Vec<ConnId>,
}

impl Router {
    fn send(&self, conn: ConnId, packet: &Packet) {
        let Some(c) = self.conns.get(&conn) else { return };
        match encode_packet(packet) {
            Ok(frame) => {
                let _ = c.writer.send(WriterMsg::Frame(frame));
            }
            Err(e) => log::error!("conn={conn} cannot encode {}: {e}", packet.summary()),
        }
    }

    fn close(&mut self, conn: ConnId, reason: &str) {
        if let Some(c) = self.conns.remove(&conn) {
            log::debug!("conn={conn} peer={} closed: {reason}", c.peer);
            let _ = c.writer.send(WriterMsg::Close);
            self.order.retain(|&id| id != conn);
        }
    }

    fn handle(&mut self, conn: ConnId, packet: &Packet, annotations: &[Violation]) {
        let Some(c) = self.conns.get_mut(&conn) else { return };
        log::debug!("conn={conn} <- {}", packet.summary());
        let effects = c.state.handle(packet, annotations);
        for effect in effects {
            match effect {
                Effect::Send(p) => self.send(conn, &p),
                Effect::Route(m) => self.route(&m),
                Effect::Register(client_id) => self.register(conn, &client_id),
                Effect::Subscribe(entries) => {
                    if let Some(c) = self.conns.get_mut(&conn) {
                        for (filter, qos) in entries {
                            c.subscriptions.retain(|(f, _)| *f != filter);
                            c.subscriptions.push((filter, qos));
                        }
                    }
                }
                Effect::Unsubscribe(filters) => {
                    if let Some(c) = self.conns.get_mut(&conn) {
                        c.subscriptions.retain(|(f, _)| !filters.contains(f));
                    }
                }
                Effect::Close(reason) => {
                    self.close(conn, &reason);
                    return;
                }
            }
        }
    }

    /// A second live connection with the same client id takes over.
    fn register(&mut self, conn: ConnId, client_id: &[u8]) {
        let stale: Vec<ConnId> = self
            .conns
            .iter()
            .filter(|(&id, c)| id != conn && c.state.is_connected() && c.state.client_id() == client_id)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            self.close(id, "taken over by a new connection");
        }
    }

    fn route(&mut self, m: &Message) {
        let targets: Vec<(ConnId, u8)> = self
            .order
            .iter()
            .filter_map(|id| {
                let c = &self.conns[id];
                c.subscriptions
                    .iter()
                    .filter(|(f, _)| matches_bytes(f, &m.topic) == Some(true))
                    .map(|(_, q)| *q)
                    .max()
                    .map(|granted| (*id, granted.min(m.qos)))
            })
            .collect();
        for (id, qos) in targets {
            let packet = self
                .conns
                .get_mut(&id)
                .expect("target is live")
                .state
                .deliver(m, qos);
            self.send(id, &packet);
        }
    }
}

fn router_loop(rx: Receiver<RouterMsg>) {
    let mut router = Router {
        conns: HashMap::new(),
        order: Vec::new(),
    };
    for msg in rx {
        match msg {
            RouterMsg::Open { conn, peer, writer } => {
                log::debug!("conn={conn} peer={peer} opened");
                router.conns.insert(
                    conn,
                    Conn {
                        peer,
                        state: SessionState::new(),
                        writer,
                        subscriptions: Vec::new(),
                    },
                );
                router.order.push(conn);
            }
            RouterMsg::Packet {
                conn,
                packet,
                annotations,
            } => router.handle(conn, &packet, &annotations),
            RouterMsg::Gone { conn, reason } => router.close(conn, &reason),
            RouterMsg::Stop => break,
        }
    }
    let ids: Vec<ConnId> = router.order.clone();
    for id in ids {
        router.close(id, "broker stopping");
    }
}

fn writer_loop(mut stream: TcpStream, rx: Receiver<WriterMsg>) {
    for msg in rx {
        match msg {
            WriterMsg::Frame(frame) => {
                if stream.write_all(&frame).is_err() {
                    break;
                }
            }
            WriterMsg::Close => break,
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn reader_loop(mut stream: TcpStream, conn: ConnId, router: Sender<RouterMsg>) {
    let gone = |reason: String| {
        let _ = router.send(RouterMsg::Gone { conn, reason });
    };
    let _ = stream.set_read_timeout(Some(CONNECT_GRACE));
    let mut seen_connect = false;
    let mut buf = Vec::new();
    let mut chunk = vec![0u8; 64 * 1024];
    loop {
        let n = match stream.read(&mut chunk) {
            Ok(0) => return gone("peer closed".into()),
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                let _ = stream.shutdown(Shutdown::Both);
                return gone("keep-alive expired".into());
            }
            Err(e) => return gone(format!("read error: {e}")),
        };
        buf.extend_from_slice(&chunk[..n]);
        loop {
            match decode_packet(&buf, DecodeMode::Permissive) {
                Ok(decoded) => {
                    buf.drain(..decoded.consumed);
                    if !seen_connect {
                        seen_connect = true;
                        let timeout = match &decoded.packet {
                            Packet::Connect(c) if c.keep_alive > 0 => Some(Duration::from_millis(
                                u64::from(c.keep_alive) * 1_500,
                            )),
                            _ => None,
                        };
                        let _ = stream.set_read_timeout(timeout);
                    }
                    let msg = RouterMsg::Packet {
                        conn,
                        packet: decoded.packet,
                        annotations: decoded.annotations,
                    };
                    if router.send(msg).is_err() {
                        return;
                    }
                }
                Err(DecodeError::Incomplete) => break,
                Err(DecodeError::Malformed { reason, .. }) => {
                    let _ = stream.shutdown(Shutdown::Both);
                    return gone(format!("malformed packet: {reason}"));
                }
            }
        }
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, router: Sender<RouterMsg>) {
    let mut next: ConnId = 0;
    for incoming in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match incoming {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                // Back off on e.g. descriptor exhaustion instead of spinning.
                thread::sleep(Duration::from_millis(10));
                continue;
            }
        };
        next += 1;
        let conn = next;
        let _ = stream.set_nodelay(true);
        let peer = stream
            .peer_addr()
            .unwrap_or_else(|_| SocketAddr::from(([0, 0, 0, 0], 0)));
        let Ok(write_half) = stream.try_clone() else { continue };
        let (wtx, wrx) = mpsc::channel();
        if router
            .send(RouterMsg::Open {
                conn,
                peer,
                writer: wtx,
            })
            .is_err()
        {
            break;
        }
        let r = router.clone();
        let spawned = thread::Builder::new()
            .name(format!("refbroker-w{conn}"))
            .spawn(move || writer_loop(write_half, wrx))
            .and_then(|_| {
                thread::Builder::new()
                    .name(format!("refbroker-r{conn}"))
                    .spawn(move || reader_loop(stream, conn, r))
            });
        if let Err(e) = spawned {
            log::error!("conn={conn} cannot spawn threads: {e}");
            let _ = router.send(RouterMsg::Gone {
                conn,
                reason: "thread spawn failed".into(),
            });
        }
    }
}

/// A running broker. Dropping it stops the broker.
pub struct Broker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    router_tx: Sender<RouterMsg>,
    accept: Option<JoinHandle<()>>,
    router: Option<JoinHandle<()>>,
}

impl Broker {
    /// Listen on `addr` (port 0 picks a free port).
    pub fn start(addr: SocketAddr) -> Result<Broker, BrokerError> {
        let listener = TcpListener::bind(addr).map_err(|source| BrokerError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let local = listener.local_addr().map_err(|source| BrokerError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let (tx, rx) = mpsc::channel();
        let router = thread::Builder::new()
            .name("refbroker-router".into())
            .spawn(move || router_loop(rx))
            .map_err(BrokerError::Spawn)?;
        let stop = Arc::new(AtomicBool::new(false));
        let (s, t) = (Arc::clone(&stop), tx.clone());
        let accept = thread::Builder::new()
            .name("refbroker-accept".into())
            .spawn(move || accept_loop(listener, s, t))
            .map_err(BrokerError::Spawn)?;
        log::info!("listening on {local}");
        Ok(Broker {
            addr: local,
            stop,
            router_tx: tx,
            accept: Some(accept),
            router: Some(router),
        })
    }

    /// Listen on all interfaces.
    pub fn serve(port: u16) -> Result<Broker, BrokerError> {
        Self::start(SocketAddr::from(([0, 0, 0, 0], port)))
    }

    /// Listen on 127.0.0.1 with an OS-assigned port.
    pub fn start_local() -> Result<Broker, BrokerError> {
        Self::start(SocketAddr::from(([127, 0, 0, 1], 0)))
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn is_running(&self) -> bool {
        self.accept.as_ref().is_some_and(|h| !h.is_finished())
            && self.router.as_ref().is_some_and(|h| !h.is_finished())
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let mut wake = self.addr;
        if wake.ip().is_unspecified() {
            wake.set_ip([127, 0, 0, 1].into());
        }
        let _ = TcpStream::connect_timeout(&wake, Duration::from_secs(1));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let _ = self.router_tx.send(RouterMsg::Stop);
        if let Some(h) = self.router.take() {
            let _ = h.join();
        }
        log::info!("stopped");
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Connect, Publish, Subscribe, SubscribeEntry};

    fn connect(broker: &Broker, id: &str) -> TcpStream {
        let mut s = TcpStream::connect(broker.local_addr()).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        s.write_all(&encode_packet(&Packet::Connect(Connect::new(id, 60))).unwrap())
            .unwrap();
        assert!(matches!(read_packet(&mut s), Some(Packet::Connack(c)) if c.return_code == 0));
        s
    }

    fn read_packet(s: &mut TcpStream) -> Option<Packet> {
        let mut buf = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            match decode_packet(&buf, DecodeMode::Strict) {
                Ok(d) => return Some(d.packet),
                Err(DecodeError::Incomplete) => {}
                Err(e) => panic!("{e}"),
            }
            match s.read(&mut byte) {
                Ok(0) | Err(_) => return None,
                Ok(_) => buf.push(byte[0]),
            }
        }
    }

    #[test]
    fn start_connect_stop() {
        let broker = Broker::start_local().unwrap();
        let mut s = connect(&broker, "a");
        s.write_all(&[0xE0, 0x00]).unwrap();
        assert_eq!(read_packet(&mut s), None);
        assert!(broker.is_running());
        broker.stop();
    }

    #[test]
    fn occupied_port_is_a_bind_error() {
        let broker = Broker::start_local().unwrap();
        let err = Broker::start(broker.local_addr()).err().unwrap();
        assert!(matches!(err, BrokerError::Bind { .. }));
    }

    #[test]
    fn publish_reaches_subscriber() {
        let broker = Broker::start_local().unwrap();
        let mut sub = connect(&broker, "sub");
        let sub_packet = Packet::Subscribe(Subscribe {
            packet_id: 1,
            entries: vec![SubscribeEntry {
                filter: b"a/+".to_vec(),
                qos: 1,
            }],
        });
        sub.write_all(&encode_packet(&sub_packet).unwrap()).unwrap();
        assert!(matches!(read_packet(&mut sub), Some(Packet::Suback(_))));
        let mut publisher = connect(&broker, "pub");
        let publish = Packet::Publish(Publish {
            dup: false,
            qos: 2,
            retain: false,
            topic: b"a/b".to_vec(),
            packet_id: Some(9),
            payload: b"hi".to_vec(),
        });
        publisher.write_all(&encode_packet(&publish).unwrap()).unwrap();
        assert_eq!(read_packet(&mut publisher), Some(Packet::Pubrec { packet_id: 9 }));
        let Some(Packet::Publish(got)) = read_packet(&mut sub) else { panic!() };
        assert_eq!((got.qos, got.payload.as_slice()), (1, &b"hi"[..]));
    }

    #[test]
    fn takeover_closes_the_old_connection() {
        let broker = Broker::start_local().unwrap();
        let mut first = connect(&broker, "same");
        let _second = connect(&broker, "same");
        assert_eq!(read_packet(&mut first), None);
    }
}
