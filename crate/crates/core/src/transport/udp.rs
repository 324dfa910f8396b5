//! Non-blocking UDP broadcast driver.
//!
//! A receiver thread reads datagrams from the listening socket and hands
//! them to the round loop through a channel; `send` writes on a separate
//! non-blocking socket, so neither call waits on the network.

use std::io::ErrorKind;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, error, warn};

use super::{Deduplicator, Packet, Received, Transport, TransportError, HEADER_LEN};
use crate::xc_core::DeviceId;

pub const DEFAULT_PORT: u16 = 47_474;
pub const DEFAULT_MAX_PAYLOAD: usize = 8192;

#[derive(Debug, Clone)]
pub struct UdpConfig {
    pub id: DeviceId,
    pub bind: IpAddr,
    pub port: u16,
    /// Destinations of every broadcast; defaults to the limited broadcast
    /// address on `port`.
    pub targets: Vec<SocketAddr>,
    pub max_payload: usize,
    /// Seconds after which queued messages are discarded.
    pub retention: f64,
    /// Receiver-thread wake-up interval (bounds shutdown latency).
    pub recv_timeout: Duration,
}

impl UdpConfig {
    pub fn new(id: DeviceId, port: u16) -> Self {
        UdpConfig {
            id,
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            port,
            targets: vec![SocketAddr::new(IpAddr::V4(Ipv4Addr::BROADCAST), port)],
            max_payload: DEFAULT_MAX_PAYLOAD,
            retention: 2.0,
            recv_timeout: Duration::from_millis(50),
        }
    }
}

pub struct UdpTransport {
    cfg: UdpConfig,
    send_sock: UdpSocket,
    rx: Receiver<(Vec<u8>, Instant)>,
    counter: u32,
    dedup: Deduplicator,
    start: Instant,
    stop: Arc<AtomicBool>,
    up: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl UdpTransport {
    pub fn bind(cfg: UdpConfig) -> Result<Self, TransportError> {
        let addr = SocketAddr::new(cfg.bind, cfg.port);
        let recv_sock = UdpSocket::bind(addr).map_err(|source| TransportError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        recv_sock.set_read_timeout(Some(cfg.recv_timeout))?;
        let send_sock = UdpSocket::bind(SocketAddr::new(cfg.bind, 0)).map_err(|source| TransportError::Bind {
            addr: format!("{}:0", cfg.bind),
            source,
        })?;
        send_sock.set_broadcast(true)?;
        send_sock.set_nonblocking(true)?;

        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let up = Arc::new(AtomicBool::new(true));
        let worker = {
            let stop = Arc::clone(&stop);
            let up = Arc::clone(&up);
            let max = cfg.max_payload + HEADER_LEN;
            std::thread::Builder::new()
                .name(format!("udp-recv-{}", cfg.id))
                .spawn(move || {
                    let mut buf = vec![0u8; max.max(HEADER_LEN) + 1];
                    while !stop.load(Ordering::Relaxed) {
                        match recv_sock.recv_from(&mut buf) {
                            Ok((n, _)) => {
                                if tx.send((buf[..n].to_vec(), Instant::now())).is_err() {
                                    break;
                                }
                            }
                            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                            Err(e) if e.kind() == ErrorKind::Interrupted => {}
                            Err(e) => {
                                error!("udp receiver failed: {e}");
                                up.store(false, Ordering::Relaxed);
                                break;
                            }
                        }
                    }
                })?
        };
        Ok(UdpTransport {
            cfg,
            send_sock,
            rx,
            counter: 0,
            dedup: Deduplicator::default(),
            start: Instant::now(),
            stop,
            up,
            worker: Some(worker),
        })
    }

    pub fn local_port(&self) -> u16 {
        self.cfg.port
    }
}

impl Transport for UdpTransport {
    fn id(&self) -> DeviceId {
        self.cfg.id
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        if payload.len() > self.cfg.max_payload {
            return Err(TransportError::PayloadTooLarge {
                len: payload.len(),
                max: self.cfg.max_payload,
            });
        }
        self.counter = self.counter.wrapping_add(1);
        let bytes = Packet {
            sender: self.cfg.id,
            counter: self.counter,
            payload: payload.to_vec(),
        }
        .encode()?;
        for target in &self.cfg.targets {
            match self.send_sock.send_to(&bytes, target) {
                Ok(_) => {}
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    debug!("send buffer full, dropped datagram to {target}");
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn poll(&mut self) -> Vec<Received> {
        let mut out = Vec::new();
        loop {
            match self.rx.try_recv() {
                Ok((bytes, at)) => {
                    let received_at = at.duration_since(self.start).as_secs_f64();
                    if self.now() - received_at > self.cfg.retention {
                        continue;
                    }
                    match Packet::decode(&bytes) {
                        Ok(p) if p.sender == self.cfg.id => {}
                        Ok(p) => {
                            if self.dedup.accept(p.sender, p.counter) {
                                out.push(Received {
                                    sender: p.sender,
                                    counter: p.counter,
                                    payload: p.payload,
                                    received_at,
                                });
                            }
                        }
                        Err(e) => warn!("device {}: dropped datagram: {e}", self.cfg.id),
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    self.up.store(false, Ordering::Relaxed);
                    break;
                }
            }
        }
        out
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn is_up(&self) -> bool {
        self.up.load(Ordering::Relaxed)
    }
}

impl Drop for UdpTransport {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
