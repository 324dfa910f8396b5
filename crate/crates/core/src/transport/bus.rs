//! In-memory broadcast bus with a manual clock, for tests and the lockstep
//! driver. Packets go through the same wire encoding as the UDP driver.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use log::warn;

use super::{Deduplicator, Packet, Received, Transport, TransportError, DEFAULT_MAX_PAYLOAD};
use crate::xc_core::DeviceId;

#[derive(Debug, Default)]
struct BusInner {
    now: f64,
    retention: f64,
    queues: BTreeMap<DeviceId, VecDeque<(Vec<u8>, f64)>>,
    cut: BTreeSet<(DeviceId, DeviceId)>,
}

#[derive(Debug, Clone, Default)]
pub struct SimBus {
    inner: Arc<Mutex<BusInner>>,
}

impl SimBus {
    pub fn new(retention: f64) -> Self {
        let bus = SimBus::default();
        bus.lock().retention = retention;
        bus
    }

    fn lock(&self) -> MutexGuard<'_, BusInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn endpoint(&self, id: DeviceId) -> SimEndpoint {
        self.lock().queues.entry(id).or_default();
        SimEndpoint {
            id,
            bus: self.clone(),
            counter: 0,
            dedup: Deduplicator::default(),
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }

    pub fn set_time(&self, now: f64) {
        self.lock().now = now;
    }

    pub fn advance(&self, dt: f64) {
        self.lock().now += dt;
    }

    /// Cuts or restores the (symmetric) link between two endpoints.
    pub fn set_link(&self, a: DeviceId, b: DeviceId, up: bool) {
        let key = (a.min(b), a.max(b));
        let mut inner = self.lock();
        if up {
            inner.cut.remove(&key);
        } else {
            inner.cut.insert(key);
        }
    }

    /// Delivers raw bytes to `to` as if they arrived from the network.
    pub fn inject(&self, to: DeviceId, bytes: Vec<u8>) {
        let mut inner = self.lock();
        let now = inner.now;
        inner.queues.entry(to).or_default().push_back((bytes, now));
    }
}

#[derive(Debug)]
pub struct SimEndpoint {
    id: DeviceId,
    bus: SimBus,
    counter: u32,
    dedup: Deduplicator,
    max_payload: usize,
}

impl Transport for SimEndpoint {
    fn id(&self) -> DeviceId {
        self.id
    }

    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        if payload.len() > self.max_payload {
            return Err(TransportError::PayloadTooLarge {
                len: payload.len(),
                max: self.max_payload,
            });
        }
        self.counter = self.counter.wrapping_add(1);
        let bytes = Packet {
            sender: self.id,
            counter: self.counter,
            payload: payload.to_vec(),
        }
        .encode()?;
        let mut inner = self.bus.lock();
        let now = inner.now;
        let targets: Vec<DeviceId> = inner
            .queues
            .keys()
            .copied()
            .filter(|d| *d != self.id && !inner.cut.contains(&(self.id.min(*d), self.id.max(*d))))
            .collect();
        for d in targets {
            inner
                .queues
                .get_mut(&d)
                .expect("registered")
                .push_back((bytes.clone(), now));
        }
        Ok(())
    }

    fn poll(&mut self) -> Vec<Received> {
        let (raw, now, retention) = {
            let mut inner = self.bus.lock();
            let raw: Vec<_> = inner.queues.entry(self.id).or_default().drain(..).collect();
            (raw, inner.now, inner.retention)
        };
        let mut out = Vec::new();
        for (bytes, at) in raw {
            match Packet::decode(&bytes) {
                Ok(p) if p.sender != self.id => {
                    if now - at > retention || !self.dedup.accept(p.sender, p.counter) {
                        continue;
                    }
                    out.push(Received {
                        sender: p.sender,
                        counter: p.counter,
                        payload: p.payload,
                        received_at: at,
                    });
                }
                Ok(_) => {}
                Err(e) => warn!("device {}: dropped packet: {e}", self.id),
            }
        }
        out
    }

    fn now(&self) -> f64 {
        self.bus.lock().now
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_reaches_others_once() {
        let bus = SimBus::new(2.0);
        let mut a = bus.endpoint(DeviceId(1));
        let mut b = bus.endpoint(DeviceId(2));
        let mut c = bus.endpoint(DeviceId(3));
        a.send(b"hi").unwrap();
        assert!(a.poll().is_empty());
        assert_eq!(b.poll()[0].payload, b"hi");
        assert_eq!(c.poll().len(), 1);
        assert!(b.poll().is_empty());
    }

    #[test]
    fn replayed_datagram_delivered_once() {
        let bus = SimBus::new(2.0);
        let _a = bus.endpoint(DeviceId(1));
        let mut b = bus.endpoint(DeviceId(2));
        let bytes = Packet {
            sender: DeviceId(1),
            counter: 9,
            payload: vec![1],
        }
        .encode()
        .unwrap();
        bus.inject(DeviceId(2), bytes.clone());
        bus.inject(DeviceId(2), bytes);
        assert_eq!(b.poll().len(), 1);
    }

    #[test]
    fn stale_and_cut_links_dropped() {
        let bus = SimBus::new(2.0);
        let mut a = bus.endpoint(DeviceId(1));
        let mut b = bus.endpoint(DeviceId(2));
        a.send(b"old").unwrap();
        bus.advance(2.5);
        assert!(b.poll().is_empty());
        bus.set_link(DeviceId(1), DeviceId(2), false);
        a.send(b"cut").unwrap();
        assert!(b.poll().is_empty());
    }

    #[test]
    fn oversized_payload_refused() {
        let bus = SimBus::new(2.0);
        let mut a = bus.endpoint(DeviceId(1));
        let err = a.send(&vec![0; DEFAULT_MAX_PAYLOAD + 1]).unwrap_err();
        assert!(matches!(err, TransportError::PayloadTooLarge { .. }));
    }
}
