//! Synchronous round driver over a static (but editable) neighbour graph.
//!
//! Every call to [`LockstepNet::step`] runs one round on every device; each
//! device sees the exports its neighbours produced in the previous step.

use std::collections::{BTreeMap, BTreeSet};

use crate::xc_core::{DeviceId, Export, LocalState, RoundContext, Vm, XcError};

#[derive(Debug, Clone, Default)]
struct Memory {
    export: Export,
    state: LocalState,
}

#[derive(Debug, Clone, Default)]
pub struct LockstepNet {
    devices: BTreeMap<DeviceId, Memory>,
    links: BTreeMap<DeviceId, BTreeSet<DeviceId>>,
}

impl LockstepNet {
    pub fn new(ids: impl IntoIterator<Item = DeviceId>) -> Self {
        let mut net = Self::default();
        for id in ids {
            net.add_device(id);
        }
        net
    }

    /// Builds a network from an undirected edge list over devices `0..n`.
    pub fn from_edges(n: u32, edges: &[(u32, u32)]) -> Self {
        let mut net = Self::new((0..n).map(DeviceId));
        for &(a, b) in edges {
            net.connect(DeviceId(a), DeviceId(b));
        }
        net
    }

    pub fn add_device(&mut self, id: DeviceId) {
        self.devices.entry(id).or_default();
        self.links.entry(id).or_default();
    }

    /// Removes a device together with its links and memory.
    pub fn remove_device(&mut self, id: DeviceId) {
        self.devices.remove(&id);
        if let Some(nbrs) = self.links.remove(&id) {
            for n in nbrs {
                if let Some(set) = self.links.get_mut(&n) {
                    set.remove(&id);
                }
            }
        }
    }

    pub fn connect(&mut self, a: DeviceId, b: DeviceId) {
        if a == b {
            return;
        }
        self.links.entry(a).or_default().insert(b);
        self.links.entry(b).or_default().insert(a);
    }

    pub fn disconnect(&mut self, a: DeviceId, b: DeviceId) {
        if let Some(s) = self.links.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.links.get_mut(&b) {
            s.remove(&a);
        }
    }

    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.devices.keys().copied()
    }

    pub fn neighbors(&self, id: DeviceId) -> impl Iterator<Item = DeviceId> + '_ {
        self.links.get(&id).into_iter().flatten().copied()
    }

    /// The context device `id` would evaluate against in the next step.
    pub fn context(&self, id: DeviceId) -> RoundContext {
        let mem = self.devices.get(&id).cloned().unwrap_or_default();
        let mut ctx = RoundContext::new(id, mem.export, mem.state);
        for n in self.neighbors(id) {
            if let Some(m) = self.devices.get(&n) {
                ctx.receive(n, &m.export);
            }
        }
        ctx
    }

    /// One synchronous round where `round` evaluates each device from its
    /// context and hands back the export and state to keep.
    pub fn step_with<T, E>(
        &mut self,
        mut round: impl FnMut(DeviceId, &RoundContext) -> Result<(Export, LocalState, T), E>,
    ) -> Result<BTreeMap<DeviceId, T>, E> {
        let ids: Vec<DeviceId> = self.devices().collect();
        let mut results = BTreeMap::new();
        let mut next = BTreeMap::new();
        for id in ids {
            let ctx = self.context(id);
            let (export, state, out) = round(id, &ctx)?;
            results.insert(id, out);
            next.insert(id, Memory { export, state });
        }
        self.devices = next;
        Ok(results)
    }

    /// One synchronous round on every device.
    pub fn step<T>(
        &mut self,
        mut program: impl FnMut(&mut Vm) -> Result<T, XcError>,
    ) -> Result<BTreeMap<DeviceId, T>, XcError> {
        self.step_with(|_, ctx| {
            let mut vm = Vm::new(ctx);
            let out = program(&mut vm)?;
            let (export, state) = vm.finish();
            Ok((export, state, out))
        })
    }
}
