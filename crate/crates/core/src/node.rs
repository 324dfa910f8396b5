//! A task-assignment node on a real (or simulated) message fabric.
//!
//! [`NodeRuntime`] turns transport messages into round contexts and round
//! exports into broadcasts. [`run_node`] adds the file gateway and the
//! periodic round schedule of a live robot.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime};

use log::{debug, info, warn};
use thiserror::Error;

use crate::gateway::{
    read_feedback, read_goals, write_action, ActionCommand, ActionRecord, GatewayError, SystemStatus,
};
use crate::mrta::{Command, MrtaConfig, MrtaEvent, MrtaNode, Pose, RoundOutcome, Sensors, Task, TaskStatus};
use crate::processes::ProcessKey;
use crate::transport::{decode_export, encode_export, Transport, TransportError, UdpConfig, UdpTransport};
use crate::xc_core::{DeviceId, Export, LocalState, RoundContext, XcError};

/// Round driver over any [`Transport`].
pub struct NodeRuntime<T> {
    node: MrtaNode,
    transport: T,
    inbox: BTreeMap<DeviceId, (Export, f64)>,
    export: Export,
    state: LocalState,
    retention: f64,
    send_failures: u64,
}

impl<T: Transport> NodeRuntime<T> {
    pub fn new(node: MrtaNode, transport: T) -> Self {
        let retention = node.config().retention;
        NodeRuntime {
            node,
            transport,
            inbox: BTreeMap::new(),
            export: Export::new(),
            state: LocalState::new(),
            retention,
            send_failures: 0,
        }
    }

    pub fn node(&self) -> &MrtaNode {
        &self.node
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn send_failures(&self) -> u64 {
        self.send_failures
    }

    /// Neighbours whose latest message is still within retention.
    pub fn neighbours(&self) -> BTreeSet<DeviceId> {
        self.inbox.keys().copied().collect()
    }

    /// The latest retained export received from `id`.
    pub fn latest_from(&self, id: DeviceId) -> Option<&Export> {
        self.inbox.get(&id).map(|(e, _)| e)
    }

    /// Drains the transport into the inbox, keeping the latest message per
    /// sender and discarding expired ones.
    pub fn receive(&mut self) {
        for msg in self.transport.poll() {
            match decode_export(&msg.payload) {
                Ok(export) => {
                    self.inbox.insert(msg.sender, (export, msg.received_at));
                }
                Err(e) => warn!("device {}: undecodable export from {}: {e}", self.node.id(), msg.sender),
            }
        }
        let now = self.transport.now();
        let retention = self.retention;
        self.inbox.retain(|_, (_, at)| now - *at <= retention);
    }

    /// Runs one round and broadcasts its export. Evaluation errors abort the
    /// round without broadcasting; send errors are logged and the round
    /// still counts.
    pub fn round(&mut self, sensors: &Sensors, arrivals: &[Task]) -> Result<RoundOutcome, XcError> {
        self.receive();
        let mut ctx = RoundContext::new(self.node.id(), self.export.clone(), self.state.clone());
        for (from, (export, _)) in &self.inbox {
            ctx.receive(*from, export);
        }
        let outcome = self.node.round(&ctx, sensors, arrivals)?;
        self.export = outcome.export.clone();
        self.state = outcome.state.clone();
        let sent = encode_export(&outcome.export).and_then(|bytes| self.transport.send(&bytes));
        if let Err(e) = sent {
            self.send_failures += 1;
            warn!("device {}: broadcast failed: {e}", self.node.id());
        }
        Ok(outcome)
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: DeviceId,
    pub port: u16,
    /// Explicit destinations; empty means broadcast on `port`.
    pub peers: Vec<SocketAddr>,
    pub goals: PathBuf,
    pub actions: PathBuf,
    pub feedback: PathBuf,
    pub mrta: MrtaConfig,
    /// Stop after this many rounds (unbounded when `None`).
    pub max_rounds: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct NodeSummary {
    pub rounds: u64,
    pub actions: Vec<ActionRecord>,
}

fn ensure_file(path: &Path) -> Result<(), GatewayError> {
    let io = |source| GatewayError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    if !path.exists() {
        std::fs::write(path, "").map_err(io)?;
    }
    Ok(())
}

/// Sensor readings from the feedback file, or a silent robot when the file
/// is missing, unparsable, for another robot, or older than `retention`.
fn sensors_from_feedback(id: DeviceId, path: &Path, retention: f64) -> Sensors {
    let silent = Sensors {
        pose: None,
        battery: 1.0,
        task_status: TaskStatus::None,
        status_task: None,
        fault: None,
    };
    let (rec, modified) = match read_feedback(path) {
        Ok(r) => r,
        Err(e) => {
            debug!("robot {id}: no usable feedback: {e}");
            return silent;
        }
    };
    if rec.robot != id {
        warn!("robot {id}: feedback is for robot {}", rec.robot);
        return silent;
    }
    let age = SystemTime::now()
        .duration_since(modified)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    if age > retention {
        debug!("robot {id}: feedback is {age:.1} s old");
        return silent;
    }
    Sensors {
        pose: Some(rec.pose),
        battery: rec.battery,
        task_status: rec.task_status,
        status_task: rec.task.map(ProcessKey::new),
        fault: match rec.system {
            SystemStatus::Ok => None,
            SystemStatus::Fault(r) => Some(r),
        },
    }
}

fn action_for(id: DeviceId, cmd: &Command) -> ActionRecord {
    match cmd {
        Command::Goto { task, target } => ActionRecord {
            robot: id,
            command: ActionCommand::Goto {
                x: target.x,
                y: target.y,
            },
            task: task.to_string(),
        },
        Command::Stop { task } => ActionRecord {
            robot: id,
            command: ActionCommand::Stop,
            task: task.to_string(),
        },
    }
}

/// Runs a live node until `stop` is set (or `max_rounds` is reached).
pub fn run_node(cfg: NodeConfig, stop: Arc<AtomicBool>) -> Result<NodeSummary, NodeError> {
    cfg.mrta.validate().map_err(|e| NodeError::Config(e.to_string()))?;
    for path in [&cfg.goals, &cfg.feedback, &cfg.actions] {
        ensure_file(path)?;
    }

    let mut udp = UdpConfig::new(cfg.id, cfg.port);
    udp.retention = cfg.mrta.retention;
    if !cfg.peers.is_empty() {
        udp.targets = cfg.peers.clone();
    }
    let transport = UdpTransport::bind(udp)?;
    let node = MrtaNode::new(cfg.id, Pose::new(0.0, 0.0, 0.0), 1.0, cfg.mrta.clone())
        .map_err(|e| NodeError::Config(e.to_string()))?;
    let mut rt = NodeRuntime::new(node, transport);
    info!("node {} up on port {}", cfg.id, cfg.port);

    let period = Duration::from_secs_f64(cfg.mrta.round_period);
    let mut seen_goals: BTreeSet<String> = BTreeSet::new();
    let mut summary = NodeSummary::default();
    let heartbeat = ((5.0 / cfg.mrta.round_period).ceil() as u64).max(1);

    while !stop.load(Ordering::Relaxed) && cfg.max_rounds.is_none_or(|m| summary.rounds < m) {
        let started = Instant::now();
        let now = rt.transport().now();

        let arrivals: Vec<Task> = read_goals(&cfg.goals)
            .into_iter()
            .filter(|g| seen_goals.insert(g.task.clone()))
            .map(|g| {
                let mut t = Task::new(g.task, g.x, g.y);
                t.arrival_time = now;
                t
            })
            .collect();
        let sensors = sensors_from_feedback(cfg.id, &cfg.feedback, cfg.mrta.retention);

        match rt.round(&sensors, &arrivals) {
            Ok(outcome) => {
                for e in &outcome.events {
                    match e {
                        MrtaEvent::Rejected { .. } | MrtaEvent::FailureNotice { .. } => warn!("node {}: {e:?}", cfg.id),
                        _ => info!("node {}: {e:?}", cfg.id),
                    }
                }
                if let Some(cmd) = &outcome.command {
                    let action = action_for(cfg.id, cmd);
                    write_action(&cfg.actions, &action)?;
                    info!("node {}: action {action}", cfg.id);
                    summary.actions.push(action);
                }
            }
            Err(e) => warn!("node {}: round aborted: {e}", cfg.id),
        }
        if !rt.transport().is_up() {
            warn!("node {}: transport down, running on stale context", cfg.id);
        }
        summary.rounds += 1;
        if summary.rounds % heartbeat == 0 {
            info!(
                "node {}: round {}, {} neighbours, task {:?}",
                cfg.id,
                summary.rounds,
                rt.neighbours().len(),
                rt.node().assignment().map(ProcessKey::as_str)
            );
        }

        let elapsed = started.elapsed();
        if elapsed < period {
            std::thread::sleep(period - elapsed);
        }
    }
    info!("node {} stopped after {} rounds", cfg.id, summary.rounds);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrta::DiameterBound;
    use crate::operators::Hops;
    use crate::transport::SimBus;

    #[test]
    fn runtime_over_bus_assigns_cheapest() {
        let cfg = MrtaConfig {
            theta: 3,
            delta: DiameterBound::Fixed(Hops::new(2)),
            ..Default::default()
        };
        let bus = SimBus::new(cfg.retention);
        let poses = [(1, 0.0), (2, 1.0), (3, 3.0)];
        let mut nodes: Vec<_> = poses
            .iter()
            .map(|&(id, x)| {
                let node = MrtaNode::new(DeviceId(id), Pose::new(x, 0.0, 0.0), 0.5, cfg.clone()).unwrap();
                NodeRuntime::new(node, bus.endpoint(DeviceId(id)))
            })
            .collect();
        let task = Task::new("T1", 2.5, 0.0);
        let mut gotos = Vec::new();
        for r in 0..30 {
            for rt in nodes.iter_mut() {
                let s = Sensors::at(rt.node().robot().pose, 0.5);
                let arr = if r == 0 { vec![task.clone()] } else { vec![] };
                let o = rt.round(&s, &arr).unwrap();
                if let Some(Command::Goto { .. }) = o.command {
                    gotos.push(rt.node().id());
                }
            }
            bus.advance(0.2);
        }
        assert_eq!(gotos, vec![DeviceId(3)]);
    }
}
