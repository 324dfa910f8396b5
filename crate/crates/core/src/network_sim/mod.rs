//! Discrete-event simulator of asynchronous robot rounds.
//!
//! Robots run task-assignment rounds every `round_period` seconds with a
//! seeded ±10% jitter. A round sees the latest message of every robot that
//! was within `comm_radius` when it broadcast, as long as the message is at
//! most `retention` seconds old. Robots drive in a straight line toward their
//! goal at constant speed and drain battery per meter driven and per round.

mod metrics;
mod oracle;
mod scenario;
mod trace;

pub use metrics::{RunMetrics, TaskMetrics};
pub use oracle::{connected_components, oracle_assign, Snapshot};
pub use scenario::{BatteryModel, FaultEvent, FaultKind, RobotSpec, Scenario, ScenarioError, TaskSpec, DEFAULT_SPEED};
pub use trace::{Edge, EventTrace, Note, RoundEvent, TraceRow};

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;
use std::rc::Rc;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mrta::{
    Availability, Command, FailureReason, MrtaEvent, MrtaNode, Point, Pose, RobotState, Sensors, Task, TaskStatus,
};
use crate::processes::ProcessKey;
use crate::xc_core::{DeviceId, Export, LocalState, RoundContext};

/// Uniform round-period jitter, as a fraction of the period.
pub const JITTER: f64 = 0.1;

#[derive(Debug, Clone)]
struct Mail {
    export: Rc<Export>,
    sent_at: f64,
    sender_round: u64,
    distance: f64,
}

#[derive(Debug)]
struct SimRobot {
    node: MrtaNode,
    pose: Pose,
    battery: f64,
    speed: f64,
    goal: Option<(ProcessKey, Point)>,
    goal_failed: bool,
    nav_fault_pending: bool,
    lifted: bool,
    alive: bool,
    next_round: f64,
    round: u64,
    last_update: f64,
    export: Export,
    state: LocalState,
    mailbox: BTreeMap<DeviceId, Mail>,
    pending: Vec<Task>,
    running: BTreeSet<ProcessKey>,
}

impl SimRobot {
    fn moving(&self) -> bool {
        self.alive && !self.lifted && !self.goal_failed && self.goal.is_some()
    }

    fn position_at(&self, t: f64) -> Point {
        let here = self.pose.position();
        match &self.goal {
            Some((_, goal)) if self.moving() => {
                let dist = here.distance(goal);
                let step = (self.speed * (t - self.last_update).max(0.0)).min(dist);
                if dist <= 0.0 || step >= dist {
                    *goal
                } else {
                    let f = step / dist;
                    Point::new(here.x + (goal.x - here.x) * f, here.y + (goal.y - here.y) * f)
                }
            }
            _ => here,
        }
    }

    /// Integrates motion and distance-proportional drain up to `t`.
    fn advance(&mut self, t: f64, battery: &BatteryModel) {
        let next = self.position_at(t);
        let moved = self.pose.position().distance(&next);
        if moved > 0.0 {
            self.pose.heading = (next.y - self.pose.y).atan2(next.x - self.pose.x);
            self.pose.x = next.x;
            self.pose.y = next.y;
            self.battery = (self.battery - battery.drain_per_meter * moved).max(0.0);
        }
        self.last_update = t;
    }

    fn status_label(&self) -> String {
        if !self.alive {
            return "dead".into();
        }
        match &self.node.robot().availability {
            Availability::Idle => "idle".into(),
            Availability::Busy(t) => format!("busy:{t}"),
            Availability::Failed(_) => "failed".into(),
        }
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub trace: EventTrace,
    /// Task executed by each robot at the end of the run.
    pub assignments: BTreeMap<DeviceId, Option<ProcessKey>>,
    /// Trace well-formedness violations (empty for a sound run).
    pub violations: Vec<String>,
}

impl SimReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && !self.metrics.timed_out
    }

    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let done = m.tasks.values().filter(|t| t.completed).count();
        let mut s = String::new();
        s.push_str(&format!("scenario: {}\n", self.scenario));
        s.push_str(&format!("seed: {}\n", self.seed));
        s.push_str(&format!("end time: {:.4} s\n", m.end_time));
        s.push_str(&format!("timed out: {}\n", m.timed_out));
        s.push_str(&format!("rounds: {}\n", m.rounds));
        s.push_str(&format!("messages sent: {}\n", m.messages_sent));
        s.push_str(&format!("tasks completed: {done}/{}\n", m.tasks.len()));
        s.push_str(&format!("reassignments: {}\n", m.total_reassignments()));
        s.push_str(&format!(
            "conflicts detected: {}\n",
            m.tasks.values().map(|t| t.conflicts_detected).sum::<u32>()
        ));
        s.push_str(&format!("conflicts resolved: {}\n", m.total_conflicts_resolved()));
        s.push_str(&format!("trace violations: {}\n", self.violations.len()));
        for v in &self.violations {
            s.push_str(&format!("  {v}\n"));
        }
        s
    }

    /// Writes `trace.csv`, `metrics.csv`, `timeline.csv` and `summary.txt`.
    pub fn write_outputs(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trace.csv"), self.trace.to_csv())?;
        std::fs::write(dir.join("metrics.csv"), self.metrics.to_csv())?;
        std::fs::write(dir.join("timeline.csv"), self.trace.timeline_csv())?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

pub struct Simulator {
    scenario: Scenario,
    seed: u64,
    rng: ChaCha8Rng,
    time: f64,
    radius: f64,
    robots: BTreeMap<DeviceId, SimRobot>,
    next_task: usize,
    next_fault: usize,
    trace: EventTrace,
    metrics: RunMetrics,
    ever_ran: BTreeSet<ProcessKey>,
    finished: bool,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let seed = scenario.seed;
        Self::with_seed(scenario, seed)
    }

    pub fn with_seed(scenario: Scenario, seed: u64) -> Result<Self, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = scenario.config.round_period;
        let mut robots = BTreeMap::new();
        let mut speeds = BTreeMap::new();
        for spec in &scenario.robots {
            let node = MrtaNode::new(spec.id, spec.pose, spec.battery, scenario.config.clone())
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            speeds.insert(spec.id, spec.speed);
            robots.insert(
                spec.id,
                SimRobot {
                    node,
                    pose: spec.pose,
                    battery: spec.battery,
                    speed: spec.speed,
                    goal: None,
                    goal_failed: false,
                    nav_fault_pending: false,
                    lifted: false,
                    alive: true,
                    next_round: rng.gen_range(0.0..period),
                    round: 0,
                    last_update: 0.0,
                    export: Export::new(),
                    state: LocalState::new(),
                    mailbox: BTreeMap::new(),
                    pending: Vec::new(),
                    running: BTreeSet::new(),
                },
            );
        }
        let trace = EventTrace {
            rows: Vec::new(),
            radius_changes: vec![(0.0, scenario.comm_radius)],
            retention: scenario.config.retention,
            round_period: period,
            jitter: JITTER,
            speeds,
        };
        Ok(Simulator {
            radius: scenario.comm_radius,
            seed,
            rng,
            time: 0.0,
            robots,
            next_task: 0,
            next_fault: 0,
            trace,
            metrics: RunMetrics::default(),
            ever_ran: BTreeSet::new(),
            finished: false,
            scenario,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn comm_radius(&self) -> f64 {
        self.radius
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    /// Robot states as seen by the task-assignment layer, with current poses.
    pub fn robot_states(&self) -> Vec<RobotState> {
        self.robots
            .values()
            .filter(|r| r.alive)
            .map(|r| {
                let mut s = r.node.robot().clone();
                s.pose = r.pose;
                s.battery = r.battery;
                s
            })
            .collect()
    }

    pub fn assignments(&self) -> BTreeMap<DeviceId, Option<ProcessKey>> {
        self.robots
            .iter()
            .map(|(id, r)| (*id, r.node.assignment().cloned()))
            .collect()
    }

    pub fn snapshot(&self, tasks: Vec<Task>) -> Snapshot {
        Snapshot {
            robots: self.robot_states(),
            tasks,
            comm_radius: self.radius,
        }
    }

    fn next_device(&self) -> Option<(DeviceId, f64)> {
        let mut best: Option<(DeviceId, f64)> = None;
        for (id, r) in &self.robots {
            if r.alive && best.is_none_or(|(_, t)| r.next_round < t) {
                best = Some((*id, r.next_round));
            }
        }
        best
    }

    fn apply_faults(&mut self, until: f64) {
        while let Some(f) = self.scenario.faults.get(self.next_fault).copied() {
            if f.time > until {
                break;
            }
            self.next_fault += 1;
            let (device, detail) = match f.kind {
                FaultKind::SetCommRadius { radius } => {
                    self.radius = radius;
                    self.trace.radius_changes.push((f.time, radius));
                    (None, format!("comm_radius={radius:.4}"))
                }
                FaultKind::DrainBattery { robot, level } => {
                    if let Some(r) = self.robots.get_mut(&robot) {
                        r.advance(f.time, &self.scenario.battery);
                        r.battery = level.clamp(0.0, 1.0);
                    }
                    (Some(robot), format!("drain_battery={level:.4}"))
                }
                FaultKind::KillRobot { robot } => {
                    if let Some(r) = self.robots.get_mut(&robot) {
                        r.advance(f.time, &self.scenario.battery);
                        r.alive = false;
                    }
                    (Some(robot), "kill".into())
                }
                FaultKind::LiftRobot { robot } => {
                    if let Some(r) = self.robots.get_mut(&robot) {
                        r.advance(f.time, &self.scenario.battery);
                        r.lifted = true;
                    }
                    (Some(robot), "lift".into())
                }
                FaultKind::FailNavigation { robot } => {
                    if let Some(r) = self.robots.get_mut(&robot) {
                        r.advance(f.time, &self.scenario.battery);
                        if r.goal.is_some() {
                            r.goal_failed = true;
                        } else {
                            r.nav_fault_pending = true;
                        }
                    }
                    (Some(robot), "fail_navigation".into())
                }
            };
            info!("t={:.3} fault: {detail}", f.time);
            self.trace.rows.push(TraceRow::Fault {
                time: f.time,
                device,
                detail,
            });
        }
    }

    fn release_tasks(&mut self, until: f64) {
        while let Some(spec) = self.scenario.tasks.get(self.next_task) {
            if spec.task.arrival_time > until {
                break;
            }
            self.next_task += 1;
            self.metrics
                .tasks
                .insert(spec.task.id.to_string(), TaskMetrics::new(spec.task.arrival_time));
            for (id, r) in self.robots.iter_mut() {
                if r.alive && spec.recipients.as_ref().is_none_or(|s| s.contains(id)) {
                    r.pending.push(spec.task.clone());
                }
            }
        }
    }

    /// Runs the earliest scheduled round. Returns `false` once the run is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some((id, t)) = self.next_device() else {
            self.finish(false);
            return false;
        };
        if t > self.scenario.duration {
            self.finish(true);
            return false;
        }
        self.time = t;
        self.apply_faults(t);
        self.release_tasks(t);
        if !self.robots[&id].alive {
            return true;
        }

        let retention = self.scenario.config.retention;
        let cfg = self.scenario.config.clone();
        let battery_model = self.scenario.battery;
        let robot = self.robots.get_mut(&id).expect("scheduled robot exists");
        robot.advance(t, &battery_model);
        robot.battery = (robot.battery - battery_model.drain_per_round).max(0.0);

        let (task_status, status_task) = match &robot.goal {
            None => (TaskStatus::None, None),
            Some((k, p)) => {
                let s = if robot.goal_failed {
                    TaskStatus::Failed
                } else if robot.pose.position().distance(p) <= cfg.arrival_tolerance {
                    TaskStatus::Succeeded
                } else {
                    TaskStatus::Navigating
                };
                (s, Some(k.clone()))
            }
        };
        let sensors = Sensors {
            pose: Some(robot.pose),
            battery: robot.battery,
            task_status,
            status_task,
            fault: robot.lifted.then_some(FailureReason::Lifted),
        };

        robot.mailbox.retain(|_, m| t - m.sent_at <= retention);
        let mut ctx = RoundContext::new(id, std::mem::take(&mut robot.export), std::mem::take(&mut robot.state));
        let mut inputs = Vec::new();
        for (from, mail) in &robot.mailbox {
            ctx.receive(*from, &mail.export);
            inputs.push(Edge {
                from: *from,
                from_round: mail.sender_round,
                distance: mail.distance,
            });
        }
        let arrivals = std::mem::take(&mut robot.pending);

        let mut notes = Vec::new();
        let outcome = match robot.node.round(&ctx, &sensors, &arrivals) {
            Ok(o) => Some(o),
            Err(e) => {
                warn!("robot {id}: round aborted: {e}");
                notes.push(Note {
                    kind: "error",
                    task: None,
                    detail: e.to_string(),
                });
                None
            }
        };

        let round = robot.round;
        robot.round += 1;
        let mut broadcast = None;
        let mut delta = None;
        match outcome {
            None => {
                robot.export = ctx.prev_self_export().clone();
                robot.state = ctx.prev_state().clone();
            }
            Some(o) => {
                match &o.command {
                    Some(Command::Goto { task, target }) => {
                        robot.goal = Some((task.clone(), *target));
                        robot.goal_failed = std::mem::take(&mut robot.nav_fault_pending);
                    }
                    Some(Command::Stop { task }) if robot.goal.as_ref().is_some_and(|(k, _)| k == task) => {
                        robot.goal = None;
                        robot.goal_failed = false;
                    }
                    _ => {}
                }
                for e in &o.events {
                    let (kind, task, detail) = describe(e);
                    if let Some(task) = &task {
                        if let Some(m) = self.metrics.tasks.get_mut(task) {
                            m.record(id, t, e);
                        }
                    }
                    debug!("t={t:.3} robot {id}: {kind} {task:?} {detail}");
                    notes.push(Note { kind, task, detail });
                }
                self.ever_ran.extend(o.running.iter().cloned());
                robot.running = o.running;
                delta = o.delta.get();
                robot.export = o.export.clone();
                robot.state = o.state;
                broadcast = Some(Rc::new(o.export));
            }
        }
        self.metrics.rounds += 1;

        let period = cfg.round_period;
        let jitter = self.rng.gen_range(-JITTER..JITTER);
        let robot = self.robots.get_mut(&id).expect("scheduled robot exists");
        robot.next_round = t + period * (1.0 + jitter);
        let event = RoundEvent {
            device: id,
            round,
            time: t,
            pose: robot.pose,
            battery: robot.battery,
            status: robot.status_label(),
            assignment: robot.node.assignment().cloned(),
            running: robot.running.clone(),
            delta,
            inputs,
            notes,
        };
        let here = robot.pose.position();

        if let Some(export) = broadcast {
            let radius = self.radius;
            for (other_id, other) in self.robots.iter_mut() {
                if *other_id == id || !other.alive {
                    continue;
                }
                let d = other.position_at(t).distance(&here);
                if d <= radius {
                    other.mailbox.insert(
                        id,
                        Mail {
                            export: Rc::clone(&export),
                            sent_at: t,
                            sender_round: round,
                            distance: d,
                        },
                    );
                }
            }
            self.metrics.messages_sent += 1;
        }
        self.trace.rows.push(TraceRow::Round(event));

        if self.quiescent() {
            self.finish(false);
            return false;
        }
        true
    }

    /// Every task has arrived and terminated, no robot runs a task process,
    /// and every scheduled fault has been applied.
    fn quiescent(&self) -> bool {
        if self.next_task < self.scenario.tasks.len() || self.next_fault < self.scenario.faults.len() {
            return false;
        }
        let alive: Vec<&SimRobot> = self.robots.values().filter(|r| r.alive).collect();
        if alive
            .iter()
            .any(|r| r.round == 0 || !r.running.is_empty() || !r.pending.is_empty())
        {
            return false;
        }
        self.metrics
            .tasks
            .iter()
            .all(|(k, m)| m.completed || (m.rejected && !self.ever_ran.contains(&ProcessKey::new(k.clone()))))
    }

    fn finish(&mut self, timed_out: bool) {
        self.finished = true;
        self.metrics.timed_out = timed_out;
        self.metrics.end_time = self.time;
        for m in self.metrics.tasks.values_mut() {
            m.finish();
        }
        if timed_out {
            warn!(
                "scenario {}: time budget exhausted at {:.3} s",
                self.scenario.name, self.time
            );
        }
    }

    /// Runs until quiescence or until `time`, whichever comes first.
    pub fn run_until(&mut self, time: f64) {
        while !self.finished {
            match self.next_device() {
                Some((_, t)) if t <= time => {
                    self.step();
                }
                _ => break,
            }
        }
    }

    pub fn run(mut self) -> SimReport {
        while self.step() {}
        self.into_report()
    }

    pub fn into_report(mut self) -> SimReport {
        if !self.finished {
            self.finish(false);
        }
        let violations = self.trace.check();
        SimReport {
            scenario: self.scenario.name.clone(),
            seed: self.seed,
            assignments: self.assignments(),
            metrics: self.metrics,
            trace: self.trace,
            violations,
        }
    }
}

fn describe(e: &MrtaEvent) -> (&'static str, Option<String>, String) {
    match e {
        MrtaEvent::Claimed { task, cost, preemptive } => (
            "claim",
            Some(task.to_string()),
            format!("cost={cost} preemptive={preemptive}"),
        ),
        MrtaEvent::Released { task, reason } => ("release", Some(task.to_string()), reason.to_string()),
        MrtaEvent::ConflictObserved { task, other } => ("conflict", Some(task.to_string()), format!("other={other}")),
        MrtaEvent::FailureNotice { reason } => ("failure", None, reason.to_string()),
        MrtaEvent::Rejected { task, reason } => ("rejected", Some(task.clone()), reason.replace(',', ";")),
    }
}

/// Loads and runs a scenario file.
pub fn run(scenario: Scenario, seed: Option<u64>) -> Result<SimReport, ScenarioError> {
    let seed = seed.unwrap_or(scenario.seed);
    Ok(Simulator::with_seed(scenario, seed)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(body: &str) -> Scenario {
        Scenario::parse(&format!(
            "comm_radius = 5.0\nduration = 60.0\n[config]\ntheta = 5\nomega = 20.0\ndelta = 2\n{body}"
        ))
        .unwrap()
    }

    #[test]
    fn no_tasks_only_idle_rounds() {
        let s = scenario("[[robot]]\nid = 1\nx = 1.0\ny = 1.0\nbattery = 0.9\n");
        let r = run(s, None).unwrap();
        assert!(r.ok());
        assert!(r.metrics.tasks.is_empty());
        assert!(r.trace.rounds().all(|e| e.status == "idle" && e.running.is_empty()));
    }

    #[test]
    fn single_robot_completes_task_at_its_position() {
        let s = scenario(
            "[[robot]]\nid = 1\nx = 1.0\ny = 1.0\nbattery = 0.9\n\
             [[task]]\nid = \"T1\"\nx = 1.0\ny = 1.0\ntime = 1.0\n",
        );
        let theta = s.config.theta as f64;
        let r = run(s, None).unwrap();
        assert!(r.ok(), "{}", r.summary());
        let t = &r.metrics.tasks["T1"];
        assert!(t.completed);
        assert_eq!(t.conflicts_detected, 0);
        let rounds = (t.completion_time.unwrap() - t.arrival) / (0.2 * 0.9);
        assert!(rounds <= theta + 3.0, "{rounds} rounds");
    }

    #[test]
    fn far_robots_never_exchange() {
        let s = Scenario::parse(
            "comm_radius = 3.0\nduration = 5.0\n[arena]\nwidth = 20.0\nheight = 20.0\n\
             [config]\ntheta = 5\nomega = 20.0\n\
             [[robot]]\nid = 1\nx = 0.0\ny = 0.0\nbattery = 0.9\n\
             [[robot]]\nid = 2\nx = 10.0\ny = 0.0\nbattery = 0.9\n",
        )
        .unwrap();
        let mut sim = Simulator::new(s).unwrap();
        sim.run_until(3.0);
        assert!(sim.trace().rounds().all(|e| e.inputs.is_empty()));
    }

    #[test]
    fn same_seed_same_trace() {
        let body = "[[robot]]\nid = 1\nx = 0.5\ny = 0.5\nbattery = 0.9\n\
                    [[robot]]\nid = 2\nx = 2.5\ny = 4.5\nbattery = 0.6\n\
                    [[task]]\nid = \"T1\"\nx = 1.5\ny = 2.0\ntime = 2.0\n";
        let a = run(scenario(body), Some(3)).unwrap().trace.to_csv();
        let b = run(scenario(body), Some(3)).unwrap().trace.to_csv();
        let c = run(scenario(body), Some(4)).unwrap().trace.to_csv();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
