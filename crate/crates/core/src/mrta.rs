//! Distributed single-task / single-robot / immediate-assignment task
//! allocation on top of aggregate processes.
//!
//! Every task is an aggregate process keyed by its id. Inside the process
//! each robot:
//!
//! 1. learns the task target (gossiped with the process),
//! 2. handles completion or execution failure of its own claim,
//! 3. computes its cost and runs a bounded-diameter election on `(cost, id)`,
//! 4. gossips the set of current claims, resolves conflicting claims, and
//!    claims the task when it has been the elected leader for `theta`
//!    consecutive rounds and the task is unassigned (or, in preemptive
//!    mode, when its cost beats the current assignee's by `omega` percent).
//!
//! Claims travel as records `(assignee, current cost, claim cost,
//! preemptive, age)`; the age counts relay hops and records older than
//! `delta + 1` hops are dropped, so claims of robots that stopped claiming
//! fade out on their own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::{debug, warn};
use thiserror::Error;

use crate::operators::{diameter_election, estimate_diameter, stable_for, ElectionValue, Hops};
use crate::processes::{spawn, ProcessKey, ProcessStatus};
use crate::xc_core::{retsend, DeviceId, Export, Literal, LocalState, NValue, RoundContext, Vm, XcError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn to_literal(self) -> Literal {
        Literal::pair(Literal::Real(self.x), Literal::Real(self.y))
    }

    fn from_literal(l: &Literal) -> Option<Point> {
        let (x, y) = l.as_pair()?;
        Some(Point::new(x.as_real()?, y.as_real()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Axis-aligned arena `[0, width] x [0, height]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: ProcessKey,
    pub target: Point,
    pub arrival_time: f64,
}

impl Task {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Task {
            id: ProcessKey::new(id),
            target: Point::new(x, y),
            arrival_time: 0.0,
        }
    }

    pub fn validate(&self, arena: Option<&Arena>) -> Result<(), MrtaError> {
        if self.id.as_str().is_empty() || self.id.as_str().contains([',', '\n']) {
            return Err(MrtaError::MalformedTask(format!("bad task id {:?}", self.id.as_str())));
        }
        if !self.target.x.is_finite() || !self.target.y.is_finite() {
            return Err(MrtaError::MalformedTask(format!("{}: non-finite target", self.id)));
        }
        if let Some(a) = arena {
            if !a.contains(&self.target) {
                return Err(MrtaError::MalformedTask(format!("{}: target outside arena", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MrtaError {
    #[error("malformed task: {0}")]
    MalformedTask(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Xc(#[from] XcError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Availability {
    Idle,
    Busy(ProcessKey),
    /// Out of service; holds the task(s) released by the failure.
    Failed(BTreeSet<ProcessKey>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: DeviceId,
    pub pose: Pose,
    pub battery: f64,
    pub availability: Availability,
    /// Tasks this robot failed to execute; its cost for them stays infinite.
    pub failed_tasks: BTreeSet<ProcessKey>,
}

impl RobotState {
    pub fn new(id: DeviceId, pose: Pose, battery: f64) -> Self {
        RobotState {
            id,
            pose,
            battery,
            availability: Availability::Idle,
            failed_tasks: BTreeSet::new(),
        }
    }

    pub fn current_task(&self) -> Option<&ProcessKey> {
        match &self.availability {
            Availability::Busy(t) => Some(t),
            _ => None,
        }
    }
}

/// Cost of assigning a task to a robot; lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost(pub f64);

impl Cost {
    pub const INFINITY: Cost = Cost(f64::INFINITY);

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{:.4}", self.0)
        } else {
            write!(f, "inf")
        }
    }
}

/// `distance × (1 − battery)`, or infinity when the robot is out of service,
/// busy on another task, or has failed this task before.
pub fn task_cost(robot: &RobotState, task: &Task) -> Cost {
    if robot.failed_tasks.contains(&task.id) {
        return Cost::INFINITY;
    }
    match &robot.availability {
        Availability::Failed(_) => Cost::INFINITY,
        Availability::Busy(t) if *t != task.id => Cost::INFINITY,
        _ => {
            let battery = robot.battery.clamp(0.0, 1.0);
            Cost(robot.pose.position().distance(&task.target) * (1.0 - battery))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailureReason {
    NavigationFailure,
    Lifted,
    CriticalBattery,
    BatteryOverheat,
    Killed,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::NavigationFailure => "navigation-failure",
            FailureReason::Lifted => "lifted",
            FailureReason::CriticalBattery => "critical-battery",
            FailureReason::BatteryOverheat => "battery-overheat",
            FailureReason::Killed => "killed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "navigation-failure" => FailureReason::NavigationFailure,
            "lifted" => FailureReason::Lifted,
            "critical-battery" => FailureReason::CriticalBattery,
            "battery-overheat" => FailureReason::BatteryOverheat,
            "killed" => FailureReason::Killed,
            _ => return None,
        })
    }

    /// Whether the robot as a whole is out of service (not just the task).
    pub fn is_system(self) -> bool {
        self != FailureReason::NavigationFailure
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Applies a failure to `robot` and returns whether peers must be told.
///
/// The current task (if any) joins the robot's failed set, pinning its cost
/// to infinity. System failures put the robot out of service; a navigation
/// failure only drops the task.
pub fn failure_notice(robot: &mut RobotState, reason: FailureReason) -> bool {
    let released: BTreeSet<ProcessKey> = robot.current_task().cloned().into_iter().collect();
    robot.failed_tasks.extend(released.iter().cloned());
    robot.availability = if reason.is_system() {
        match &robot.availability {
            Availability::Failed(prev) => Availability::Failed(prev.union(&released).cloned().collect()),
            _ => Availability::Failed(released),
        }
    } else {
        Availability::Idle
    };
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claimant {
    pub robot: DeviceId,
    pub cost: Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictDecision {
    Keep,
    Halt,
}

/// Among robots executing the same task, the lowest `(cost, id)` keeps it.
pub fn resolve_conflict(claimants: &[Claimant]) -> BTreeMap<DeviceId, ConflictDecision> {
    let winner = claimants
        .iter()
        .min_by(|a, b| a.cost.0.total_cmp(&b.cost.0).then(a.robot.cmp(&b.robot)))
        .map(|c| c.robot);
    claimants
        .iter()
        .map(|c| {
            let d = if Some(c.robot) == winner {
                ConflictDecision::Keep
            } else {
                ConflictDecision::Halt
            };
            (c.robot, d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiameterBound {
    Fixed(Hops),
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrtaConfig {
    /// Upper bound on network diameter used by the election.
    pub delta: DiameterBound,
    /// Consecutive rounds a robot must be leader before claiming.
    pub theta: u32,
    /// Percentage cost improvement needed to preempt an assignee.
    pub omega: f64,
    pub preemptive: bool,
    /// Seconds between rounds.
    pub round_period: f64,
    /// Seconds a received message stays usable.
    pub retention: f64,
    /// Distance (m) at which a task counts as reached.
    pub arrival_tolerance: f64,
    /// Battery fraction at or below which the robot reports a critical battery.
    pub critical_battery: f64,
    /// Hop cap for the diameter estimator.
    pub hop_cap: u32,
    /// Lower bound on the dynamic diameter estimate.
    pub delta_floor: u32,
    pub arena: Option<Arena>,
}

impl Default for MrtaConfig {
    fn default() -> Self {
        MrtaConfig {
            delta: DiameterBound::Dynamic,
            theta: 10,
            omega: 20.0,
            preemptive: false,
            round_period: 0.2,
            retention: 2.0,
            arrival_tolerance: 0.2,
            critical_battery: 0.05,
            hop_cap: 16,
            delta_floor: 2,
            arena: None,
        }
    }
}

/// `true` for strictly positive numbers (`false` for NaN).
pub(crate) fn positive(v: f64) -> bool {
    v > 0.0
}

/// `true` for numbers `>= 0` (`false` for NaN).
pub(crate) fn non_negative(v: f64) -> bool {
    v >= 0.0
}

impl MrtaConfig {
    pub fn validate(&self) -> Result<(), MrtaError> {
        let bad = |m: &str| Err(MrtaError::InvalidConfig(m.to_owned()));
        if self.theta < 1 {
            return bad("theta must be >= 1");
        }
        if self.preemptive && !(self.omega > 0.0 && self.omega < 100.0) {
            return bad("omega must be in (0, 100) in preemptive mode");
        }
        if !positive(self.round_period) || !positive(self.retention) {
            return bad("round_period and retention must be positive");
        }
        if !positive(self.arrival_tolerance) {
            return bad("arrival_tolerance must be positive");
        }
        if self.hop_cap == 0 {
            return bad("hop_cap must be positive");
        }
        Ok(())
    }

    /// Rounds a terminated task keeps being announced (and then tombstoned):
    /// twice the retention time.
    pub fn grace_rounds(&self) -> u32 {
        ((2.0 * self.retention / self.round_period).ceil() as u32).max(1)
    }

    /// Multiplier a preempting robot's cost must reach relative to the assignee's.
    pub fn preemption_factor(&self) -> f64 {
        1.0 - self.omega / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    None,
    Navigating,
    Succeeded,
    Failed,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::None => "none",
            TaskStatus::Navigating => "navigating",
            TaskStatus::Succeeded => "succeeded",
            TaskStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => TaskStatus::None,
            "navigating" => TaskStatus::Navigating,
            "succeeded" => TaskStatus::Succeeded,
            "failed" => TaskStatus::Failed,
            _ => return None,
        })
    }
}

/// Robot-side inputs for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    /// `None` when the controller gives no usable localization.
    pub pose: Option<Pose>,
    pub battery: f64,
    pub task_status: TaskStatus,
    /// Task the status refers to, when the controller reports it.
    pub status_task: Option<ProcessKey>,
    pub fault: Option<FailureReason>,
}

impl Sensors {
    pub fn at(pose: Pose, battery: f64) -> Self {
        Sensors {
            pose: Some(pose),
            battery,
            task_status: TaskStatus::None,
            status_task: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Goto { task: ProcessKey, target: Point },
    Stop { task: ProcessKey },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseReason {
    Completed,
    Failure(FailureReason),
    Conflict,
    Preempted,
    /// The task was terminated by another robot.
    TerminatedElsewhere,
}

impl fmt::Display for ReleaseReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReleaseReason::Completed => f.write_str("completed"),
            ReleaseReason::Failure(r) => write!(f, "failure:{r}"),
            ReleaseReason::Conflict => f.write_str("conflict"),
            ReleaseReason::Preempted => f.write_str("preempted"),
            ReleaseReason::TerminatedElsewhere => f.write_str("terminated-elsewhere"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MrtaEvent {
    Claimed {
        task: ProcessKey,
        cost: Cost,
        preemptive: bool,
    },
    Released {
        task: ProcessKey,
        reason: ReleaseReason,
    },
    ConflictObserved {
        task: ProcessKey,
        other: DeviceId,
    },
    FailureNotice {
        reason: FailureReason,
    },
    Rejected {
        task: String,
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub export: Export,
    pub state: LocalState,
    pub command: Option<Command>,
    pub events: Vec<MrtaEvent>,
    /// Task this robot executes after the round.
    pub assignment: Option<ProcessKey>,
    /// Task processes this robot takes part in (including terminating ones).
    pub running: BTreeSet<ProcessKey>,
    pub leaders: BTreeMap<ProcessKey, ElectionValue>,
    pub costs: BTreeMap<ProcessKey, Cost>,
    pub delta: Hops,
    /// Whether the robot announced a failure this round.
    pub fault_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveClaim {
    task: ProcessKey,
    target: Point,
    claim_cost: Cost,
    preemptive: bool,
    navigating_seen: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct ClaimRecord {
    assignee: DeviceId,
    cost: Cost,
    claim_cost: Cost,
    preemptive: bool,
    age: u32,
}

impl ClaimRecord {
    fn to_literal(&self) -> Literal {
        Literal::Tuple(vec![
            Literal::Device(self.assignee),
            Literal::Real(self.cost.0),
            Literal::Real(self.claim_cost.0),
            Literal::Bool(self.preemptive),
            Literal::Int(i64::from(self.age)),
        ])
    }

    fn from_literal(l: &Literal) -> Result<Self, XcError> {
        match l.as_tuple() {
            Some([Literal::Device(a), Literal::Real(c), Literal::Real(cc), Literal::Bool(p), Literal::Int(age)])
                if *age >= 0 =>
            {
                Ok(ClaimRecord {
                    assignee: *a,
                    cost: Cost(*c),
                    claim_cost: Cost(*cc),
                    preemptive: *p,
                    age: (*age).min(i64::from(u32::MAX)) as u32,
                })
            }
            _ => Err(XcError::Malformed(format!("claim record {l}"))),
        }
    }
}

fn decode_claims(l: &Literal) -> Result<Vec<ClaimRecord>, XcError> {
    l.as_tuple()
        .ok_or_else(|| XcError::Malformed(format!("claims payload {l}")))?
        .iter()
        .map(ClaimRecord::from_literal)
        .collect()
}

/// Per-robot task-assignment state machine.
#[derive(Debug, Clone)]
pub struct MrtaNode {
    cfg: MrtaConfig,
    robot: RobotState,
    claim: Option<ActiveClaim>,
    targets: BTreeMap<ProcessKey, Point>,
    fault: Option<FailureReason>,
}

struct RoundScratch<'a> {
    sensors: &'a Sensors,
    delta: Hops,
    faulty_neighbors: BTreeSet<DeviceId>,
    command: Option<Command>,
    events: Vec<MrtaEvent>,
    leaders: BTreeMap<ProcessKey, ElectionValue>,
    costs: BTreeMap<ProcessKey, Cost>,
    fault_flag: bool,
}

impl MrtaNode {
    pub fn new(id: DeviceId, pose: Pose, battery: f64, cfg: MrtaConfig) -> Result<Self, MrtaError> {
        cfg.validate()?;
        Ok(MrtaNode {
            cfg,
            robot: RobotState::new(id, pose, battery),
            claim: None,
            targets: BTreeMap::new(),
            fault: None,
        })
    }

    pub fn id(&self) -> DeviceId {
        self.robot.id
    }

    pub fn config(&self) -> &MrtaConfig {
        &self.cfg
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn assignment(&self) -> Option<&ProcessKey> {
        self.claim.as_ref().map(|c| &c.task)
    }

    /// Current navigation goal, if executing a task.
    pub fn goal(&self) -> Option<(ProcessKey, Point)> {
        self.claim.as_ref().map(|c| (c.task.clone(), c.target))
    }

    /// One round of the task-assignment program.
    ///
    /// On an evaluation error the node's state is left as it was before the
    /// round and the error is returned; the caller should skip broadcasting.
    pub fn round(&mut self, ctx: &RoundContext, sensors: &Sensors, arrivals: &[Task]) -> Result<RoundOutcome, XcError> {
        let snapshot = self.clone();
        let r = self.round_inner(ctx, sensors, arrivals);
        if r.is_err() {
            *self = snapshot;
        }
        r
    }

    fn round_inner(
        &mut self,
        ctx: &RoundContext,
        sensors: &Sensors,
        arrivals: &[Task],
    ) -> Result<RoundOutcome, XcError> {
        let mut vm = Vm::new(ctx);
        let mut scratch = RoundScratch {
            sensors,
            delta: Hops::ZERO,
            faulty_neighbors: BTreeSet::new(),
            command: None,
            events: Vec::new(),
            leaders: BTreeMap::new(),
            costs: BTreeMap::new(),
            fault_flag: false,
        };

        self.read_sensors(&mut scratch);

        let flag = scratch.fault_flag || matches!(self.robot.availability, Availability::Failed(_));
        let me = self.id();
        let mut faulty = BTreeSet::new();
        vm.exchange("fault", NValue::local(Literal::Bool(false)), |_, w| {
            faulty = w
                .entries()
                .iter()
                .filter(|(d, l)| **d != me && **l == Literal::Bool(true))
                .map(|(d, _)| *d)
                .collect();
            Ok(retsend(NValue::local(Literal::Bool(flag))))
        })?;
        scratch.faulty_neighbors = faulty;

        scratch.delta = match self.cfg.delta {
            DiameterBound::Fixed(h) => h,
            DiameterBound::Dynamic => {
                let est = estimate_diameter(&mut vm, Hops::new(self.cfg.hop_cap))?;
                est.max(Hops::new(self.cfg.delta_floor))
            }
        };

        let mut gen_set = BTreeSet::new();
        for task in arrivals {
            match task.validate(self.cfg.arena.as_ref()) {
                Ok(()) => {
                    self.targets.entry(task.id.clone()).or_insert(task.target);
                    gen_set.insert(task.id.clone());
                }
                Err(e) => {
                    warn!("robot {}: rejected task: {e}", self.id());
                    scratch.events.push(MrtaEvent::Rejected {
                        task: task.id.to_string(),
                        reason: e.to_string(),
                    });
                }
            }
        }

        let grace = self.cfg.grace_rounds();
        let result = vm.scope("tasks", |vm| {
            spawn(vm, &gen_set, grace, |vm, key| {
                self.task_processing(vm, key, &mut scratch)
            })
        })?;

        if let Some(task) = self.assignment().cloned() {
            if !result.ran.contains(&task) {
                self.release(&task, ReleaseReason::TerminatedElsewhere, &mut scratch);
            }
        }
        self.targets.retain(|k, _| result.ran.contains(k));

        let (export, state) = vm.finish();
        Ok(RoundOutcome {
            export,
            state,
            command: scratch.command,
            events: scratch.events,
            assignment: self.assignment().cloned(),
            running: result.running(),
            leaders: scratch.leaders,
            costs: scratch.costs,
            delta: scratch.delta,
            fault_flag: flag,
        })
    }

    fn read_sensors(&mut self, scratch: &mut RoundScratch) {
        let sensors = scratch.sensors;
        if let Some(pose) = sensors.pose {
            self.robot.pose = pose;
        }
        self.robot.battery = sensors.battery.clamp(0.0, 1.0);

        let fault = sensors.fault.or_else(|| {
            if sensors.pose.is_none() {
                Some(FailureReason::Killed)
            } else if self.robot.battery <= self.cfg.critical_battery {
                Some(FailureReason::CriticalBattery)
            } else {
                None
            }
        });
        match fault {
            Some(reason) if reason.is_system() => {
                if self.fault.is_none() {
                    debug!("robot {}: failure {reason}", self.id());
                    scratch.events.push(MrtaEvent::FailureNotice { reason });
                    if let Some(task) = self.assignment().cloned() {
                        self.release(&task, ReleaseReason::Failure(reason), scratch);
                    }
                    scratch.fault_flag = failure_notice(&mut self.robot, reason);
                    self.fault = Some(reason);
                }
            }
            _ => {
                if self.fault.take().is_some() {
                    self.robot.availability = match &self.claim {
                        Some(c) => Availability::Busy(c.task.clone()),
                        None => Availability::Idle,
                    };
                }
            }
        }
    }

    fn release(&mut self, task: &ProcessKey, reason: ReleaseReason, scratch: &mut RoundScratch) {
        if self.assignment() != Some(task) {
            return;
        }
        self.claim = None;
        if let Availability::Busy(_) = self.robot.availability {
            self.robot.availability = Availability::Idle;
        }
        if let ReleaseReason::Failure(_) = reason {
            self.robot.failed_tasks.insert(task.clone());
        }
        debug!("robot {}: released {task} ({reason})", self.id());
        scratch.events.push(MrtaEvent::Released {
            task: task.clone(),
            reason,
        });
        scratch.command = Some(Command::Stop { task: task.clone() });
    }

    fn claim(&mut self, task: &ProcessKey, target: Point, cost: Cost, preemptive: bool, scratch: &mut RoundScratch) {
        debug!(
            "robot {}: claims {task} at cost {cost} (preemptive: {preemptive})",
            self.id()
        );
        self.claim = Some(ActiveClaim {
            task: task.clone(),
            target,
            claim_cost: cost,
            preemptive,
            navigating_seen: false,
        });
        self.robot.availability = Availability::Busy(task.clone());
        scratch.events.push(MrtaEvent::Claimed {
            task: task.clone(),
            cost,
            preemptive,
        });
        scratch.command = Some(Command::Goto {
            task: task.clone(),
            target,
        });
    }

    /// The per-task process behaviour.
    fn task_processing(
        &mut self,
        vm: &mut Vm,
        key: &ProcessKey,
        scratch: &mut RoundScratch,
    ) -> Result<(Literal, ProcessStatus), XcError> {
        let me = vm.self_id();

        let known = self
            .targets
            .get(key)
            .map(|p| p.to_literal())
            .unwrap_or_else(Literal::unit);
        let info = vm.exchange("task", NValue::local(known), |_, w| {
            let own = w.get(me).clone();
            let v = if Point::from_literal(&own).is_some() {
                own
            } else {
                w.entries()
                    .iter()
                    .filter(|(d, _)| **d != me)
                    .map(|(_, l)| l)
                    .find(|l| Point::from_literal(l).is_some())
                    .cloned()
                    .unwrap_or_else(Literal::unit)
            };
            Ok(retsend(NValue::local(v)))
        })?;
        let Some(target) = Point::from_literal(info.default_value()) else {
            return Ok((Literal::unit(), ProcessStatus::Inactive));
        };
        self.targets.insert(key.clone(), target);
        let task = Task {
            id: key.clone(),
            target,
            arrival_time: 0.0,
        };

        // completion and execution failure of our own claim
        let mut status = ProcessStatus::Active;
        if self.assignment() == Some(key) {
            let sensors = scratch.sensors;
            let about_this = match &sensors.status_task {
                Some(t) => t == key,
                None => self.claim.as_ref().is_some_and(|c| c.navigating_seen),
            };
            if sensors.task_status == TaskStatus::Navigating && sensors.status_task.as_ref().is_none_or(|t| t == key) {
                if let Some(c) = self.claim.as_mut() {
                    c.navigating_seen = true;
                }
            }
            let reached = self.robot.pose.position().distance(&target) <= self.cfg.arrival_tolerance;
            if reached || (about_this && sensors.task_status == TaskStatus::Succeeded) {
                self.release(key, ReleaseReason::Completed, scratch);
                status = ProcessStatus::Terminating;
            } else if about_this && sensors.task_status == TaskStatus::Failed {
                let reason = FailureReason::NavigationFailure;
                scratch.events.push(MrtaEvent::FailureNotice { reason });
                self.release(key, ReleaseReason::Failure(reason), scratch);
                scratch.fault_flag |= failure_notice(&mut self.robot, reason);
            }
        }

        let cost = task_cost(&self.robot, &task);
        scratch.costs.insert(key.clone(), cost);
        let leader = diameter_election(vm, ElectionValue::new(Literal::Real(cost.0), me), scratch.delta)?;
        let stable = stable_for(vm, &Literal::Device(leader.holder), self.cfg.theta);
        scratch.leaders.insert(key.clone(), leader.clone());

        let max_age = scratch.delta.saturating_add(1);
        let faulty = scratch.faulty_neighbors.clone();
        vm.exchange("claims", NValue::local(Literal::unit()), |_, w| {
            let mut observed: BTreeMap<DeviceId, ClaimRecord> = BTreeMap::new();
            for (device, payload) in w.entries() {
                if *device == me {
                    continue;
                }
                for mut rec in decode_claims(payload)? {
                    rec.age = rec.age.saturating_add(1);
                    if rec.assignee == me || faulty.contains(&rec.assignee) || Hops::new(rec.age) > max_age {
                        continue;
                    }
                    match observed.get(&rec.assignee) {
                        Some(prev) if prev.age <= rec.age => {}
                        _ => {
                            observed.insert(rec.assignee, rec);
                        }
                    }
                }
            }

            if status != ProcessStatus::Terminating {
                if let Some(mine) = self.claim.clone().filter(|c| &c.task == key) {
                    self.check_competition(key, &mine, cost, &observed, scratch);
                } else if leader.holder == me
                    && stable
                    && cost.is_finite()
                    && self.claim.is_none()
                    && !matches!(self.robot.availability, Availability::Failed(_))
                {
                    if observed.is_empty() {
                        self.claim(key, target, cost, false, scratch);
                    } else if self.cfg.preemptive {
                        let current = observed.values().map(|r| r.cost.0).fold(f64::INFINITY, f64::min);
                        if cost.0 <= self.cfg.preemption_factor() * current {
                            self.claim(key, target, cost, true, scratch);
                        }
                    }
                }
            }

            let mut send: Vec<Literal> = observed.values().map(ClaimRecord::to_literal).collect();
            if let Some(mine) = self.claim.as_ref().filter(|c| &c.task == key) {
                send.push(
                    ClaimRecord {
                        assignee: me,
                        cost,
                        claim_cost: mine.claim_cost,
                        preemptive: mine.preemptive,
                        age: 0,
                    }
                    .to_literal(),
                );
            }
            Ok(retsend(NValue::local(Literal::Tuple(send))))
        })?;

        let output = Literal::pair(leader.key.clone(), Literal::Device(leader.holder));
        Ok((output, status))
    }

    /// Conflict handling for a robot executing `key`.
    fn check_competition(
        &mut self,
        key: &ProcessKey,
        mine: &ActiveClaim,
        _cost: Cost,
        observed: &BTreeMap<DeviceId, ClaimRecord>,
        scratch: &mut RoundScratch,
    ) {
        if !mine.preemptive && observed.values().any(|r| r.preemptive) {
            self.release(key, ReleaseReason::Preempted, scratch);
            return;
        }
        // a preemptive claim overrides the ordinary claims it displaced
        let rivals: Vec<&ClaimRecord> = observed
            .values()
            .filter(|r| !(mine.preemptive && !r.preemptive))
            .collect();
        if rivals.is_empty() {
            return;
        }
        let me = self.id();
        let mut claimants = vec![Claimant {
            robot: me,
            cost: mine.claim_cost,
        }];
        for r in &rivals {
            scratch.events.push(MrtaEvent::ConflictObserved {
                task: key.clone(),
                other: r.assignee,
            });
            claimants.push(Claimant {
                robot: r.assignee,
                cost: r.claim_cost,
            });
        }
        if resolve_conflict(&claimants).get(&me) == Some(&ConflictDecision::Halt) {
            self.release(key, ReleaseReason::Conflict, scratch);
        }
    }
}
