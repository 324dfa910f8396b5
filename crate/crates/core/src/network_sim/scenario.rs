//! Declarative simulation input.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! name = "two robots"
//! seed = 1
//! duration = 60.0          # time budget in seconds
//! comm_radius = 5.0
//!
//! [arena]
//! width = 3.5
//! height = 6.0
//!
//! [config]
//! theta = 10               # required
//! omega = 20.0             # required
//! preemptive = false
//! delta = "dynamic"        # or a fixed hop bound, e.g. delta = 4
//! round_period = 0.2
//! retention = 2.0
//!
//! [battery]
//! drain_per_meter = 0.01
//! drain_per_round = 0.0
//!
//! [[robot]]
//! id = 1
//! x = 0.5
//! y = 0.5
//! battery = 0.9
//! speed = 0.3              # optional, m/s
//!
//! [[task]]
//! id = "T1"
//! x = 3.0
//! y = 5.0
//! time = 8.0
//! recipients = [1]         # optional; every robot by default
//!
//! [[fault]]
//! time = 12.0
//! kind = "drain_battery"   # drain_battery | comm_radius | kill | lift | fail_navigation
//! robot = 1
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::mrta::{non_negative, positive, Arena, DiameterBound, MrtaConfig, Pose, Task};
use crate::operators::Hops;
use crate::xc_core::DeviceId;

pub const DEFAULT_SPEED: f64 = 0.3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: DeviceId,
    pub pose: Pose,
    pub battery: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task: Task,
    /// `None` delivers the task to every robot.
    pub recipients: Option<BTreeSet<DeviceId>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Sets the robot's battery to `level` (fraction).
    DrainBattery {
        robot: DeviceId,
        level: f64,
    },
    SetCommRadius {
        radius: f64,
    },
    KillRobot {
        robot: DeviceId,
    },
    LiftRobot {
        robot: DeviceId,
    },
    /// The robot's current (or next) navigation goal fails.
    FailNavigation {
        robot: DeviceId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultEvent {
    pub time: f64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryModel {
    pub drain_per_meter: f64,
    pub drain_per_round: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel {
            drain_per_meter: 0.01,
            drain_per_round: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub comm_radius: f64,
    pub arena: Arena,
    pub config: MrtaConfig,
    pub battery: BatteryModel,
    pub robots: Vec<RobotSpec>,
    pub tasks: Vec<TaskSpec>,
    pub faults: Vec<FaultEvent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    duration: Option<f64>,
    comm_radius: f64,
    arena: Option<RawArena>,
    config: RawConfig,
    battery: Option<RawBattery>,
    #[serde(default)]
    robot: Vec<RawRobot>,
    #[serde(default)]
    task: Vec<RawTask>,
    #[serde(default)]
    fault: Vec<RawFault>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArena {
    width: f64,
    height: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDelta {
    Fixed(u32),
    Named(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    theta: u32,
    omega: f64,
    #[serde(default)]
    preemptive: bool,
    delta: Option<RawDelta>,
    round_period: Option<f64>,
    retention: Option<f64>,
    arrival_tolerance: Option<f64>,
    critical_battery: Option<f64>,
    hop_cap: Option<u32>,
    delta_floor: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBattery {
    drain_per_meter: Option<f64>,
    drain_per_round: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    id: u32,
    x: f64,
    y: f64,
    #[serde(default)]
    heading: f64,
    battery: f64,
    speed: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: String,
    x: f64,
    y: f64,
    time: f64,
    recipients: Option<Vec<u32>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    time: f64,
    kind: String,
    robot: Option<u32>,
    level: Option<f64>,
    radius: Option<f64>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ScenarioError> {
        let invalid = |m: String| ScenarioError::Invalid(m);
        let defaults = MrtaConfig::default();
        let arena = raw
            .arena
            .map(|a| Arena {
                width: a.width,
                height: a.height,
            })
            .unwrap_or(Arena {
                width: 3.5,
                height: 6.0,
            });
        let c = raw.config;
        let delta = match c.delta {
            None => DiameterBound::Dynamic,
            Some(RawDelta::Fixed(h)) => DiameterBound::Fixed(Hops::new(h)),
            Some(RawDelta::Named(s)) if s == "dynamic" => DiameterBound::Dynamic,
            Some(RawDelta::Named(s)) => return Err(invalid(format!("config.delta: unknown value {s:?}"))),
        };
        let config = MrtaConfig {
            delta,
            theta: c.theta,
            omega: c.omega,
            preemptive: c.preemptive,
            round_period: c.round_period.unwrap_or(defaults.round_period),
            retention: c.retention.unwrap_or(defaults.retention),
            arrival_tolerance: c.arrival_tolerance.unwrap_or(defaults.arrival_tolerance),
            critical_battery: c.critical_battery.unwrap_or(defaults.critical_battery),
            hop_cap: c.hop_cap.unwrap_or(defaults.hop_cap),
            delta_floor: c.delta_floor.unwrap_or(defaults.delta_floor),
            arena: Some(arena),
        };
        config.validate().map_err(|e| invalid(format!("config: {e}")))?;

        let battery = {
            let d = BatteryModel::default();
            let b = raw.battery;
            BatteryModel {
                drain_per_meter: b.as_ref().and_then(|b| b.drain_per_meter).unwrap_or(d.drain_per_meter),
                drain_per_round: b.as_ref().and_then(|b| b.drain_per_round).unwrap_or(d.drain_per_round),
            }
        };

        let mut ids = BTreeSet::new();
        let mut robots = Vec::new();
        for r in raw.robot {
            if !ids.insert(r.id) {
                return Err(invalid(format!("robot {}: duplicate id", r.id)));
            }
            let pose = Pose::new(r.x, r.y, r.heading);
            if !arena.contains(&pose.position()) {
                return Err(invalid(format!("robot {}: start pose outside arena", r.id)));
            }
            if !(0.0..=1.0).contains(&r.battery) {
                return Err(invalid(format!("robot {}: battery must be in [0, 1]", r.id)));
            }
            let speed = r.speed.unwrap_or(DEFAULT_SPEED);
            if !non_negative(speed) {
                return Err(invalid(format!("robot {}: negative speed", r.id)));
            }
            robots.push(RobotSpec {
                id: DeviceId(r.id),
                pose,
                battery: r.battery,
                speed,
            });
        }

        let known = |id: u32, what: &str| -> Result<DeviceId, ScenarioError> {
            if ids.contains(&id) {
                Ok(DeviceId(id))
            } else {
                Err(ScenarioError::Invalid(format!("{what}: unknown robot {id}")))
            }
        };

        let mut task_ids = BTreeSet::new();
        let mut tasks = Vec::new();
        for t in raw.task {
            if !non_negative(t.time) {
                return Err(invalid(format!("task {}: time must be >= 0", t.id)));
            }
            if !task_ids.insert(t.id.clone()) {
                return Err(invalid(format!("task {}: duplicate id", t.id)));
            }
            let recipients = match t.recipients {
                None => None,
                Some(list) => Some(
                    list.into_iter()
                        .map(|r| known(r, &format!("task {}", t.id)))
                        .collect::<Result<BTreeSet<_>, _>>()?,
                ),
            };
            let mut task = Task::new(t.id, t.x, t.y);
            task.arrival_time = t.time;
            tasks.push(TaskSpec { task, recipients });
        }
        tasks.sort_by(|a, b| a.task.arrival_time.total_cmp(&b.task.arrival_time));

        let mut faults = Vec::new();
        for f in raw.fault {
            if !non_negative(f.time) {
                return Err(invalid("fault: time must be >= 0".into()));
            }
            let what = format!("fault {} at {}", f.kind, f.time);
            let robot = || {
                f.robot
                    .ok_or_else(|| ScenarioError::Invalid(format!("{what}: missing robot")))
                    .and_then(|r| known(r, &what))
            };
            let kind = match f.kind.as_str() {
                "drain_battery" => FaultKind::DrainBattery {
                    robot: robot()?,
                    level: f.level.unwrap_or(0.0),
                },
                "comm_radius" => {
                    let radius = f.radius.ok_or_else(|| invalid(format!("{what}: missing radius")))?;
                    if !positive(radius) {
                        return Err(invalid(format!("{what}: radius must be > 0")));
                    }
                    FaultKind::SetCommRadius { radius }
                }
                "kill" => FaultKind::KillRobot { robot: robot()? },
                "lift" => FaultKind::LiftRobot { robot: robot()? },
                "fail_navigation" => FaultKind::FailNavigation { robot: robot()? },
                other => return Err(invalid(format!("fault at {}: unknown kind {other:?}", f.time))),
            };
            faults.push(FaultEvent { time: f.time, kind });
        }
        faults.sort_by(|a, b| a.time.total_cmp(&b.time));

        if !positive(raw.comm_radius) {
            return Err(invalid("comm_radius must be > 0".into()));
        }
        let duration = raw.duration.unwrap_or(120.0);
        if !positive(duration) {
            return Err(invalid("duration must be > 0".into()));
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            seed: raw.seed,
            duration,
            comm_radius: raw.comm_radius,
            arena,
            config,
            battery,
            robots,
            tasks,
            faults,
        })
    }
}
