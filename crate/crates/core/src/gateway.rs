//! File-based exchange with the robot controller.
//!
//! Three comma-separated, newline-terminated record kinds:
//!
//! | file     | record                                                    |
//! |----------|-----------------------------------------------------------|
//! | goals    | `task,x,y`                                                |
//! | action   | `robot,goto,x,y,task` or `robot,stop,,,task`              |
//! | feedback | `robot,x,y,heading,task_status,system_status,battery[,task]` |
//!
//! `task_status` is one of `none|navigating|succeeded|failed`;
//! `system_status` is `ok` or `fault:<reason>`. Writers replace files
//! atomically (write to a temporary file in the same directory, then
//! rename), so a concurrent reader sees either the old or the new content.

use std::fmt;
use std::io::{self, Write as _};
use std::path::Path;
use std::time::SystemTime;

use log::warn;
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::mrta::{FailureReason, Pose, TaskStatus};
use crate::xc_core::DeviceId;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> GatewayError + '_ {
    move |source| GatewayError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalRecord {
    pub task: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionCommand {
    Goto { x: f64, y: f64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub robot: DeviceId,
    pub command: ActionCommand,
    pub task: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemStatus {
    Ok,
    Fault(FailureReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub robot: DeviceId,
    pub pose: Pose,
    pub task_status: TaskStatus,
    pub system: SystemStatus,
    pub battery: f64,
    /// Task the status refers to, when the controller reports it.
    pub task: Option<String>,
}

fn field<'a>(fields: &[&'a str], i: usize, name: &str) -> Result<&'a str, String> {
    fields.get(i).map(|s| s.trim()).ok_or_else(|| format!("missing {name}"))
}

fn real(fields: &[&str], i: usize, name: &str) -> Result<f64, String> {
    let s = field(fields, i, name)?;
    let v: f64 = s.parse().map_err(|_| format!("{name}: not a number: {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name}: not finite"))
    }
}

fn robot_id(fields: &[&str]) -> Result<DeviceId, String> {
    let s = field(fields, 0, "robot id")?;
    s.parse().map(DeviceId).map_err(|_| format!("bad robot id {s:?}"))
}

fn task_id(s: &str) -> Result<String, String> {
    if s.is_empty() {
        Err("empty task id".into())
    } else {
        Ok(s.to_owned())
    }
}

impl GoalRecord {
    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(format!("expected 3 fields, found {}", f.len()));
        }
        Ok(GoalRecord {
            task: task_id(field(&f, 0, "task id")?)?,
            x: real(&f, 1, "x")?,
            y: real(&f, 2, "y")?,
        })
    }
}

impl fmt::Display for GoalRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.task, self.x, self.y)
    }
}

impl ActionRecord {
    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("expected 5 fields, found {}", f.len()));
        }
        let command = match field(&f, 1, "command")? {
            "goto" => ActionCommand::Goto {
                x: real(&f, 2, "x")?,
                y: real(&f, 3, "y")?,
            },
            "stop" => ActionCommand::Stop,
            other => return Err(format!("unknown command {other:?}")),
        };
        Ok(ActionRecord {
            robot: robot_id(&f)?,
            command,
            task: task_id(field(&f, 4, "task id")?)?,
        })
    }
}

impl fmt::Display for ActionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.command {
            ActionCommand::Goto { x, y } => write!(f, "{},goto,{x},{y},{}", self.robot, self.task),
            ActionCommand::Stop => write!(f, "{},stop,,,{}", self.robot, self.task),
        }
    }
}

impl FeedbackRecord {
    /// Parses a feedback line; fields after the optional task id are ignored.
    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 7 {
            return Err(format!("expected at least 7 fields, found {}", f.len()));
        }
        let status_s = field(&f, 4, "task status")?;
        let task_status = TaskStatus::parse(status_s).ok_or_else(|| format!("unknown task status {status_s:?}"))?;
        let sys_s = field(&f, 5, "system status")?;
        let system = match sys_s {
            "ok" => SystemStatus::Ok,
            s => match s.strip_prefix("fault:").and_then(FailureReason::parse) {
                Some(r) => SystemStatus::Fault(r),
                None => return Err(format!("unknown system status {s:?}")),
            },
        };
        let battery = real(&f, 6, "battery")?;
        if !(0.0..=1.0).contains(&battery) {
            return Err(format!("battery {battery} outside [0, 1]"));
        }
        let task = f.get(7).map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::to_owned);
        Ok(FeedbackRecord {
            robot: robot_id(&f)?,
            pose: Pose::new(real(&f, 1, "x")?, real(&f, 2, "y")?, real(&f, 3, "heading")?),
            task_status,
            system,
            battery,
            task,
        })
    }
}

impl fmt::Display for FeedbackRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sys = match self.system {
            SystemStatus::Ok => "ok".to_owned(),
            SystemStatus::Fault(r) => format!("fault:{r}"),
        };
        write!(
            f,
            "{},{},{},{},{},{sys},{}",
            self.robot,
            self.pose.x,
            self.pose.y,
            self.pose.heading,
            self.task_status.as_str(),
            self.battery
        )?;
        if let Some(t) = &self.task {
            write!(f, ",{t}")?;
        }
        Ok(())
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a goals file body; malformed lines come back as diagnostics.
pub fn parse_goals(text: &str) -> (Vec<GoalRecord>, Vec<GatewayError>) {
    let mut goals = Vec::new();
    let mut bad = Vec::new();
    for (line, l) in records(text) {
        match GoalRecord::parse(l) {
            Ok(g) => goals.push(g),
            Err(reason) => bad.push(GatewayError::Malformed { line, reason }),
        }
    }
    (goals, bad)
}

/// Reads the goals file. An unreadable file yields no goals (logged).
pub fn read_goals(path: &Path) -> Vec<GoalRecord> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            warn!("{}: {e}", path.display());
            return Vec::new();
        }
    };
    let (goals, bad) = parse_goals(&text);
    for e in bad {
        warn!("{}: skipped goal: {e}", path.display());
    }
    goals
}

/// The last well-formed record of a feedback file body.
pub fn parse_feedback(text: &str) -> Result<FeedbackRecord, GatewayError> {
    let mut last_err = GatewayError::Malformed {
        line: 0,
        reason: "no feedback record".into(),
    };
    for (line, l) in records(text).collect::<Vec<_>>().into_iter().rev() {
        match FeedbackRecord::parse(l) {
            Ok(r) => return Ok(r),
            Err(reason) => last_err = GatewayError::Malformed { line, reason },
        }
    }
    Err(last_err)
}

/// Reads the feedback file together with its modification time.
pub fn read_feedback(path: &Path) -> Result<(FeedbackRecord, SystemTime), GatewayError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let modified = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .map_err(io_err(path))?;
    Ok((parse_feedback(&text)?, modified))
}

pub fn read_action(path: &Path) -> Result<ActionRecord, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let (line, l) = records(&text).last().ok_or(GatewayError::Malformed {
        line: 0,
        reason: "no action record".into(),
    })?;
    ActionRecord::parse(l).map_err(|reason| GatewayError::Malformed { line, reason })
}

/// Replaces `path` with `contents` atomically.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), GatewayError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| GatewayError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_action(path: &Path, record: &ActionRecord) -> Result<(), GatewayError> {
    write_atomic(path, &format!("{record}\n"))
}

pub fn write_feedback(path: &Path, record: &FeedbackRecord) -> Result<(), GatewayError> {
    write_atomic(path, &format!("{record}\n"))
}

pub fn write_goals(path: &Path, goals: &[GoalRecord]) -> Result<(), GatewayError> {
    let body: String = goals.iter().map(|g| format!("{g}\n")).collect();
    write_atomic(path, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_lines() {
        assert_eq!(
            GoalRecord::parse("T1,1.5,2.0").unwrap(),
            GoalRecord {
                task: "T1".into(),
                x: 1.5,
                y: 2.0
            }
        );
        let (goals, bad) = parse_goals("");
        assert!(goals.is_empty() && bad.is_empty());
        let (goals, bad) = parse_goals("T1,1.5,2.0\nT2,abc,2.0\n");
        assert_eq!(goals.len(), 1);
        assert!(matches!(bad[0], GatewayError::Malformed { line: 2, .. }));
    }

    #[test]
    fn action_lines() {
        let goto = ActionRecord {
            robot: DeviceId(3),
            command: ActionCommand::Goto { x: 1.5, y: 2.0 },
            task: "T1".into(),
        };
        assert_eq!(goto.to_string(), "3,goto,1.5,2,T1");
        assert_eq!(ActionRecord::parse("3,goto,1.5,2.0,T1").unwrap(), goto);
        let stop = ActionRecord {
            robot: DeviceId(3),
            command: ActionCommand::Stop,
            task: "T1".into(),
        };
        assert_eq!(stop.to_string(), "3,stop,,,T1");
        assert_eq!(ActionRecord::parse("3,stop,,,T1").unwrap(), stop);
    }

    #[test]
    fn feedback_lines() {
        let r = FeedbackRecord::parse("3,1.0,2.0,0.5,navigating,ok,0.82").unwrap();
        assert_eq!(r.battery, 0.82);
        assert_eq!(r.task_status, TaskStatus::Navigating);
        assert_eq!(r.system, SystemStatus::Ok);
        assert_eq!(r.task, None);
        let r = FeedbackRecord::parse("3,1.0,2.0,0.5,failed,fault:lifted,0.5,T1,extra,stuff").unwrap();
        assert_eq!(r.system, SystemStatus::Fault(FailureReason::Lifted));
        assert_eq!(r.task.as_deref(), Some("T1"));
        assert!(FeedbackRecord::parse("3,1.0,2.0,0.5,navigating,ok,1.5").is_err());
        assert!(FeedbackRecord::parse("3,1.0,2.0,0.5,flying,ok,0.5").is_err());
    }

    #[test]
    fn last_valid_feedback_wins() {
        let r = parse_feedback("3,1,1,0,none,ok,0.9\n3,2,2,0,navigating,ok,0.8\ngarbage\n").unwrap();
        assert_eq!(r.pose.x, 2.0);
        assert!(parse_feedback("").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("action.csv");
        let a = ActionRecord {
            robot: DeviceId(1),
            command: ActionCommand::Stop,
            task: "T9".into(),
        };
        write_action(&path, &a).unwrap();
        assert_eq!(read_action(&path).unwrap(), a);
        let b = ActionRecord {
            command: ActionCommand::Goto { x: 0.25, y: 3.0 },
            ..a
        };
        write_action(&path, &b).unwrap();
        assert_eq!(read_action(&path).unwrap(), b);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
