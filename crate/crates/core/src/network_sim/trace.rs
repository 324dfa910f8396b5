//! Recorded event structure: one event per device round plus the message
//! edges (`from ⇝ to`) each round consumed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::mrta::Pose;
use crate::processes::ProcessKey;
use crate::xc_core::DeviceId;

/// A message edge into a round: the sender's round that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: DeviceId,
    pub from_round: u64,
    /// Sender-receiver distance when the message was sent.
    pub distance: f64,
}

/// Something notable that happened during a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Note {
    pub kind: &'static str,
    pub task: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundEvent {
    pub device: DeviceId,
    pub round: u64,
    pub time: f64,
    pub pose: Pose,
    pub battery: f64,
    pub status: String,
    pub assignment: Option<ProcessKey>,
    pub running: BTreeSet<ProcessKey>,
    /// Diameter bound used this round (`None` if the round aborted).
    pub delta: Option<u32>,
    pub inputs: Vec<Edge>,
    pub notes: Vec<Note>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRow {
    Round(RoundEvent),
    /// Scenario-level event applied between rounds.
    Fault {
        time: f64,
        device: Option<DeviceId>,
        detail: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub rows: Vec<TraceRow>,
    /// `(time, radius)` from the start of the run, in time order.
    pub radius_changes: Vec<(f64, f64)>,
    pub retention: f64,
    pub round_period: f64,
    pub jitter: f64,
    pub speeds: BTreeMap<DeviceId, f64>,
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

impl EventTrace {
    pub fn rounds(&self) -> impl Iterator<Item = &RoundEvent> {
        self.rows.iter().filter_map(|r| match r {
            TraceRow::Round(e) => Some(e),
            TraceRow::Fault { .. } => None,
        })
    }

    pub fn radius_at(&self, time: f64) -> f64 {
        self.radius_changes
            .iter()
            .take_while(|(t, _)| *t <= time)
            .last()
            .or(self.radius_changes.first())
            .map(|(_, r)| *r)
            .unwrap_or(f64::INFINITY)
    }

    /// Checks time ordering, the radius/retention rule on every edge, the
    /// single-assignment rule and motion bounds. Returns the violations.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut index: BTreeMap<(DeviceId, u64), &RoundEvent> = BTreeMap::new();
        let mut last: BTreeMap<DeviceId, &RoundEvent> = BTreeMap::new();
        let mut last_time = f64::NEG_INFINITY;
        for row in &self.rows {
            let time = match row {
                TraceRow::Round(e) => e.time,
                TraceRow::Fault { time, .. } => *time,
            };
            if time < last_time {
                problems.push(format!("trace rows out of time order at {time:.4}"));
            }
            last_time = time;
            let TraceRow::Round(e) = row else { continue };

            if let Some(prev) = last.get(&e.device) {
                if e.round != prev.round + 1 || e.time <= prev.time {
                    problems.push(format!("device {} round {}: bad round sequence", e.device, e.round));
                }
                let speed = self.speeds.get(&e.device).copied().unwrap_or(0.0);
                let moved = prev.pose.position().distance(&e.pose.position());
                if moved > speed * (e.time - prev.time) + 1e-6 {
                    problems.push(format!("device {} round {}: moved {moved:.4} m", e.device, e.round));
                }
            } else if e.round != 0 {
                problems.push(format!("device {} starts at round {}", e.device, e.round));
            }

            for edge in &e.inputs {
                let Some(src) = index.get(&(edge.from, edge.from_round)) else {
                    problems.push(format!(
                        "device {} round {}: input {}@{} not in trace",
                        e.device, e.round, edge.from, edge.from_round
                    ));
                    continue;
                };
                if src.time >= e.time {
                    problems.push(format!("device {} round {}: input from the future", e.device, e.round));
                }
                if e.time - src.time > self.retention + 1e-9 {
                    problems.push(format!(
                        "device {} round {}: input {}@{} older than retention",
                        e.device, e.round, edge.from, edge.from_round
                    ));
                }
                if edge.distance > self.radius_at(src.time) + 1e-9 {
                    problems.push(format!(
                        "device {} round {}: input {}@{} sent out of range",
                        e.device, e.round, edge.from, edge.from_round
                    ));
                }
            }

            if let Some(t) = &e.assignment {
                if !e.running.contains(t) {
                    problems.push(format!(
                        "device {} round {}: busy on {t} without running it",
                        e.device, e.round
                    ));
                }
            }
            index.insert((e.device, e.round), e);
            last.insert(e.device, e);
        }
        problems
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("event,device,round,time,x,y,battery,status,task,keys,delta,inputs,detail\n");
        for row in &self.rows {
            match row {
                TraceRow::Fault { time, device, detail } => {
                    let dev = device.map(|d| d.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "fault,{dev},,{},,,,,,,,,{detail}", fmt_f(*time));
                }
                TraceRow::Round(e) => {
                    let keys: Vec<&str> = e.running.iter().map(ProcessKey::as_str).collect();
                    let inputs: Vec<String> = e
                        .inputs
                        .iter()
                        .map(|i| format!("{}@{}", i.from, i.from_round))
                        .collect();
                    let prefix = format!(
                        "{},{},{},{},{},{}",
                        e.device,
                        e.round,
                        fmt_f(e.time),
                        fmt_f(e.pose.x),
                        fmt_f(e.pose.y),
                        fmt_f(e.battery)
                    );
                    let _ = writeln!(
                        out,
                        "round,{prefix},{},{},{},{},{},",
                        e.status,
                        e.assignment.as_ref().map(ProcessKey::as_str).unwrap_or(""),
                        keys.join(";"),
                        e.delta.map(|d| d.to_string()).unwrap_or_default(),
                        inputs.join(";")
                    );
                    for n in &e.notes {
                        let _ = writeln!(
                            out,
                            "{},{prefix},{},{},,,,{}",
                            n.kind,
                            e.status,
                            n.task.as_deref().unwrap_or(""),
                            n.detail
                        );
                    }
                }
            }
        }
        out
    }

    /// Plot data: `time,robot,x,y,status` per round.
    pub fn timeline_csv(&self) -> String {
        let mut out = String::from("time,robot,x,y,status\n");
        for e in self.rounds() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f(e.time),
                e.device,
                fmt_f(e.pose.x),
                fmt_f(e.pose.y),
                e.status
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(device: u32, round: u64, time: f64, inputs: Vec<Edge>) -> TraceRow {
        TraceRow::Round(RoundEvent {
            device: DeviceId(device),
            round,
            time,
            pose: Pose::new(0.0, 0.0, 0.0),
            battery: 1.0,
            status: "idle".into(),
            assignment: None,
            running: BTreeSet::new(),
            delta: Some(2),
            inputs,
            notes: vec![],
        })
    }

    fn trace(rows: Vec<TraceRow>) -> EventTrace {
        EventTrace {
            rows,
            radius_changes: vec![(0.0, 3.0)],
            retention: 2.0,
            round_period: 0.2,
            jitter: 0.1,
            speeds: BTreeMap::new(),
        }
    }

    #[test]
    fn accepts_well_formed_edges() {
        let t = trace(vec![
            ev(1, 0, 0.1, vec![]),
            ev(
                2,
                0,
                0.15,
                vec![Edge {
                    from: DeviceId(1),
                    from_round: 0,
                    distance: 2.0,
                }],
            ),
        ]);
        assert!(t.check().is_empty(), "{:?}", t.check());
    }

    #[test]
    fn flags_stale_and_out_of_range_edges() {
        let t = trace(vec![
            ev(1, 0, 0.1, vec![]),
            ev(
                2,
                0,
                2.5,
                vec![Edge {
                    from: DeviceId(1),
                    from_round: 0,
                    distance: 1.0,
                }],
            ),
            ev(
                3,
                0,
                2.6,
                vec![Edge {
                    from: DeviceId(2),
                    from_round: 0,
                    distance: 4.0,
                }],
            ),
        ]);
        assert_eq!(t.check().len(), 2);
    }

    #[test]
    fn radius_lookup_follows_changes() {
        let mut t = trace(vec![]);
        t.radius_changes = vec![(0.0, 5.0), (3.0, 3.0)];
        assert_eq!(t.radius_at(1.0), 5.0);
        assert_eq!(t.radius_at(3.0), 3.0);
        assert_eq!(t.radius_at(9.0), 3.0);
    }
}
