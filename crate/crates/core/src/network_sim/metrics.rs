use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::mrta::{MrtaEvent, ReleaseReason};
use crate::xc_core::DeviceId;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskMetrics {
    pub arrival: f64,
    /// Seconds from arrival to the first claim.
    pub first_claim_latency: Option<f64>,
    pub claims: u32,
    /// Claims that took the task over from another robot (preemption or
    /// handover after a failure).
    pub reassignments: u32,
    /// Distinct pairs of robots observed executing the task concurrently.
    pub conflicts_detected: u32,
    /// Executions halted by conflict resolution.
    pub conflicts_resolved: u32,
    pub completed: bool,
    pub completion_time: Option<f64>,
    pub completed_by: Option<DeviceId>,
    pub rejected: bool,
    /// Robots holding the task at the end of the run (the completer if it
    /// was completed).
    pub final_claimants: BTreeSet<DeviceId>,
    pub(crate) assignees: BTreeSet<DeviceId>,
    pub(crate) conflict_pairs: BTreeSet<(DeviceId, DeviceId)>,
    pub(crate) handover_pending: bool,
}

impl TaskMetrics {
    pub(crate) fn new(arrival: f64) -> Self {
        TaskMetrics {
            arrival,
            ..Default::default()
        }
    }

    pub(crate) fn record(&mut self, robot: DeviceId, time: f64, event: &MrtaEvent) {
        match event {
            MrtaEvent::Claimed { preemptive, .. } => {
                self.claims += 1;
                if self.first_claim_latency.is_none() {
                    self.first_claim_latency = Some(time - self.arrival);
                }
                if *preemptive || self.handover_pending {
                    self.reassignments += 1;
                    self.handover_pending = false;
                }
                self.assignees.insert(robot);
            }
            MrtaEvent::Released { reason, .. } => {
                self.assignees.remove(&robot);
                match reason {
                    ReleaseReason::Completed => {
                        if !self.completed {
                            self.completed = true;
                            self.completion_time = Some(time);
                            self.completed_by = Some(robot);
                        }
                    }
                    ReleaseReason::Failure(_) => self.handover_pending = true,
                    ReleaseReason::Conflict => self.conflicts_resolved += 1,
                    ReleaseReason::Preempted | ReleaseReason::TerminatedElsewhere => {}
                }
            }
            MrtaEvent::ConflictObserved { other, .. } => {
                let pair = (robot.min(*other), robot.max(*other));
                if self.conflict_pairs.insert(pair) {
                    self.conflicts_detected += 1;
                }
            }
            MrtaEvent::Rejected { .. } => self.rejected = true,
            MrtaEvent::FailureNotice { .. } => {}
        }
    }

    pub(crate) fn finish(&mut self) {
        self.final_claimants = match self.completed_by {
            Some(r) => [r].into(),
            None => self.assignees.clone(),
        };
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub tasks: BTreeMap<String, TaskMetrics>,
    pub messages_sent: u64,
    pub rounds: u64,
    pub end_time: f64,
    pub timed_out: bool,
}

impl RunMetrics {
    pub fn total_reassignments(&self) -> u32 {
        self.tasks.values().map(|t| t.reassignments).sum()
    }

    pub fn total_conflicts_resolved(&self) -> u32 {
        self.tasks.values().map(|t| t.conflicts_resolved).sum()
    }

    pub fn all_completed(&self) -> bool {
        self.tasks.values().all(|t| t.completed || t.rejected)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "task,arrival,first_claim_latency,claims,reassignments,conflicts_detected,conflicts_resolved,completed,completion_time,final_claimants\n",
        );
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        for (id, t) in &self.tasks {
            let claimants: Vec<String> = t.final_claimants.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(
                out,
                "{id},{:.4},{},{},{},{},{},{},{},{}",
                t.arrival,
                opt(t.first_claim_latency),
                t.claims,
                t.reassignments,
                t.conflicts_detected,
                t.conflicts_resolved,
                t.completed,
                opt(t.completion_time),
                claimants.join(";")
            );
        }
        out
    }
}
