//! Centralized reference assignment used to check simulated runs.

use std::collections::{BTreeMap, BTreeSet};

use crate::mrta::{task_cost, RobotState, Task};
use crate::processes::ProcessKey;
use crate::xc_core::DeviceId;

/// Global view of the robots and the tasks they should share.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub robots: Vec<RobotState>,
    pub tasks: Vec<Task>,
    pub comm_radius: f64,
}

/// Connected components of the unit-disk graph over the robots' positions.
pub fn connected_components(robots: &[RobotState], radius: f64) -> Vec<BTreeSet<DeviceId>> {
    let n = robots.len();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let c = out.len();
        let mut members = BTreeSet::new();
        let mut stack = vec![start];
        comp[start] = c;
        while let Some(i) = stack.pop() {
            members.insert(robots[i].id);
            for j in 0..n {
                if comp[j] == usize::MAX && robots[i].pose.position().distance(&robots[j].pose.position()) <= radius {
                    comp[j] = c;
                    stack.push(j);
                }
            }
        }
        out.push(members);
    }
    out
}

/// For every task, the argmin of `(cost, id)` in each connected component
/// that has a robot with finite cost.
pub fn oracle_assign(snapshot: &Snapshot) -> BTreeMap<ProcessKey, BTreeSet<DeviceId>> {
    let by_id: BTreeMap<DeviceId, &RobotState> = snapshot.robots.iter().map(|r| (r.id, r)).collect();
    let components = connected_components(&snapshot.robots, snapshot.comm_radius);
    let mut out = BTreeMap::new();
    for task in &snapshot.tasks {
        let mut winners = BTreeSet::new();
        for comp in &components {
            let best = comp
                .iter()
                .map(|id| (task_cost(by_id[id], task), *id))
                .filter(|(c, _)| c.is_finite())
                .min_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.1.cmp(&b.1)));
            if let Some((_, id)) = best {
                winners.insert(id);
            }
        }
        out.insert(task.id.clone(), winners);
    }
    out
}
