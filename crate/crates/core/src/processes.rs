//! Aggregate processes: keyed collective computations that are spawned,
//! spread to neighbours, merged by key, and terminated network-wide.
//!
//! Each key runs its behaviour under the alignment path
//! `<spawn scope>/<key>/...`, so devices running the same key align and
//! distinct keys never share payloads. Alongside the behaviour's own
//! exports every participating device publishes a status marker at
//! `<spawn scope>/<key>/__status`; neighbours discover keys only through
//! these markers.
//!
//! Termination: a device whose behaviour returns
//! [`ProcessStatus::Terminating`], or that observes a neighbour's
//! terminating marker, stops running the behaviour and keeps announcing
//! termination for `grace_rounds` rounds. It then holds a silent tombstone
//! for another `grace_rounds` rounds, during which the key cannot be
//! revived by stale messages or local generation, and finally forgets it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::xc_core::{AlignmentPath, Literal, NValue, Token, Vm, XcError};

/// Identifier of one logical aggregate process (here: a task id).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessKey(pub String);

impl ProcessKey {
    pub fn new(s: impl Into<String>) -> Self {
        ProcessKey(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProcessKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProcessKey {
    fn from(s: &str) -> Self {
        ProcessKey(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessStatus {
    /// Runs and propagates the key to neighbours.
    Active,
    /// Runs this round but does not propagate the key.
    Inactive,
    /// Starts network-wide termination of the key.
    Terminating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutput {
    pub key: ProcessKey,
    pub output: Literal,
    pub status: ProcessStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpawnResult {
    /// Outputs of keys whose behaviour ran with a status other than `Inactive`.
    pub outputs: BTreeMap<ProcessKey, ProcessOutput>,
    /// Keys whose behaviour was evaluated this round (any status).
    pub ran: BTreeSet<ProcessKey>,
    /// Keys this device is announcing as terminating.
    pub terminating: BTreeSet<ProcessKey>,
    /// Keys held as silent tombstones.
    pub tombstoned: BTreeSet<ProcessKey>,
}

impl SpawnResult {
    /// Keys the device participates in: evaluated or announcing termination.
    pub fn running(&self) -> BTreeSet<ProcessKey> {
        self.ran.union(&self.terminating).cloned().collect()
    }
}

const STATUS_TAG: &str = "__status";
const TOMB_TAG: &str = "__tomb";
const MARK_ACTIVE: i64 = 1;
const MARK_TERMINATING: i64 = 2;

fn marker_key(prefix: &AlignmentPath, path: &AlignmentPath, tag: &str) -> Option<ProcessKey> {
    match path.strip_prefix(prefix)? {
        [Token::Key(k), Token::Site { tag: t, occurrence: 0 }] if t == tag => Some(ProcessKey(k.clone())),
        _ => None,
    }
}

fn key_path(prefix: &AlignmentPath, key: &ProcessKey, tag: &str) -> AlignmentPath {
    prefix.child(Token::Key(key.0.clone())).child(Token::site(tag, 0))
}

/// Runs `behavior` for every key in `gen_set`, every key announced active by
/// a neighbour, and every key this device announced active last round.
pub fn spawn<F>(
    vm: &mut Vm,
    gen_set: &BTreeSet<ProcessKey>,
    grace_rounds: u32,
    mut behavior: F,
) -> Result<SpawnResult, XcError>
where
    F: FnMut(&mut Vm, &ProcessKey) -> Result<(Literal, ProcessStatus), XcError>,
{
    let grace = i64::from(grace_rounds.max(1));
    vm.scope("spawn", |vm| {
        let prefix = vm.path().clone();
        let ctx = vm.context();

        let mut announced_active = BTreeSet::new();
        let mut announced_terminating = BTreeSet::new();
        for entries in ctx.inbox().values() {
            for (path, value) in entries {
                if let Some(k) = marker_key(&prefix, path, STATUS_TAG) {
                    match value {
                        Literal::Int(MARK_TERMINATING) => {
                            announced_terminating.insert(k);
                        }
                        Literal::Int(MARK_ACTIVE) => {
                            announced_active.insert(k);
                        }
                        _ => {}
                    }
                }
            }
        }
        let mut own_active = BTreeSet::new();
        for (path, value) in ctx.prev_self_export().iter() {
            if let Some(k) = marker_key(&prefix, path, STATUS_TAG) {
                if value.default_value() == &Literal::Int(MARK_ACTIVE) {
                    own_active.insert(k);
                }
            }
        }
        let mut tombs = BTreeMap::new();
        for (path, value) in ctx.prev_state() {
            if let (Some(k), Some(left)) = (marker_key(&prefix, path, TOMB_TAG), value.as_int()) {
                tombs.insert(k, left);
            }
        }

        let keys: BTreeSet<ProcessKey> = gen_set
            .iter()
            .chain(&announced_active)
            .chain(&announced_terminating)
            .chain(&own_active)
            .chain(tombs.keys())
            .cloned()
            .collect();

        let mut result = SpawnResult::default();
        for key in keys {
            if let Some(&left) = tombs.get(&key) {
                let left = left - 1;
                if left > grace {
                    announce(vm, &prefix, &key, MARK_TERMINATING)?;
                    vm.put_state_at(key_path(&prefix, &key, TOMB_TAG), Literal::Int(left));
                    result.terminating.insert(key);
                } else if left > 0 {
                    vm.put_state_at(key_path(&prefix, &key, TOMB_TAG), Literal::Int(left));
                    result.tombstoned.insert(key);
                }
                continue;
            }
            if announced_terminating.contains(&key) {
                announce(vm, &prefix, &key, MARK_TERMINATING)?;
                vm.put_state_at(key_path(&prefix, &key, TOMB_TAG), Literal::Int(2 * grace));
                result.terminating.insert(key);
                continue;
            }

            let (output, status) = vm.scope_token(Token::Key(key.0.clone()), |vm| behavior(vm, &key))?;
            result.ran.insert(key.clone());
            match status {
                ProcessStatus::Active => announce(vm, &prefix, &key, MARK_ACTIVE)?,
                ProcessStatus::Inactive => {}
                ProcessStatus::Terminating => {
                    announce(vm, &prefix, &key, MARK_TERMINATING)?;
                    vm.put_state_at(key_path(&prefix, &key, TOMB_TAG), Literal::Int(2 * grace));
                    result.terminating.insert(key.clone());
                }
            }
            if status != ProcessStatus::Inactive {
                result
                    .outputs
                    .insert(key.clone(), ProcessOutput { key, output, status });
            }
        }
        Ok(result)
    })
}

fn announce(vm: &mut Vm, prefix: &AlignmentPath, key: &ProcessKey, mark: i64) -> Result<(), XcError> {
    vm.put_export_at(key_path(prefix, key, STATUS_TAG), NValue::local(Literal::Int(mark)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lockstep::LockstepNet;
    use crate::operators::hop_dist;
    use crate::xc_core::DeviceId;

    fn keys(ks: &[&str]) -> BTreeSet<ProcessKey> {
        ks.iter().map(|k| ProcessKey::from(*k)).collect()
    }

    #[test]
    fn nothing_to_run() {
        let mut net = LockstepNet::from_edges(2, &[(0, 1)]);
        let out = net
            .step(|vm| {
                spawn(vm, &BTreeSet::new(), 4, |_, _| {
                    Ok((Literal::unit(), ProcessStatus::Active))
                })
            })
            .unwrap();
        assert!(out.values().all(|r| r.running().is_empty()));
    }

    #[test]
    fn key_spreads_to_neighbour() {
        let mut net = LockstepNet::from_edges(2, &[(0, 1)]);
        let gen = |id: DeviceId, round: u32| {
            if id == DeviceId(0) && round == 0 {
                keys(&["T1"])
            } else {
                BTreeSet::new()
            }
        };
        let mut history = Vec::new();
        for round in 0..3 {
            let out = net
                .step(|vm| {
                    let g = gen(vm.self_id(), round);
                    spawn(vm, &g, 4, |_, _| Ok((Literal::unit(), ProcessStatus::Active)))
                })
                .unwrap();
            history.push(out);
        }
        assert!(history[0][&DeviceId(0)].ran.contains(&ProcessKey::from("T1")));
        assert!(history[0][&DeviceId(1)].ran.is_empty());
        assert!(history[1][&DeviceId(1)].ran.contains(&ProcessKey::from("T1")));
        // generator stopped generating, process persists
        assert!(history[2][&DeviceId(0)].ran.contains(&ProcessKey::from("T1")));
    }

    #[test]
    fn concurrent_generators_merge() {
        // both ends of a line generate the same key; the distance computed
        // inside the process sees both as sources, i.e. one computation.
        let mut net = LockstepNet::from_edges(3, &[(0, 1), (1, 2)]);
        let mut last = BTreeMap::new();
        for _ in 0..5 {
            last = net
                .step(|vm| {
                    let me = vm.self_id();
                    let g = if me != DeviceId(1) {
                        keys(&["T1"])
                    } else {
                        BTreeSet::new()
                    };
                    let r = spawn(vm, &g, 4, |vm, _| {
                        let d = hop_dist(vm, me != DeviceId(1))?;
                        Ok((d.to_literal(), ProcessStatus::Active))
                    })?;
                    Ok(r.outputs.get(&ProcessKey::from("T1")).map(|o| o.output.clone()))
                })
                .unwrap();
        }
        assert_eq!(last[&DeviceId(1)], Some(Literal::Int(1)));
        let (export, _) = {
            let ctx = net.context(DeviceId(1));
            let mut vm = Vm::new(&ctx);
            spawn(&mut vm, &BTreeSet::new(), 4, |vm, _| {
                hop_dist(vm, false)?;
                Ok((Literal::unit(), ProcessStatus::Active))
            })
            .unwrap();
            vm.finish()
        };
        // single namespace for the key: one distance entry, one status marker
        assert_eq!(export.len(), 2);
    }

    #[test]
    fn distinct_keys_are_isolated() {
        let mut net = LockstepNet::from_edges(2, &[(0, 1)]);
        let mut last = BTreeMap::new();
        for _ in 0..4 {
            last = net
                .step(|vm| {
                    let me = vm.self_id();
                    let g = if me == DeviceId(0) { keys(&["A"]) } else { keys(&["B"]) };
                    let r = spawn(vm, &g, 4, |vm, k| {
                        // each key's source is its generator
                        let src = (k.as_str() == "A") == (me == DeviceId(0));
                        Ok((hop_dist(vm, src)?.to_literal(), ProcessStatus::Active))
                    })?;
                    Ok(r.outputs
                        .into_iter()
                        .map(|(k, o)| (k, o.output))
                        .collect::<BTreeMap<_, _>>())
                })
                .unwrap();
        }
        assert_eq!(last[&DeviceId(0)][&ProcessKey::from("A")], Literal::Int(0));
        assert_eq!(last[&DeviceId(0)][&ProcessKey::from("B")], Literal::Int(1));
        assert_eq!(last[&DeviceId(1)][&ProcessKey::from("B")], Literal::Int(0));
        assert_eq!(last[&DeviceId(1)][&ProcessKey::from("A")], Literal::Int(1));
    }

    #[test]
    fn isolated_termination_collects_after_grace() {
        let mut net = LockstepNet::from_edges(1, &[]);
        let grace = 3;
        let mut running = Vec::new();
        for round in 0..12 {
            let r = net
                .step(|vm| {
                    let g = if round == 0 { keys(&["T"]) } else { BTreeSet::new() };
                    spawn(vm, &g, grace, |_, _| {
                        Ok((
                            Literal::unit(),
                            if round >= 2 {
                                ProcessStatus::Terminating
                            } else {
                                ProcessStatus::Active
                            },
                        ))
                    })
                })
                .unwrap();
            running.push(r[&DeviceId(0)].running().len());
        }
        assert_eq!(running[0], 1);
        assert!(running.iter().rev().take(3).all(|&n| n == 0));
    }

    #[test]
    fn inactive_devices_do_not_rebroadcast() {
        let mut net = LockstepNet::from_edges(3, &[(0, 1), (1, 2)]);
        let mut last = BTreeMap::new();
        for round in 0..6 {
            last = net
                .step(|vm| {
                    let me = vm.self_id();
                    let g = if me == DeviceId(0) && round == 0 {
                        keys(&["T"])
                    } else {
                        BTreeSet::new()
                    };
                    spawn(vm, &g, 4, |_, _| {
                        Ok((
                            Literal::unit(),
                            if me == DeviceId(1) {
                                ProcessStatus::Inactive
                            } else {
                                ProcessStatus::Active
                            },
                        ))
                    })
                })
                .unwrap();
        }
        assert!(last[&DeviceId(1)].ran.contains(&ProcessKey::from("T")));
        assert!(last[&DeviceId(1)].outputs.is_empty());
        assert!(last[&DeviceId(2)].ran.is_empty());
    }
}
