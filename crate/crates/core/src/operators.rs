//! Self-stabilizing building blocks: hop-count gradient, bounded-diameter
//! leader election, diameter estimation and a round-stability timer.

use std::cmp::Ordering;
use std::fmt;

use crate::xc_core::{mux, retsend, DeviceId, Literal, NValue, Vm, XcError};

/// Non-negative hop count with a saturating infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hops(u32);

impl Hops {
    pub const ZERO: Hops = Hops(0);
    pub const INFINITY: Hops = Hops(u32::MAX);

    pub fn new(h: u32) -> Self {
        Hops(h)
    }

    pub fn get(self) -> Option<u32> {
        if self.is_infinite() {
            None
        } else {
            Some(self.0)
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0 == u32::MAX
    }

    pub fn saturating_add(self, n: u32) -> Hops {
        if self.is_infinite() {
            self
        } else {
            Hops(self.0.saturating_add(n))
        }
    }

    pub fn to_literal(self) -> Literal {
        if self.is_infinite() {
            Literal::Int(i64::MAX)
        } else {
            Literal::Int(i64::from(self.0))
        }
    }

    pub fn from_literal(l: &Literal) -> Result<Hops, XcError> {
        match l {
            Literal::Int(i64::MAX) => Ok(Hops::INFINITY),
            Literal::Int(i) if *i >= 0 && *i < i64::from(u32::MAX) => Ok(Hops(*i as u32)),
            other => Err(XcError::Malformed(format!("not a hop count: {other}"))),
        }
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.get() {
            Some(h) => write!(f, "{h}"),
            None => write!(f, "inf"),
        }
    }
}

/// Candidate in a leader election: ordered by `key`, then by `holder`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectionValue {
    pub key: Literal,
    pub holder: DeviceId,
}

impl ElectionValue {
    pub fn new(key: impl Into<Literal>, holder: DeviceId) -> Self {
        ElectionValue {
            key: key.into(),
            holder,
        }
    }
}

impl PartialOrd for ElectionValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ElectionValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key).then_with(|| self.holder.cmp(&other.holder))
    }
}

const INF: Literal = Literal::Int(i64::MAX);

/// Hop-count distance from the nearest device where `source` holds.
///
/// With no source in reach the values keep growing by one per round; use
/// [`bounded_hop_dist`] when unreachable devices must settle on infinity.
pub fn hop_dist(vm: &mut Vm, source: bool) -> Result<Hops, XcError> {
    gradient(vm, source, Hops::INFINITY)
}

/// [`hop_dist`] where every value above `cap` collapses to infinity, so
/// devices cut off from all sources stabilize at infinity.
pub fn bounded_hop_dist(vm: &mut Vm, source: bool, cap: Hops) -> Result<Hops, XcError> {
    gradient(vm, source, cap)
}

fn gradient(vm: &mut Vm, source: bool, cap: Hops) -> Result<Hops, XcError> {
    let out = vm.scope("hop_dist", |vm| {
        vm.exchange("dist", NValue::local(INF), |vm, d| {
            let nearest = vm.nfold(Literal::try_min, &d, &INF)?;
            let mut v = mux(source, Literal::Int(0), nearest.try_add(&Literal::Int(1))?);
            if Hops::from_literal(&v)? > cap {
                v = INF;
            }
            Ok(retsend(NValue::local(v)))
        })
    })?;
    Hops::from_literal(out.default_value())
}

/// Stabilization bound of [`diameter_election`]: after inputs and topology
/// stop changing, every device of a connected component with diameter at
/// most `diameter` agrees on the minimum within
/// `ELECTION_ROUND_FACTOR * diameter + ELECTION_ROUND_SLACK` lockstep rounds.
pub const ELECTION_ROUND_FACTOR: u32 = 2;
pub const ELECTION_ROUND_SLACK: u32 = 2;

pub fn election_bound(diameter: Hops) -> u32 {
    diameter
        .get()
        .unwrap_or(u32::MAX / 4)
        .saturating_mul(ELECTION_ROUND_FACTOR)
        .saturating_add(ELECTION_ROUND_SLACK)
}

fn decode_candidate(l: &Literal) -> Result<(ElectionValue, u32), XcError> {
    match l.as_tuple() {
        Some([key, Literal::Device(holder), Literal::Int(age)]) if *age >= 0 => Ok((
            ElectionValue {
                key: key.clone(),
                holder: *holder,
            },
            *age as u32,
        )),
        _ => Err(XcError::Malformed(format!("election payload {l}"))),
    }
}

fn encode_candidate(v: &ElectionValue, age: u32) -> Literal {
    Literal::Tuple(vec![
        v.key.clone(),
        Literal::Device(v.holder),
        Literal::Int(i64::from(age)),
    ])
}

/// Minimum `ElectionValue` across the devices within `diameter` hops.
///
/// Each device relays the best `(value, age)` it knows, with the age
/// counting relay hops. Entries older than `diameter` are dropped, and
/// relayed entries naming this device as holder are ignored (the device's
/// own current value is authoritative). Without its holder a value's
/// minimum age grows every round, so it vanishes after `diameter` rounds.
pub fn diameter_election(vm: &mut Vm, value: ElectionValue, diameter: Hops) -> Result<ElectionValue, XcError> {
    let me = vm.self_id();
    let own = encode_candidate(&value, 0);
    let out = vm.scope("diameter_election", |vm| {
        vm.exchange("best", NValue::local(own.clone()), |_, w| {
            let mut best = (value.clone(), 0u32);
            for (device, payload) in w.entries() {
                if *device == me {
                    continue;
                }
                let (candidate, age) = decode_candidate(payload)?;
                if candidate.holder == me {
                    continue;
                }
                let age = age.saturating_add(1);
                if Hops::new(age) > diameter {
                    continue;
                }
                if (&candidate, age) < (&best.0, best.1) {
                    best = (candidate, age);
                }
            }
            Ok(retsend(NValue::local(encode_candidate(&best.0, best.1))))
        })
    })?;
    Ok(decode_candidate(out.default_value())?.0)
}

/// Upper bound on the diameter of the local connected component.
///
/// Elects the minimum device id (bounded by `cap`), computes the hop
/// gradient from it, collects the maximum distance (its eccentricity `e`)
/// back to the leader along the gradient, spreads `e` outward again and
/// returns `2e`, which satisfies `D <= 2e <= 2D`. Unknown or unbounded
/// estimates return `cap`.
pub fn estimate_diameter(vm: &mut Vm, cap: Hops) -> Result<Hops, XcError> {
    let me = vm.self_id();
    vm.scope("estimate_diameter", |vm| {
        let leader = diameter_election(vm, ElectionValue::new(Literal::Device(me), me), cap)?;
        let dist = bounded_hop_dist(vm, leader.holder == me, cap)?;
        let dist_lit = dist.to_literal();

        let collected = vm.exchange(
            "collect",
            NValue::local(Literal::pair(dist_lit.clone(), dist_lit.clone())),
            |_, w| {
                let mut acc = dist;
                if !dist.is_infinite() {
                    for (device, payload) in w.entries() {
                        if *device == me {
                            continue;
                        }
                        let (nd, nc) = decode_pair_hops(payload)?;
                        if nd == dist.saturating_add(1) {
                            acc = acc.max(nc);
                        }
                    }
                }
                Ok(retsend(NValue::local(Literal::pair(
                    dist_lit.clone(),
                    acc.to_literal(),
                ))))
            },
        )?;
        let (_, collected) = decode_pair_hops(collected.default_value())?;

        let spread = vm.exchange(
            "spread",
            NValue::local(Literal::pair(dist_lit.clone(), collected.to_literal())),
            |_, w| {
                let mut est = collected;
                if dist != Hops::ZERO && !dist.is_infinite() {
                    // min-id parent one hop closer to the leader
                    for (device, payload) in w.entries() {
                        if *device == me {
                            continue;
                        }
                        let (nd, ne) = decode_pair_hops(payload)?;
                        if nd.saturating_add(1) == dist {
                            est = ne;
                            break;
                        }
                    }
                }
                Ok(retsend(NValue::local(Literal::pair(
                    dist_lit.clone(),
                    est.to_literal(),
                ))))
            },
        )?;
        let (_, ecc) = decode_pair_hops(spread.default_value())?;
        Ok(match ecc.get() {
            Some(e) => Hops::new(e.saturating_mul(2)).min(cap),
            None => cap,
        })
    })
}

fn decode_pair_hops(l: &Literal) -> Result<(Hops, Hops), XcError> {
    match l.as_pair() {
        Some((a, b)) => Ok((Hops::from_literal(a)?, Hops::from_literal(b)?)),
        None => Err(XcError::Malformed(format!("expected pair, got {l}"))),
    }
}

/// True iff `current` has been identical for the last `theta` rounds on
/// this device (device-local rounds; `theta` of 0 is treated as 1).
pub fn stable_for(vm: &mut Vm, current: &Literal, theta: u32) -> bool {
    let seed = Literal::pair(current.clone(), Literal::Int(0));
    let state = vm.scope("stable_for", |vm| {
        vm.rep("run", seed, |prev| {
            let count = match prev.as_pair() {
                Some((last, Literal::Int(n))) if last == current => n.saturating_add(1),
                _ => 1,
            };
            Literal::pair(current.clone(), Literal::Int(count))
        })
    });
    let count = state.as_pair().and_then(|(_, n)| n.as_int()).unwrap_or(0);
    count >= i64::from(theta.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lockstep::LockstepNet;

    #[test]
    fn hops_saturate() {
        assert_eq!(Hops::INFINITY.saturating_add(1), Hops::INFINITY);
        assert_eq!(Hops::new(3).saturating_add(1), Hops::new(4));
        assert_eq!(
            Hops::from_literal(&Hops::INFINITY.to_literal()).unwrap(),
            Hops::INFINITY
        );
    }

    #[test]
    fn source_is_zero() {
        let mut net = LockstepNet::from_edges(1, &[]);
        let out = net.step(|vm| hop_dist(vm, true)).unwrap();
        assert_eq!(out[&DeviceId(0)], Hops::ZERO);
    }

    #[test]
    fn isolated_non_source_is_infinite() {
        let mut net = LockstepNet::from_edges(1, &[]);
        for _ in 0..3 {
            let out = net.step(|vm| hop_dist(vm, false)).unwrap();
            assert_eq!(out[&DeviceId(0)], Hops::INFINITY);
        }
    }

    #[test]
    fn line_gradient() {
        let mut net = LockstepNet::from_edges(3, &[(0, 1), (1, 2)]);
        let mut last = Default::default();
        for _ in 0..3 {
            last = net
                .step(|vm| {
                    let src = vm.self_id() == DeviceId(0);
                    hop_dist(vm, src)
                })
                .unwrap();
        }
        let got: Vec<_> = last.values().copied().collect();
        assert_eq!(got, vec![Hops::new(0), Hops::new(1), Hops::new(2)]);
    }

    #[test]
    fn isolated_election_returns_own_value() {
        let mut net = LockstepNet::from_edges(1, &[]);
        let out = net
            .step(|vm| diameter_election(vm, ElectionValue::new(Literal::Int(5), vm.self_id()), Hops::new(3)))
            .unwrap();
        assert_eq!(out[&DeviceId(0)], ElectionValue::new(Literal::Int(5), DeviceId(0)));
    }

    #[test]
    fn election_and_recovery_on_three_devices() {
        let keys = [4i64, 2, 9];
        let mut net = LockstepNet::from_edges(3, &[(0, 1), (1, 2)]);
        let run = |net: &mut LockstepNet| {
            net.step(|vm| {
                let k = keys[vm.self_id().0 as usize];
                diameter_election(vm, ElectionValue::new(Literal::Int(k), vm.self_id()), Hops::new(2))
            })
            .unwrap()
        };
        let mut out = Default::default();
        for _ in 0..election_bound(Hops::new(2)) {
            out = run(&mut net);
        }
        for v in out.values() {
            assert_eq!(v, &ElectionValue::new(Literal::Int(2), DeviceId(1)));
        }
        // removing the holder disconnects 0 and 2: each falls back to its own value
        net.remove_device(DeviceId(1));
        net.connect(DeviceId(0), DeviceId(2));
        for _ in 0..election_bound(Hops::new(2)) {
            out = run(&mut net);
        }
        for v in out.values() {
            assert_eq!(v, &ElectionValue::new(Literal::Int(4), DeviceId(0)));
        }
    }

    #[test]
    fn stable_for_counts_consecutive_rounds() {
        let mut net = LockstepNet::from_edges(1, &[]);
        // theta = 1: always true
        let r = net.step(|vm| Ok(stable_for(vm, &Literal::Int(1), 1))).unwrap();
        assert!(r[&DeviceId(0)]);

        // changing every round with theta = 2: never true
        let mut net = LockstepNet::from_edges(1, &[]);
        for round in 0..6i64 {
            let r = net.step(|vm| Ok(stable_for(vm, &Literal::Int(round), 2))).unwrap();
            assert!(!r[&DeviceId(0)]);
        }

        // constant from round 5 on with theta = 3: first true at round 7
        let mut net = LockstepNet::from_edges(1, &[]);
        let mut first_true = None;
        for round in 0..12i64 {
            let v = if round < 5 { round } else { 100 };
            let r = net.step(|vm| Ok(stable_for(vm, &Literal::Int(v), 3))).unwrap();
            if r[&DeviceId(0)] && first_true.is_none() {
                first_true = Some(round);
            }
        }
        assert_eq!(first_true, Some(7));
    }

    #[test]
    fn diameter_estimates() {
        fn settle(net: &mut LockstepNet) -> Vec<Hops> {
            let mut out = Default::default();
            for _ in 0..40 {
                out = net.step(|vm| estimate_diameter(vm, Hops::new(16))).unwrap();
            }
            out.into_values().collect()
        }
        let mut single = LockstepNet::from_edges(1, &[]);
        assert_eq!(settle(&mut single), vec![Hops::ZERO]);

        let mut line = LockstepNet::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        for h in settle(&mut line) {
            assert!((3..=6).contains(&h.get().unwrap()), "{h}");
        }

        let mut edges = Vec::new();
        for a in 0..5 {
            for b in (a + 1)..5 {
                edges.push((a, b));
            }
        }
        let mut complete = LockstepNet::from_edges(5, &edges);
        for h in settle(&mut complete) {
            assert!((1..=2).contains(&h.get().unwrap()), "{h}");
        }
    }
}
