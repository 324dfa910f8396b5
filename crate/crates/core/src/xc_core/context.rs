use std::collections::BTreeMap;

use super::{AlignmentPath, DeviceId, Literal, NValue, XcError};

/// Path-keyed values a device broadcasts at the end of a round.
///
/// Values are full nvalues: a receiver reads the entry addressed to it, or
/// the default when it has none.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Export {
    entries: BTreeMap<AlignmentPath, NValue>,
}

impl Export {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: AlignmentPath, value: NValue) -> Result<(), XcError> {
        if self.entries.contains_key(&path) {
            return Err(XcError::DuplicatePath(path.to_string()));
        }
        self.entries.insert(path, value);
        Ok(())
    }

    pub fn get(&self, path: &AlignmentPath) -> Option<&NValue> {
        self.entries.get(path)
    }

    pub fn contains(&self, path: &AlignmentPath) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AlignmentPath, &NValue)> {
        self.entries.iter()
    }

    /// What `receiver` sees of this export.
    pub fn project(&self, receiver: DeviceId) -> BTreeMap<AlignmentPath, Literal> {
        self.entries
            .iter()
            .map(|(p, v)| (p.clone(), v.get(receiver).clone()))
            .collect()
    }
}

/// Device-private round state (never transmitted).
pub type LocalState = BTreeMap<AlignmentPath, Literal>;

/// Everything a device knows at the start of a round.
#[derive(Debug, Clone)]
pub struct RoundContext {
    self_id: DeviceId,
    inbox: BTreeMap<DeviceId, BTreeMap<AlignmentPath, Literal>>,
    prev_self_export: Export,
    prev_state: LocalState,
}

impl RoundContext {
    /// Context for a device with no history (its first round).
    pub fn first(self_id: DeviceId) -> Self {
        Self::new(self_id, Export::new(), LocalState::new())
    }

    pub fn new(self_id: DeviceId, prev_self_export: Export, prev_state: LocalState) -> Self {
        RoundContext {
            self_id,
            inbox: BTreeMap::new(),
            prev_self_export,
            prev_state,
        }
    }

    pub fn self_id(&self) -> DeviceId {
        self.self_id
    }

    /// Records `from`'s latest export, replacing any earlier one. Messages
    /// from the device itself are ignored.
    pub fn receive(&mut self, from: DeviceId, export: &Export) {
        if from == self.self_id {
            return;
        }
        self.inbox.insert(from, export.project(self.self_id));
    }

    pub fn inbox(&self) -> &BTreeMap<DeviceId, BTreeMap<AlignmentPath, Literal>> {
        &self.inbox
    }

    pub fn neighbors(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.inbox.keys().copied()
    }

    pub fn prev_self_export(&self) -> &Export {
        &self.prev_self_export
    }

    pub fn prev_state(&self) -> &LocalState {
        &self.prev_state
    }

    /// Builds the neighbouring value an `exchange` at `path` observes.
    ///
    /// Neighbour entries come from the inbox at exactly `path`. The self
    /// entry is what this device sent at `path` last round, or `init`'s
    /// value on the first evaluation. The default follows the same rule.
    pub fn gather(&self, path: &AlignmentPath, init: &NValue) -> NValue {
        let (default, own) = match self.prev_self_export.get(path) {
            Some(prev) => (prev.default_value().clone(), prev.get(self.self_id).clone()),
            None => (init.default_value().clone(), init.get(self.self_id).clone()),
        };
        let mut w = NValue::local(default);
        for (device, entries) in &self.inbox {
            if let Some(value) = entries.get(path) {
                w.set(*device, value.clone());
            }
        }
        w.set(self.self_id, own);
        w
    }
}

/// One `exchange` evaluation against an explicit path.
///
/// Builds `w` via [`RoundContext::gather`], runs `body`, records the send
/// value in `export` and returns the ret value. A second evaluation at the
/// same path within a round is an alignment error.
pub fn exchange<F>(
    ctx: &RoundContext,
    path: &AlignmentPath,
    init: NValue,
    body: F,
    export: &mut Export,
) -> Result<NValue, XcError>
where
    F: FnOnce(NValue) -> Result<(NValue, NValue), XcError>,
{
    if export.contains(path) {
        return Err(XcError::DuplicatePath(path.to_string()));
    }
    let w = ctx.gather(path, &init);
    let (ret, send) = body(w)?;
    export.insert(path.clone(), send)?;
    Ok(ret)
}

/// `return e send e`.
pub fn retsend(value: NValue) -> (NValue, NValue) {
    (value.clone(), value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xc_core::{nfold, Token};

    const INF: Literal = Literal::Int(i64::MAX);

    fn path() -> AlignmentPath {
        AlignmentPath::root().child(Token::site("dist", 0))
    }

    fn dist_body(source: bool, me: DeviceId) -> impl FnOnce(NValue) -> Result<(NValue, NValue), XcError> {
        move |w| {
            let min = nfold(Literal::try_min, &w, &INF, me)?;
            let v = if source {
                Literal::Int(0)
            } else {
                min.try_add(&Literal::Int(1))?
            };
            Ok(retsend(NValue::local(v)))
        }
    }

    #[test]
    fn first_round_uses_init_for_self() {
        let ctx = RoundContext::first(DeviceId(0));
        let w = ctx.gather(&path(), &NValue::local(INF));
        assert_eq!(w.get(DeviceId(0)), &INF);
        assert_eq!(w.entries().len(), 1);

        let mut export = Export::new();
        let ret = exchange(
            &ctx,
            &path(),
            NValue::local(INF),
            dist_body(true, DeviceId(0)),
            &mut export,
        )
        .unwrap();
        assert_eq!(ret.default_value(), &Literal::Int(0));
        assert_eq!(export.get(&path()).unwrap().default_value(), &Literal::Int(0));
    }

    #[test]
    fn later_round_uses_previous_send_for_self() {
        let mut prev = Export::new();
        prev.insert(path(), NValue::local(Literal::Int(5))).unwrap();
        let ctx = RoundContext::new(DeviceId(0), prev, LocalState::new());
        let w = ctx.gather(&path(), &NValue::local(INF));
        assert_eq!(w.get(DeviceId(0)), &Literal::Int(5));
    }

    #[test]
    fn neighbour_payload_lands_in_w() {
        let mut theirs = Export::new();
        theirs.insert(path(), NValue::local(Literal::Int(2))).unwrap();
        let mut ctx = RoundContext::first(DeviceId(0));
        ctx.receive(DeviceId(1), &theirs);
        let w = ctx.gather(&path(), &NValue::local(INF));
        assert_eq!(w.get(DeviceId(1)), &Literal::Int(2));
        // unknown neighbours read the default
        assert_eq!(w.get(DeviceId(9)), &INF);
    }

    #[test]
    fn neighbour_reads_its_own_entry_of_sent_nvalue() {
        let mut theirs = Export::new();
        theirs
            .insert(
                path(),
                NValue::with_entries(Literal::Int(0), [(DeviceId(0), Literal::Int(42))]),
            )
            .unwrap();
        let mut ctx0 = RoundContext::first(DeviceId(0));
        ctx0.receive(DeviceId(1), &theirs);
        let mut ctx2 = RoundContext::first(DeviceId(2));
        ctx2.receive(DeviceId(1), &theirs);
        assert_eq!(
            ctx0.gather(&path(), &NValue::local(INF)).get(DeviceId(1)),
            &Literal::Int(42)
        );
        assert_eq!(
            ctx2.gather(&path(), &NValue::local(INF)).get(DeviceId(1)),
            &Literal::Int(0)
        );
    }

    #[test]
    fn duplicate_path_aborts() {
        let ctx = RoundContext::first(DeviceId(0));
        let mut export = Export::new();
        exchange(&ctx, &path(), NValue::local(INF), |w| Ok(retsend(w)), &mut export).unwrap();
        let err = exchange(&ctx, &path(), NValue::local(INF), |w| Ok(retsend(w)), &mut export).unwrap_err();
        assert!(matches!(err, XcError::DuplicatePath(_)));
    }

    #[test]
    fn payload_at_other_path_is_invisible() {
        let other = AlignmentPath::root().child(Token::site("dist", 1));
        let mut theirs = Export::new();
        theirs.insert(other, NValue::local(Literal::Int(2))).unwrap();
        let mut ctx = RoundContext::first(DeviceId(0));
        ctx.receive(DeviceId(1), &theirs);
        let w = ctx.gather(&path(), &NValue::local(INF));
        assert!(!w.entries().contains_key(&DeviceId(1)));
    }
}
