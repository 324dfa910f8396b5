use std::collections::BTreeMap;
use std::fmt;

use super::{DeviceId, Literal, XcError};

/// A neighbouring value: a default literal plus per-device overrides.
///
/// A plain local value `l` is the nvalue `l[]` with no entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NValue {
    default: Literal,
    entries: BTreeMap<DeviceId, Literal>,
}

impl NValue {
    pub fn local(default: impl Into<Literal>) -> Self {
        NValue {
            default: default.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn with_entries(default: impl Into<Literal>, entries: impl IntoIterator<Item = (DeviceId, Literal)>) -> Self {
        NValue {
            default: default.into(),
            entries: entries.into_iter().collect(),
        }
    }

    pub fn default_value(&self) -> &Literal {
        &self.default
    }

    pub fn entries(&self) -> &BTreeMap<DeviceId, Literal> {
        &self.entries
    }

    /// The literal this nvalue holds for `device`, falling back to the default.
    pub fn get(&self, device: DeviceId) -> &Literal {
        self.entries.get(&device).unwrap_or(&self.default)
    }

    pub fn set(&mut self, device: DeviceId, value: Literal) {
        self.entries.insert(device, value);
    }

    pub fn is_local(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pointwise map over the default and every entry.
    pub fn map(&self, mut f: impl FnMut(&Literal) -> Literal) -> NValue {
        NValue {
            default: f(&self.default),
            entries: self.entries.iter().map(|(d, l)| (*d, f(l))).collect(),
        }
    }

    pub fn try_map(&self, mut f: impl FnMut(&Literal) -> Result<Literal, XcError>) -> Result<NValue, XcError> {
        let default = f(&self.default)?;
        let mut entries = BTreeMap::new();
        for (d, l) in &self.entries {
            entries.insert(*d, f(l)?);
        }
        Ok(NValue { default, entries })
    }

    /// Pointwise combination; a device missing on one side takes that side's default.
    pub fn zip_with(
        &self,
        other: &NValue,
        mut f: impl FnMut(&Literal, &Literal) -> Result<Literal, XcError>,
    ) -> Result<NValue, XcError> {
        let default = f(&self.default, &other.default)?;
        let mut entries = BTreeMap::new();
        for d in self.entries.keys().chain(other.entries.keys()) {
            if !entries.contains_key(d) {
                entries.insert(*d, f(self.get(*d), other.get(*d))?);
            }
        }
        Ok(NValue { default, entries })
    }
}

impl From<Literal> for NValue {
    fn from(l: Literal) -> Self {
        NValue::local(l)
    }
}

impl fmt::Display for NValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.default)?;
        for (i, (d, l)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}->{l}")?;
        }
        write!(f, "]")
    }
}

/// Folds `f` over the neighbour entries of `w`, starting from `local`.
///
/// The entry for `self_id` is skipped: the current device contributes
/// through `local` instead. `f` must be associative and commutative for the
/// result to be independent of entry order.
pub fn nfold<F>(f: F, w: &NValue, local: &Literal, self_id: DeviceId) -> Result<Literal, XcError>
where
    F: Fn(&Literal, &Literal) -> Result<Literal, XcError>,
{
    let mut acc = local.clone();
    for (device, value) in &w.entries {
        if *device == self_id {
            continue;
        }
        acc = f(&acc, value)?;
    }
    Ok(acc)
}

/// Multiplexer: both alternatives are already evaluated, no alignment split.
pub fn mux<T>(cond: bool, when_true: T, when_false: T) -> T {
    if cond {
        when_true
    } else {
        when_false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(i: u32) -> DeviceId {
        DeviceId(i)
    }

    const INF: Literal = Literal::Int(i64::MAX);

    #[test]
    fn nfold_empty_returns_local() {
        let w = NValue::local(INF);
        assert_eq!(nfold(Literal::try_min, &w, &INF, d(0)).unwrap(), INF);
    }

    #[test]
    fn nfold_min_over_neighbours() {
        let w = NValue::with_entries(INF, [(d(1), Literal::Int(3)), (d(2), Literal::Int(7))]);
        assert_eq!(nfold(Literal::try_min, &w, &INF, d(0)).unwrap(), Literal::Int(3));
    }

    #[test]
    fn nfold_sum_over_neighbours() {
        let w = NValue::with_entries(Literal::Int(0), [(d(1), Literal::Int(2)), (d(2), Literal::Int(5))]);
        assert_eq!(
            nfold(Literal::try_add, &w, &Literal::Int(1), d(0)).unwrap(),
            Literal::Int(8)
        );
    }

    #[test]
    fn nfold_skips_self_entry() {
        let w = NValue::with_entries(Literal::Int(0), [(d(0), Literal::Int(100)), (d(1), Literal::Int(2))]);
        assert_eq!(
            nfold(Literal::try_add, &w, &Literal::Int(1), d(0)).unwrap(),
            Literal::Int(3)
        );
    }

    #[test]
    fn nfold_reports_kind_mismatch() {
        let w = NValue::with_entries(Literal::Int(0), [(d(1), Literal::Real(2.0))]);
        assert!(matches!(
            nfold(Literal::try_add, &w, &Literal::Int(1), d(0)),
            Err(XcError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn mux_selects() {
        assert_eq!(mux(true, 0, 9), 0);
        assert_eq!(mux(false, 0, 9), 9);
        assert_eq!(mux(true, 4, 4), 4);
    }

    #[test]
    fn zip_with_uses_defaults_for_missing() {
        let a = NValue::with_entries(Literal::Int(1), [(d(1), Literal::Int(10))]);
        let b = NValue::with_entries(Literal::Int(2), [(d(2), Literal::Int(20))]);
        let s = a.zip_with(&b, Literal::try_add).unwrap();
        assert_eq!(s.default_value(), &Literal::Int(3));
        assert_eq!(s.get(d(1)), &Literal::Int(12));
        assert_eq!(s.get(d(2)), &Literal::Int(21));
        assert_eq!(s.get(d(3)), &Literal::Int(3));
    }
}
