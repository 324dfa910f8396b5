use std::cmp::Ordering;
use std::fmt;

use super::XcError;

/// Identifier of a device (robot / AP node).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A local literal: the values carried by neighbouring values and exports.
///
/// Ordering is total across every kind: values of different kinds order by
/// kind tag, reals use IEEE total ordering, pairs and tuples order
/// lexicographically.
#[derive(Debug, Clone)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Real(f64),
    Device(DeviceId),
    Pair(Box<Literal>, Box<Literal>),
    Tuple(Vec<Literal>),
}

impl Literal {
    pub fn unit() -> Self {
        Literal::Tuple(Vec::new())
    }

    pub fn pair(a: Literal, b: Literal) -> Self {
        Literal::Pair(Box::new(a), Box::new(b))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Literal::Bool(_) => "bool",
            Literal::Int(_) => "int",
            Literal::Real(_) => "real",
            Literal::Device(_) => "device",
            Literal::Pair(..) => "pair",
            Literal::Tuple(_) => "tuple",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Literal::Bool(_) => 0,
            Literal::Int(_) => 1,
            Literal::Real(_) => 2,
            Literal::Device(_) => 3,
            Literal::Pair(..) => 4,
            Literal::Tuple(_) => 5,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Literal::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Literal::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Literal::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_device(&self) -> Option<DeviceId> {
        match self {
            Literal::Device(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Literal, &Literal)> {
        match self {
            Literal::Pair(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Literal]> {
        match self {
            Literal::Tuple(items) => Some(items),
            _ => None,
        }
    }

    /// Shallow kind agreement; compound kinds are checked element-wise.
    pub fn same_kind(&self, other: &Literal) -> bool {
        match (self, other) {
            (Literal::Pair(a1, b1), Literal::Pair(a2, b2)) => a1.same_kind(a2) && b1.same_kind(b2),
            (Literal::Tuple(x), Literal::Tuple(y)) => {
                x.len() == y.len() && x.iter().zip(y).all(|(a, b)| a.same_kind(b))
            }
            _ => self.tag() == other.tag(),
        }
    }

    fn check_kind(&self, other: &Literal, op: &'static str) -> Result<(), XcError> {
        if self.same_kind(other) {
            Ok(())
        } else {
            Err(XcError::TypeMismatch {
                op,
                left: self.kind(),
                right: other.kind(),
            })
        }
    }

    /// Minimum of two literals of the same kind.
    pub fn try_min(&self, other: &Literal) -> Result<Literal, XcError> {
        self.check_kind(other, "min")?;
        Ok(if other < self { other.clone() } else { self.clone() })
    }

    pub fn try_max(&self, other: &Literal) -> Result<Literal, XcError> {
        self.check_kind(other, "max")?;
        Ok(if other > self { other.clone() } else { self.clone() })
    }

    /// Addition on numeric kinds. Integer addition saturates, so `i64::MAX`
    /// behaves as an absorbing infinity.
    pub fn try_add(&self, other: &Literal) -> Result<Literal, XcError> {
        match (self, other) {
            (Literal::Int(a), Literal::Int(b)) => Ok(Literal::Int(a.saturating_add(*b))),
            (Literal::Real(a), Literal::Real(b)) => Ok(Literal::Real(a + b)),
            _ => Err(XcError::TypeMismatch {
                op: "add",
                left: self.kind(),
                right: other.kind(),
            }),
        }
    }

    pub fn try_or(&self, other: &Literal) -> Result<Literal, XcError> {
        match (self, other) {
            (Literal::Bool(a), Literal::Bool(b)) => Ok(Literal::Bool(*a || *b)),
            _ => Err(XcError::TypeMismatch {
                op: "or",
                left: self.kind(),
                right: other.kind(),
            }),
        }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Literal {}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Literal::Bool(a), Literal::Bool(b)) => a.cmp(b),
            (Literal::Int(a), Literal::Int(b)) => a.cmp(b),
            (Literal::Real(a), Literal::Real(b)) => a.total_cmp(b),
            (Literal::Device(a), Literal::Device(b)) => a.cmp(b),
            (Literal::Pair(a1, b1), Literal::Pair(a2, b2)) => a1.cmp(a2).then_with(|| b1.cmp(b2)),
            (Literal::Tuple(x), Literal::Tuple(y)) => x.cmp(y),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i64::MAX) => write!(f, "inf"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Real(r) => write!(f, "{r}"),
            Literal::Device(d) => write!(f, "#{d}"),
            Literal::Pair(a, b) => write!(f, "({a}, {b})"),
            Literal::Tuple(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl From<bool> for Literal {
    fn from(b: bool) -> Self {
        Literal::Bool(b)
    }
}

impl From<i64> for Literal {
    fn from(i: i64) -> Self {
        Literal::Int(i)
    }
}

impl From<f64> for Literal {
    fn from(r: f64) -> Self {
        Literal::Real(r)
    }
}

impl From<DeviceId> for Literal {
    fn from(d: DeviceId) -> Self {
        Literal::Device(d)
    }
}
