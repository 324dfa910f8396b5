//! Round-level evaluation model of the exchange calculus.
//!
//! A device round is evaluated against a [`RoundContext`] (its inbox of
//! neighbour payloads plus its own previous export) and produces an
//! [`Export`]. Payloads are matched between devices by [`AlignmentPath`].

mod context;
mod literal;
mod nvalue;
mod path;
mod vm;

pub use context::{exchange, retsend, Export, LocalState, RoundContext};
pub use literal::{DeviceId, Literal};
pub use nvalue::{mux, nfold, NValue};
pub use path::{AlignmentPath, Token};
pub use vm::Vm;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XcError {
    #[error("type mismatch in {op}: {left} vs {right}")]
    TypeMismatch {
        op: &'static str,
        left: &'static str,
        right: &'static str,
    },
    #[error("alignment error: path {0} evaluated twice in one round")]
    DuplicatePath(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
}
