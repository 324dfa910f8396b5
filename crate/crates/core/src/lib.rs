//! Exchange-calculus aggregate programming runtime with a self-stabilizing
//! multi-robot task assignment layer.
//!
//! - [`xc_core`]: neighbouring values, alignment and the `exchange` primitive.
//! - [`operators`]: hop gradient, bounded-diameter election, diameter
//!   estimation, stability timer.
//! - [`processes`]: keyed aggregate processes (spawn / merge / terminate).
//! - [`lockstep`]: synchronous round driver for static graphs.
//! - [`mrta`]: the task-assignment program run by every robot.
//! - [`network_sim`]: discrete-event simulator, scenarios, traces, oracle.
//! - [`transport`]: wire format, export codec, UDP driver, in-memory bus.
//! - [`gateway`]: goal / action / feedback files shared with the robot controller.
//! - [`node`]: live node loop; [`cli`]: command-line front end.

pub mod cli;
pub mod gateway;
pub mod lockstep;
pub mod mrta;
pub mod network_sim;
pub mod node;
pub mod operators;
pub mod processes;
pub mod transport;
pub mod xc_core;
