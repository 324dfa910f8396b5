//! Command-line front end: `simulate` runs a scenario file, `node` runs a
//! live robot node over UDP.
//!
//! Exit codes: 0 success, 1 invariant violation or timeout, 2 scenario
//! or configuration error, 3 transport error, 4 gateway error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::error;

use crate::mrta::{DiameterBound, MrtaConfig};
use crate::network_sim::{self, Scenario};
use crate::node::{run_node, NodeConfig, NodeError};
use crate::operators::Hops;
use crate::transport::DEFAULT_PORT;
use crate::xc_core::DeviceId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_SCENARIO: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;
pub const EXIT_GATEWAY: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "xc-mrta",
    version,
    about = "Aggregate-programming task assignment: simulator and robot node"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Mode,
}

#[derive(Debug, Subcommand)]
pub enum Mode {
    /// Run a scenario file and write trace, metrics and timeline files.
    Simulate {
        file: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a live node over UDP with file-based robot I/O.
    Node {
        #[arg(long)]
        id: u32,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        goals: PathBuf,
        #[arg(long)]
        actions: PathBuf,
        #[arg(long)]
        feedback: PathBuf,
        #[arg(long, default_value_t = 10)]
        theta: u32,
        /// Preemption margin in percent.
        #[arg(long, default_value_t = 20.0)]
        omega: f64,
        #[arg(long)]
        preemptive: bool,
        /// Seconds between rounds.
        #[arg(long, default_value_t = 0.2)]
        round_period: f64,
        /// Seconds a received message stays usable.
        #[arg(long, default_value_t = 2.0)]
        retention: f64,
        /// Fixed diameter bound in hops (estimated at run time by default).
        #[arg(long)]
        delta: Option<u32>,
        /// Send to these addresses instead of broadcasting.
        #[arg(long, value_delimiter = ',')]
        peers: Vec<SocketAddr>,
        /// Stop after this many rounds.
        #[arg(long)]
        max_rounds: Option<u64>,
    },
}

pub fn cmd_simulate(file: &Path, seed: Option<u64>, out: &Path) -> i32 {
    let scenario = match Scenario::load(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_SCENARIO;
        }
    };
    let report = match network_sim::run(scenario, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_SCENARIO;
        }
    };
    if let Err(e) = report.write_outputs(out) {
        eprintln!("error: cannot write outputs to {}: {e}", out.display());
        return EXIT_FAILED;
    }
    print!("{}", report.summary());
    if report.ok() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn run(cli: Cli, stop: Arc<AtomicBool>) -> i32 {
    match cli.command {
        Mode::Simulate { file, seed, out } => cmd_simulate(&file, seed, &out),
        Mode::Node {
            id,
            port,
            goals,
            actions,
            feedback,
            theta,
            omega,
            preemptive,
            round_period,
            retention,
            delta,
            peers,
            max_rounds,
        } => {
            let mrta = MrtaConfig {
                theta,
                omega,
                preemptive,
                round_period,
                retention,
                delta: delta.map_or(DiameterBound::Dynamic, |d| DiameterBound::Fixed(Hops::new(d))),
                ..Default::default()
            };
            let cfg = NodeConfig {
                id: DeviceId(id),
                port,
                peers,
                goals,
                actions,
                feedback,
                mrta,
                max_rounds,
            };
            match run_node(cfg, stop) {
                Ok(_) => EXIT_OK,
                Err(e) => {
                    error!("{e}");
                    eprintln!("error: {e}");
                    match e {
                        NodeError::Transport(_) => EXIT_TRANSPORT,
                        NodeError::Gateway(_) => EXIT_GATEWAY,
                        NodeError::Config(_) => EXIT_SCENARIO,
                    }
                }
            }
        }
    }
}
