//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::net::UdpSocket;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.scenario"))
}

/// Erdős–Rényi graph over `0..n`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: u32, p: f64) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Random spanning tree plus extra edges with probability `p`.
pub fn connected_graph(rng: &mut ChaCha8Rng, n: u32, p: f64) -> Vec<(u32, u32)> {
    let mut order: Vec<u32> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    for i in 1..order.len() {
        let parent = order[rng.gen_range(0..i)];
        let (a, b) = (parent.min(order[i]), parent.max(order[i]));
        edges.insert((a, b));
    }
    for e in random_graph(rng, n, p) {
        edges.insert(e);
    }
    edges.into_iter().collect()
}

fn adjacency(n: u32, edges: &[(u32, u32)], removed: &BTreeSet<u32>) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); n as usize];
    for &(a, b) in edges {
        if removed.contains(&a) || removed.contains(&b) {
            continue;
        }
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    adj
}

/// Multi-source BFS; `None` marks unreachable devices.
pub fn bfs(n: u32, edges: &[(u32, u32)], sources: &[u32]) -> Vec<Option<u32>> {
    let adj = adjacency(n, edges, &BTreeSet::new());
    let mut dist = vec![None; n as usize];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s as usize] = Some(0);
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize].unwrap();
        for &v in &adj[u as usize] {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Diameter of the graph without `removed`; `None` if it is disconnected.
pub fn diameter(n: u32, edges: &[(u32, u32)], removed: &BTreeSet<u32>) -> Option<u32> {
    let alive: Vec<u32> = (0..n).filter(|v| !removed.contains(v)).collect();
    let kept: Vec<(u32, u32)> = edges
        .iter()
        .copied()
        .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
        .collect();
    let mut best = 0;
    for &s in &alive {
        let d = bfs(n, &kept, &[s]);
        for &v in &alive {
            best = best.max(d[v as usize]?);
        }
    }
    Some(best)
}

pub fn free_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

pub struct RobotDef {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub battery: f64,
    pub speed: f64,
}

pub struct TaskDef {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub time: f64,
    /// Robots told about the task; all of them when `None`.
    pub recipients: Option<Vec<u32>>,
}

/// Renders a scenario file.
pub fn scenario_text(
    name: &str,
    radius: f64,
    duration: f64,
    config: &str,
    robots: &[RobotDef],
    tasks: &[TaskDef],
    faults: &str,
) -> String {
    let mut s = format!(
        "name = \"{name}\"\nseed = 1\nduration = {duration:?}\ncomm_radius = {radius:?}\n\
         [arena]\nwidth = 3.5\nheight = 6.0\n[config]\n{config}\n"
    );
    for r in robots {
        let _ = write!(
            s,
            "[[robot]]\nid = {}\nx = {:?}\ny = {:?}\nbattery = {:?}\nspeed = {:?}\n",
            r.id, r.x, r.y, r.battery, r.speed
        );
    }
    for t in tasks {
        let _ = write!(
            s,
            "[[task]]\nid = \"{}\"\nx = {:?}\ny = {:?}\ntime = {:?}\n",
            t.id, t.x, t.y, t.time
        );
        if let Some(r) = &t.recipients {
            let _ = writeln!(s, "recipients = {r:?}");
        }
    }
    s.push_str(faults);
    s
}

pub const DEFAULT_CONFIG: &str = "theta = 10\nomega = 20.0\npreemptive = false\ndelta = \"dynamic\"";

/// Up to 8 robots placed uniformly in the arena with random batteries.
/// `speed` applies to every robot.
pub fn random_robots(rng: &mut ChaCha8Rng, speed: f64) -> Vec<RobotDef> {
    let n = rng.gen_range(1..=8);
    (1..=n)
        .map(|id| RobotDef {
            id,
            x: rng.gen_range(0.0..3.5),
            y: rng.gen_range(0.0..6.0),
            battery: rng.gen_range(0.2..1.0),
            speed,
        })
        .collect()
}

/// A task point at least `clearance` away from every robot.
pub fn task_point(rng: &mut ChaCha8Rng, robots: &[RobotDef], clearance: f64) -> (f64, f64) {
    loop {
        let (x, y) = (rng.gen_range(0.0..3.5), rng.gen_range(0.0..6.0));
        if robots.iter().all(|r| (r.x - x).hypot(r.y - y) >= clearance) {
            return (x, y);
        }
    }
}
