//! Dataset ingestion, splitting, and synthetic swarm motion.
//!
//! Two plain-text formats are supported, bit-compatible with the
//! published federated swarm datasets:
//!
//! - *trajectory files*: records `robot id, neighbor id, t, x, y, z`, one
//!   per line, with samples separated by a blank line. A sample is one
//!   100-step neighbor trajectory expressed in the observer's fixed local
//!   frame at recording start. `z` is parsed and discarded (the model is
//!   planar); the writer emits 0.
//! - *communication graph files*: records `t, robot id, neighbor id`
//!   logging which robots are in range at every time step.
//!
//! `#` comment lines are tolerated on read, never written. Loaders report
//! malformed lines with line numbers and count rejected blocks rather
//! than failing a whole file.
//!
//! When no dataset is available, [`synthesize`] generates desk-scale
//! swarm motion (straight-bounce, circle, or waypoint kinematics) and
//! records both files the same way the original robots did: 100-tick
//! windows per visible neighbor, interrupted windows dropped, sensing
//! noise added per point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::netsim::{CommGraphTimeline, Tick};
use crate::RobotId;

/// Points per trajectory sample (100 steps = 10 s).
pub const SAMPLE_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: no valid samples")]
    NoValidSamples { path: String },
    #[error("synthetic config invalid: {0}")]
    BadSyntheticConfig(String),
}

/// One 100-step neighbor trajectory in the observer's fixed local frame
/// at `start_tick`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub observer: RobotId,
    pub subject: RobotId,
    pub start_tick: Tick,
    pub points: Vec<(f64, f64)>,
}

impl TrajectorySample {
    /// A robot can train on a sample once its recording completes.
    pub fn available_at(&self) -> Tick {
        self.start_tick + SAMPLE_LEN as Tick
    }

    /// One `(history, horizon)` pair at fixed offset 0: the first
    /// `input_len` points feed the model, the next `horizon` are the
    /// target. `None` when the sample is too short for the split.
    pub fn input_target(
        &self,
        input_len: usize,
        horizon: usize,
    ) -> Option<(&[(f64, f64)], &[(f64, f64)])> {
        if self.points.len() < input_len + horizon {
            return None;
        }
        Some((
            &self.points[..input_len],
            &self.points[input_len..input_len + horizon],
        ))
    }
}

/// Result of loading a trajectory file, with diagnostics.
#[derive(Debug)]
pub struct TrajectoryLoad {
    pub samples: Vec<TrajectorySample>,
    /// Blocks rejected for having a point count other than 100 or mixed
    /// observer/subject ids.
    pub rejected_blocks: usize,
    /// `(line number, description)` of lines that did not parse.
    pub malformed_lines: Vec<(usize, String)>,
}

/// Result of loading a communication graph file, with diagnostics.
#[derive(Debug)]
pub struct CommGraphLoad {
    pub timeline: CommGraphTimeline,
    /// Directed records lacking their mirror at the same tick.
    pub asymmetric_edges: usize,
    pub malformed_lines: Vec<(usize, String)>,
}

fn read_file(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Block {
    observer: RobotId,
    subject: RobotId,
    start_tick: Tick,
    points: Vec<(f64, f64)>,
    consistent: bool,
}

/// Parses a trajectory file. Malformed lines are reported with their line
/// numbers; blocks that are not exactly 100 consistent points are counted
/// and skipped. Fails only on unreadable files or zero valid samples.
pub fn load_trajectory_file(path: &Path) -> Result<TrajectoryLoad, DataError> {
    let text = read_file(path)?;
    let mut samples = Vec::new();
    let mut rejected_blocks = 0;
    let mut malformed_lines = Vec::new();
    let mut block: Option<Block> = None;

    let mut close_block = |block: &mut Option<Block>, rejected: &mut usize| {
        if let Some(b) = block.take() {
            if b.consistent && b.points.len() == SAMPLE_LEN {
                samples.push(TrajectorySample {
                    observer: b.observer,
                    subject: b.subject,
                    start_tick: b.start_tick,
                    points: b.points,
                });
            } else {
                *rejected += 1;
            }
        }
    };

    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            close_block(&mut block, &mut rejected_blocks);
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed = (|| -> Option<(u32, u32, Tick, f64, f64)> {
            if fields.len() != 6 {
                return None;
            }
            let robot = fields[0].parse().ok()?;
            let neighbor = fields[1].parse().ok()?;
            let t = fields[2].parse().ok()?;
            let x: f64 = fields[3].parse().ok()?;
            let y: f64 = fields[4].parse().ok()?;
            let _z: f64 = fields[5].parse().ok()?; // parsed and discarded
            if !x.is_finite() || !y.is_finite() {
                return None;
            }
            Some((robot, neighbor, t, x, y))
        })();
        let Some((robot, neighbor, t, x, y)) = parsed else {
            malformed_lines.push((idx + 1, format!("unparseable record: {trimmed}")));
            continue;
        };
        match &mut block {
            None => {
                block = Some(Block {
                    observer: RobotId(robot),
                    subject: RobotId(neighbor),
                    start_tick: t,
                    points: vec![(x, y)],
                    consistent: true,
                });
            }
            Some(b) => {
                if b.observer.0 != robot || b.subject.0 != neighbor {
                    b.consistent = false;
                }
                b.points.push((x, y));
            }
        }
    }
    close_block(&mut block, &mut rejected_blocks);

    if samples.is_empty() {
        return Err(DataError::NoValidSamples {
            path: path.display().to_string(),
        });
    }
    Ok(TrajectoryLoad {
        samples,
        rejected_blocks,
        malformed_lines,
    })
}

/// Writes samples in the record format `robot, neighbor, t, x, y, z` with
/// blank-line separators and `z = 0`.
pub fn write_trajectory_file(path: &Path, samples: &[TrajectorySample]) -> Result<(), DataError> {
    let mut out = String::new();
    for sample in samples {
        for (offset, &(x, y)) in sample.points.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},0",
                sample.observer,
                sample.subject,
                sample.start_tick + offset as Tick,
                x,
                y
            )
            .expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a communication graph file into a per-tick adjacency timeline.
/// Duplicate records collapse; asymmetric pairs are counted in the load
/// report, not repaired.
pub fn load_comm_graph(path: &Path) -> Result<CommGraphLoad, DataError> {
    let text = read_file(path)?;
    let mut records: Vec<(Tick, u32, u32)> = Vec::new();
    let mut malformed_lines = Vec::new();
    let mut max_id = 0;
    let mut max_tick = 0;

    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed = (|| -> Option<(Tick, u32, u32)> {
            if fields.len() != 3 {
                return None;
            }
            Some((
                fields[0].parse().ok()?,
                fields[1].parse().ok()?,
                fields[2].parse().ok()?,
            ))
        })();
        match parsed {
            Some((t, robot, neighbor)) if robot != neighbor => {
                max_id = max_id.max(robot).max(neighbor);
                max_tick = max_tick.max(t);
                records.push((t, robot, neighbor));
            }
            _ => malformed_lines.push((idx + 1, format!("unparseable record: {trimmed}"))),
        }
    }

    let mut timeline = CommGraphTimeline::empty(max_id + 1, max_tick);
    for &(t, robot, neighbor) in &records {
        timeline
            .insert_edge(t, robot, neighbor)
            .expect("ids bounded by construction");
    }
    let asymmetric_edges = timeline.asymmetric_edge_count();
    Ok(CommGraphLoad {
        timeline,
        asymmetric_edges,
        malformed_lines,
    })
}

/// Writes a timeline in the record format `t, robot, neighbor`.
pub fn write_comm_graph(path: &Path, timeline: &CommGraphTimeline) -> Result<(), DataError> {
    let mut out = String::new();
    for tick in 0..=timeline.max_tick() {
        for (from, to) in timeline.edges_at(tick).expect("tick in range") {
            writeln!(out, "{tick},{from},{to}").expect("string write");
        }
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-robot streams ordered by the tick each sample becomes available
/// (recording completion). Index = observer id.
pub fn stream_by_time(samples: Vec<TrajectorySample>, num_robots: u32) -> Vec<Vec<TrajectorySample>> {
    let mut streams: Vec<Vec<TrajectorySample>> = vec![Vec::new(); num_robots as usize];
    for sample in samples {
        let idx = sample.observer.index();
        if idx < streams.len() {
            streams[idx].push(sample);
        }
    }
    for stream in &mut streams {
        stream.sort_by_key(|s| (s.available_at(), s.subject));
    }
    streams
}

/// Time-based train/test separation: samples starting in the first
/// `train_fraction` of the experiment train and validate, the rest test.
pub fn time_split(
    samples: &[TrajectorySample],
    train_fraction: f64,
    duration: Option<Tick>,
) -> (Vec<TrajectorySample>, Vec<TrajectorySample>) {
    let duration = duration
        .unwrap_or_else(|| samples.iter().map(|s| s.available_at()).max().unwrap_or(0));
    let cutoff = (duration as f64 * train_fraction) as Tick;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        if s.start_tick < cutoff {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    (train, test)
}

/// Kinematic behavior of the synthetic robots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionBehavior {
    /// Constant velocity, specular bounce off the arena walls.
    StraightBounce,
    /// Circular paths of randomized centers and radii.
    Circle,
    /// Constant-speed travel toward successive random waypoints.
    Waypoint,
}

impl std::str::FromStr for MotionBehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "straight-bounce" => Ok(MotionBehavior::StraightBounce),
            "circle" => Ok(MotionBehavior::Circle),
            "waypoint" => Ok(MotionBehavior::Waypoint),
            other => Err(format!(
                "unknown behavior {other:?} (expected straight-bounce, circle, or waypoint)"
            )),
        }
    }
}

impl std::fmt::Display for MotionBehavior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MotionBehavior::StraightBounce => "straight-bounce",
            MotionBehavior::Circle => "circle",
            MotionBehavior::Waypoint => "waypoint",
        })
    }
}

/// Desk-scale swarm motion parameters. Communication and sensing default
/// to a 2 m range; sensing noise to sigma = 0.1 m per coordinate.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticMotionConfig {
    pub num_robots: u32,
    /// Arena width and height in meters.
    pub arena: (f64, f64),
    /// Robot speed in m/s.
    pub speed: f64,
    pub behavior: MotionBehavior,
    pub comm_range: f64,
    pub sensing_range: f64,
    /// Standard deviation of the positional sensing noise, in meters.
    pub noise_sigma: f64,
    pub duration_ticks: Tick,
}

impl SyntheticMotionConfig {
    pub fn new(num_robots: u32, behavior: MotionBehavior, duration_ticks: Tick) -> Self {
        SyntheticMotionConfig {
            num_robots,
            arena: (6.0, 6.0),
            speed: 0.2,
            behavior,
            comm_range: 2.0,
            sensing_range: 2.0,
            noise_sigma: 0.1,
            duration_ticks,
        }
    }
}

/// Synthesized dataset: samples, adjacency timeline, and any warnings
/// (for example a degenerate always-fully-connected arena).
#[derive(Debug)]
pub struct SynthOutput {
    pub samples: Vec<TrajectorySample>,
    pub timeline: CommGraphTimeline,
    pub warnings: Vec<String>,
}

struct Mover {
    pos: (f64, f64),
    heading: f64,
    /// Circle behavior: center and angular velocity.
    center: (f64, f64),
    angular: f64,
    /// Waypoint behavior: current target.
    target: (f64, f64),
}

/// An in-progress recording window of one neighbor by one observer.
struct Window {
    start_tick: Tick,
    origin: (f64, f64),
    heading: f64,
    points: Vec<(f64, f64)>,
}

/// Simulates point robots at 0.1 s per tick and records what each robot's
/// sensors would have logged: every visible neighbor's noisy position in
/// the observer's fixed frame at window start, in 100-tick windows, with
/// interrupted windows dropped. Emits the adjacency timeline alongside.
pub fn synthesize(
    config: &SyntheticMotionConfig,
    rng: &mut ChaCha12Rng,
) -> Result<SynthOutput, DataError> {
    if config.num_robots < 2 {
        return Err(DataError::BadSyntheticConfig(
            "need at least 2 robots to observe each other".into(),
        ));
    }
    if config.arena.0 <= 0.0 || config.arena.1 <= 0.0 || config.speed < 0.0 {
        return Err(DataError::BadSyntheticConfig(
            "arena sides and speed must be positive".into(),
        ));
    }
    let mut warnings = Vec::new();
    let diag = (config.arena.0.powi(2) + config.arena.1.powi(2)).sqrt();
    if diag <= config.comm_range {
        warnings.push(format!(
            "arena diagonal {diag:.2} m within comm range {:.2} m: topology degenerates to fully connected",
            config.comm_range
        ));
    }

    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| {
        DataError::BadSyntheticConfig(format!("bad noise sigma {}: {e}", config.noise_sigma))
    })?;
    let dt = crate::netsim::SECONDS_PER_TICK;
    let k = config.num_robots as usize;

    let mut movers: Vec<Mover> = (0..k)
        .map(|_| {
            let pos = (
                rng.gen_range(0.0..config.arena.0),
                rng.gen_range(0.0..config.arena.1),
            );
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = rng.gen_range(0.3..1.0_f64);
            Mover {
                pos,
                heading,
                center: pos,
                angular: config.speed / radius * if rng.gen::<bool>() { 1.0 } else { -1.0 },
                target: (
                    rng.gen_range(0.0..config.arena.0),
                    rng.gen_range(0.0..config.arena.1),
                ),
            }
        })
        .collect();
    // Circle movers orbit a center offset from the start position.
    if config.behavior == MotionBehavior::Circle {
        for m in &mut movers {
            let r = config.speed / m.angular.abs();
            m.center = (m.pos.0 + r * m.heading.cos(), m.pos.1 + r * m.heading.sin());
        }
    }

    let mut windows: BTreeMap<(u32, u32), Window> = BTreeMap::new();
    let mut samples = Vec::new();
    let mut timeline = CommGraphTimeline::empty(config.num_robots, config.duration_ticks);

    for tick in 0..=config.duration_ticks {
        // Record adjacency and sensing for the current poses.
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let (dx, dy) = (
                    movers[j].pos.0 - movers[i].pos.0,
                    movers[j].pos.1 - movers[i].pos.1,
                );
                let dist = (dx * dx + dy * dy).sqrt();
                if dist <= config.comm_range {
                    timeline.insert_edge(tick, i as u32, j as u32).unwrap();
                }
                let key = (i as u32, j as u32);
                if dist <= config.sensing_range {
                    let window = windows.entry(key).or_insert_with(|| Window {
                        start_tick: tick,
                        origin: movers[i].pos,
                        heading: movers[i].heading,
                        points: Vec::with_capacity(SAMPLE_LEN),
                    });
                    // Subject position in the observer's frame at window
                    // start, plus sensing noise.
                    let local = to_local_frame(window.origin, window.heading, movers[j].pos);
                    window.points.push((
                        local.0 + noise.sample(rng),
                        local.1 + noise.sample(rng),
                    ));
                    if window.points.len() == SAMPLE_LEN {
                        let done = windows.remove(&key).unwrap();
                        samples.push(TrajectorySample {
                            observer: RobotId(key.0),
                            subject: RobotId(key.1),
                            start_tick: done.start_tick,
                            points: done.points,
                        });
                    }
                } else {
                    // Interrupted trajectories are dropped.
                    windows.remove(&key);
                }
            }
        }

        // Advance the kinematics.
        for m in &mut movers {
            match config.behavior {
                MotionBehavior::StraightBounce => {
                    let (mut x, mut y) = (
                        m.pos.0 + config.speed * dt * m.heading.cos(),
                        m.pos.1 + config.speed * dt * m.heading.sin(),
                    );
                    let (mut cx, mut sy) = (m.heading.cos(), m.heading.sin());
                    if x < 0.0 || x > config.arena.0 {
                        cx = -cx;
                        x = x.clamp(0.0, config.arena.0);
                    }
                    if y < 0.0 || y > config.arena.1 {
                        sy = -sy;
                        y = y.clamp(0.0, config.arena.1);
                    }
                    m.heading = sy.atan2(cx);
                    m.pos = (x, y);
                }
                MotionBehavior::Circle => {
                    let angle = (movers_angle(m) + m.angular * dt).rem_euclid(std::f64::consts::TAU);
                    let r = config.speed / m.angular.abs();
                    m.pos = (m.center.0 + r * angle.cos(), m.center.1 + r * angle.sin());
                    m.heading = angle + std::f64::consts::FRAC_PI_2 * m.angular.signum();
                }
                MotionBehavior::Waypoint => {
                    let (dx, dy) = (m.target.0 - m.pos.0, m.target.1 - m.pos.1);
                    let dist = dx.hypot(dy);
                    if dist < config.speed * dt {
                        m.pos = m.target;
                        m.target = (
                            rng.gen_range(0.0..config.arena.0),
                            rng.gen_range(0.0..config.arena.1),
                        );
                    } else {
                        m.heading = dy.atan2(dx);
                        m.pos = (
                            m.pos.0 + config.speed * dt * m.heading.cos(),
                            m.pos.1 + config.speed * dt * m.heading.sin(),
                        );
                    }
                }
            }
        }
    }

    Ok(SynthOutput {
        samples,
        timeline,
        warnings,
    })
}

fn movers_angle(m: &Mover) -> f64 {
    (m.pos.1 - m.center.1).atan2(m.pos.0 - m.center.0)
}

/// A world point expressed in the frame anchored at `origin` with the x
/// axis along `heading`. This frame is fixed at recording start and does
/// not follow subsequent observer motion.
fn to_local_frame(origin: (f64, f64), heading: f64, world: (f64, f64)) -> (f64, f64) {
    let rel = (world.0 - origin.0, world.1 - origin.1);
    let (sin, cos) = (-heading).sin_cos();
    (rel.0 * cos - rel.1 * sin, rel.0 * sin + rel.1 * cos)
}
