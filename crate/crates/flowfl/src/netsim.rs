//! Deterministic discrete-event network simulation.
//!
//! The world advances in global ticks of 0.1 s. Robots broadcast messages
//! to whoever is adjacent in the communication-graph timeline; a message
//! sent at tick `t` reaches the sender's neighbors *at delivery time*
//! `t + 1`, so topology changes in flight can drop it. Robot handlers run
//! in ascending id order every tick, which makes a whole run a pure
//! function of `(timeline, seed, config)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::RobotId;

/// Global simulation time, in ticks.
pub type Tick = u64;

/// Fixed timestep: 0.1 s per tick.
pub const SECONDS_PER_TICK: f64 = 0.1;

/// Converts a tick count to seconds.
pub fn ticks_to_seconds(ticks: Tick) -> f64 {
    ticks as f64 * SECONDS_PER_TICK
}

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("timeline exhausted at tick {tick} (covers 0..={max_tick})")]
    TimelineExhausted { tick: Tick, max_tick: Tick },
    #[error("tick {tick} out of timeline range 0..={max_tick}")]
    TickOutOfRange { tick: Tick, max_tick: Tick },
    #[error("robot id {id} out of range for swarm of {num_robots}")]
    RobotOutOfRange { id: u32, num_robots: u32 },
    #[error("robot {id} listed as its own neighbor")]
    SelfNeighbor { id: u32 },
    #[error("loss probability {0} outside [0, 1]")]
    InvalidLossProbability(f64),
    #[error("world has {agents} agents but timeline expects {num_robots} robots")]
    AgentCountMismatch { agents: usize, num_robots: u32 },
}

#[derive(Debug, Clone)]
enum TimelineKind {
    /// Every robot adjacent to every other at all covered ticks.
    FullyConnected,
    /// The same directed edge set at all covered ticks.
    Static(BTreeSet<(RobotId, RobotId)>),
    /// Per-tick directed edge sets; missing ticks are empty.
    Dynamic(BTreeMap<Tick, BTreeSet<(RobotId, RobotId)>>),
}

/// Per-timestep directed adjacency among robots.
///
/// A record `(robot, neighbor)` means `robot` can hear `neighbor` is in
/// range; broadcasts from `s` at delivery tick `t` reach exactly the set
/// `neighbors(t, s)`. Symmetry is *not* forced: records are honored as
/// given.
#[derive(Debug, Clone)]
pub struct CommGraphTimeline {
    num_robots: u32,
    max_tick: Tick,
    kind: TimelineKind,
}

impl CommGraphTimeline {
    /// An empty (no-edge) timeline covering ticks `0..=max_tick`.
    pub fn empty(num_robots: u32, max_tick: Tick) -> Self {
        CommGraphTimeline {
            num_robots,
            max_tick,
            kind: TimelineKind::Dynamic(BTreeMap::new()),
        }
    }

    /// Everyone adjacent to everyone at every covered tick.
    pub fn fully_connected(num_robots: u32, max_tick: Tick) -> Self {
        CommGraphTimeline {
            num_robots,
            max_tick,
            kind: TimelineKind::FullyConnected,
        }
    }

    /// The same directed edges at every covered tick.
    pub fn static_graph(
        num_robots: u32,
        max_tick: Tick,
        edges: &[(u32, u32)],
    ) -> Result<Self, NetsimError> {
        let mut set = BTreeSet::new();
        for &(from, to) in edges {
            Self::check_edge(num_robots, from, to)?;
            set.insert((RobotId(from), RobotId(to)));
        }
        Ok(CommGraphTimeline {
            num_robots,
            max_tick,
            kind: TimelineKind::Static(set),
        })
    }

    fn check_edge(num_robots: u32, from: u32, to: u32) -> Result<(), NetsimError> {
        if from >= num_robots {
            return Err(NetsimError::RobotOutOfRange {
                id: from,
                num_robots,
            });
        }
        if to >= num_robots {
            return Err(NetsimError::RobotOutOfRange { id: to, num_robots });
        }
        if from == to {
            return Err(NetsimError::SelfNeighbor { id: from });
        }
        Ok(())
    }

    /// Inserts a directed edge at one tick, growing the covered range if
    /// needed. Duplicate records collapse (set semantics).
    pub fn insert_edge(&mut self, tick: Tick, from: u32, to: u32) -> Result<(), NetsimError> {
        Self::check_edge(self.num_robots, from, to)?;
        match &mut self.kind {
            TimelineKind::Dynamic(map) => {
                map.entry(tick)
                    .or_default()
                    .insert((RobotId(from), RobotId(to)));
                self.max_tick = self.max_tick.max(tick);
                Ok(())
            }
            _ => {
                // Only dynamic timelines are built incrementally.
                unreachable!("insert_edge on a non-dynamic timeline")
            }
        }
    }

    pub fn num_robots(&self) -> u32 {
        self.num_robots
    }

    /// Last covered tick (inclusive).
    pub fn max_tick(&self) -> Tick {
        self.max_tick
    }

    /// The robots adjacent to `robot` at `tick`, i.e. the recipients of a
    /// broadcast delivered then. Empty adjacency yields an empty set.
    pub fn neighbors(&self, tick: Tick, robot: RobotId) -> Result<BTreeSet<RobotId>, NetsimError> {
        if tick > self.max_tick {
            return Err(NetsimError::TickOutOfRange {
                tick,
                max_tick: self.max_tick,
            });
        }
        if robot.0 >= self.num_robots {
            return Err(NetsimError::RobotOutOfRange {
                id: robot.0,
                num_robots: self.num_robots,
            });
        }
        let from_set = |set: &BTreeSet<(RobotId, RobotId)>| {
            set.range((robot, RobotId(0))..=(robot, RobotId(u32::MAX)))
                .map(|&(_, n)| n)
                .collect()
        };
        Ok(match &self.kind {
            TimelineKind::FullyConnected => (0..self.num_robots)
                .map(RobotId)
                .filter(|&r| r != robot)
                .collect(),
            TimelineKind::Static(set) => from_set(set),
            TimelineKind::Dynamic(map) => map.get(&tick).map(|s| from_set(s)).unwrap_or_default(),
        })
    }

    /// Directed edges present at `tick`, for diagnostics and file output.
    pub fn edges_at(&self, tick: Tick) -> Result<Vec<(RobotId, RobotId)>, NetsimError> {
        if tick > self.max_tick {
            return Err(NetsimError::TickOutOfRange {
                tick,
                max_tick: self.max_tick,
            });
        }
        Ok(match &self.kind {
            TimelineKind::FullyConnected => {
                let mut v = Vec::new();
                for a in 0..self.num_robots {
                    for b in 0..self.num_robots {
                        if a != b {
                            v.push((RobotId(a), RobotId(b)));
                        }
                    }
                }
                v
            }
            TimelineKind::Static(set) => set.iter().copied().collect(),
            TimelineKind::Dynamic(map) => map
                .get(&tick)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default(),
        })
    }

    /// Count of directed records lacking their mirror, summed over ticks.
    /// Dataset files are honored as directed; this is a load-time report.
    pub fn asymmetric_edge_count(&self) -> usize {
        match &self.kind {
            TimelineKind::FullyConnected => 0,
            TimelineKind::Static(set) => {
                set.iter().filter(|&&(a, b)| !set.contains(&(b, a))).count()
            }
            TimelineKind::Dynamic(map) => map
                .values()
                .map(|set| set.iter().filter(|&&(a, b)| !set.contains(&(b, a))).count())
                .sum(),
        }
    }
}

/// A broadcast in flight. Delivery happens one tick after sending, to the
/// sender's neighbors at delivery time.
#[derive(Debug, Clone)]
pub struct MessageEvent<M> {
    pub sender: RobotId,
    pub payload: M,
    pub deliver_at: Tick,
}

/// Drops each event independently with probability `loss_probability`,
/// using the given seeded generator. Deterministic for a fixed seed.
pub fn apply_loss<M>(
    rng: &mut ChaCha12Rng,
    events: Vec<MessageEvent<M>>,
    loss_probability: f64,
) -> Result<Vec<MessageEvent<M>>, NetsimError> {
    if !(0.0..=1.0).contains(&loss_probability) {
        return Err(NetsimError::InvalidLossProbability(loss_probability));
    }
    if loss_probability == 0.0 {
        return Ok(events);
    }
    Ok(events
        .into_iter()
        .filter(|_| rng.gen::<f64>() >= loss_probability)
        .collect())
}

/// A delivered message with its sender.
#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub sender: RobotId,
    pub payload: M,
}

/// Per-robot behavior driven by the tick loop.
pub trait Agent {
    type Msg: Clone;

    /// Runs one tick: consume this tick's deliveries, push broadcasts for
    /// the next tick into `outbox`.
    fn on_tick(&mut self, tick: Tick, inbox: Vec<Envelope<Self::Msg>>, outbox: &mut Vec<Self::Msg>);
}

/// What happened during one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickReport {
    pub tick: Tick,
    /// Individual deliveries (one per recipient).
    pub delivered: usize,
    /// Broadcasts that found no adjacent recipient at delivery time.
    pub expired: usize,
    /// Broadcasts sent this tick (post-loss survivors in flight).
    pub sent: usize,
    /// Broadcasts removed by the loss model this tick.
    pub dropped_by_loss: usize,
}

/// The simulated swarm: agents, timeline, clock, and in-flight messages.
pub struct World<A: Agent> {
    agents: Vec<A>,
    timeline: CommGraphTimeline,
    tick: Tick,
    in_flight: Vec<MessageEvent<A::Msg>>,
    loss_probability: f64,
    rng: ChaCha12Rng,
}

impl<A: Agent> World<A> {
    pub fn new(
        agents: Vec<A>,
        timeline: CommGraphTimeline,
        loss_probability: f64,
        rng: ChaCha12Rng,
    ) -> Result<Self, NetsimError> {
        if !(0.0..=1.0).contains(&loss_probability) {
            return Err(NetsimError::InvalidLossProbability(loss_probability));
        }
        if agents.len() != timeline.num_robots() as usize {
            return Err(NetsimError::AgentCountMismatch {
                agents: agents.len(),
                num_robots: timeline.num_robots(),
            });
        }
        Ok(World {
            agents,
            timeline,
            tick: 0,
            in_flight: Vec::new(),
            loss_probability,
            rng,
        })
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [A] {
        &mut self.agents
    }

    pub fn in_flight_len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn timeline(&self) -> &CommGraphTimeline {
        &self.timeline
    }

    /// Advances one tick: delivers due messages to the sender's neighbors
    /// at delivery time, runs every agent in ascending id order, applies
    /// the loss model to fresh broadcasts, and advances the clock.
    ///
    /// Fails with [`NetsimError::TimelineExhausted`] once the timeline no
    /// longer covers the current tick.
    pub fn step(&mut self) -> Result<TickReport, NetsimError> {
        let now = self.tick;
        if now > self.timeline.max_tick() {
            return Err(NetsimError::TimelineExhausted {
                tick: now,
                max_tick: self.timeline.max_tick(),
            });
        }

        let mut inboxes: Vec<Vec<Envelope<A::Msg>>> = Vec::new();
        inboxes.resize_with(self.agents.len(), Vec::new);
        let mut delivered = 0;
        let mut expired = 0;

        let due: Vec<MessageEvent<A::Msg>> = {
            let mut due = Vec::new();
            let mut rest = Vec::new();
            for ev in self.in_flight.drain(..) {
                if ev.deliver_at <= now {
                    due.push(ev);
                } else {
                    rest.push(ev);
                }
            }
            self.in_flight = rest;
            due
        };
        for ev in due {
            let recipients = self.timeline.neighbors(now, ev.sender)?;
            if recipients.is_empty() {
                expired += 1;
                continue;
            }
            for r in recipients {
                inboxes[r.index()].push(Envelope {
                    sender: ev.sender,
                    payload: ev.payload.clone(),
                });
                delivered += 1;
            }
        }

        let mut fresh = Vec::new();
        for (id, (agent, inbox)) in self.agents.iter_mut().zip(inboxes).enumerate() {
            let mut out = Vec::new();
            agent.on_tick(now, inbox, &mut out);
            fresh.extend(out.into_iter().map(|payload| MessageEvent {
                sender: RobotId(id as u32),
                payload,
                deliver_at: now + 1,
            }));
        }

        let produced = fresh.len();
        let kept = apply_loss(&mut self.rng, fresh, self.loss_probability)?;
        let dropped_by_loss = produced - kept.len();
        let sent = kept.len();
        self.in_flight.extend(kept);
        self.tick = now + 1;

        Ok(TickReport {
            tick: now,
            delivered,
            expired,
            sent,
            dropped_by_loss,
        })
    }

    /// Steps until `idle_ticks` consecutive ticks pass with nothing sent
    /// and nothing in flight, or until the timeline ends. Returns the
    /// number of ticks executed.
    pub fn step_until_quiet(&mut self, idle_ticks: u64) -> Result<u64, NetsimError> {
        let mut quiet = 0;
        let mut executed = 0;
        loop {
            match self.step() {
                Ok(report) => {
                    executed += 1;
                    if report.sent == 0 && self.in_flight.is_empty() {
                        quiet += 1;
                        if quiet >= idle_ticks {
                            return Ok(executed);
                        }
                    } else {
                        quiet = 0;
                    }
                }
                Err(NetsimError::TimelineExhausted { .. }) => return Ok(executed),
                Err(e) => return Err(e),
            }
        }
    }
}
