//! Count-based distributed barrier.
//!
//! Robots that reach a barrier gossip a monotonically growing membership
//! set; a robot proceeds once its local set holds at least `threshold`
//! ids. Unseen ids are absorbed and forwarded exactly once, so membership
//! floods the swarm even through robots that are not themselves waiting.
//!
//! Barrier instances are identified by `(round, stage)` so a late message
//! from a previous round can never contaminate the current one. Each round
//! uses two instances: `Entry` gates the quorum that starts the round,
//! `Completion` gates the return to idle after weight sharing.
//!
//! A robot that has already passed keeps absorbing and forwarding
//! membership so stragglers can still pass; on seeing a straggler join it
//! re-broadcasts its full member set, which is what hands a late joiner
//! the quorum it missed.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::netsim::Tick;
use crate::RobotId;

/// Which of the round's two barriers an instance is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BarrierStage {
    /// Quorum gate that starts a learning round.
    Entry,
    /// Share-completion gate that ends it.
    Completion,
}

/// Identity of one barrier instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BarrierId {
    pub round: u64,
    pub stage: BarrierStage,
}

impl BarrierId {
    pub fn entry(round: u64) -> Self {
        BarrierId {
            round,
            stage: BarrierStage::Entry,
        }
    }

    pub fn completion(round: u64) -> Self {
        BarrierId {
            round,
            stage: BarrierStage::Completion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierPhase {
    Inactive,
    Waiting,
    Passed,
}

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error("barrier re-entered while waiting (round {round})")]
    ReEntry { round: u64 },
    #[error("barrier_ready called on an inactive barrier (round {round})")]
    NotWaiting { round: u64 },
    #[error("barrier threshold must be positive")]
    ZeroThreshold,
}

/// One robot's view of one barrier instance.
#[derive(Debug, Clone)]
pub struct BarrierState {
    id: BarrierId,
    members: BTreeSet<RobotId>,
    threshold: usize,
    phase: BarrierPhase,
    activated_at: Option<Tick>,
    passed_at: Option<Tick>,
}

impl BarrierState {
    /// A fresh, inactive instance.
    pub fn new(id: BarrierId) -> Self {
        BarrierState {
            id,
            members: BTreeSet::new(),
            threshold: 0,
            phase: BarrierPhase::Inactive,
            passed_at: None,
            activated_at: None,
        }
    }

    /// Enters the barrier: fresh empty member set, phase `Waiting`, update
    /// handling active. Re-entry of an instance already waiting (or used
    /// up) is a protocol violation.
    pub fn activate(&mut self, threshold: usize, tick: Tick) -> Result<(), BarrierError> {
        if threshold == 0 {
            return Err(BarrierError::ZeroThreshold);
        }
        if self.phase != BarrierPhase::Inactive {
            return Err(BarrierError::ReEntry {
                round: self.id.round,
            });
        }
        self.members.clear();
        self.threshold = threshold;
        self.phase = BarrierPhase::Waiting;
        self.activated_at = Some(tick);
        Ok(())
    }

    /// Absorbs gossiped member ids. Unseen ids are added and returned for
    /// re-broadcast; seen ids are absorbed silently. Ids are absorbed in
    /// the `Passed` phase too, so a passed robot keeps relaying for
    /// stragglers. An inactive instance absorbs nothing.
    pub fn on_update(&mut self, incoming: &BTreeSet<RobotId>) -> BTreeSet<RobotId> {
        if self.phase == BarrierPhase::Inactive {
            return BTreeSet::new();
        }
        let mut newly_added = BTreeSet::new();
        for &id in incoming {
            if self.members.insert(id) {
                newly_added.insert(id);
            }
        }
        newly_added
    }

    /// Declares this robot ready: adds `self_id` to the member set (the
    /// caller broadcasts it) and passes once the local count reaches the
    /// threshold. Safe to call repeatedly while waiting; returns whether
    /// the barrier has passed.
    pub fn ready(&mut self, self_id: RobotId, tick: Tick) -> Result<bool, BarrierError> {
        match self.phase {
            BarrierPhase::Inactive => Err(BarrierError::NotWaiting {
                round: self.id.round,
            }),
            BarrierPhase::Passed => Ok(true),
            BarrierPhase::Waiting => {
                self.members.insert(self_id);
                if self.members.len() >= self.threshold {
                    self.phase = BarrierPhase::Passed;
                    self.passed_at = Some(tick);
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
        }
    }

    pub fn id(&self) -> BarrierId {
        self.id
    }

    pub fn phase(&self) -> BarrierPhase {
        self.phase
    }

    pub fn members(&self) -> &BTreeSet<RobotId> {
        &self.members
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn activated_at(&self) -> Option<Tick> {
        self.activated_at
    }

    pub fn passed_at(&self) -> Option<Tick> {
        self.passed_at
    }
}

/// Quorum size for a swarm: `ceil(q_F * K)`, computed so that exact
/// integer products are not bumped up by floating-point dust (0.2 * 15
/// must give 3, not 4). Non-integer products round up so the quorum is
/// never under-filled.
pub fn quorum_size(quorum_fraction: f64, num_robots: u32) -> usize {
    let product = quorum_fraction * num_robots as f64;
    let nearest = product.round();
    let q = if (product - nearest).abs() < 1e-9 {
        nearest
    } else {
        product.ceil()
    };
    q as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> BTreeSet<RobotId> {
        v.iter().map(|&i| RobotId(i)).collect()
    }

    #[test]
    fn activate_gives_fresh_waiting_state() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(3, 5).unwrap();
        assert!(b.members().is_empty());
        assert_eq!(b.phase(), BarrierPhase::Waiting);
        assert_eq!(b.activated_at(), Some(5));
    }

    #[test]
    fn reentry_while_waiting_is_rejected() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(3, 0).unwrap();
        assert_eq!(b.activate(3, 1), Err(BarrierError::ReEntry { round: 0 }));
    }

    #[test]
    fn zero_threshold_is_rejected() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        assert_eq!(b.activate(0, 0), Err(BarrierError::ZeroThreshold));
    }

    #[test]
    fn update_absorbs_unseen_and_silences_seen() {
        let mut b = BarrierState::new(BarrierId::entry(1));
        b.activate(5, 0).unwrap();
        b.on_update(&ids(&[1]));
        assert_eq!(b.on_update(&ids(&[1])), ids(&[]));
        assert_eq!(b.on_update(&ids(&[2, 3])), ids(&[2, 3]));
        assert_eq!(b.on_update(&ids(&[2])), ids(&[]));
        assert_eq!(b.members(), &ids(&[1, 2, 3]));
    }

    #[test]
    fn threshold_one_passes_immediately() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(1, 0).unwrap();
        assert!(b.ready(RobotId(4), 0).unwrap());
        assert_eq!(b.phase(), BarrierPhase::Passed);
        assert_eq!(b.passed_at(), Some(0));
    }

    #[test]
    fn never_passes_below_threshold() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(4, 0).unwrap();
        b.on_update(&ids(&[1, 2]));
        for t in 0..100 {
            assert!(!b.ready(RobotId(0), t).unwrap());
        }
        assert_eq!(b.phase(), BarrierPhase::Waiting);
    }

    #[test]
    fn ready_on_inactive_is_an_error() {
        let mut b = BarrierState::new(BarrierId::entry(2));
        assert_eq!(
            b.ready(RobotId(0), 0),
            Err(BarrierError::NotWaiting { round: 2 })
        );
    }

    #[test]
    fn passed_instances_keep_absorbing_stragglers() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(2, 0).unwrap();
        b.on_update(&ids(&[1]));
        assert!(b.ready(RobotId(0), 3).unwrap());
        // Straggler arrives after the pass: absorbed and reported for
        // forwarding, membership stays monotone.
        assert_eq!(b.on_update(&ids(&[7])), ids(&[7]));
        assert_eq!(b.members(), &ids(&[0, 1, 7]));
        assert!(b.ready(RobotId(0), 4).unwrap());
    }

    #[test]
    fn members_monotone_while_waiting() {
        let mut b = BarrierState::new(BarrierId::entry(0));
        b.activate(10, 0).unwrap();
        let mut last = 0;
        for batch in [&[3u32, 1][..], &[1], &[5, 3], &[2]] {
            b.on_update(&ids(batch));
            assert!(b.members().len() >= last);
            last = b.members().len();
        }
    }

    #[test]
    fn quorum_size_handles_exact_and_fractional_products() {
        assert_eq!(quorum_size(0.2, 15), 3); // exact product, no fp bump
        assert_eq!(quorum_size(0.6, 15), 9);
        assert_eq!(quorum_size(0.2, 60), 12);
        assert_eq!(quorum_size(0.6, 60), 36);
        assert_eq!(quorum_size(0.3, 5), 2); // 1.5 rounds up
        assert_eq!(quorum_size(1.0, 7), 7);
        assert_eq!(quorum_size(0.1, 11), 2); // 1.1 rounds up
    }

    #[test]
    fn distinct_rounds_are_distinct_instances() {
        let mut b0 = BarrierState::new(BarrierId::entry(0));
        b0.activate(1, 0).unwrap();
        assert!(b0.ready(RobotId(0), 0).unwrap());
        // A new round uses a new instance with a fresh member set.
        let mut b1 = BarrierState::new(BarrierId::entry(1));
        b1.activate(2, 10).unwrap();
        assert!(b1.members().is_empty());
        assert!(!b1.ready(RobotId(0), 10).unwrap());
    }
}
