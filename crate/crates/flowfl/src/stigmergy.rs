//! Virtual stigmergy: a replicated `(key, value)` tuple space.
//!
//! Every robot holds a full local copy of the space. Each tuple carries a
//! per-key Lamport clock and the writer's id; conflicts resolve to the
//! lexicographically greatest `(lamport, writer)` pair, so all replicas
//! converge to the same tuple per key regardless of delivery order.
//!
//! Propagation is flooding-based: `write` enqueues the new tuple for
//! broadcast, `read` re-enqueues the local copy (so reads refresh the
//! swarm too), and an accepted remote update is forwarded exactly once.
//! A replica that receives a *stale* update pushes its own newer tuple
//! back, which is what heals replicas that missed earlier floods.
//!
//! There is no deletion. Keys are namespaced by round (for example
//! `ready/<round>/<robot>`) so tuples from finished rounds simply go
//! inert.

use std::collections::{BTreeMap, VecDeque};

use crate::RobotId;

/// A Lamport-clock-stamped entry in the tuple space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StigTuple {
    pub key: String,
    /// Opaque payload; serialization is the caller's concern.
    pub value: Vec<u8>,
    pub lamport: u64,
    pub writer: RobotId,
}

impl StigTuple {
    /// The conflict-resolution stamp: higher wins, writer id breaks ties.
    pub fn stamp(&self) -> (u64, RobotId) {
        (self.lamport, self.writer)
    }
}

/// One robot's replica of the tuple space.
#[derive(Debug, Clone)]
pub struct StigReplica {
    owner: RobotId,
    store: BTreeMap<String, StigTuple>,
    outbox: VecDeque<StigTuple>,
}

impl StigReplica {
    pub fn new(owner: RobotId) -> Self {
        StigReplica {
            owner,
            store: BTreeMap::new(),
            outbox: VecDeque::new(),
        }
    }

    pub fn owner(&self) -> RobotId {
        self.owner
    }

    /// Stores `value` under `key` with the next Lamport clock for that key
    /// and enqueues the tuple for broadcast at the next network tick.
    /// Local writes always succeed.
    pub fn write(&mut self, key: &str, value: Vec<u8>) -> &StigTuple {
        let lamport = self.store.get(key).map_or(0, |t| t.lamport) + 1;
        let tuple = StigTuple {
            key: key.to_string(),
            value,
            lamport,
            writer: self.owner,
        };
        self.outbox.push_back(tuple.clone());
        self.store.insert(key.to_string(), tuple);
        &self.store[key]
    }

    /// Returns the locally stored value, re-enqueueing the tuple so that
    /// reads also trigger flooding. An absent key is a plain `None`, not
    /// a failure.
    pub fn read(&mut self, key: &str) -> Option<&[u8]> {
        if let Some(tuple) = self.store.get(key) {
            self.outbox.push_back(tuple.clone());
        }
        self.store.get(key).map(|t| t.value.as_slice())
    }

    /// Inspects a tuple without triggering propagation.
    pub fn peek(&self, key: &str) -> Option<&StigTuple> {
        self.store.get(key)
    }

    /// Merges a tuple received from a neighbor.
    ///
    /// A strictly greater `(lamport, writer)` stamp (or an unknown key)
    /// replaces the local copy and is re-enqueued once, continuing the
    /// flood. A strictly lower stamp triggers a push-back of the local
    /// tuple instead. Equal stamps are dropped silently, which is what
    /// lets concurrent floods quiesce.
    ///
    /// Returns whether the local store changed.
    pub fn on_message(&mut self, incoming: StigTuple) -> bool {
        match self.store.get(&incoming.key) {
            None => {
                self.outbox.push_back(incoming.clone());
                self.store.insert(incoming.key.clone(), incoming);
                true
            }
            Some(local) if incoming.stamp() > local.stamp() => {
                self.outbox.push_back(incoming.clone());
                self.store.insert(incoming.key.clone(), incoming);
                true
            }
            Some(local) if incoming.stamp() < local.stamp() => {
                self.outbox.push_back(local.clone());
                false
            }
            Some(_) => false,
        }
    }

    /// Takes all tuples pending broadcast.
    pub fn drain_outbox(&mut self) -> Vec<StigTuple> {
        self.outbox.drain(..).collect()
    }

    pub fn outbox_len(&self) -> usize {
        self.outbox.len()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.store.contains_key(key)
    }

    /// Tuples whose key starts with `prefix`, in key order.
    pub fn tuples_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = &'a StigTuple> {
        self.store
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t)
    }

    /// All tuples in key order, for convergence checks.
    pub fn tuples(&self) -> impl Iterator<Item = &StigTuple> {
        self.store.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tuple(key: &str, lamport: u64, writer: u32) -> StigTuple {
        StigTuple {
            key: key.to_string(),
            value: vec![writer as u8],
            lamport,
            writer: RobotId(writer),
        }
    }

    #[test]
    fn first_write_increments_clock_from_zero() {
        let mut r = StigReplica::new(RobotId(7));
        let t = r.write("a", b"v".to_vec());
        assert_eq!(t.lamport, 1);
        assert_eq!(t.writer, RobotId(7));
    }

    #[test]
    fn successive_writes_monotone_clock() {
        let mut r = StigReplica::new(RobotId(0));
        assert_eq!(r.write("a", b"1".to_vec()).lamport, 1);
        assert_eq!(r.write("a", b"2".to_vec()).lamport, 2);
    }

    #[test]
    fn empty_payload_is_stored_and_broadcastable() {
        let mut r = StigReplica::new(RobotId(5));
        r.write("ready/5", Vec::new());
        assert_eq!(r.read("ready/5"), Some(&[][..]));
        assert!(r.outbox_len() >= 2); // write + read both enqueue
    }

    #[test]
    fn read_your_writes() {
        let mut r = StigReplica::new(RobotId(0));
        r.write("a", b"v".to_vec());
        assert_eq!(r.read("a"), Some(&b"v"[..]));
    }

    #[test]
    fn read_missing_is_absent() {
        let mut r = StigReplica::new(RobotId(0));
        assert_eq!(r.read("missing"), None);
        assert_eq!(r.outbox_len(), 0);
    }

    #[test]
    fn higher_clock_wins() {
        let mut r = StigReplica::new(RobotId(1));
        r.on_message(tuple("a", 2, 1));
        assert!(r.on_message(tuple("a", 3, 0)));
        assert_eq!(r.peek("a").unwrap().stamp(), (3, RobotId(0)));
    }

    #[test]
    fn equal_stamp_is_idempotent_and_silent() {
        let mut r = StigReplica::new(RobotId(1));
        r.on_message(tuple("a", 2, 1));
        r.drain_outbox();
        assert!(!r.on_message(tuple("a", 2, 1)));
        assert_eq!(r.outbox_len(), 0);
    }

    #[test]
    fn equal_clock_tie_broken_by_writer_id() {
        let mut r = StigReplica::new(RobotId(1));
        r.on_message(tuple("a", 2, 1));
        assert!(r.on_message(tuple("a", 2, 3)));
        assert_eq!(r.peek("a").unwrap().writer, RobotId(3));
    }

    #[test]
    fn stale_incoming_pushes_local_back() {
        let mut r = StigReplica::new(RobotId(1));
        r.on_message(tuple("a", 2, 1));
        r.drain_outbox();
        assert!(!r.on_message(tuple("a", 1, 0)));
        let pushed = r.drain_outbox();
        assert_eq!(pushed.len(), 1);
        assert_eq!(pushed[0].stamp(), (2, RobotId(1)));
    }

    #[test]
    fn prefix_scan_is_key_ordered() {
        let mut r = StigReplica::new(RobotId(0));
        r.write("ready/1/3", Vec::new());
        r.write("ready/1/10", Vec::new());
        r.write("weights/1/3", Vec::new());
        let keys: Vec<&str> = r
            .tuples_with_prefix("ready/1/")
            .map(|t| t.key.as_str())
            .collect();
        assert_eq!(keys, vec!["ready/1/10", "ready/1/3"]);
    }

    proptest! {
        /// Convergence is arrival-order independent: both arrival orders of
        /// two competing tuples leave both replicas with the same winner,
        /// the lexicographically greatest (lamport, writer).
        #[test]
        fn two_replica_convergence_any_order(
            l1 in 1u64..6, w1 in 0u32..4,
            l2 in 1u64..6, w2 in 0u32..4,
        ) {
            let ta = tuple("k", l1, w1);
            let tb = tuple("k", l2, w2);

            let mut r1 = StigReplica::new(RobotId(10));
            r1.on_message(ta.clone());
            r1.on_message(tb.clone());

            let mut r2 = StigReplica::new(RobotId(11));
            r2.on_message(tb.clone());
            r2.on_message(ta.clone());

            let winner = if ta.stamp() >= tb.stamp() { &ta } else { &tb };
            prop_assert_eq!(r1.peek("k").unwrap(), winner);
            prop_assert_eq!(r2.peek("k").unwrap(), winner);
        }

        /// Delivering the same tuple twice changes nothing after the first.
        #[test]
        fn duplicate_delivery_is_idempotent(l in 1u64..10, w in 0u32..8) {
            let t = tuple("k", l, w);
            let mut r = StigReplica::new(RobotId(9));
            r.on_message(t.clone());
            let snapshot = r.peek("k").cloned();
            r.drain_outbox();
            r.on_message(t);
            prop_assert_eq!(r.peek("k").cloned(), snapshot);
            prop_assert_eq!(r.outbox_len(), 0);
        }

        /// Per-key Lamport clocks never move backwards on a replica.
        #[test]
        fn lamport_monotone_under_mixed_traffic(
            ops in prop::collection::vec((0u64..8, 0u32..4, any::<bool>()), 1..40)
        ) {
            let mut r = StigReplica::new(RobotId(0));
            let mut last = 0u64;
            for (l, w, is_write) in ops {
                if is_write {
                    r.write("k", vec![]);
                } else {
                    r.on_message(tuple("k", l, w));
                }
                let now = r.peek("k").unwrap().lamport;
                prop_assert!(now >= last);
                last = now;
            }
        }
    }
}
