//! Serverless federated learning for robot swarms.
//!
//! A swarm of `K` robots collects trajectory observations of nearby peers
//! and collectively trains a shared forecasting model without a server.
//! Coordination happens through a gossip-replicated tuple space
//! ([`stigmergy`]), a count-based distributed barrier ([`barrier`]), and a
//! data-flow-driven round scheduler ([`flsched`]), all running on a
//! deterministic discrete-event network simulator ([`netsim`]).
//!
//! Three experiment variants share the same learner stack ([`learner`]) and
//! FedAvg aggregation ([`aggregate`]):
//!
//! - `centralized` — one model trained on pooled data (baseline),
//! - `server_fl` — an omniscient server schedules rounds by quota/quorum,
//! - `flow_fl` — fully distributed scheduling and aggregation through the
//!   tuple space.
//!
//! Dataset ingestion, synthetic swarm motion, and the train/validation/test
//! split live in [`dataio`]; evaluation (federated validation loss, ADE,
//! FDE, stopping round, round timing) in [`metrics`]; the experiment runner
//! and artifact formats in [`cli`].

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod aggregate;
pub mod barrier;
pub mod cli;
pub mod dataio;
pub mod flsched;
pub mod learner;
pub mod metrics;
pub mod netsim;
pub mod seed;
pub mod stigmergy;

/// Index of a robot within the swarm, in `0..K`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct RobotId(pub u32);

impl RobotId {
    /// The id as a `usize`, for indexing per-robot tables.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for RobotId {
    fn from(id: u32) -> Self {
        RobotId(id)
    }
}
