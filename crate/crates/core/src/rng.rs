//! Per-agent random streams.
//!
//! Each agent draws from its own ChaCha stream keyed by `(seed, agent id)`,
//! so results do not depend on which other agents exist or in which order
//! they are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type AgentRng = ChaCha8Rng;

pub fn substream(seed: u64, agent_id: &str) -> AgentRng {
    let mut hasher = Sha256::new();
    hasher.update(b"agent-substream\0");
    hasher.update(seed.to_le_bytes());
    hasher.update(agent_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
