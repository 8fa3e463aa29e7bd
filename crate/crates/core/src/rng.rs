//! Keyed random streams.
//!
//! Every replication owns a ChaCha8 key derived from `(seed, replication)`;
//! within a replication, independent sub-streams are selected through the
//! ChaCha stream id. Results therefore do not depend on scheduling or on how
//! replications are batched across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const DOMAIN_TAG: &[u8; 16] = b"palmcluster/v1\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn for_replication(seed: u64, replication: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&replication.to_le_bytes());
        key[16..].copy_from_slice(DOMAIN_TAG);
        Self(key)
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill(&mut key);
        Self(key)
    }

    pub fn stream(&self, id: u64) -> SimRng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(id);
        rng
    }
}
