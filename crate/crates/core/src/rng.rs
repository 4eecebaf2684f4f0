//! Named random streams split from one root seed.
//!
//! Every stream is a ChaCha8 generator keyed by the root seed and positioned on
//! a stream id derived from its name, so adding a consumer never shifts the
//! numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

fn stream_id(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Generator for stream `name` under `root_seed`.
pub fn stream(root_seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream_id(name));
    rng
}
