//! Per-path random streams.
//!
//! Every path owns two ChaCha8 streams keyed by `(seed, path)`: one drives
//! the mode chain, the other the Brownian increments. Streams never overlap,
//! so results do not depend on how paths are scheduled across threads, and
//! the mode path of a given `(seed, path)` does not change when the state
//! integrator draws a different number of normals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct PathStreams {
    pub modes: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        PathStreams {
            modes: stream(seed, 2 * path),
            noise: stream(seed, 2 * path + 1),
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Fill `out` with independent standard normals.
pub fn fill_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}
