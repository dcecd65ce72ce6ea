use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed plus stream id. Equal pairs give bit-identical simulations; distinct
/// streams of one seed are independent ChaCha keystreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimSeed {
    pub seed: u64,
    pub stream: u64,
}

impl SimSeed {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A different seed for an auxiliary purpose, keeping the stream.
    pub fn derive(&self, salt: u64) -> Self {
        // splitmix64 finalizer keeps nearby salts far apart
        let mut z = self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Self::new(z ^ (z >> 31), self.stream)
    }
}

impl From<u64> for SimSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed, 0)
    }
}
