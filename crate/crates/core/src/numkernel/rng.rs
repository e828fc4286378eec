use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Generator handed out by a [`RandomStream`].
pub type StreamRng = ChaCha8Rng;

/// Address of an independent random stream.
///
/// The generator is counter based: `seed` fixes the ChaCha key and
/// `stream_id` selects the ChaCha stream, so every (seed, stream_id) pair
/// yields its own reproducible sequence regardless of which worker asks
/// for it or in what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream addressed by an extra key (cell, chunk, replicate, ...).
    pub fn child(self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(key.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One draw of (Z + ncp) / sqrt(X / df) with Z ~ N(0,1) and X ~ chi-squared(df).
pub fn sample_noncentral_t<R: Rng + ?Sized>(rng: &mut R, df: u32, ncp: f64) -> f64 {
    assert!(df >= 1, "non-central t requires df >= 1");
    let z: f64 = StandardNormal.sample(rng);
    let chi = ChiSquared::new(df as f64).expect("df >= 1 is a valid chi-squared shape");
    let x: f64 = chi.sample(rng);
    (z + ncp) / (x / df as f64).sqrt()
}
