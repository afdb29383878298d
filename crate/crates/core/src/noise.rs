//! Complex Wiener increments with E[dξ] = 0, E[dξ²] = 0 and E[|dξ|²] = dt.
//!
//! Streams are ChaCha20 generators keyed by the master seed; every forked
//! substream selects a distinct ChaCha stream id, so trajectory `k` sees the
//! same noise no matter which worker runs it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{QsdError, Result};
use crate::linalg::C64;

#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    channel_count: usize,
    rng: ChaCha20Rng,
}

impl NoiseStream {
    /// Root stream for `seed` with one increment per channel per draw.
    pub fn new(seed: u64, channel_count: usize) -> Self {
        Self::with_stream(seed, 0, channel_count)
    }

    fn with_stream(seed: u64, stream_id: u64, channel_count: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            channel_count,
            rng,
        }
    }

    /// Independent substream for trajectory `index`, derived only from the
    /// master seed and the index.
    pub fn fork(&self, index: u64) -> Self {
        let stream_id = index
            .checked_add(1)
            .expect("trajectory index exhausts the stream space");
        Self::with_stream(self.seed, stream_id, self.channel_count)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Draws one increment per channel for a step of length `dt`.
    pub fn sample_increments(&mut self, dt: f64) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.channel_count];
        self.fill_increments(dt, &mut out)?;
        Ok(out)
    }

    /// Like [`sample_increments`](Self::sample_increments) but writes into `out`,
    /// which must hold `channel_count` entries.
    pub fn fill_increments(&mut self, dt: f64, out: &mut [C64]) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidStep(dt));
        }
        debug_assert_eq!(out.len(), self.channel_count);
        let sigma = (0.5 * dt).sqrt();
        for slot in out.iter_mut() {
            let re: f64 = self.rng.sample(StandardNormal);
            let im: f64 = self.rng.sample(StandardNormal);
            *slot = C64::new(sigma * re, sigma * im);
        }
        Ok(())
    }
}

/// Forks the stream for one trajectory of an ensemble.
pub fn fork_stream(stream: &NoiseStream, trajectory_index: u64) -> NoiseStream {
    stream.fork(trajectory_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(stream: &mut NoiseStream, n: usize, dt: f64) -> Vec<C64> {
        (0..n)
            .flat_map(|_| stream.sample_increments(dt).unwrap())
            .collect()
    }

    #[test]
    fn equal_seeds_are_bitwise_identical() {
        let a = draws(&mut NoiseStream::new(7, 3), 500, 0.01);
        let b = draws(&mut NoiseStream::new(7, 3), 500, 0.01);
        assert!(a
            .iter()
            .zip(&b)
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
        let c = draws(&mut NoiseStream::new(8, 3), 500, 0.01);
        assert_ne!(a, c);
    }

    #[test]
    fn forks_are_distinct_and_repeatable() {
        let root = NoiseStream::new(99, 1);
        let f0 = draws(&mut root.fork(0), 1000, 0.1);
        let f1 = draws(&mut root.fork(1), 1000, 0.1);
        assert!(f0.iter().zip(&f1).all(|(x, y)| x != y));
        assert_eq!(f0, draws(&mut fork_stream(&root, 0), 1000, 0.1));
        let root_draws = draws(&mut root.clone(), 1000, 0.1);
        assert_ne!(root_draws, f0);
    }

    #[test]
    fn fork_ignores_parent_position() {
        let mut root = NoiseStream::new(5, 2);
        let before = draws(&mut root.fork(3), 10, 1.0);
        root.sample_increments(1.0).unwrap();
        assert_eq!(before, draws(&mut root.fork(3), 10, 1.0));
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut s = NoiseStream::new(1, 1);
        assert!(matches!(
            s.sample_increments(0.0),
            Err(QsdError::InvalidStep(_))
        ));
        assert!(s.sample_increments(-1.0).is_err());
        assert!(s.sample_increments(f64::NAN).is_err());
    }
}
