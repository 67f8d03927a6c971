//! Seeded deterministic RNG.
//!
//! xoshiro256++ seeded through SplitMix64. The generator state is exactly
//! four `u64` words, which makes it trivial to checkpoint and restore, and
//! the stream is a pure function of the seed on every platform.

/// Deterministic 64-bit PRNG (xoshiro256++).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    state: [u64; 4],
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        SeededRng {
            state: [
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
            ],
        }
    }

    /// Raw state, for checkpointing.
    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    /// Restores a checkpointed state.
    pub fn from_state(state: [u64; 4]) -> Self {
        SeededRng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` via rejection sampling (unbiased).
    pub fn gen_range(&mut self, n: usize) -> usize {
        assert!(n > 0, "gen_range needs a nonempty range");
        let n = n as u64;
        let threshold = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < threshold {
                return (x % n) as usize;
            }
        }
    }

    /// Uniform in `[-limit, limit)`.
    pub fn uniform_signed(&mut self, limit: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * limit
    }

    /// Derives an independent child generator; advances this one.
    pub fn split(&mut self) -> SeededRng {
        SeededRng::new(self.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert!(same < 4);
    }

    #[test]
    fn f64_in_unit_interval() {
        let mut rng = SeededRng::new(7);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn gen_range_covers_all_residues() {
        let mut rng = SeededRng::new(9);
        let mut hits = [0usize; 6];
        for _ in 0..60_000 {
            hits[rng.gen_range(6)] += 1;
        }
        for h in hits {
            let freq = h as f64 / 60_000.0;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn state_roundtrip() {
        let mut a = SeededRng::new(5);
        a.next_u64();
        let mut b = SeededRng::from_state(a.state());
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
