//! Reproducible random streams.
//!
//! A stream is identified by `(seed, stream_index)` and backed by a ChaCha8
//! generator keyed from both. Child streams are derived from the identity of
//! the parent alone, never from its position, so replication `r` draws the
//! same numbers no matter which worker runs it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1) from 53 random bits.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&stream_index.to_le_bytes());
        key[16..24].copy_from_slice(&splitmix64(seed ^ splitmix64(stream_index)).to_le_bytes());
        Self {
            seed,
            stream_index,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Stream for replication `index` under this stream.
    pub fn child(&self, index: u64) -> RandomStream {
        let derived = splitmix64(splitmix64(self.seed) ^ self.stream_index.rotate_left(29) ^ 0x5851_f42d_4c95_7f2d);
        RandomStream::new(derived, index)
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        open01(self)
    }
}

impl RngCore for RandomStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Replications per work unit. Fixed so results never depend on the
/// number of threads.
pub const CHUNK: u64 = 1024;

/// Runs `body` for replications `0..n`, each on `stream.child(r)`, and
/// reduces per-chunk accumulators in chunk order.
pub fn replicate_fold<A, I, F, M>(n: u64, stream: &RandomStream, init: I, body: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut RandomStream, u64) + Sync,
    M: Fn(A, A) -> A,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for r in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut s = stream.child(r);
                body(&mut acc, &mut s, r);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(init(), merge)
}

/// One value per replication, in replication order.
pub fn replicate_map<T, F>(n: u64, stream: &RandomStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RandomStream, u64) -> T + Sync,
{
    (0..n as usize)
        .into_par_iter()
        .with_min_len(CHUNK as usize)
        .map(|r| {
            let mut s = stream.child(r as u64);
            f(&mut s, r as u64)
        })
        .collect()
}

/// Running count, mean and sum of squared deviations, mergeable in any
/// fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_draws() {
        let mut a = RandomStream::new(7, 3);
        let mut b = RandomStream::new(7, 3);
        let mut c = RandomStream::new(7, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn children_ignore_parent_position() {
        let parent = RandomStream::new(11, 0);
        let mut advanced = parent.clone();
        for _ in 0..100 {
            advanced.next_u64();
        }
        assert_eq!(parent.child(5).next_u64(), advanced.child(5).next_u64());
        assert_ne!(parent.child(5).next_u64(), parent.child(6).next_u64());
    }

    #[test]
    fn fold_is_independent_of_thread_count() {
        let s = RandomStream::new(1, 0);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    replicate_fold(5000, &s, Moments::default, |m, r, _| m.push(r.open01()), Moments::merge)
                })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn open01_never_hits_endpoints() {
        let mut s = RandomStream::new(2, 2);
        for _ in 0..10_000 {
            let u = s.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        let m = a.merge(b);
        assert!((m.mean - all.mean).abs() < 1e-14);
        assert!((m.variance() - all.variance()).abs() < 1e-13);
    }
}
