//! Reproducible random streams and low-discrepancy point sets.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, stream id)`, so any batch can be regenerated independently of the
//! order in which other batches were produced.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Counter-based stream keyed by a seed and a stream id.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box–Muller, both outputs used).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.open_uniform().ln()).sqrt();
        let angle = std::f64::consts::TAU * self.uniform();
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// Mixes a sequence of identifiers into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Halton sequence with a Cranley–Patterson random shift.
#[derive(Clone, Debug)]
pub struct Halton {
    bases: Vec<u64>,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64, stream: u64) -> Self {
        let mut s = Stream::new(seed, stream);
        Self {
            bases: first_primes(dim),
            shift: (0..dim).map(|_| s.uniform()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    /// Writes point `index` (0-based) into `out`; coordinates lie in `(0, 1)`.
    pub fn point(&self, index: u64, out: &mut [f64]) {
        for ((o, &b), &sh) in out.iter_mut().zip(&self.bases).zip(&self.shift) {
            let mut v = radical_inverse(index + 1, b) + sh;
            if v >= 1.0 {
                v -= 1.0;
            }
            *o = v.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}
