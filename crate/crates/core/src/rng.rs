//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, stream, index)`: the ChaCha8 key is
//! derived from the seed, the ChaCha stream id is the path (or sample)
//! number, and the word position is the draw index. A path's numbers do not
//! depend on which thread generates it or on how many other paths exist,
//! so ensembles are bit-identical under any parallel schedule.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * TWO_POW_M53
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal draws via inverse CDF, keyed by `(seed, path, index)`.
///
/// With `antithetic` set, odd paths replay the stream of the preceding even
/// path with flipped sign; marginals are unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianStream {
    seed: u64,
    antithetic: bool,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream { seed, antithetic: false }
    }

    pub fn antithetic(seed: u64) -> Self {
        GaussianStream { seed, antithetic: true }
    }

    pub fn with_antithetic(seed: u64, antithetic: bool) -> Self {
        GaussianStream { seed, antithetic }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    fn base(&self, path: u64) -> (u64, f64) {
        if self.antithetic {
            (path / 2, if path % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path, 1.0)
        }
    }

    fn generator(&self, stream: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(2 * index as u128);
        rng
    }

    /// Single draw for `(path, index)`; `index = step * d + component`.
    pub fn normal(&self, path: u64, index: u64) -> f64 {
        let (stream, sign) = self.base(path);
        let mut rng = self.generator(stream, index);
        sign * standard_normal().inverse_cdf(open_unit(rng.next_u64()))
    }

    /// Fills `out` with draws `0..out.len()` of `path`; identical to calling
    /// [`GaussianStream::normal`] index by index.
    pub fn fill(&self, path: u64, out: &mut [f64]) {
        let (stream, sign) = self.base(path);
        let mut rng = self.generator(stream, 0);
        let normal = standard_normal();
        for slot in out.iter_mut() {
            *slot = sign * normal.inverse_cdf(open_unit(rng.next_u64()));
        }
    }
}

/// Uniform draws on `(0, 1)` addressed like [`GaussianStream`]; used by the
/// samplers of the auditors.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        UniformStream { rng }
    }

    pub fn next(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }

    pub fn index(&mut self, len: usize) -> usize {
        ((self.next() * len as f64) as usize).min(len.saturating_sub(1))
    }

    pub fn normal(&mut self) -> f64 {
        standard_normal().inverse_cdf(self.next())
    }
}
