//! Counter-addressed random streams.
//!
//! Every random quantity in the crate is read from a ChaCha8 stream whose seed is a
//! tuple of integers (seed, sample, lattice index, ...). Values attached to a lattice
//! site are addressed by word position, so two windows that share a site read the same
//! value no matter which window asked first.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint.
pub(crate) const TAG_COUPLING: u64 = 0xC0DE_0001;
pub(crate) const TAG_SHIFT: u64 = 0xC0DE_0002;
pub(crate) const TAG_TRANSLATE: u64 = 0xC0DE_0003;
pub(crate) const TAG_BOOTSTRAP: u64 = 0xC0DE_0004;

pub(crate) fn seeded(words: [u64; 4]) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform double in `[0, 1)` from the top 53 bits.
#[inline]
pub(crate) fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maps `i64` onto `u64` preserving order.
#[inline]
fn ordered(i: i64) -> u64 {
    (i as u64) ^ (1 << 63)
}

/// Reads one unit draw per lattice index, keyed by `(seed, tag ^ sample)` and the
/// leading index components; the trailing component selects the word position.
pub(crate) struct SiteStream {
    seed: u64,
    sample: u64,
    rng: Option<ChaCha8Rng>,
    key: [i64; 2],
    next_last: i64,
}

impl SiteStream {
    pub(crate) fn new(seed: u64, tag: u64, sample: u64) -> Self {
        Self {
            seed,
            sample: sample.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag,
            rng: None,
            key: [0; 2],
            next_last: 0,
        }
    }

    /// Fills `out` with the unit draws owned by site `index` (first `dim` components).
    pub(crate) fn site(&mut self, index: &[i64; 3], dim: usize, out: &mut [f64]) {
        let (key, last) = match dim {
            1 => ([0, 0], index[0]),
            2 => ([index[0], 0], index[1]),
            _ => ([index[0], index[1]], index[2]),
        };
        let per_site = out.len() as i64;
        let sequential = self.rng.is_some() && self.key == key && self.next_last == last;
        if !sequential {
            if self.rng.is_none() || self.key != key {
                self.rng = Some(seeded([
                    self.seed,
                    self.sample,
                    ordered(key[0]),
                    ordered(key[1]),
                ]));
                self.key = key;
            }
            // Each site owns `2 * per_site` 32-bit words.
            let pos = (ordered(last) as u128) * (2 * per_site as u128);
            if let Some(rng) = self.rng.as_mut() {
                rng.set_word_pos(pos);
            }
        }
        let rng = self.rng.as_mut().expect("stream initialised above");
        for v in out.iter_mut() {
            *v = unit(rng.next_u64());
        }
        self.next_last = last.wrapping_add(1);
    }
}
