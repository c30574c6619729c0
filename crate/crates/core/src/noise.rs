//! i.i.d. Pauli noise models: sampling and log-probability evaluation.
//!
//! Sampling is counter-based: the error for (seed, sample index) is a pure
//! function, so parallel workers produce exactly the stream a serial run
//! would. Probabilities are handled in log space throughout; impossible
//! errors get `f64::NEG_INFINITY`.

use serde::{Deserialize, Serialize};

use crate::gf2::{pauli_weight, BitVec};

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

/// SplitMix64 step: add the Weyl constant, then finalize. Bijective in `x`
/// with full avalanche; the whole RNG is built from it.
fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic counter-based generator. Draw `i` of stream `(seed, stream)`
/// never depends on how many other streams were consumed.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng { key: splitmix(splitmix(seed) ^ stream), counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = splitmix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        out
    }

    /// Uniform draw from [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from 0..bound.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        // Rejection-free modulo is fine here: bound is tiny next to 2^64 in
        // every use (shuffles over at most a few million items).
        self.next_u64() % bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    BitFlip,
    Depolarizing,
}

/// Per-qubit i.i.d. Pauli channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub p: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "error probability must be in [0,1), got {p}");
        NoiseModel { kind, p }
    }

    pub fn bit_flip(p: f64) -> Self {
        NoiseModel::new(NoiseKind::BitFlip, p)
    }

    pub fn depolarizing(p: f64) -> Self {
        NoiseModel::new(NoiseKind::Depolarizing, p)
    }

    /// Sample error number `index` of the stream identified by `seed`.
    ///
    /// bit_flip applies X to each qubit with probability p (the Z half stays
    /// zero); depolarizing applies X, Y, or Z with probability p/3 each.
    pub fn sample_error(&self, n: usize, seed: u64, index: u64) -> BitVec {
        assert!(n >= 1);
        let mut rng = CounterRng::new(seed, index);
        let mut e = BitVec::zeros(2 * n);
        for i in 0..n {
            let u = rng.next_f64();
            if u >= self.p {
                continue;
            }
            match self.kind {
                NoiseKind::BitFlip => e.set(i, true),
                NoiseKind::Depolarizing => {
                    if u < self.p / 3.0 {
                        e.set(i, true);
                    } else if u < 2.0 * self.p / 3.0 {
                        e.set(i, true);
                        e.set(n + i, true);
                    } else {
                        e.set(n + i, true);
                    }
                }
            }
        }
        e
    }

    /// Log probability of a specific error vector; `-inf` when the model
    /// cannot produce it.
    pub fn log_prob(&self, e: &BitVec) -> f64 {
        assert!(e.len() % 2 == 0, "error vector must have even length");
        let n = e.len() / 2;
        let (x, z) = e.halves();
        let (weight, flip_log) = match self.kind {
            NoiseKind::BitFlip => {
                if !z.is_zero() {
                    return f64::NEG_INFINITY;
                }
                (x.hamming(), self.p.ln())
            }
            NoiseKind::Depolarizing => (pauli_weight(e), (self.p / 3.0).ln()),
        };
        let mut log = (n - weight) as f64 * (1.0 - self.p).ln();
        if weight > 0 {
            // Keep 0 * ln(0) out of the sum when p = 0.
            log += weight as f64 * flip_log;
        }
        log
    }
}

// ==================== tests ====================
