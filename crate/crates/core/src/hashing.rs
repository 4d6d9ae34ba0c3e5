//! Seeded k-wise independent hash families.
//!
//! Both families are random polynomials over the Mersenne prime field
//! `p = 2^61 - 1`: degree 3 (4-wise independent) for sign functions and
//! degree 1 (2-wise independent) for bin functions. Coefficients are stored
//! highest degree first, so `[0, 0, 1, 0]` is the identity polynomial.
//!
//! Coefficient derivation is a fixed mapping of
//! `(master seed, kind, id, repetition, counter)` through the SplitMix64
//! finalizer, so sketches are reproducible across machines and builds:
//!
//! ```text
//! key    = mix(mix(mix(mix(mix(seed) ^ kind) ^ id) ^ repetition) ^ counter)
//! coef_t = mix(key + (t + 1) * 0x9E3779B97F4A7C15) mod p     t = 0, 1, ...
//! ```

use crate::error::{Error, Result};
use crate::graph::JoinGraph;

/// The Mersenne prime `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const KIND_SIGN: u64 = 0x5349_474E; // "SIGN"
const KIND_BIN: u64 = 0x0042_494E; // "BIN"

/// SplitMix64 output finalizer. Bijective on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn reduce(x: u64) -> u64 {
    let r = (x & MERSENNE_61) + (x >> 61);
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

/// `a * b mod p` for `a, b < p`.
#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    let prod = (a as u128) * (b as u128);
    let lo = (prod as u64) & MERSENNE_61;
    let hi = (prod >> 61) as u64;
    let r = lo + hi;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let r = a + b;
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

/// Horner evaluation of a polynomial with coefficients highest degree first.
#[inline]
fn poly_eval<const N: usize>(coefficients: &[u64; N], x: u64) -> u64 {
    let x = reduce(x);
    let mut acc = coefficients[0];
    for &c in &coefficients[1..] {
        acc = add_mod(mul_mod(acc, x), c);
    }
    acc
}

/// Derivation key for one hash function.
#[inline]
fn derive_key(seed: u64, kind: u64, id: u64, repetition: u64, counter: u64) -> u64 {
    let k = mix64(seed);
    let k = mix64(k ^ kind);
    let k = mix64(k ^ id);
    let k = mix64(k ^ repetition);
    mix64(k ^ counter)
}

#[inline]
fn expand<const N: usize>(key: u64) -> [u64; N] {
    let mut out = [0u64; N];
    for (t, c) in out.iter_mut().enumerate() {
        *c = mix64(key.wrapping_add((t as u64 + 1).wrapping_mul(GOLDEN_GAMMA))) % MERSENNE_61;
    }
    out
}

/// 4-wise independent random sign function serving one join edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignHash {
    pub coefficients: [u64; 4],
    pub edge: usize,
    pub repetition: usize,
}

impl SignHash {
    pub fn from_coefficients(coefficients: [u64; 4]) -> Self {
        assert!(coefficients.iter().all(|&c| c < MERSENNE_61));
        SignHash {
            coefficients,
            edge: 0,
            repetition: 0,
        }
    }

    /// Sign function number `counter` of the family for `(edge, repetition)`.
    ///
    /// The convolution sketch uses counter 0; the AMS baseline uses one
    /// counter per sketch cell.
    pub fn derive(seed: u64, edge: usize, repetition: usize, counter: usize) -> Self {
        SignFamily::new(seed, edge, repetition).member(counter)
    }

    /// Returns `+1` or `-1` from the parity of the polynomial value.
    #[inline]
    pub fn eval(&self, x: u64) -> i32 {
        1 - 2 * (poly_eval(&self.coefficients, x) & 1) as i32
    }
}

/// Sign functions of one `(edge, repetition)` indexed by a counter, derived
/// on demand so that `m` of them cost no memory.
#[derive(Debug, Clone, Copy)]
pub struct SignFamily {
    prefix: u64,
    edge: usize,
    repetition: usize,
}

impl SignFamily {
    pub fn new(seed: u64, edge: usize, repetition: usize) -> Self {
        let k = mix64(seed);
        let k = mix64(k ^ KIND_SIGN);
        let k = mix64(k ^ edge as u64);
        let prefix = mix64(k ^ repetition as u64);
        SignFamily {
            prefix,
            edge,
            repetition,
        }
    }

    #[inline]
    pub fn member(&self, counter: usize) -> SignHash {
        SignHash {
            coefficients: expand(mix64(self.prefix ^ counter as u64)),
            edge: self.edge,
            repetition: self.repetition,
        }
    }
}

/// 2-wise independent random bin function serving one graph component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinHash {
    pub coefficients: [u64; 2],
    pub component: usize,
    pub repetition: usize,
    pub m: usize,
}

impl BinHash {
    pub fn from_coefficients(coefficients: [u64; 2], m: usize) -> Self {
        assert!(m >= 1, "bin count must be positive");
        assert!(coefficients.iter().all(|&c| c < MERSENNE_61));
        BinHash {
            coefficients,
            component: 0,
            repetition: 0,
            m,
        }
    }

    pub fn derive(seed: u64, component: usize, repetition: usize, m: usize) -> Self {
        assert!(m >= 1, "bin count must be positive");
        let key = derive_key(seed, KIND_BIN, component as u64, repetition as u64, 0);
        BinHash {
            coefficients: expand(key),
            component,
            repetition,
            m,
        }
    }

    #[inline]
    pub fn eval(&self, x: u64) -> usize {
        let h = poly_eval(&self.coefficients, x);
        let m = self.m as u64;
        // same value as `h % m`, without a division for the common widths
        if m.is_power_of_two() {
            (h & (m - 1)) as usize
        } else {
            (h % m) as usize
        }
    }
}

/// All hash functions needed to sketch one query: a sign function per
/// (edge, repetition) and a bin function per (component, repetition).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchHashes {
    seed: u64,
    m: usize,
    reps: usize,
    edges: usize,
    components: usize,
    // repetition-major
    signs: Vec<SignHash>,
    bins: Vec<BinHash>,
}

impl SketchHashes {
    /// Samples the sign and bin functions for `graph` from one master seed.
    pub fn derive(seed: u64, m: usize, reps: usize, graph: &JoinGraph) -> Result<Self> {
        if m == 0 || reps == 0 {
            return Err(Error::InvalidArgument(format!(
                "bin count and repetitions must be positive (m={m}, reps={reps})"
            )));
        }
        let edges = graph.edges().len();
        let components = graph.component_labels();
        if edges == 0 || components.is_empty() {
            return Err(Error::InvalidQuery(
                "query needs at least one join and one component".into(),
            ));
        }
        let mut signs = Vec::with_capacity(edges * reps);
        let mut bins = Vec::with_capacity(components.len() * reps);
        for rep in 0..reps {
            signs.extend((0..edges).map(|e| SignHash::derive(seed, e, rep, 0)));
            bins.extend(components.iter().map(|&label| BinHash::derive(seed, label, rep, m)));
        }
        Ok(SketchHashes {
            seed,
            m,
            reps,
            edges,
            components: components.len(),
            signs,
            bins,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    #[inline]
    pub fn sign(&self, edge: usize, rep: usize) -> &SignHash {
        &self.signs[rep * self.edges + edge]
    }

    /// Bin function by dense component index (see [`JoinGraph::component_index`]).
    #[inline]
    pub fn bin(&self, component_index: usize, rep: usize) -> &BinHash {
        &self.bins[rep * self.components + component_index]
    }

    pub fn sign_hashes(&self) -> &[SignHash] {
        &self.signs
    }

    pub fn bin_hashes(&self) -> &[BinHash] {
        &self.bins
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_polynomial_is_positive() {
        let h = SignHash::from_coefficients([0; 4]);
        for x in [0, 1, 2, 3, u64::MAX] {
            assert_eq!(h.eval(x), 1);
        }
    }

    #[test]
    fn sign_parity_examples() {
        assert_eq!(SignHash::from_coefficients([0, 0, 1, 0]).eval(3), -1);
        assert_eq!(SignHash::from_coefficients([0, 0, 1, 1]).eval(3), 1);
    }

    #[test]
    fn bin_examples() {
        assert_eq!(BinHash::from_coefficients([1, 0], 5).eval(26), 1);
        let single = BinHash::from_coefficients([12345, 678], 1);
        assert_eq!(single.eval(99), 0);
        let constant = BinHash::from_coefficients([0, 17], 5);
        for x in [0, 3, 1 << 40] {
            assert_eq!(constant.eval(x), 2);
        }
    }

    #[test]
    fn power_of_two_widths_match_plain_modulo() {
        let coefficients = [0x1234_5678_9abc, 0x0fed_cba9];
        for m in [1usize, 2, 3, 8, 100, 1 << 10, (1 << 10) + 1, 1 << 20] {
            let h = BinHash::from_coefficients(coefficients, m);
            for x in (0..5000u64).map(|i| i.wrapping_mul(0x9E37_79B9)) {
                let reference = poly_eval(&coefficients, x) % m as u64;
                assert_eq!(h.eval(x) as u64, reference);
            }
        }
    }

    #[test]
    fn inputs_reduce_mod_p() {
        let id = SignHash::from_coefficients([0, 0, 1, 0]);
        // p + 3 reduces to 3, which is odd
        assert_eq!(id.eval(MERSENNE_61 + 3), -1);
        let bin = BinHash::from_coefficients([1, 0], 1 << 20);
        assert_eq!(bin.eval(MERSENNE_61 + 7), 7);
    }

    #[test]
    fn mul_mod_matches_u128_reference() {
        let samples = [0, 1, 2, MERSENNE_61 - 1, 1 << 60, 0x1234_5678_9abc_def0 % MERSENNE_61];
        for &a in &samples {
            for &b in &samples {
                let expected = ((a as u128 * b as u128) % MERSENNE_61 as u128) as u64;
                assert_eq!(mul_mod(a, b), expected);
            }
        }
    }

    #[test]
    fn polynomial_matches_bigint_reference() {
        let c = [
            0x0123_4567_89ab_cdef % MERSENNE_61,
            0x0fed_cba9_8765_4321 % MERSENNE_61,
            MERSENNE_61 - 5,
            42,
        ];
        for x in [0u64, 1, 7, 1 << 62, u64::MAX] {
            let p = MERSENNE_61 as u128;
            let xr = x as u128 % p;
            let mut acc = 0u128;
            for &ci in &c {
                acc = (acc * xr + ci as u128) % p;
            }
            assert_eq!(poly_eval(&c, x), acc as u64);
        }
    }

    #[test]
    fn derivation_is_deterministic_and_keyed() {
        let a = SignHash::derive(7, 1, 2, 0);
        assert_eq!(a, SignHash::derive(7, 1, 2, 0));
        assert_ne!(a.coefficients, SignHash::derive(8, 1, 2, 0).coefficients);
        assert_ne!(a.coefficients, SignHash::derive(7, 2, 2, 0).coefficients);
        assert_ne!(a.coefficients, SignHash::derive(7, 1, 3, 0).coefficients);
        assert_ne!(a.coefficients, SignHash::derive(7, 1, 2, 1).coefficients);
        assert!(a.coefficients.iter().all(|&c| c < MERSENNE_61));
        let b = BinHash::derive(7, 0, 0, 16);
        assert_eq!(b, BinHash::derive(7, 0, 0, 16));
    }

    #[test]
    fn bins_are_uniform() {
        let m = 16;
        let n = 100_000u64;
        let h = BinHash::derive(0xDEAD_BEEF, 0, 0, m);
        let mut counts = vec![0u64; m];
        for x in 0..n {
            counts[h.eval(x)] += 1;
        }
        let expected = n as f64 / m as f64;
        for &c in &counts {
            let share = c as f64 / n as f64;
            assert!((0.05..=0.075).contains(&share), "share {share}");
        }
        // chi-square with 15 dof; 65.0 is beyond the 1e-6 upper tail
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 65.0, "chi2 {chi2}");
    }

    #[test]
    fn signs_are_balanced() {
        let h = SignHash::derive(0x5EED, 3, 1, 0);
        let n = 100_000u64;
        let sum: i64 = (0..n).map(|x| h.eval(x.wrapping_mul(0x9E37) ^ 0xABCD) as i64).sum();
        let mean = sum as f64 / n as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn pairwise_collision_rate() {
        // Over independent draws of h, P[h(x) = h(y)] = 1/m for fixed x != y.
        let m = 16usize;
        let trials = 20_000usize;
        let mut collisions = 0usize;
        for t in 0..trials {
            let h = BinHash::derive(t as u64, 0, 0, m);
            if h.eval(1_000 + t as u64) == h.eval(77_777_777 + 3 * t as u64) {
                collisions += 1;
            }
        }
        let q = 1.0 / m as f64;
        let rate = collisions as f64 / trials as f64;
        let se = (q * (1.0 - q) / trials as f64).sqrt();
        assert!((rate - q).abs() <= 3.0 * se, "rate {rate} vs {q} (se {se})");
    }
}
