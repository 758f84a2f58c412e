//! Bloom filters that remember internally initiated flows.
//!
//! The stateful firewall keeps two filters with one hash each, drawn from
//! the same seeded family with different seeds. A key is reported present
//! only if both filters have its bit set, so a false positive needs two
//! independent collisions.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::flow::FlowKey;

pub const DEFAULT_BITS: u32 = 4096;

const SEED_BASE: u64 = 0x243f_6a88_85a3_08d3;
const SEED_STEP: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BloomError {
    #[error("filter size {0} is not a nonzero power of two")]
    BadSize(u32),
    #[error("both filters use hash id {0}")]
    SameHash(u32),
}

/// MurmurHash3 64-bit finalizer.
const fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// Index of `key` in an `m`-bit filter for family member `hash_id`.
///
/// The key is consumed as three big-endian words (`a_ip`, `b_ip`,
/// `a_port << 16 | b_port`), each folded in through `fmix64`. `m` must be a
/// power of two.
pub fn bloom_hash(key: &FlowKey, hash_id: u32, m: u32) -> u32 {
    debug_assert!(m.is_power_of_two());
    let words = [
        u32::from(key.a_ip()),
        u32::from(key.b_ip()),
        (u32::from(key.a_port()) << 16) | u32::from(key.b_port()),
    ];
    let mut h = fmix64(SEED_BASE.wrapping_add(u64::from(hash_id).wrapping_mul(SEED_STEP)));
    for w in words {
        h = fmix64(h ^ u64::from(w));
    }
    (h & u64::from(m - 1)) as u32
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    words: Vec<u64>,
    m: u32,
    hash_id: u32,
    inserted_count: u64,
}

impl BloomFilter {
    pub fn new(m: u32, hash_id: u32) -> Result<Self, BloomError> {
        if !m.is_power_of_two() {
            return Err(BloomError::BadSize(m));
        }
        Ok(Self {
            words: vec![0; (m as usize).div_ceil(64)],
            m,
            hash_id,
            inserted_count: 0,
        })
    }

    pub fn bits(&self) -> u32 {
        self.m
    }

    pub fn hash_id(&self) -> u32 {
        self.hash_id
    }

    pub fn inserted_count(&self) -> u64 {
        self.inserted_count
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    fn index(&self, key: &FlowKey) -> (usize, u64) {
        let i = bloom_hash(key, self.hash_id, self.m) as usize;
        (i / 64, 1 << (i % 64))
    }

    pub fn insert(&mut self, key: &FlowKey) {
        let (w, mask) = self.index(key);
        self.words[w] |= mask;
        self.inserted_count += 1;
    }

    pub fn contains(&self, key: &FlowKey) -> bool {
        let (w, mask) = self.index(key);
        self.words[w] & mask != 0
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
        self.inserted_count = 0;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomPair {
    f1: BloomFilter,
    f2: BloomFilter,
}

impl Default for BloomPair {
    fn default() -> Self {
        Self::new(DEFAULT_BITS).expect("default size is a power of two")
    }
}

impl BloomPair {
    /// Two `m`-bit filters using hash ids 1 and 2.
    pub fn new(m: u32) -> Result<Self, BloomError> {
        Self::with_hash_ids(m, 1, 2)
    }

    pub fn with_hash_ids(m: u32, first: u32, second: u32) -> Result<Self, BloomError> {
        if first == second {
            return Err(BloomError::SameHash(first));
        }
        Ok(Self {
            f1: BloomFilter::new(m, first)?,
            f2: BloomFilter::new(m, second)?,
        })
    }

    pub fn first(&self) -> &BloomFilter {
        &self.f1
    }

    pub fn second(&self) -> &BloomFilter {
        &self.f2
    }

    pub fn insert(&mut self, key: &FlowKey) {
        self.f1.insert(key);
        self.f2.insert(key);
    }

    /// True iff both filters report the key.
    pub fn contains(&self, key: &FlowKey) -> bool {
        self.f1.contains(key) && self.f2.contains(key)
    }

    /// Forgets every flow. Only used to reset scenarios.
    pub fn clear(&mut self) {
        self.f1.clear();
        self.f2.clear();
    }
}
