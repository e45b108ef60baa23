//! Ordered parameter storage with deterministic, name-keyed
//! initialization.

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::tensor::Tensor;
use super::NnError;

/// Model parameters in insertion order. Iteration order is part of the
/// on-disk and optimizer contracts, so it never depends on hashing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    seed: u64,
    params: IndexMap<String, Tensor>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Uniform in `[0, 1)` built from the generator's raw 64-bit output, so the
/// value stream is pinned to this crate rather than an external helper.
fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            params: IndexMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Inserts a weight matrix drawn uniformly from the symmetric
    /// fan-balanced range `±sqrt(6 / (fan_in + fan_out))`. The generator is
    /// seeded from the store seed and the parameter name, so values do not
    /// depend on insertion order.
    pub fn insert_xavier(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<(), NnError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()));
        let data = (0..fan_in * fan_out)
            .map(|_| -limit + 2.0 * limit * unit_uniform(&mut rng))
            .collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data))
    }

    /// Inserts a zero-initialized tensor (used for biases).
    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<(), NnError> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<(), NnError> {
        if self.params.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        self.params.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.params
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_values(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}
