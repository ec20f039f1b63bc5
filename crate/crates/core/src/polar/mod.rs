//! Polar codes protecting the high index bits of each measurement column.
//!
//! Codewords are `u · F^{⊗n}` over GF(2) with `F = [[1, 0], [1, 1]]` in
//! natural (non bit-reversed) order. The information set is chosen by the
//! Bhattacharyya recursion started at 0.5, and decoding is CRC-aided
//! successive-cancellation list decoding with exact LLR updates.

pub mod crc;
mod scl;

pub use crc::{crc_append, crc_check, CrcSpec};
pub use scl::{scl_decode, SclOutput};

use crate::error::{Error, Result};

/// Design parameter of the Bhattacharyya construction.
pub const DESIGN_BHATTACHARYYA: f64 = 0.5;

/// Code layout: block length and which positions carry payload bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolarSpec {
    n_c: usize,
    info_set: Vec<usize>,
    frozen_set: Vec<usize>,
    frozen_mask: Vec<bool>,
}

impl PolarSpec {
    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn payload_len(&self) -> usize {
        self.info_set.len()
    }

    /// Information positions, ascending.
    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    /// Frozen positions, ascending.
    pub fn frozen_set(&self) -> &[usize] {
        &self.frozen_set
    }

    pub fn is_frozen(&self, pos: usize) -> bool {
        self.frozen_mask[pos]
    }

    /// Builds the input vector `u` by scattering payload and frozen bits.
    pub fn assemble(&self, payload: &[u8], frozen: &FrozenPattern) -> Result<Vec<u8>> {
        if payload.len() != self.payload_len() {
            return Err(Error::InvalidArgument(format!(
                "payload has {} bits, code expects {}",
                payload.len(),
                self.payload_len()
            )));
        }
        if frozen.len() != self.frozen_set.len() {
            return Err(Error::InvalidArgument(format!(
                "frozen pattern has {} bits, code has {} frozen positions",
                frozen.len(),
                self.frozen_set.len()
            )));
        }
        let mut u = vec![0u8; self.n_c];
        for (&pos, &bit) in self.info_set.iter().zip(payload) {
            u[pos] = bit & 1;
        }
        for (&pos, &bit) in self.frozen_set.iter().zip(frozen.values()) {
            u[pos] = bit & 1;
        }
        Ok(u)
    }
}

/// Values of the frozen positions, in ascending position order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenPattern(Vec<u8>);

impl FrozenPattern {
    pub fn new(values: Vec<u8>) -> Self {
        Self(values.into_iter().map(|b| b & 1).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Repeats `seed_bits` cyclically across `len` frozen positions. An empty
    /// seed gives the all-zero pattern.
    pub fn cyclic(seed_bits: &[u8], len: usize) -> Self {
        if seed_bits.is_empty() {
            return Self::zeros(len);
        }
        Self(seed_bits.iter().cycle().take(len).map(|b| b & 1).collect())
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bhattacharyya parameters of the `n_c` synthetic channels, natural order.
///
/// The most significant index bit selects the first polarization step applied
/// to the physical channel: 0 takes the degraded branch `2z - z²`, 1 the
/// upgraded branch `z²`.
pub fn bhattacharyya(n_c: usize, z0: f64) -> Vec<f64> {
    let mut z = vec![z0];
    while z.len() < n_c {
        z = z
            .iter()
            .flat_map(|&zk| [2.0 * zk - zk * zk, zk * zk])
            .collect();
    }
    z
}

/// Picks the `payload_len` most reliable positions of a length-`n_c` code.
/// Ties in the Bhattacharyya value go to the higher position.
pub fn build_polar_spec(n_c: usize, payload_len: usize) -> Result<PolarSpec> {
    if n_c == 0 || !n_c.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "polar block length {n_c} is not a power of two"
        )));
    }
    if payload_len == 0 || payload_len > n_c {
        return Err(Error::InvalidConfig(format!(
            "payload length {payload_len} must be in 1..={n_c}"
        )));
    }
    let z = bhattacharyya(n_c, DESIGN_BHATTACHARYYA);
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)));

    let mut frozen_mask = vec![true; n_c];
    for &pos in &order[..payload_len] {
        frozen_mask[pos] = false;
    }
    let info_set = (0..n_c).filter(|&p| !frozen_mask[p]).collect();
    let frozen_set = (0..n_c).filter(|&p| frozen_mask[p]).collect();
    Ok(PolarSpec {
        n_c,
        info_set,
        frozen_set,
        frozen_mask,
    })
}

/// In-place butterfly computing `u · F^{⊗n}`.
pub(crate) fn transform(bits: &mut [u8]) {
    let n = bits.len();
    let mut half = 1;
    while half < n {
        for block in bits.chunks_mut(2 * half) {
            let (left, right) = block.split_at_mut(half);
            for (l, r) in left.iter_mut().zip(right.iter()) {
                *l ^= *r;
            }
        }
        half *= 2;
    }
}

/// Encodes a CRC-augmented payload under the given frozen pattern.
pub fn polar_encode(payload: &[u8], frozen: &FrozenPattern, spec: &PolarSpec) -> Result<Vec<u8>> {
    let mut u = spec.assemble(payload, frozen)?;
    transform(&mut u);
    Ok(u)
}

/// BPSK: bit 0 → +1, bit 1 → −1.
pub fn bpsk(bits: &[u8]) -> Vec<f64> {
    bits.iter()
        .map(|&b| if b & 1 == 0 { 1.0 } else { -1.0 })
        .collect()
}
