//! Compressed-sensing encoder and recovery for K-sparse gradients.
//!
//! Index `k` is written with `B = ceil(log2 N)` bits and split into the high
//! `B_f` bits `m_f` and the low `B_s` bits `m_s`. `m_s` selects spreading
//! column `j` and also fills the frozen positions of the polar code; `m_f`
//! plus its CRC is polar encoded. Measurement column `φ_k` is the
//! concatenation over coded bits `i` of `b_i · a_{i,j}`, where `b` is the BPSK
//! image of the codeword. Columns are generated on demand, never stored as a
//! matrix.

mod ls;
mod recover;

pub use ls::{least_squares, LsSolution};
pub use recover::{RecoveredSet, Termination};

use crate::error::{Error, Result};
use crate::polar::{self, CrcSpec, FrozenPattern, PolarSpec};
use crate::spreading::{SpreadingDictionaries, DEFAULT_MEMORY_BUDGET};

/// `ceil(log2 n)` for `n ≥ 1`.
pub fn index_bits(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Codec parameters shared by every worker and the parameter server.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    /// Gradient length N.
    pub n: usize,
    /// Sparsity target K.
    pub k: usize,
    pub b_f: usize,
    pub b_s: usize,
    /// `None` disables the CRC (r = 0).
    pub crc: Option<CrcSpec>,
    /// Polar block length, a power of two.
    pub n_c: usize,
    /// Spreading length L.
    pub l: usize,
    /// SCL list size.
    pub n_list: usize,
    /// Average symbol power P.
    pub power: f64,
    pub seed: u64,
    pub max_sic_iters: usize,
    /// Dictionaries with more entries than this are generated column by column.
    pub dict_memory_budget: usize,
}

impl CodecConfig {
    /// Reduced-scale defaults: N = 8192 split as B_f = 4, B_s = 9.
    pub fn desk_default() -> Self {
        Self {
            n: 8192,
            k: 64,
            b_f: 4,
            b_s: 9,
            crc: Some(CrcSpec::crc8()),
            n_c: 32,
            l: 100,
            n_list: 2,
            power: 1000.0,
            seed: 0,
            max_sic_iters: 10,
            dict_memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn b(&self) -> usize {
        self.b_f + self.b_s
    }

    /// CRC width r.
    pub fn r(&self) -> usize {
        self.crc.map_or(0, |c| c.width())
    }

    /// Number of spreading columns per dictionary, `2^{B_s}`.
    pub fn j(&self) -> usize {
        1 << self.b_s
    }

    /// Measurement length `m = L · n_c`.
    pub fn m(&self) -> usize {
        self.l * self.n_c
    }

    pub fn payload_len(&self) -> usize {
        self.b_f + self.r()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 2 {
            return bad(format!("N = {} must be at least 2", self.n));
        }
        if self.b_f + self.b_s != index_bits(self.n) {
            return bad(format!(
                "B_f + B_s = {} + {} must equal ceil(log2 N) = {}",
                self.b_f,
                self.b_s,
                index_bits(self.n)
            ));
        }
        if self.b_s >= usize::BITS as usize - 1 {
            return bad(format!("B_s = {} is too large", self.b_s));
        }
        if self.n_c == 0 || !self.n_c.is_power_of_two() {
            return bad(format!("n_c = {} is not a power of two", self.n_c));
        }
        if self.payload_len() == 0 || self.payload_len() > self.n_c {
            return bad(format!(
                "B_f + r = {} must be in 1..=n_c = {}",
                self.payload_len(),
                self.n_c
            ));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.l == 0 {
            return bad("L must be at least 1".into());
        }
        if self.n_list == 0 {
            return bad("list size must be at least 1".into());
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad(format!("power P = {} must be positive", self.power));
        }
        if self.max_sic_iters == 0 {
            return bad("max SIC iterations must be at least 1".into());
        }
        Ok(())
    }
}

/// A sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "sparse values must be finite and non-zero".into(),
            ));
        }
        Ok(Self { indices, values })
    }

    /// Sorts the pairs and drops zero values; duplicate indices are summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut out = Self::default();
        for (k, v) in pairs {
            if out.indices.last() == Some(&k) {
                *out.values.last_mut().unwrap() += v;
            } else {
                out.indices.push(k);
                out.values.push(v);
            }
        }
        out.retain_nonzero();
        out
    }

    /// Non-zero entries of a dense vector.
    pub fn from_dense(v: &[f64]) -> Self {
        Self::from_pairs(v.iter().enumerate().map(|(i, &x)| (i, x)))
    }

    fn retain_nonzero(&mut self) {
        let (indices, values) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&k, &v)| (k, v))
            .unzip();
        self.indices = indices;
        self.values = values;
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn densify(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, v) in self.iter() {
            out[k] = v;
        }
        out
    }

    /// Entry-wise sum; entries that cancel exactly are dropped.
    pub fn add(&self, other: &SparseVector) -> SparseVector {
        Self::from_pairs(self.iter().chain(other.iter()))
    }
}

/// The two halves of an index's binary representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexParts {
    /// High `B_f` bits, MSB first.
    pub m_f: Vec<u8>,
    /// Low `B_s` bits, MSB first.
    pub m_s: Vec<u8>,
    /// Spreading column, the value of `m_s`.
    pub column: usize,
}

fn to_bits(v: usize, len: usize) -> Vec<u8> {
    (0..len).rev().map(|s| ((v >> s) & 1) as u8).collect()
}

pub(crate) fn from_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

pub fn index_to_parts(k: usize, config: &CodecConfig) -> Result<IndexParts> {
    if k >= config.n {
        return Err(Error::InvalidArgument(format!(
            "index {k} out of range for N = {}",
            config.n
        )));
    }
    let column = k & ((1 << config.b_s) - 1);
    Ok(IndexParts {
        m_f: to_bits(k >> config.b_s, config.b_f),
        m_s: to_bits(column, config.b_s),
        column,
    })
}

/// Polar code, dictionaries and parameters bundled for encoding and recovery.
#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    polar: PolarSpec,
    dict: SpreadingDictionaries,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let polar = polar::build_polar_spec(config.n_c, config.payload_len())?;
        let dict = SpreadingDictionaries::new(&config)?;
        Ok(Self {
            config,
            polar,
            dict,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn polar(&self) -> &PolarSpec {
        &self.polar
    }

    pub fn dictionaries(&self) -> &SpreadingDictionaries {
        &self.dict
    }

    pub fn m(&self) -> usize {
        self.config.m()
    }

    /// Frozen values for spreading column `j`: its `B_s` bits repeated
    /// cyclically over the frozen positions.
    pub fn frozen_for_column(&self, j: usize) -> FrozenPattern {
        FrozenPattern::cyclic(&to_bits(j, self.config.b_s), self.polar.frozen_set().len())
    }

    /// BPSK image of the codeword carrying index `k`.
    pub fn codeword_signs(&self, k: usize) -> Result<Vec<f64>> {
        let parts = index_to_parts(k, &self.config)?;
        let payload = polar::crc_append(&parts.m_f, self.config.crc.as_ref());
        let frozen = self.frozen_for_column(parts.column);
        let cw = polar::polar_encode(&payload, &frozen, &self.polar)?;
        Ok(polar::bpsk(&cw))
    }

    /// Measurement column `φ_k`, length m.
    pub fn encode_column(&self, k: usize) -> Result<Vec<f64>> {
        let signs = self.codeword_signs(k)?;
        let j = k & ((1 << self.config.b_s) - 1);
        let mut phi = Vec::with_capacity(self.m());
        for (i, b) in signs.iter().enumerate() {
            phi.extend(self.dict.column(i, j).iter().map(|a| b * a));
        }
        Ok(phi)
    }

    /// `Φ g`, accumulated column by column.
    pub fn measure(&self, g: &SparseVector) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.m()];
        for (k, v) in g.iter() {
            let phi = self.encode_column(k)?;
            for (acc, p) in y.iter_mut().zip(&phi) {
                *acc += v * p;
            }
        }
        Ok(y)
    }

    /// Iterative recovery of the largest K entries from a preprocessed measurement.
    pub fn recover(&self, y_tilde: &[f64]) -> Result<RecoveredSet> {
        recover::recover(self, y_tilde)
    }
}
