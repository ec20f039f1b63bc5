//! Spreading dictionaries, matched filter and energy detector.
//!
//! Dictionary `A_i` (one per coded bit `i`) is an `L × J` matrix of
//! `±sqrt(1/N)` entries. Column `(i, j)` is a pure function of
//! `(seed, i, j)`: the signs come from a ChaCha8 keystream whose stream id is
//! `i·J + j`, so columns can be regenerated on demand anywhere without storing
//! the dictionary. Small dictionaries are materialised once for speed; both
//! paths give bit-identical entries.

use std::borrow::Cow;
use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::CodecConfig;
use crate::error::{Error, Result};

/// Dictionaries larger than this many entries are generated column by column.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 23;

#[derive(Debug, Clone)]
pub struct SpreadingDictionaries {
    n_c: usize,
    l: usize,
    j: usize,
    seed: u64,
    scale: f64,
    // Column-major per dictionary: entry (i, row, j) at ((i * J + j) * L + row).
    stored: Option<Vec<f64>>,
}

impl SpreadingDictionaries {
    pub fn new(config: &CodecConfig) -> Result<Self> {
        Self::with_dims(
            config.n_c,
            config.l,
            config.j(),
            config.n,
            config.seed,
            config.dict_memory_budget,
        )
    }

    /// `n` sets the entry magnitude `sqrt(1/n)`.
    pub fn with_dims(
        n_c: usize,
        l: usize,
        j: usize,
        n: usize,
        seed: u64,
        memory_budget: usize,
    ) -> Result<Self> {
        if n_c == 0 || l == 0 || j == 0 || n == 0 {
            return Err(Error::InvalidConfig(format!(
                "dictionary dimensions must be positive (n_c={n_c}, L={l}, J={j}, N={n})"
            )));
        }
        let mut dict = Self {
            n_c,
            l,
            j,
            seed,
            scale: (1.0 / n as f64).sqrt(),
            stored: None,
        };
        let total = n_c
            .checked_mul(l)
            .and_then(|x| x.checked_mul(j))
            .unwrap_or(usize::MAX);
        if total <= memory_budget {
            let mut data = vec![0.0; total];
            for (col, chunk) in data.chunks_mut(l).enumerate() {
                dict.generate(col / j, col % j, chunk);
            }
            dict.stored = Some(data);
        }
        Ok(dict)
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Entry magnitude `sqrt(1/N)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_materialised(&self) -> bool {
        self.stored.is_some()
    }

    fn generate(&self, i: usize, j: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((i * self.j + j) as u64);
        for chunk in out.chunks_mut(32) {
            let word = rng.next_u32();
            for (b, v) in chunk.iter_mut().enumerate() {
                *v = if (word >> b) & 1 == 1 { self.scale } else { -self.scale };
            }
        }
    }

    /// Spreading sequence `a_{i,j}` of length L.
    pub fn column(&self, i: usize, j: usize) -> Cow<'_, [f64]> {
        assert!(i < self.n_c && j < self.j, "column ({i}, {j}) out of range");
        match &self.stored {
            Some(data) => {
                let start = (i * self.j + j) * self.l;
                Cow::Borrowed(&data[start..start + self.l])
            }
            None => {
                let mut col = vec![0.0; self.l];
                self.generate(i, j, &mut col);
                Cow::Owned(col)
            }
        }
    }
}

/// Matched-filter outputs `Z[i][j] = <a_{i,j}, ỹ_i>`, stored row-major (n_c × J).
#[derive(Debug, Clone, PartialEq)]
pub struct BitEstimateMatrix {
    n_c: usize,
    j: usize,
    data: Vec<f64>,
}

impl BitEstimateMatrix {
    /// Builds from rows `Z[i][·]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_c = rows.len();
        let j = rows.first().map_or(0, Vec::len);
        if n_c == 0 || j == 0 || rows.iter().any(|r| r.len() != j) {
            return Err(Error::InvalidArgument("ragged or empty bit-estimate rows".into()));
        }
        Ok(Self {
            n_c,
            j,
            data: rows.concat(),
        })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.j + j]
    }

    /// `Z[·][j]`: the soft estimates of all coded bits under column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_c).map(|i| self.get(i, j)).collect()
    }

    /// `E_j = Σ_i Z[i][j]²`.
    pub fn energies(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.j];
        for row in self.data.chunks(self.j) {
            for (acc, z) in e.iter_mut().zip(row) {
                *acc += z * z;
            }
        }
        e
    }
}

/// Correlates each length-L section `ỹ_i` of `y` with every column of `A_i`.
pub fn matched_filter(y: &[f64], dict: &SpreadingDictionaries) -> Result<BitEstimateMatrix> {
    let (n_c, l, j) = (dict.n_c, dict.l, dict.j);
    if y.len() != n_c * l {
        return Err(Error::InvalidArgument(format!(
            "received vector has length {}, expected n_c·L = {}",
            y.len(),
            n_c * l
        )));
    }
    let mut data = vec![0.0; n_c * j];
    for (i, (section, row)) in y.chunks(l).zip(data.chunks_mut(j)).enumerate() {
        for (jj, z) in row.iter_mut().enumerate() {
            *z = dot(&dict.column(i, jj), section);
        }
    }
    Ok(BitEstimateMatrix { n_c, j, data })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `count` highest-energy columns outside `exclude`, by descending energy
/// with ties to the lower column index.
pub fn energy_detect(
    z: &BitEstimateMatrix,
    count: usize,
    exclude: &HashSet<usize>,
) -> Result<Vec<usize>> {
    let available = (0..z.j).filter(|c| !exclude.contains(c)).count();
    if count > available {
        return Err(Error::InvalidArgument(format!(
            "requested {count} columns but only {available} are eligible"
        )));
    }
    let energies = z.energies();
    let mut cols: Vec<usize> = (0..z.j).filter(|c| !exclude.contains(c)).collect();
    cols.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    cols.truncate(count);
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict(n_c: usize, l: usize, j: usize, n: usize, budget: usize) -> SpreadingDictionaries {
        SpreadingDictionaries::with_dims(n_c, l, j, n, 99, budget).unwrap()
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = dict(4, 70, 16, 8192, DEFAULT_MEMORY_BUDGET);
        let b = dict(4, 70, 16, 8192, DEFAULT_MEMORY_BUDGET);
        let lazy = dict(4, 70, 16, 8192, 0);
        assert!(a.is_materialised() && !lazy.is_materialised());
        for i in 0..4 {
            for j in 0..16 {
                assert_eq!(a.column(i, j), b.column(i, j));
                assert_eq!(a.column(i, j), lazy.column(i, j));
            }
        }
    }

    #[test]
    fn entries_have_exact_magnitude() {
        let d = dict(2, 50, 8, 8192, DEFAULT_MEMORY_BUDGET);
        let s = (1.0 / 8192f64).sqrt();
        for i in 0..2 {
            for j in 0..8 {
                assert!(d.column(i, j).iter().all(|&v| v == s || v == -s));
            }
        }
    }

    #[test]
    fn signs_are_balanced() {
        let (l, j) = (400, 1024);
        let d = dict(1, l, j, 8192, DEFAULT_MEMORY_BUDGET);
        let plus: usize = (0..j)
            .map(|c| d.column(0, c).iter().filter(|&&v| v > 0.0).count())
            .sum();
        let frac = plus as f64 / (l * j) as f64;
        let sigma = 0.5 / ((l * j) as f64).sqrt();
        assert!((frac - 0.5).abs() <= 5.0 * sigma, "fraction {frac}");
    }

    #[test]
    fn different_seeds_differ() {
        let a = SpreadingDictionaries::with_dims(1, 64, 4, 64, 1, DEFAULT_MEMORY_BUDGET).unwrap();
        let b = SpreadingDictionaries::with_dims(1, 64, 4, 64, 2, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_ne!(a.column(0, 0), b.column(0, 0));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(SpreadingDictionaries::with_dims(0, 4, 4, 8, 0, 10).is_err());
        assert!(SpreadingDictionaries::with_dims(4, 0, 4, 8, 0, 10).is_err());
        assert!(SpreadingDictionaries::with_dims(4, 4, 0, 8, 0, 10).is_err());
    }

    fn spread(d: &SpreadingDictionaries, j: usize, bits: &[f64], gain: f64) -> Vec<f64> {
        (0..d.n_c())
            .flat_map(|i| d.column(i, j).iter().map(|a| a * bits[i] * gain).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn single_active_column_gives_scaled_bits() {
        let (n_c, l, j, n) = (8, 64, 16, 8192);
        let d = dict(n_c, l, j, n, DEFAULT_MEMORY_BUDGET);
        let bits = [1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0];
        let y = spread(&d, 5, &bits, 2.5);
        let z = matched_filter(&y, &d).unwrap();
        for (i, b) in bits.iter().enumerate() {
            let expected = b * 2.5 * l as f64 / n as f64;
            assert!((z.get(i, 5) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn two_active_columns_match_direct_inner_products() {
        let (n_c, l, j) = (4, 32, 8);
        let d = dict(n_c, l, j, 1024, DEFAULT_MEMORY_BUDGET);
        let b1 = [1.0, -1.0, 1.0, 1.0];
        let b2 = [-1.0, -1.0, 1.0, -1.0];
        let y: Vec<f64> = spread(&d, 2, &b1, 1.5)
            .iter()
            .zip(spread(&d, 6, &b2, -0.7))
            .map(|(a, b)| a + b)
            .collect();
        let z = matched_filter(&y, &d).unwrap();
        for i in 0..n_c {
            let a1 = d.column(i, 2);
            let a2 = d.column(i, 6);
            let self_ip: f64 = a1.iter().map(|v| v * v).sum();
            let cross: f64 = a1.iter().zip(a2.iter()).map(|(x, y)| x * y).sum();
            let expected = b1[i] * 1.5 * self_ip + b2[i] * -0.7 * cross;
            assert!((z.get(i, 2) - expected).abs() < 1e-14);
            assert!((self_ip - l as f64 / 1024.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_gives_zero_estimates() {
        let d = dict(4, 16, 8, 64, DEFAULT_MEMORY_BUDGET);
        let z = matched_filter(&vec![0.0; 64], &d).unwrap();
        assert!(z.energies().iter().all(|&e| e == 0.0));
        assert!(matched_filter(&[0.0; 63], &d).is_err());
    }

    #[test]
    fn energy_detector_examples() {
        let z = BitEstimateMatrix::from_rows(vec![vec![3.0, 1.0], vec![-3.0, 1.0]]).unwrap();
        assert_eq!(z.energies(), vec![18.0, 2.0]);
        assert_eq!(energy_detect(&z, 1, &HashSet::new()).unwrap(), vec![0]);
        assert_eq!(energy_detect(&z, 1, &HashSet::from([0])).unwrap(), vec![1]);
        assert!(energy_detect(&z, 2, &HashSet::from([0])).is_err());

        let zero = BitEstimateMatrix::from_rows(vec![vec![0.0; 3]; 2]).unwrap();
        assert_eq!(energy_detect(&zero, 1, &HashSet::new()).unwrap(), vec![0]);
    }

    proptest! {
        #[test]
        fn matched_filter_is_linear(
            y1 in proptest::collection::vec(-5.0f64..5.0, 48),
            y2 in proptest::collection::vec(-5.0f64..5.0, 48),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let d = dict(3, 16, 5, 128, DEFAULT_MEMORY_BUDGET);
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| alpha * a + beta * b).collect();
            let z1 = matched_filter(&y1, &d).unwrap();
            let z2 = matched_filter(&y2, &d).unwrap();
            let zm = matched_filter(&mix, &d).unwrap();
            for i in 0..3 {
                for j in 0..5 {
                    let want = alpha * z1.get(i, j) + beta * z2.get(i, j);
                    prop_assert!((zm.get(i, j) - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn energy_detector_is_permutation_equivariant(
            rows in proptest::collection::vec(proptest::collection::vec(-4.0f64..4.0, 6), 3),
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
            count in 1usize..6,
        ) {
            let z = BitEstimateMatrix::from_rows(rows.clone()).unwrap();
            // Column c of the permuted matrix is column perm[c] of the original.
            let permuted_rows: Vec<Vec<f64>> =
                rows.iter().map(|r| perm.iter().map(|&p| r[p]).collect()).collect();
            let zp = BitEstimateMatrix::from_rows(permuted_rows).unwrap();
            let sel: Vec<usize> = energy_detect(&z, count, &HashSet::new()).unwrap();
            let sel_p: Vec<usize> = energy_detect(&zp, count, &HashSet::new())
                .unwrap()
                .into_iter()
                .map(|c| perm[c])
                .collect();
            // Equal up to ordering among exactly tied energies.
            let e = z.energies();
            let mut a: Vec<u64> = sel.iter().map(|&c| e[c].to_bits()).collect();
            let mut b: Vec<u64> = sel_p.iter().map(|&c| e[c].to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
