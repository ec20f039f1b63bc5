//! Iterative recovery: matched filter → energy detector → dual list decoding
//! → least squares → interference cancellation.

use std::collections::{HashMap, HashSet};

use super::{from_bits, least_squares, Codec};
use crate::error::{Error, Result};
use crate::polar::scl_decode;
use crate::spreading::{energy_detect, matched_filter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// K indices recovered.
    KReached,
    /// A round added no new CRC-validated index.
    NoImprovement,
    /// The iteration budget ran out.
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSet {
    /// `(index, value)` pairs sorted by index.
    pub entries: Vec<(usize, f64)>,
    pub sic_rounds_used: usize,
    pub terminated_by: Termination,
    /// `‖ỹ − Φ_Â v̂‖` after each round's least-squares step.
    pub residual_norms: Vec<f64>,
}

impl RecoveredSet {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

struct ColumnCache<'a> {
    codec: &'a Codec,
    columns: HashMap<usize, Vec<f64>>,
}

impl ColumnCache<'_> {
    fn get(&mut self, k: usize) -> Result<&Vec<f64>> {
        if !self.columns.contains_key(&k) {
            let phi = self.codec.encode_column(k)?;
            self.columns.insert(k, phi);
        }
        Ok(&self.columns[&k])
    }

    /// LS over `indices` (in priority order); returns surviving `(index, value)` pairs.
    fn fit(&mut self, y: &[f64], indices: &[usize]) -> Result<Vec<(usize, f64)>> {
        let mut cols = Vec::with_capacity(indices.len());
        for &k in indices {
            cols.push(self.get(k)?.clone());
        }
        let sol = least_squares(y, &cols)?;
        Ok(sol
            .kept
            .iter()
            .zip(&sol.values)
            .map(|(&p, &v)| (indices[p], v))
            .collect())
    }

    fn residual(&mut self, y: &[f64], entries: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut r = y.to_vec();
        for &(k, v) in entries {
            for (ri, p) in r.iter_mut().zip(self.get(k)?) {
                *ri -= v * p;
            }
        }
        Ok(r)
    }
}

/// Decodes candidate column `j` with both sign hypotheses and returns the
/// reconstructed index of the better CRC-passing result.
fn decode_candidate(codec: &Codec, z_col: &[f64], j: usize) -> Result<Option<usize>> {
    let cfg = codec.config();
    let frozen = codec.frozen_for_column(j);
    let negated: Vec<f64> = z_col.iter().map(|v| -v).collect();
    let plus = scl_decode(z_col, &frozen, codec.polar(), cfg.crc.as_ref(), cfg.n_list)?;
    let minus = scl_decode(&negated, &frozen, codec.polar(), cfg.crc.as_ref(), cfg.n_list)?;
    let best = match (plus, minus) {
        (Some(p), Some(m)) => Some(if m.path_metric < p.path_metric { m } else { p }),
        (p, m) => p.or(m),
    };
    Ok(best.and_then(|out| {
        let m_f = from_bits(&out.payload[..cfg.b_f]);
        let k = (m_f << cfg.b_s) | j;
        (k < cfg.n).then_some(k)
    }))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Keeps the `k` largest-magnitude entries (ties to the lower index).
fn truncate_largest(entries: &mut Vec<(usize, f64)>, k: usize) {
    if entries.len() > k {
        entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        entries.truncate(k);
    }
}

pub(super) fn recover(codec: &Codec, y_tilde: &[f64]) -> Result<RecoveredSet> {
    let cfg = codec.config();
    if y_tilde.len() != codec.m() {
        return Err(Error::InvalidArgument(format!(
            "measurement has length {}, expected m = {}",
            y_tilde.len(),
            codec.m()
        )));
    }
    let j_total = cfg.j();
    let mut cache = ColumnCache {
        codec,
        columns: HashMap::new(),
    };
    let mut entries: Vec<(usize, f64)> = Vec::new();
    let mut residual = y_tilde.to_vec();
    let mut residual_norms = Vec::new();
    let mut rounds = 0;
    let mut terminated_by = Termination::MaxIters;

    while rounds < cfg.max_sic_iters {
        rounds += 1;
        let z = matched_filter(&residual, codec.dictionaries())?;
        let exclude: HashSet<usize> = entries.iter().map(|e| e.0 & (j_total - 1)).collect();
        let count = (cfg.k - entries.len()).min(j_total - exclude.len());
        let candidates = if count == 0 {
            Vec::new()
        } else {
            energy_detect(&z, count, &exclude)?
        };

        let known: HashSet<usize> = entries.iter().map(|e| e.0).collect();
        let mut fresh = Vec::new();
        for &j in &candidates {
            let col = z.column(j);
            // A silent column carries nothing; decoding it would only return tie-breaks.
            if col.iter().all(|&v| v == 0.0) {
                continue;
            }
            if let Some(k) = decode_candidate(codec, &col, j)? {
                if !known.contains(&k) && !fresh.contains(&k) {
                    fresh.push(k);
                }
            }
        }
        if fresh.is_empty() {
            terminated_by = Termination::NoImprovement;
            break;
        }

        let order: Vec<usize> = entries.iter().map(|e| e.0).chain(fresh.iter().copied()).collect();
        let mut fitted = cache.fit(y_tilde, &order)?;
        if fitted.len() > cfg.k {
            truncate_largest(&mut fitted, cfg.k);
            let keep: Vec<usize> = order
                .iter()
                .copied()
                .filter(|k| fitted.iter().any(|e| e.0 == *k))
                .collect();
            fitted = cache.fit(y_tilde, &keep)?;
        }
        let improved = fitted.iter().any(|e| !known.contains(&e.0));
        entries = fitted;
        residual = cache.residual(y_tilde, &entries)?;
        residual_norms.push(norm(&residual));

        if !improved {
            terminated_by = Termination::NoImprovement;
            break;
        }
        if entries.len() >= cfg.k {
            terminated_by = Termination::KReached;
            break;
        }
    }

    entries.sort_by_key(|e| e.0);
    Ok(RecoveredSet {
        entries,
        sic_rounds_used: rounds,
        terminated_by,
        residual_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CodecConfig, SparseVector};
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_codec() -> Codec {
        Codec::new(CodecConfig {
            n: 8192,
            k: 16,
            b_f: 7,
            b_s: 6,
            l: 64,
            ..CodecConfig::desk_default()
        })
        .unwrap()
    }

    /// K indices with pairwise distinct low parts and magnitudes in [0.5, 2).
    fn random_sparse(rng: &mut ChaCha8Rng, codec: &Codec, count: usize) -> SparseVector {
        let cfg = codec.config();
        let cols = sample(rng, cfg.j(), count);
        SparseVector::from_pairs(cols.iter().map(|c| {
            let hi = rng.random_range(0..1usize << cfg.b_f);
            let mag = rng.random_range(0.5..2.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            ((hi << cfg.b_s) | c, sign * mag)
        }))
    }

    #[test]
    fn zero_measurement_recovers_nothing_useful() {
        let codec = small_codec();
        let out = codec.recover(&vec![0.0; codec.m()]).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.terminated_by, Termination::NoImprovement);
        assert_eq!(out.sic_rounds_used, 1);
    }

    #[test]
    fn noiseless_single_worker_round_trip() {
        let codec = small_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let g = random_sparse(&mut rng, &codec, 16);
            let y = codec.measure(&g).unwrap();
            let out = codec.recover(&y).unwrap();
            eprintln!("{:?} {:?} {:?}", out.terminated_by, out.residual_norms, out.entries);
            assert_eq!(out.indices(), g.indices());
            for ((_, v), want) in out.entries.iter().zip(g.values()) {
                assert!((v - want).abs() <= 1e-6 * want.abs());
            }
            assert_eq!(out.terminated_by, Termination::KReached);
        }
    }

    #[test]
    fn residual_norm_never_increases() {
        let codec = small_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = random_sparse(&mut rng, &codec, 16);
            let b = random_sparse(&mut rng, &codec, 16);
            let y = codec.measure(&a.add(&b)).unwrap();
            let out = codec.recover(&y).unwrap();
            let mut prev = norm(&y);
            for &r in &out.residual_norms {
                assert!(r <= prev * (1.0 + 1e-12), "{r} > {prev}");
                prev = r;
            }
            assert!(out.entries.iter().all(|e| e.0 < 8192));
        }
    }

    #[test]
    fn two_worker_superposition_recovers_subset_of_support() {
        let codec = small_codec();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            // Disjoint supports with 32 distinct columns between them.
            let cols = sample(&mut rng, 64, 32).into_vec();
            let make = |cs: &[usize], rng: &mut ChaCha8Rng| {
                SparseVector::from_pairs(cs.iter().map(|&c| {
                    let hi = rng.random_range(0..128usize);
                    ((hi << 6) | c, rng.random_range(0.5..2.0))
                }))
            };
            let g1 = make(&cols[..16], &mut rng);
            let g2 = make(&cols[16..], &mut rng);
            let sum = g1.add(&g2);
            let out = codec.recover(&codec.measure(&sum).unwrap()).unwrap();
            assert_eq!(out.len(), 16);
            assert!(out.indices().iter().all(|k| sum.indices().contains(k)));
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let codec = small_codec();
        assert!(codec.recover(&[0.0; 10]).is_err());
    }
}
