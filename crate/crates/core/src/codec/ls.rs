//! Least-squares amplitude estimation over a set of measurement columns.

use crate::error::{Error, Result};
use crate::spreading::dot;

/// Relative threshold on a Cholesky pivot below which a column is treated as
/// linearly dependent on the columns before it.
const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    /// Positions (into the input column list) that were kept, ascending.
    pub kept: Vec<usize>,
    /// Estimates for `kept`, same order.
    pub values: Vec<f64>,
    /// Positions dropped as dependent on earlier columns.
    pub dropped: Vec<usize>,
}

/// Minimises `‖y − Σ v_c · columns[c]‖²` through the normal equations.
///
/// The Gram matrix is factored by an in-order Cholesky that rejects any
/// column whose pivot falls below `1e-10` of its own squared norm; rejected
/// (later-indexed) columns are reported in `dropped` and the remaining system
/// is solved exactly.
pub fn least_squares(y: &[f64], columns: &[Vec<f64>]) -> Result<LsSolution> {
    if let Some(c) = columns.iter().find(|c| c.len() != y.len()) {
        return Err(Error::InvalidArgument(format!(
            "column of length {} against measurement of length {}",
            c.len(),
            y.len()
        )));
    }
    let mut kept: Vec<usize> = Vec::new();
    // Row p of the lower-triangular factor, for kept column p.
    let mut factor: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();

    for (c, col) in columns.iter().enumerate() {
        let diag = dot(col, col);
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (p, &kp) in kept.iter().enumerate() {
            let g = dot(col, &columns[kp]);
            let s: f64 = row.iter().zip(&factor[p]).map(|(a, b)| a * b).sum();
            row.push((g - s) / factor[p][p]);
        }
        let pivot = diag - row.iter().map(|v| v * v).sum::<f64>();
        if diag > 0.0 && pivot > DEPENDENCE_TOL * diag {
            row.push(pivot.sqrt());
            factor.push(row);
            kept.push(c);
        } else {
            dropped.push(c);
        }
    }

    let rhs: Vec<f64> = kept.iter().map(|&c| dot(&columns[c], y)).collect();
    let n = kept.len();
    // Forward: L w = rhs.
    let mut w = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|q| factor[i][q] * w[q]).sum();
        w[i] = (rhs[i] - s) / factor[i][i];
    }
    // Backward: Lᵀ v = w.
    let mut values = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|q| factor[q][i] * values[q]).sum();
        values[i] = (w[i] - s) / factor[i][i];
    }
    Ok(LsSolution {
        kept,
        values,
        dropped,
    })
}
