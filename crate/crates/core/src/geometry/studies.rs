//! Constraint-aware coupling studies and exact small-system references.
//!
//! Deleting a constrained variable before inverting looks equivalent to
//! pseudo-inverting the full singular covariance, but the two give different
//! coupling signs inside the constrained group. This module provides the
//! side-by-side comparison, the second-order proportion check, and an exact
//! binary-spin enumeration used to illustrate couplings versus correlations.

use nalgebra::{DMatrix, DVector};

use crate::dataset::DisplacementVector;
use crate::error::{Error, Result};
use crate::linalg::pseudo_inverse;

/// Largest spin count enumerated exactly.
pub const BINARY_ENUMERATION_CAP: usize = 16;

// ---------------------------------------------------------------------------
// Leave-one-out constraint study

#[derive(Debug, Clone)]
pub struct DeletedInverse {
    /// Index removed before inverting.
    pub k: usize,
    /// Inverse of the covariance with row/column `k` deleted, in the
    /// original index order with `k` skipped; None when singular.
    pub j: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub group: Vec<usize>,
    /// Pseudo-inverse of the full covariance.
    pub pseudo_j: DMatrix<f64>,
    pub deleted: Vec<DeletedInverse>,
    pub notes: Vec<String>,
}

/// Counts of off-diagonal coupling signs inside the constrained group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignPattern {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

fn sign_pattern<F: Fn(usize, usize) -> Option<f64>>(
    indices: &[usize],
    scale: f64,
    entry: F,
) -> SignPattern {
    let tol = 1e-10 * scale.max(1e-300);
    let mut p = SignPattern { positive: 0, negative: 0, zero: 0 };
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[(a + 1)..] {
            match entry(i, j) {
                Some(v) if v > tol => p.positive += 1,
                Some(v) if v < -tol => p.negative += 1,
                Some(_) => p.zero += 1,
                None => {}
            }
        }
    }
    p
}

impl LeaveOneOut {
    /// Sign pattern of the pseudo-inverse couplings inside the group.
    pub fn pseudo_signs(&self) -> SignPattern {
        let scale = self.pseudo_j.abs().max();
        sign_pattern(&self.group, scale, |i, j| Some(self.pseudo_j[(i, j)]))
    }

    /// Sign pattern of a deleted-variable inverse inside the remaining
    /// group members; None when that inverse was singular.
    pub fn deleted_signs(&self, k: usize) -> Option<SignPattern> {
        let d = self.deleted.iter().find(|d| d.k == k)?;
        let j = d.j.as_ref()?;
        let remaining: Vec<usize> = self.group.iter().cloned().filter(|&i| i != k).collect();
        let scale = j.abs().max();
        let reindex = |i: usize| if i < k { i } else { i - 1 };
        Some(sign_pattern(&remaining, scale, |i, jj| {
            Some(j[(reindex(i), reindex(jj))])
        }))
    }
}

/// For every variable k in the constrained group: delete row and column k
/// from the covariance, invert the remainder, and set it against the
/// pseudo-inverse of the full singular matrix.
pub fn leave_one_out_study(
    corr2: &DMatrix<f64>,
    group: &[usize],
    eigen_threshold: f64,
) -> Result<LeaveOneOut> {
    let dim = corr2.nrows();
    if corr2.ncols() != dim {
        return Err(Error::precondition("covariance must be square"));
    }
    if group.iter().any(|&k| k >= dim) {
        return Err(Error::precondition("group index out of range"));
    }
    if group.len() < 2 {
        return Err(Error::precondition("constrained group needs at least 2 members"));
    }
    let pseudo_j = pseudo_inverse(corr2, eigen_threshold)?.matrix;
    let mut deleted = Vec::new();
    let mut notes = Vec::new();
    for &k in group {
        let m = corr2.clone().remove_row(k).remove_column(k);
        match m.try_inverse() {
            Some(j) => deleted.push(DeletedInverse { k, j: Some(j) }),
            None => {
                notes.push(format!("covariance with variable {k} deleted is singular"));
                deleted.push(DeletedInverse { k, j: None });
            }
        }
    }
    Ok(LeaveOneOut { group: group.to_vec(), pseudo_j, deleted, notes })
}

// ---------------------------------------------------------------------------
// Proportions

#[derive(Debug, Clone)]
pub struct ProportionRow {
    pub seg_a: (usize, usize),
    pub seg_b: (usize, usize),
    /// Mean of the per-realization length ratio r_a / r_b.
    pub empirical: f64,
    /// Second-order prediction from mean geometry and second moments.
    pub predicted: f64,
    pub rel_discrepancy: f64,
    /// Largest fluctuation-to-length ratio of the two segments.
    pub fluctuation_scale: f64,
    /// False when the fluctuation scale is too large for the expansion.
    pub reliable: bool,
}

#[derive(Debug, Clone)]
pub struct ProportionReport {
    pub rows: Vec<ProportionRow>,
    pub notes: Vec<String>,
}

/// Fluctuation scale above which the second-order expansion is flagged.
pub const PROPORTION_SCALE_LIMIT: f64 = 0.2;

fn segment_gradient(positions: &[[f64; 2]], mean: &DVector<f64>, seg: (usize, usize)) -> (f64, DVector<f64>) {
    let n = positions.len();
    let (a, b) = seg;
    let dx = (positions[b][0] + mean[b]) - (positions[a][0] + mean[a]);
    let dy = (positions[b][1] + mean[n + b]) - (positions[a][1] + mean[n + a]);
    let len = dx.hypot(dy);
    let mut g = DVector::zeros(2 * n);
    if len > 0.0 {
        let (ex, ey) = (dx / len, dy / len);
        g[a] = -ex;
        g[b] = ex;
        g[n + a] = -ey;
        g[n + b] = ey;
    }
    (len, g)
}

fn segment_length(positions: &[[f64; 2]], v: &DVector<f64>, seg: (usize, usize)) -> f64 {
    let n = positions.len();
    let (a, b) = seg;
    let dx = (positions[b][0] + v[b]) - (positions[a][0] + v[a]);
    let dy = (positions[b][1] + v[n + b]) - (positions[a][1] + v[n + a]);
    dx.hypot(dy)
}

/// Compare the empirical mean segment-length ratio against its second-order
/// expansion around the mean configuration:
/// (r_a/r_b)(1 + var_b/r_b^2 - cov_ab/(r_a r_b)), with variances and
/// covariances of the linearized lengths taken from the second moments.
pub fn proportion_check(
    vectors: &[DisplacementVector],
    positions: &[[f64; 2]],
    pairs: &[((usize, usize), (usize, usize))],
) -> Result<ProportionReport> {
    let n = positions.len();
    if vectors.is_empty() {
        return Err(Error::precondition("proportion check needs data"));
    }
    if vectors[0].values.len() != 2 * n {
        return Err(Error::precondition("vector dimension does not match landmark count"));
    }
    for &((a1, a2), (b1, b2)) in pairs {
        if [a1, a2, b1, b2].iter().any(|&i| i >= n) {
            return Err(Error::precondition("segment index out of range"));
        }
        if a1 == a2 || b1 == b2 {
            return Err(Error::precondition("a segment needs two distinct landmarks"));
        }
    }
    let count = vectors.len() as f64;
    let mut mean = DVector::zeros(2 * n);
    for v in vectors {
        mean += &v.values;
    }
    mean /= count;
    let mut corr2 = DMatrix::zeros(2 * n, 2 * n);
    for v in vectors {
        let d = &v.values - &mean;
        corr2.ger(1.0, &d, &d, 1.0);
    }
    corr2 /= count;

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &(seg_a, seg_b) in pairs {
        let (ra, ga) = segment_gradient(positions, &mean, seg_a);
        let (rb, gb) = segment_gradient(positions, &mean, seg_b);
        if rb < 1e-9 || ra < 1e-9 {
            notes.push(format!(
                "pair {seg_a:?}/{seg_b:?} skipped: mean segment length near zero"
            ));
            continue;
        }
        let var_b = (gb.transpose() * &corr2 * &gb)[(0, 0)];
        let cov_ab = (ga.transpose() * &corr2 * &gb)[(0, 0)];
        let var_a = (ga.transpose() * &corr2 * &ga)[(0, 0)];
        let predicted = (ra / rb) * (1.0 + var_b / (rb * rb) - cov_ab / (ra * rb));
        let empirical = vectors
            .iter()
            .map(|v| {
                segment_length(positions, &v.values, seg_a)
                    / segment_length(positions, &v.values, seg_b)
            })
            .sum::<f64>()
            / count;
        let fluctuation_scale = (var_a.sqrt() / ra).max(var_b.sqrt() / rb);
        rows.push(ProportionRow {
            seg_a,
            seg_b,
            empirical,
            predicted,
            rel_discrepancy: (empirical - predicted).abs() / empirical.abs().max(1e-300),
            fluctuation_scale,
            reliable: fluctuation_scale <= PROPORTION_SCALE_LIMIT,
        });
    }
    Ok(ProportionReport { rows, notes })
}

// ---------------------------------------------------------------------------
// Exact binary-spin enumeration

#[derive(Debug, Clone)]
pub struct BinaryEnumeration {
    /// Pair correlations <s_i s_j>; unit diagonal.
    pub correlations: DMatrix<f64>,
    pub means: DVector<f64>,
    pub log_z: f64,
}

/// Exact moments of the +-1-spin pairwise model
/// P(s) proportional to exp(sum_{i<j} J_ij s_i s_j + sum_i h_i s_i),
/// by enumerating all 2^n configurations.
pub fn enumerate_pairwise_binary(
    j: &DMatrix<f64>,
    h: Option<&DVector<f64>>,
) -> Result<BinaryEnumeration> {
    let n = j.nrows();
    if j.ncols() != n || n == 0 {
        return Err(Error::precondition("coupling matrix must be square and non-empty"));
    }
    if n > BINARY_ENUMERATION_CAP {
        return Err(Error::precondition(format!(
            "exact enumeration limited to {BINARY_ENUMERATION_CAP} spins, got {n}"
        )));
    }
    let scale = j.abs().max();
    if (j - j.transpose()).abs().max() > 1e-12 * scale.max(1.0) {
        return Err(Error::precondition("coupling matrix must be symmetric"));
    }
    if let Some(h) = h {
        if h.len() != n {
            return Err(Error::precondition("field length does not match spin count"));
        }
    }
    let spins = |mask: usize, i: usize| if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
    let exponent = |mask: usize| {
        let mut e = 0.0;
        for i in 0..n {
            let si = spins(mask, i);
            for k in (i + 1)..n {
                e += j[(i, k)] * si * spins(mask, k);
            }
            if let Some(h) = h {
                e += h[i] * si;
            }
        }
        e
    };
    // logsumexp over all configurations.
    let exponents: Vec<f64> = (0..(1usize << n)).map(exponent).collect();
    let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + exponents.iter().map(|e| (e - m).exp()).sum::<f64>().ln();

    let mut correlations = DMatrix::zeros(n, n);
    let mut means = DVector::zeros(n);
    for (mask, e) in exponents.iter().enumerate() {
        let w = (e - log_z).exp();
        for i in 0..n {
            let si = spins(mask, i);
            means[i] += w * si;
            correlations[(i, i)] += w;
            for k in (i + 1)..n {
                let v = w * si * spins(mask, k);
                correlations[(i, k)] += v;
                correlations[(k, i)] += v;
            }
        }
    }
    Ok(BinaryEnumeration { correlations, means, log_z })
}
