//! Symmetric eigendecomposition helpers shared by every inference path:
//! spectra, spectral pseudo-inverses, and retained/null splits relative to
//! the largest eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative eigenvalue threshold separating retained from null modes.
pub const DEFAULT_EIGEN_THRESHOLD: f64 = 1e-8;

/// Relative tolerance below which a symmetric matrix counts as non-PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
/// Column `k` of `vectors` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    /// Indices of eigenvalues at or above `threshold * lambda_max`.
    /// With a non-positive spectrum everything is classified null.
    pub fn retained_indices(&self, threshold: f64) -> Vec<usize> {
        let lambda_max = self.values.first().copied().unwrap_or(0.0);
        if lambda_max <= 0.0 {
            return Vec::new();
        }
        let cut = threshold * lambda_max;
        (0..self.values.len()).filter(|&k| self.values[k] >= cut).collect()
    }

    pub fn rank(&self, threshold: f64) -> usize {
        self.retained_indices(threshold).len()
    }

    /// Smallest eigenvalue (last after the descending sort).
    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix. Fails if the input is not
/// square or departs from symmetry by more than `1e-8` relative to its
/// largest entry.
pub fn symmetric_spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    if a.nrows() != a.ncols() {
        return Err(Error::precondition(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let defect = symmetry_defect(a);
    if defect > 1e-8 * scale {
        return Err(Error::precondition(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {defect:.3e})"
        )));
    }
    // Symmetrize exactly so roundoff asymmetry cannot leak into the solver.
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalue comparison")
    });
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum { values, vectors })
}

/// Spectral pseudo-inverse of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// Eigenvalues of the *input* that were inverted, descending.
    pub retained_eigenvalues: Vec<f64>,
    pub rank: usize,
    pub warnings: Vec<String>,
}

/// Invert a symmetric matrix on the span of its eigenvalues `>= threshold *
/// lambda_max`; eigenvalues below the cut are treated as exact zeros. When
/// everything falls below the cut the result is the zero matrix plus a
/// warning.
pub fn pseudo_inverse(a: &DMatrix<f64>, threshold: f64) -> Result<PseudoInverse> {
    let spec = symmetric_spectrum(a)?;
    let retained = spec.retained_indices(threshold);
    let n = a.nrows();
    let mut warnings = Vec::new();
    if retained.is_empty() {
        warnings.push("all eigenvalues below threshold; pseudo-inverse is the zero matrix".into());
        return Ok(PseudoInverse {
            matrix: DMatrix::zeros(n, n),
            retained_eigenvalues: Vec::new(),
            rank: 0,
            warnings,
        });
    }
    let mut out = DMatrix::zeros(n, n);
    for &k in &retained {
        let v = spec.vectors.column(k);
        let lam = spec.values[k];
        // rank-1 update: out += v v^T / lambda
        out.ger(1.0 / lam, &v, &v, 1.0);
    }
    Ok(PseudoInverse {
        matrix: out,
        retained_eigenvalues: retained.iter().map(|&k| spec.values[k]).collect(),
        rank: retained.len(),
        warnings,
    })
}

/// x^T A x without allocating.
pub fn quadratic_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        let mut col = 0.0;
        for i in 0..a.nrows() {
            col += a[(i, j)] * x[i];
        }
        acc += col * x[j];
    }
    acc
}

/// Projector onto the span of the given column set.
pub fn column_span_projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}
