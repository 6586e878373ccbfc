//! Gaussian (pairwise) maximum-entropy models.
//!
//! The full model inverts the covariance on its retained eigenmodes:
//! J = pinv(corr2), h = -J * mean, with energy H(x) = (1/2) x^T J x + h^T x
//! and density exp(-H(x)) / Z restricted to the constraint fiber (the affine
//! subspace where the null-mode components equal their dataset offsets).
//! Reduced variants keep only parts of the coupling structure: fields only,
//! independently inverted x/y blocks, a zeroed cross block, or a single
//! shared block from averaged x/y statistics.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ConstraintSet, MomentStatistics};
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, quadratic_form, symmetric_spectrum, DEFAULT_EIGEN_THRESHOLD, PSD_TOLERANCE};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianVariant {
    /// Full pairwise model: J = pinv(corr2).
    Full,
    /// Independent components: diagonal J from per-component variances.
    FieldsOnly,
    /// x and y blocks inverted separately; cross block from
    /// J_xy = -J_xx C_xy J_yy (valid when C_xy is small).
    Approximated,
    /// Full fit with the x-y cross block forced to zero afterwards.
    NullXy,
    /// One shared block from the averaged x/y statistics, applied to both.
    Dot,
}

impl GaussianVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            GaussianVariant::Full => "maxent2",
            GaussianVariant::FieldsOnly => "maxent1",
            GaussianVariant::Approximated => "maxent2-approx",
            GaussianVariant::NullXy => "maxent2-nullxy",
            GaussianVariant::Dot => "maxent2-dot",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "maxent2" => GaussianVariant::Full,
            "maxent1" => GaussianVariant::FieldsOnly,
            "maxent2-approx" => GaussianVariant::Approximated,
            "maxent2-nullxy" => GaussianVariant::NullXy,
            "maxent2-dot" => GaussianVariant::Dot,
            other => return Err(Error::parse(format!("unknown model tag {other:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GaussianFitConfig {
    pub eigen_threshold: f64,
    pub psd_tolerance: f64,
}

impl Default for GaussianFitConfig {
    fn default() -> Self {
        Self { eigen_threshold: DEFAULT_EIGEN_THRESHOLD, psd_tolerance: PSD_TOLERANCE }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub variant: GaussianVariant,
    pub dim: usize,
    pub mean: DVector<f64>,
    pub h: DVector<f64>,
    pub j: DMatrix<f64>,
    /// Columns: retained eigenvectors of J, matching `spectrum`.
    pub basis: DMatrix<f64>,
    /// Retained eigenvalues of J, descending.
    pub spectrum: Vec<f64>,
    pub log_norm: f64,
    pub eigen_threshold: f64,
    /// Identity of the coordinate system the model was fitted in (scaler
    /// fingerprint); guards against cross-scaler score comparisons.
    pub coordinate_key: Option<u64>,
}

impl GaussianModel {
    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }

    /// Log density w.r.t. Lebesgue measure on the retained subspace:
    /// -(1/2) x^T J x - h^T x - log_norm.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::precondition(format!(
                "point has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(-0.5 * quadratic_form(&self.j, x) - self.h.dot(x) - self.log_norm)
    }

    /// Exact sampler: independent normal coordinates with variance 1/lambda
    /// along each retained eigenvector, centered on the data mean. Null-mode
    /// components are inherited from the mean, i.e. pinned at the dataset's
    /// constraint offsets.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.rank();
        let scales: Vec<f64> = self.spectrum.iter().map(|l| 1.0 / l.sqrt()).collect();
        (0..count)
            .map(|_| {
                let mut x = self.mean.clone();
                for k in 0..r {
                    let z: f64 = rng.sample(StandardNormal);
                    x += self.basis.column(k) * (z * scales[k]);
                }
                x
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let repr = GaussianModelRepr {
            variant: self.variant.tag().to_string(),
            dim: self.dim,
            mean: self.mean.iter().cloned().collect(),
            h: self.h.iter().cloned().collect(),
            j: self.j.as_slice().to_vec(),
            basis: self.basis.as_slice().to_vec(),
            spectrum: self.spectrum.clone(),
            log_norm: self.log_norm,
            eigen_threshold: self.eigen_threshold,
            coordinate_key: self.coordinate_key,
        };
        serde_json::to_string_pretty(&repr).expect("gaussian model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: GaussianModelRepr =
            serde_json::from_str(text).map_err(|e| Error::parse(format!("gaussian model: {e}")))?;
        let dim = repr.dim;
        if repr.j.len() != dim * dim {
            return Err(Error::schema(format!(
                "J has {} entries for dimension {dim}",
                repr.j.len()
            )));
        }
        let r = repr.spectrum.len();
        if repr.basis.len() != dim * r {
            return Err(Error::schema(format!(
                "basis has {} entries for {dim}x{r}",
                repr.basis.len()
            )));
        }
        Ok(GaussianModel {
            variant: GaussianVariant::from_tag(&repr.variant)?,
            dim,
            mean: DVector::from_vec(repr.mean),
            h: DVector::from_vec(repr.h),
            j: DMatrix::from_column_slice(dim, dim, &repr.j),
            basis: DMatrix::from_column_slice(dim, r, &repr.basis),
            spectrum: repr.spectrum,
            log_norm: repr.log_norm,
            eigen_threshold: repr.eigen_threshold,
            coordinate_key: repr.coordinate_key,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianModelRepr {
    variant: String,
    dim: usize,
    mean: Vec<f64>,
    h: Vec<f64>,
    /// Column-major dim x dim.
    j: Vec<f64>,
    /// Column-major dim x rank.
    basis: Vec<f64>,
    spectrum: Vec<f64>,
    log_norm: f64,
    eigen_threshold: f64,
    coordinate_key: Option<u64>,
}

/// Shared tail of every fit: eigen-split J, derive h = -J mean, normalize.
fn finalize(
    j: DMatrix<f64>,
    mean: &DVector<f64>,
    variant: GaussianVariant,
    cfg: &GaussianFitConfig,
) -> Result<GaussianModel> {
    let dim = j.nrows();
    let spec = symmetric_spectrum(&j)?;
    let lambda_max = spec.values.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::numerical("precision matrix has no positive eigenvalues"));
    }
    if spec.min_value() < -cfg.psd_tolerance * lambda_max {
        return Err(Error::numerical(format!(
            "precision matrix is indefinite (min eigenvalue {:.3e})",
            spec.min_value()
        )));
    }
    let retained = spec.retained_indices(cfg.eigen_threshold);
    let r = retained.len();
    let mut basis = DMatrix::zeros(dim, r);
    let mut spectrum = Vec::with_capacity(r);
    for (col, &k) in retained.iter().enumerate() {
        basis.set_column(col, &spec.vectors.column(k));
        spectrum.push(spec.values[k]);
    }
    let h = -(&j * mean);
    // h^T pinv(J) h over the retained modes.
    let mut h_jinv_h = 0.0;
    for (col, lam) in spectrum.iter().enumerate() {
        let proj = basis.column(col).dot(&h);
        h_jinv_h += proj * proj / lam;
    }
    let log_det: f64 = spectrum.iter().map(|l| l.ln()).sum();
    let log_norm = 0.5 * (r as f64) * LN_2PI - 0.5 * log_det + 0.5 * h_jinv_h;
    Ok(GaussianModel {
        variant,
        dim,
        mean: mean.clone(),
        h,
        j,
        basis,
        spectrum,
        log_norm,
        eigen_threshold: cfg.eigen_threshold,
        coordinate_key: None,
    })
}

fn check_psd(stats: &MomentStatistics, cfg: &GaussianFitConfig) -> Result<()> {
    let spec = symmetric_spectrum(&stats.corr2)?;
    let lambda_max = spec.values.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::numerical("covariance has no positive eigenvalues"));
    }
    if spec.min_value() < -cfg.psd_tolerance * lambda_max {
        return Err(Error::numerical(format!(
            "covariance is not positive semidefinite (min eigenvalue {:.3e})",
            spec.min_value()
        )));
    }
    Ok(())
}

/// Fit the full pairwise model. The constraint set must describe the same
/// statistics (dimension and detected rank are cross-checked).
pub fn fit_gaussian(
    stats: &MomentStatistics,
    constraints: &ConstraintSet,
    cfg: &GaussianFitConfig,
) -> Result<GaussianModel> {
    let dim = stats.corr2.nrows();
    if constraints.dim != dim {
        return Err(Error::precondition(format!(
            "constraint set dimension {} vs statistics dimension {dim}",
            constraints.dim
        )));
    }
    check_psd(stats, cfg)?;
    let pinv = pseudo_inverse(&stats.corr2, cfg.eigen_threshold)?;
    if pinv.rank != constraints.rank() {
        return Err(Error::precondition(format!(
            "covariance rank {} does not match constraint set rank {}; recompute null modes with the same threshold",
            pinv.rank,
            constraints.rank()
        )));
    }
    finalize(pinv.matrix, &stats.mean, GaussianVariant::Full, cfg)
}

fn block(m: &DMatrix<f64>, ri: usize, ci: usize, n: usize) -> DMatrix<f64> {
    m.view((ri, ci), (n, n)).into_owned()
}

fn assemble_blocks(
    xx: &DMatrix<f64>,
    xy: &DMatrix<f64>,
    yy: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = xx.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(xx);
    out.view_mut((0, n), (n, n)).copy_from(xy);
    out.view_mut((n, 0), (n, n)).copy_from(&xy.transpose());
    out.view_mut((n, n), (n, n)).copy_from(yy);
    out
}

/// Fit a reduced variant. The x/y block structure assumes the layout
/// x_0..x_{n-1}, y_0..y_{n-1} (even dimension).
pub fn fit_variant(
    stats: &MomentStatistics,
    constraints: &ConstraintSet,
    variant: GaussianVariant,
    cfg: &GaussianFitConfig,
) -> Result<GaussianModel> {
    let dim = stats.corr2.nrows();
    if constraints.dim != dim {
        return Err(Error::precondition(format!(
            "constraint set dimension {} vs statistics dimension {dim}",
            constraints.dim
        )));
    }
    check_psd(stats, cfg)?;
    let needs_blocks = matches!(
        variant,
        GaussianVariant::Approximated | GaussianVariant::NullXy | GaussianVariant::Dot
    );
    if needs_blocks && dim % 2 != 0 {
        return Err(Error::precondition(
            "block variants need an even dimension (x block then y block)",
        ));
    }
    match variant {
        GaussianVariant::Full => fit_gaussian(stats, constraints, cfg),
        GaussianVariant::FieldsOnly => {
            let vars: Vec<f64> = (0..dim).map(|k| stats.corr2[(k, k)]).collect();
            let max_var = vars.iter().cloned().fold(0.0f64, f64::max);
            if max_var <= 0.0 {
                return Err(Error::numerical("all variances vanish"));
            }
            let mut j = DMatrix::zeros(dim, dim);
            for k in 0..dim {
                if vars[k] >= cfg.eigen_threshold * max_var {
                    j[(k, k)] = 1.0 / vars[k];
                }
            }
            finalize(j, &stats.mean, variant, cfg)
        }
        GaussianVariant::Approximated => {
            let n = dim / 2;
            let cxx = block(&stats.corr2, 0, 0, n);
            let cyy = block(&stats.corr2, n, n, n);
            let cxy = stats.corr2.view((0, n), (n, n)).into_owned();
            let jxx = pseudo_inverse(&cxx, cfg.eigen_threshold)?.matrix;
            let jyy = pseudo_inverse(&cyy, cfg.eigen_threshold)?.matrix;
            let jxy = -(&jxx * &cxy * &jyy);
            let j = assemble_blocks(&jxx, &jxy, &jyy);
            finalize(j, &stats.mean, variant, cfg)
        }
        GaussianVariant::NullXy => {
            let full = fit_gaussian(stats, constraints, cfg)?;
            let n = dim / 2;
            let jxx = block(&full.j, 0, 0, n);
            let jyy = block(&full.j, n, n, n);
            let j = assemble_blocks(&jxx, &DMatrix::zeros(n, n), &jyy);
            let mut model = finalize(j, &stats.mean, variant, cfg)?;
            model.coordinate_key = full.coordinate_key;
            Ok(model)
        }
        GaussianVariant::Dot => {
            let n = dim / 2;
            let cxx = block(&stats.corr2, 0, 0, n);
            let cyy = block(&stats.corr2, n, n, n);
            // Average of the two diagonal blocks: the per-axis covariance a
            // shared isotropic block must reproduce.
            let cdot = (&cxx + &cyy) * 0.5;
            let jdot = pseudo_inverse(&cdot, cfg.eigen_threshold)?.matrix;
            let j = assemble_blocks(&jdot, &DMatrix::zeros(n, n), &jdot);
            finalize(j, &stats.mean, variant, cfg)
        }
    }
}
