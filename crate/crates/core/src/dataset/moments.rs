//! Moment statistics in two flavors.
//!
//! *Bare*: moments over every vector, with vector-level bootstrap errors.
//! *Inter-subject*: moments estimated from one random vector per subject and
//! averaged over realizations, with errors from a subject-level bootstrap
//! (subjects resampled with replacement, then one random vector per drawn
//! subject). The subject-level error is the honest one when vectors of a
//! subject share a common offset.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::DisplacementVector;
use crate::error::{Error, Result};

/// Hard cap on the dimension for third-order moments (memory grows as D^3).
pub const MAX_THIRD_ORDER_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFlavor {
    Bare,
    InterSubject,
}

/// Dense fully symmetric rank-3 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    /// Set the value on every permutation of (i, j, k).
    pub fn set_sym(&mut self, i: usize, j: usize, k: usize, value: f64) {
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            let at = self.idx(a, b, c);
            self.data[at] = value;
        }
    }

    /// Accumulate `w * x (x) x (x) x`.
    pub fn add_outer(&mut self, x: &DVector<f64>, w: f64) {
        let d = self.dim;
        for i in 0..d {
            let xi = w * x[i];
            for j in 0..d {
                let xij = xi * x[j];
                let row = (i * d + j) * d;
                for k in 0..d {
                    self.data[row + k] += xij * x[k];
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let v = self.get(i, j, k);
                    worst = worst.max((v - self.get(i, k, j)).abs());
                    worst = worst.max((v - self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }

    /// Full contraction sum_{ijk} T_ijk x_i x_j x_k.
    pub fn contract3(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..d {
                let xij = xi * x[j];
                let row = (i * d + j) * d;
                for k in 0..d {
                    total += self.data[row + k] * xij * x[k];
                }
            }
        }
        total
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> crate::error::Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(crate::error::Error::schema(format!(
                "third-moment tensor has {} entries for dimension {dim}",
                data.len()
            )));
        }
        let t = Self { dim, data };
        if t.max_symmetry_defect() > 1e-9 * (1.0 + t.max_abs()) {
            return Err(crate::error::Error::schema(
                "third-moment tensor is not symmetric",
            ));
        }
        Ok(t)
    }

    /// Independent entries i <= j <= k with their permutation multiplicity.
    pub fn independent_entries(dim: usize) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                for k in j..dim {
                    let mult = if i == j && j == k {
                        1.0
                    } else if i == j || j == k {
                        3.0
                    } else {
                        6.0
                    };
                    out.push((i, j, k, mult));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MomentStatistics {
    pub flavor: MomentFlavor,
    /// Number of vectors that fed the estimate.
    pub sample_count: usize,
    pub n_subjects: usize,
    pub n_realizations: usize,
    pub mean: DVector<f64>,
    /// Second moments of centered values: (1/S) sum dx dx^T.
    pub corr2: DMatrix<f64>,
    /// Bootstrap standard error per corr2 entry.
    pub sigma_corr2: DMatrix<f64>,
    /// Third moments of centered values, when requested.
    pub corr3: Option<Tensor3>,
}

#[derive(Debug, Clone)]
pub struct BareMomentConfig {
    /// 2 or 3.
    pub order: usize,
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for BareMomentConfig {
    fn default() -> Self {
        Self { order: 2, n_bootstrap: 1000, seed: 0 }
    }
}

fn centered_second_moment(vectors: &[DisplacementVector], mean: &DVector<f64>) -> DMatrix<f64> {
    let dim = mean.len();
    let mut m = DMatrix::zeros(dim, dim);
    for v in vectors {
        let d = &v.values - mean;
        m.ger(1.0, &d, &d, 1.0);
    }
    m / vectors.len() as f64
}

fn mean_vector(vectors: &[DisplacementVector]) -> DVector<f64> {
    let dim = vectors[0].values.len();
    let mut m = DVector::zeros(dim);
    for v in vectors {
        m += &v.values;
    }
    m / vectors.len() as f64
}

/// Per-entry standard deviation across a set of matrices.
fn entrywise_std(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats.len();
    let (rows, cols) = (mats[0].nrows(), mats[0].ncols());
    if n < 2 {
        return DMatrix::zeros(rows, cols);
    }
    let mut sum = DMatrix::zeros(rows, cols);
    for m in mats {
        sum += m;
    }
    let mean = sum / n as f64;
    let mut var = DMatrix::zeros(rows, cols);
    for m in mats {
        let d = m - &mean;
        var += d.component_mul(&d);
    }
    (var / n as f64).map(f64::sqrt)
}

/// Moments over all vectors, with vector-level bootstrap errors on corr2.
pub fn compute_bare_moments(
    vectors: &[DisplacementVector],
    cfg: &BareMomentConfig,
) -> Result<MomentStatistics> {
    if vectors.len() < 2 {
        return Err(Error::precondition("bare moments need at least 2 vectors"));
    }
    if !(2..=3).contains(&cfg.order) {
        return Err(Error::precondition(format!("unsupported moment order {}", cfg.order)));
    }
    let dim = vectors[0].values.len();
    if vectors.iter().any(|v| v.values.len() != dim) {
        return Err(Error::schema("vectors have inconsistent dimension"));
    }
    if cfg.order == 3 && dim > MAX_THIRD_ORDER_DIM {
        return Err(Error::precondition(format!(
            "third-order moments limited to dimension {MAX_THIRD_ORDER_DIM}, got {dim}"
        )));
    }

    let mean = mean_vector(vectors);
    let corr2 = centered_second_moment(vectors, &mean);
    let corr3 = if cfg.order == 3 {
        let mut t = Tensor3::zeros(dim);
        for v in vectors {
            let d = &v.values - &mean;
            t.add_outer(&d, 1.0);
        }
        t.scale(1.0 / vectors.len() as f64);
        Some(t)
    } else {
        None
    };

    let sigma_corr2 = if cfg.n_bootstrap >= 2 {
        let replicates: Vec<DMatrix<f64>> = (0..cfg.n_bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(b as u64);
                let resampled: Vec<DisplacementVector> = (0..vectors.len())
                    .map(|_| vectors[rng.gen_range(0..vectors.len())].clone())
                    .collect();
                let m = mean_vector(&resampled);
                centered_second_moment(&resampled, &m)
            })
            .collect();
        entrywise_std(&replicates)
    } else {
        DMatrix::zeros(dim, dim)
    };

    let n_subjects = {
        let mut subjects: Vec<u32> = vectors.iter().map(|v| v.subject).collect();
        subjects.sort_unstable();
        subjects.dedup();
        subjects.len()
    };

    Ok(MomentStatistics {
        flavor: MomentFlavor::Bare,
        sample_count: vectors.len(),
        n_subjects,
        n_realizations: cfg.n_bootstrap,
        mean,
        corr2,
        sigma_corr2,
        corr3: if cfg.order == 3 { corr3 } else { None },
    })
}

#[derive(Debug, Clone)]
pub struct InterSubjectConfig {
    pub n_realizations: usize,
    pub seed: u64,
}

impl Default for InterSubjectConfig {
    fn default() -> Self {
        Self { n_realizations: 1000, seed: 0 }
    }
}

/// Inter-subject moments: one random vector per subject per realization.
/// The estimate uses every subject once per realization; the error bar
/// additionally resamples subjects with replacement, which is what carries
/// the n_subjects^{-1/2} scaling.
pub fn compute_intersubject_moments(
    vectors: &[DisplacementVector],
    cfg: &InterSubjectConfig,
) -> Result<MomentStatistics> {
    if cfg.n_realizations < 1 {
        return Err(Error::precondition("need at least one realization"));
    }
    let mut groups: BTreeMap<u32, Vec<&DisplacementVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry(v.subject).or_default().push(v);
    }
    let n_subjects = groups.len();
    if n_subjects < 2 {
        return Err(Error::precondition(
            "inter-subject statistics need at least 2 subjects",
        ));
    }
    let dim = vectors[0].values.len();
    if vectors.iter().any(|v| v.values.len() != dim) {
        return Err(Error::schema("vectors have inconsistent dimension"));
    }
    let mean = mean_vector(vectors);
    let subjects: Vec<&Vec<&DisplacementVector>> = groups.values().collect();
    let all_single = subjects.iter().all(|g| g.len() == 1);

    let corr2 = if all_single {
        // One vector per subject: every realization is the full set, so the
        // estimate coincides exactly with the bare second moment.
        centered_second_moment(vectors, &mean)
    } else {
        let reals: Vec<DMatrix<f64>> = (0..cfg.n_realizations)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let mut m = DMatrix::zeros(dim, dim);
                for g in &subjects {
                    let v = g[rng.gen_range(0..g.len())];
                    let d = &v.values - &mean;
                    m.ger(1.0, &d, &d, 1.0);
                }
                m / n_subjects as f64
            })
            .collect();
        let mut sum = DMatrix::zeros(dim, dim);
        for m in &reals {
            sum += m;
        }
        sum / reals.len() as f64
    };

    // Error bar: subject-level bootstrap, one random vector per drawn subject.
    let boots: Vec<DMatrix<f64>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((1u64 << 32) + b as u64);
            let mut m = DMatrix::zeros(dim, dim);
            for _ in 0..n_subjects {
                let g = subjects[rng.gen_range(0..n_subjects)];
                let v = g[rng.gen_range(0..g.len())];
                let d = &v.values - &mean;
                m.ger(1.0, &d, &d, 1.0);
            }
            m / n_subjects as f64
        })
        .collect();
    let sigma_corr2 = entrywise_std(&boots);

    Ok(MomentStatistics {
        flavor: MomentFlavor::InterSubject,
        sample_count: vectors.len(),
        n_subjects,
        n_realizations: cfg.n_realizations,
        mean,
        corr2,
        sigma_corr2,
        corr3: None,
    })
}
