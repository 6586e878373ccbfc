//! Landmark displacement datasets.
//!
//! A dataset is a list of displacement vectors, one per (subject, within-
//! subject index) pair. Values are concatenated as all x-displacements
//! followed by all y-displacements, in units of facial height. This module
//! owns CSV/manifest I/O, whole-database standardization, numerical
//! detection of constraint-induced null modes, and the reduction to
//! non-redundant coordinates.

pub mod moments;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_spectrum, DEFAULT_EIGEN_THRESHOLD};
pub use moments::{
    compute_bare_moments, compute_intersubject_moments, BareMomentConfig, InterSubjectConfig,
    MomentFlavor, MomentStatistics, Tensor3,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementVector {
    pub subject: u32,
    pub within_index: u32,
    pub values: DVector<f64>,
}

impl DisplacementVector {
    pub fn new(subject: u32, within_index: u32, values: Vec<f64>) -> Self {
        Self { subject, within_index, values: DVector::from_vec(values) }
    }

    /// Stable row identifier used by external score files.
    pub fn id(&self) -> String {
        format!("{}:{}", self.subject, self.within_index)
    }
}

/// Sidecar metadata. `landmark_means` (mean landmark positions in the same
/// units as the displacements) is optional; the geometry analysis requires
/// it, plain statistics do not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub n_landmarks: usize,
    pub n_subjects: usize,
    pub units: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmark_means: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vectors: Vec<DisplacementVector>,
    pub n_landmarks: usize,
    pub units: String,
    pub landmark_means: Option<Vec<[f64; 2]>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        2 * self.n_landmarks
    }

    /// Subject id -> indices into `vectors`, in stable (sorted) order.
    pub fn subject_groups(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vectors.iter().enumerate() {
            groups.entry(v.subject).or_default().push(i);
        }
        groups
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_groups().len()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            n_landmarks: self.n_landmarks,
            n_subjects: self.n_subjects(),
            units: self.units.clone(),
            landmark_means: self.landmark_means.clone(),
        }
    }
}

#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

fn expected_header(n_landmarks: usize) -> Vec<String> {
    let mut cols = vec!["subject".to_string(), "index".to_string()];
    for i in 0..n_landmarks {
        cols.push(format!("x{i}"));
    }
    for i in 0..n_landmarks {
        cols.push(format!("y{i}"));
    }
    cols
}

fn parse_header(header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols.len() % 2 != 0 {
        return Err(Error::schema(format!(
            "header has {} columns; expected subject,index,x0..x(n-1),y0..y(n-1)",
            cols.len()
        )));
    }
    let n = (cols.len() - 2) / 2;
    let expected = expected_header(n);
    for (got, want) in cols.iter().zip(expected.iter()) {
        if got != want {
            return Err(Error::schema(format!(
                "unexpected header column {got:?}, expected {want:?}"
            )));
        }
    }
    Ok(n)
}

/// Load a dataset from CSV (+ optional manifest). Malformed rows fail with
/// their CSV line number; an empty file yields an empty dataset plus a
/// warning; unequal per-subject counts are flagged but allowed.
pub fn load_dataset(
    csv_path: &Path,
    manifest_path: Option<&Path>,
) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)
        .map_err(|e| Error::parse(format!("{}: {e}", csv_path.display())))?;
    let n_landmarks = parse_header(reader.headers().map_err(|e| Error::parse(e.to_string()))?)?;
    let dim = 2 * n_landmarks;

    let mut vectors = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::parse_at(line, e.to_string()))?;
        if record.len() != dim + 2 {
            return Err(Error::schema(format!(
                "row at line {line} has {} fields, expected {}",
                record.len(),
                dim + 2
            )));
        }
        let subject: u32 = record[0]
            .trim()
            .parse()
            .map_err(|e| Error::parse_at(line, format!("subject: {e}")))?;
        let within: u32 = record[1]
            .trim()
            .parse()
            .map_err(|e| Error::parse_at(line, format!("index: {e}")))?;
        let mut values = Vec::with_capacity(dim);
        for k in 0..dim {
            let v: f64 = record[k + 2]
                .trim()
                .parse()
                .map_err(|e| Error::parse_at(line, format!("column {}: {e}", k + 2)))?;
            if !v.is_finite() {
                return Err(Error::parse_at(line, format!("non-finite value in column {}", k + 2)));
            }
            values.push(v);
        }
        vectors.push(DisplacementVector::new(subject, within, values));
    }
    if vectors.is_empty() {
        warnings.push("dataset is empty".to_string());
    }

    let mut units = "facial-height".to_string();
    let mut landmark_means = None;
    if let Some(mp) = manifest_path {
        let text = std::fs::read_to_string(mp)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(format!("manifest: {e}")))?;
        if manifest.n_landmarks != n_landmarks {
            return Err(Error::schema(format!(
                "manifest declares {} landmarks, CSV header has {}",
                manifest.n_landmarks, n_landmarks
            )));
        }
        if let Some(means) = &manifest.landmark_means {
            if means.len() != n_landmarks {
                return Err(Error::schema(format!(
                    "manifest lists {} landmark means for {} landmarks",
                    means.len(),
                    n_landmarks
                )));
            }
        }
        units = manifest.units;
        landmark_means = manifest.landmark_means;
    }

    let dataset = Dataset { vectors, n_landmarks, units, landmark_means };
    let groups = dataset.subject_groups();
    if !groups.is_empty() {
        let min = groups.values().map(Vec::len).min().unwrap();
        let max = groups.values().map(Vec::len).max().unwrap();
        if min != max {
            warnings.push(format!(
                "unequal vectors per subject (min {min}, max {max}); partial subjects kept"
            ));
        }
    }
    Ok(LoadReport { dataset, warnings })
}

pub fn save_dataset(dataset: &Dataset, csv_path: &Path, manifest_path: Option<&Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path)
        .map_err(|e| Error::parse(format!("{}: {e}", csv_path.display())))?;
    writer
        .write_record(expected_header(dataset.n_landmarks))
        .map_err(|e| Error::parse(e.to_string()))?;
    for v in &dataset.vectors {
        let mut record = vec![v.subject.to_string(), v.within_index.to_string()];
        record.extend(v.values.iter().map(|x| format!("{x}")));
        writer.write_record(&record).map_err(|e| Error::parse(e.to_string()))?;
    }
    writer.flush()?;
    if let Some(mp) = manifest_path {
        let manifest = dataset.manifest();
        std::fs::write(mp, serde_json::to_string_pretty(&manifest).expect("manifest json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Standardization

/// Affine per-component scaler fitted on the whole database. Zero-variance
/// components keep scale 1 and are listed in `unscaled`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub unscaled: Vec<usize>,
}

impl Scaler {
    pub fn fit(vectors: &[DisplacementVector]) -> Result<Scaler> {
        if vectors.is_empty() {
            return Err(Error::precondition("cannot fit scaler on empty data"));
        }
        let dim = vectors[0].values.len();
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for k in 0..dim {
                mean[k] += v.values[k];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for v in vectors {
            for k in 0..dim {
                let d = v.values[k] - mean[k];
                var[k] += d * d;
            }
        }
        for vk in &mut var {
            *vk /= n;
        }
        let max_var = var.iter().cloned().fold(0.0f64, f64::max);
        let mut scale = vec![1.0; dim];
        let mut unscaled = Vec::new();
        for k in 0..dim {
            if var[k] > 1e-14 * max_var && var[k] > 0.0 {
                scale[k] = var[k].sqrt();
            } else {
                unscaled.push(k);
            }
        }
        Ok(Scaler { mean, scale, unscaled })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |k, _| (v[k] - self.mean[k]) / self.scale[k])
    }

    pub fn invert(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |k, _| v[k] * self.scale[k] + self.mean[k])
    }

    /// Deterministic identity of the scaled coordinate system; models fitted
    /// on differently scaled data must never be compared.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x100000001b3);
        };
        for m in &self.mean {
            eat(m.to_bits());
        }
        for s in &self.scale {
            eat(s.to_bits());
        }
        h
    }
}

/// Standardize with an existing scaler, or fit one on `vectors` (the whole
/// database; never fit scalers on per-class or per-split subsets).
pub fn standardize(
    vectors: &[DisplacementVector],
    scaler: Option<&Scaler>,
) -> Result<(Vec<DisplacementVector>, Scaler)> {
    let scaler = match scaler {
        Some(s) => {
            if !vectors.is_empty() && s.dim() != vectors[0].values.len() {
                return Err(Error::precondition(format!(
                    "scaler dimension {} does not match data dimension {}",
                    s.dim(),
                    vectors[0].values.len()
                )));
            }
            s.clone()
        }
        None => Scaler::fit(vectors)?,
    };
    let out = vectors
        .iter()
        .map(|v| DisplacementVector {
            subject: v.subject,
            within_index: v.within_index,
            values: scaler.apply(&v.values),
        })
        .collect();
    Ok((out, scaler))
}

// ---------------------------------------------------------------------------
// Constraints and reduction

/// A declared linear constraint `coeffs . x = value` that the data are
/// expected to satisfy row by row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub value: f64,
    pub label: String,
}

/// Constraint structure detected from the covariance spectrum: null modes
/// (columns of `null_basis`), their fixed offsets, and the retained basis
/// (rows of `retained_basis`) spanning the fluctuating subspace.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub dim: usize,
    pub null_basis: DMatrix<f64>,
    pub retained_basis: DMatrix<f64>,
    pub null_offsets: DVector<f64>,
    pub spectrum: Vec<f64>,
    pub threshold: f64,
    pub gap_warning: Option<String>,
    pub declared: Vec<LinearConstraint>,
}

impl ConstraintSet {
    pub fn n_null(&self) -> usize {
        self.null_basis.ncols()
    }

    pub fn rank(&self) -> usize {
        self.retained_basis.nrows()
    }

    /// Project onto the retained basis.
    pub fn reduce(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.retained_basis * x
    }

    /// Reconstruct a full vector from reduced coordinates; null components
    /// are pinned at the dataset's constraint offsets.
    pub fn embed(&self, reduced: &DVector<f64>) -> DVector<f64> {
        self.retained_basis.transpose() * reduced + &self.null_basis * &self.null_offsets
    }

    /// Check every declared constraint against every vector.
    pub fn verify_declared(&self, vectors: &[DisplacementVector], tol: f64) -> Result<()> {
        for c in &self.declared {
            let coeffs = DVector::from_vec(c.coeffs.clone());
            for (i, v) in vectors.iter().enumerate() {
                let got = coeffs.dot(&v.values);
                if (got - c.value).abs() > tol {
                    return Err(Error::precondition(format!(
                        "constraint {:?} violated by vector {} ({} vs {})",
                        c.label, i, got, c.value
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trivial constraint set: everything retained, nothing null.
    pub fn unconstrained(dim: usize) -> Self {
        ConstraintSet {
            dim,
            null_basis: DMatrix::zeros(dim, 0),
            retained_basis: DMatrix::identity(dim, dim),
            null_offsets: DVector::zeros(0),
            spectrum: vec![1.0; dim],
            threshold: DEFAULT_EIGEN_THRESHOLD,
            gap_warning: None,
            declared: Vec::new(),
        }
    }

    /// Build the null/retained split directly from declared constraints
    /// instead of detecting it from data. The constraint rows are
    /// orthonormalized; linearly dependent rows are rejected. Offsets come
    /// from the least-norm point satisfying all constraints.
    pub fn from_declared(dim: usize, declared: Vec<LinearConstraint>) -> Result<Self> {
        let m = declared.len();
        if m >= dim {
            return Err(Error::precondition(format!(
                "{m} constraints leave no retained space in dimension {dim}"
            )));
        }
        for c in &declared {
            if c.coeffs.len() != dim {
                return Err(Error::precondition(format!(
                    "constraint {:?} has {} coefficients for dimension {dim}",
                    c.label,
                    c.coeffs.len()
                )));
            }
        }
        // Gram-Schmidt on the constraint rows.
        let mut null_cols: Vec<DVector<f64>> = Vec::with_capacity(m);
        for c in &declared {
            let mut v = DVector::from_vec(c.coeffs.clone());
            for u in &null_cols {
                let p = u.dot(&v);
                v -= u * p;
            }
            let n = v.norm();
            if n < 1e-10 {
                return Err(Error::precondition(format!(
                    "constraint {:?} is linearly dependent on earlier ones",
                    c.label
                )));
            }
            null_cols.push(v / n);
        }
        // Complete to an orthonormal basis of the whole space.
        let mut retained_rows: Vec<DVector<f64>> = Vec::with_capacity(dim - m);
        for k in 0..dim {
            let mut v = DVector::zeros(dim);
            v[k] = 1.0;
            for u in null_cols.iter().chain(retained_rows.iter()) {
                let p = u.dot(&v);
                v -= u * p;
            }
            let n = v.norm();
            if n > 1e-10 {
                retained_rows.push(v / n);
            }
            if retained_rows.len() == dim - m {
                break;
            }
        }
        if retained_rows.len() != dim - m {
            return Err(Error::numerical("failed to complete the retained basis"));
        }
        let mut null_basis = DMatrix::zeros(dim, m);
        for (k, v) in null_cols.iter().enumerate() {
            null_basis.set_column(k, v);
        }
        let mut retained_basis = DMatrix::zeros(dim - m, dim);
        for (k, v) in retained_rows.iter().enumerate() {
            retained_basis.set_row(k, &v.transpose());
        }
        // Least-norm x0 with coeffs_k . x0 = value_k, then its null-basis
        // coordinates become the offsets.
        let a = DMatrix::from_fn(m, dim, |r, c| declared[r].coeffs[c]);
        let values = DVector::from_fn(m, |r, _| declared[r].value);
        let x0 = a
            .svd(true, true)
            .solve(&values, 1e-12)
            .map_err(|e| Error::numerical(format!("constraint offset solve: {e}")))?;
        let null_offsets = null_basis.transpose() * x0;
        Ok(ConstraintSet {
            dim,
            null_basis,
            retained_basis,
            null_offsets,
            spectrum: Vec::new(),
            threshold: DEFAULT_EIGEN_THRESHOLD,
            gap_warning: None,
            declared,
        })
    }

    pub fn to_json(&self) -> String {
        let repr = ConstraintSetRepr {
            dim: self.dim,
            n_null: self.n_null(),
            null_basis: self.null_basis.as_slice().to_vec(),
            retained_basis: self.retained_basis.as_slice().to_vec(),
            null_offsets: self.null_offsets.iter().cloned().collect(),
            spectrum: self.spectrum.clone(),
            threshold: self.threshold,
            gap_warning: self.gap_warning.clone(),
            declared: self.declared.clone(),
        };
        serde_json::to_string_pretty(&repr).expect("constraint set serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ConstraintSetRepr = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("constraint set: {e}")))?;
        let dim = repr.dim;
        let m = repr.n_null;
        if m > dim
            || repr.null_basis.len() != dim * m
            || repr.retained_basis.len() != (dim - m) * dim
            || repr.null_offsets.len() != m
        {
            return Err(Error::schema("constraint set shapes disagree"));
        }
        Ok(ConstraintSet {
            dim,
            null_basis: DMatrix::from_column_slice(dim, m, &repr.null_basis),
            retained_basis: DMatrix::from_column_slice(dim - m, dim, &repr.retained_basis),
            null_offsets: DVector::from_vec(repr.null_offsets),
            spectrum: repr.spectrum,
            threshold: repr.threshold,
            gap_warning: repr.gap_warning,
            declared: repr.declared,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ConstraintSetRepr {
    dim: usize,
    n_null: usize,
    /// Column-major dim x n_null.
    null_basis: Vec<f64>,
    /// Column-major (dim - n_null) x dim.
    retained_basis: Vec<f64>,
    null_offsets: Vec<f64>,
    spectrum: Vec<f64>,
    threshold: f64,
    gap_warning: Option<String>,
    declared: Vec<LinearConstraint>,
}

/// Split the covariance spectrum into retained and null modes at
/// `threshold * lambda_max`. Emits a warning when the spectral gap between
/// the smallest retained and largest null eigenvalue is thin (< 10x).
pub fn detect_null_modes(stats: &MomentStatistics, threshold: f64) -> Result<ConstraintSet> {
    let spec = symmetric_spectrum(&stats.corr2)?;
    let dim = stats.corr2.nrows();
    let retained = spec.retained_indices(threshold);
    let r = retained.len();
    if r == 0 {
        return Err(Error::precondition(
            "covariance has no retained modes at this threshold",
        ));
    }
    let m = dim - r;
    let mut retained_basis = DMatrix::zeros(r, dim);
    for (row, &k) in retained.iter().enumerate() {
        retained_basis.set_row(row, &spec.vectors.column(k).transpose());
    }
    let mut null_basis = DMatrix::zeros(dim, m);
    let mut null_col = 0;
    for k in 0..dim {
        if !retained.contains(&k) {
            null_basis.set_column(null_col, &spec.vectors.column(k));
            null_col += 1;
        }
    }
    let gap_warning = if m > 0 {
        let min_retained = spec.values[retained[r - 1]];
        let max_null = (0..dim)
            .filter(|k| !retained.contains(k))
            .map(|k| spec.values[k])
            .fold(f64::NEG_INFINITY, f64::max);
        if max_null > 0.0 && min_retained / max_null < 10.0 {
            Some(format!(
                "thin spectral gap: smallest retained eigenvalue {min_retained:.3e} vs largest null {max_null:.3e}; threshold {threshold:.1e} may be ambiguous"
            ))
        } else {
            None
        }
    } else {
        None
    };
    let null_offsets = null_basis.transpose() * &stats.mean;
    Ok(ConstraintSet {
        dim,
        null_basis,
        retained_basis,
        null_offsets,
        spectrum: spec.values,
        threshold,
        gap_warning,
        declared: Vec::new(),
    })
}

pub const DEFAULT_NULL_THRESHOLD: f64 = DEFAULT_EIGEN_THRESHOLD;

/// Project every vector onto the retained (non-redundant) coordinates.
pub fn reduce_nonredundant(
    vectors: &[DisplacementVector],
    constraints: &ConstraintSet,
) -> Result<Vec<DVector<f64>>> {
    if let Some(v) = vectors.first() {
        if v.values.len() != constraints.dim {
            return Err(Error::precondition(format!(
                "constraint set dimension {} does not match data dimension {}",
                constraints.dim,
                v.values.len()
            )));
        }
    }
    Ok(vectors.iter().map(|v| constraints.reduce(&v.values)).collect())
}
