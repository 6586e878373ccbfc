//! Synthetic data generation from planted models.
//!
//! A planted model lives in the reduced, non-redundant coordinate space; an
//! attached constraint set embeds every draw back into ambient coordinates,
//! so the generated datasets carry exactly the null-mode structure that the
//! fitting pipeline is expected to rediscover. Subjects add an optional
//! random mean offset, giving the inter-subject error estimators something
//! real to measure.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cubic::{sample_cubic, CubicModel, McmcConfig};
use crate::dataset::{ConstraintSet, Dataset, DisplacementVector, LinearConstraint, Tensor3};
use crate::error::{Error, Result};
use crate::grbm::GrbmModel;

/// Sweeps discarded before collecting per-subject cubic draws.
const CUBIC_BURN_IN: usize = 400;
/// Keep every third sweep of a cubic chain.
const CUBIC_THIN: usize = 3;
/// Boundary mass above which a planted cubic model is treated as unconfined.
const CUBIC_PILOT_LIMIT: f64 = 0.02;
/// Gibbs sweeps discarded before collecting per-subject machine draws.
const GRBM_BURN_IN: usize = 200;
/// RNG stream block reserved for subject offset draws.
const OFFSET_STREAM: u64 = 1 << 32;
/// Salt for deriving per-subject seeds where a stream is not available.
const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Distribution the reduced coordinates are drawn from.
#[derive(Debug, Clone)]
pub enum PlantedFamily {
    /// Exact multivariate normal via Cholesky factorization.
    Gaussian { mean: DVector<f64>, covariance: DMatrix<f64> },
    /// Metropolis draws from a cubic energy, one chain per subject.
    Cubic(CubicModel),
    /// Gibbs draws from a binary-hidden machine, one chain per subject.
    Grbm(GrbmModel),
}

impl PlantedFamily {
    pub fn dim(&self) -> usize {
        match self {
            PlantedFamily::Gaussian { mean, .. } => mean.len(),
            PlantedFamily::Cubic(m) => m.dim,
            PlantedFamily::Grbm(m) => m.n_visible(),
        }
    }
}

/// How draws are grouped into subjects.
#[derive(Debug, Clone, Copy)]
pub struct SubjectStructure {
    pub n_subjects: usize,
    pub per_subject: usize,
    /// Standard deviation of the per-subject mean offset, in reduced
    /// coordinates. Zero gives i.i.d. draws.
    pub offset_scale: f64,
    /// Subject ids start here, so two generated cohorts can stay disjoint.
    pub first_subject: u32,
}

impl SubjectStructure {
    pub fn new(n_subjects: usize, per_subject: usize) -> Self {
        SubjectStructure { n_subjects, per_subject, offset_scale: 0.0, first_subject: 0 }
    }

    pub fn with_offset_scale(mut self, scale: f64) -> Self {
        self.offset_scale = scale;
        self
    }
}

/// Which class a generated cohort belongs to, for two-class experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTag {
    A,
    B,
    Unlabeled,
}

#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub family: PlantedFamily,
    pub constraints: ConstraintSet,
    pub class_tag: ClassTag,
    pub subjects: SubjectStructure,
}

fn subject_offset(rank: usize, scale: f64, seed: u64, subject_idx: u64) -> DVector<f64> {
    if scale == 0.0 {
        return DVector::zeros(rank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(OFFSET_STREAM + subject_idx);
    DVector::from_fn(rank, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * scale
    })
}

/// Draw the complete cohort described by `model`. Vectors come back in
/// subject order and are deterministic in `seed` regardless of thread
/// scheduling.
pub fn generate(model: &PlantedModel, seed: u64) -> Result<Vec<DisplacementVector>> {
    let r = model.constraints.rank();
    if model.family.dim() != r {
        return Err(Error::precondition(format!(
            "planted family has dimension {} but the constraint set retains {r}",
            model.family.dim()
        )));
    }
    let s = &model.subjects;
    if s.n_subjects == 0 || s.per_subject == 0 {
        return Err(Error::precondition("subject structure must be non-empty"));
    }

    // Family-specific preparation that should happen (and fail) once.
    enum Prepared {
        Gaussian { mean: DVector<f64>, chol: DMatrix<f64> },
        Cubic(CubicModel),
        Grbm(GrbmModel),
    }
    let prepared = match &model.family {
        PlantedFamily::Gaussian { mean, covariance } => {
            if covariance.nrows() != r || covariance.ncols() != r {
                return Err(Error::precondition("covariance shape disagrees with mean"));
            }
            let chol = nalgebra::Cholesky::new(covariance.clone())
                .ok_or_else(|| Error::precondition("planted covariance is not positive definite"))?;
            Prepared::Gaussian { mean: mean.clone(), chol: chol.l() }
        }
        PlantedFamily::Cubic(m) => {
            // Pilot chain: refuse distributions that pile up against the
            // sampling box instead of decaying inside it.
            let pilot = sample_cubic(
                m,
                &McmcConfig {
                    n_chains: 1,
                    burn_in: CUBIC_BURN_IN,
                    n_sweeps: 600,
                    thin: 1,
                    seed: seed ^ SEED_MIX,
                    stream_offset: 0,
                    init_sigma: None,
                },
            )?;
            if pilot.boundary_fraction > CUBIC_PILOT_LIMIT {
                return Err(Error::precondition(format!(
                    "planted cubic model is not confined: {:.1}% of pilot draws sit at the box boundary",
                    100.0 * pilot.boundary_fraction
                )));
            }
            Prepared::Cubic(m.clone())
        }
        PlantedFamily::Grbm(m) => Prepared::Grbm(m.clone()),
    };

    let cohorts: Result<Vec<Vec<DisplacementVector>>> = (0..s.n_subjects)
        .into_par_iter()
        .map(|idx| {
            let offset = subject_offset(r, s.offset_scale, seed, idx as u64);
            let draws: Vec<DVector<f64>> = match &prepared {
                Prepared::Gaussian { mean, chol } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(idx as u64);
                    (0..s.per_subject)
                        .map(|_| {
                            let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
                            mean + chol * z
                        })
                        .collect()
                }
                Prepared::Cubic(m) => {
                    let run = sample_cubic(
                        m,
                        &McmcConfig {
                            n_chains: 1,
                            burn_in: CUBIC_BURN_IN,
                            n_sweeps: s.per_subject * CUBIC_THIN,
                            thin: CUBIC_THIN,
                            seed,
                            stream_offset: idx as u64,
                            init_sigma: None,
                        },
                    )?;
                    run.samples
                }
                Prepared::Grbm(m) => {
                    let subject_seed = seed ^ SEED_MIX.wrapping_mul(idx as u64 + 1);
                    m.sample(s.per_subject, GRBM_BURN_IN, subject_seed)
                }
            };
            let subject = s.first_subject + idx as u32;
            Ok(draws
                .into_iter()
                .enumerate()
                .map(|(k, x)| DisplacementVector {
                    subject,
                    within_index: k as u32,
                    values: model.constraints.embed(&(x + &offset)),
                })
                .collect())
        })
        .collect();
    Ok(cohorts?.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Two-class cohorts

/// How the two classes differ. Everything else about the cohorts is shared.
#[derive(Debug, Clone, Copy)]
pub enum TwoClassConfig {
    /// Classes differ only in their mean: class B is shifted by
    /// `shift / sqrt(r)` along every reduced coordinate.
    Mean { shift: f64 },
    /// Classes differ only in one pair correlation: class B couples reduced
    /// coordinates 0 and 1 with correlation `rho`.
    Pairwise { rho: f64 },
    /// Classes differ only in a third-order moment: the cubic coupling of
    /// reduced coordinates 0, 1, 2 is `+q` for class A and `-q` for class B,
    /// which leaves means and covariances identical by symmetry.
    ThirdOrder { q: f64 },
}

/// Build a matched pair of planted models that share one random orthonormal
/// embedding (so both classes obey the same synthetic constraints) and
/// differ only as `config` describes. Class B subjects are numbered after
/// class A's.
pub fn make_two_class(
    config: TwoClassConfig,
    ambient_dim: usize,
    n_null: usize,
    subjects: SubjectStructure,
    seed: u64,
) -> Result<(PlantedModel, PlantedModel)> {
    if n_null >= ambient_dim {
        return Err(Error::precondition("null space must leave retained coordinates"));
    }
    let r = ambient_dim - n_null;
    let constraints = random_embedding(ambient_dim, n_null, seed)?;

    let (family_a, family_b) = match config {
        TwoClassConfig::Mean { shift } => {
            let eye = DMatrix::identity(r, r);
            let a = PlantedFamily::Gaussian { mean: DVector::zeros(r), covariance: eye.clone() };
            let per_coord = shift / (r as f64).sqrt();
            let b = PlantedFamily::Gaussian {
                mean: DVector::from_element(r, per_coord),
                covariance: eye,
            };
            (a, b)
        }
        TwoClassConfig::Pairwise { rho } => {
            if r < 2 {
                return Err(Error::precondition("pairwise contrast needs rank >= 2"));
            }
            if !(-1.0..1.0).contains(&rho) || rho.abs() >= 1.0 {
                return Err(Error::precondition("correlation must lie strictly inside (-1, 1)"));
            }
            let eye = DMatrix::identity(r, r);
            let mut coupled = eye.clone();
            coupled[(0, 1)] = rho;
            coupled[(1, 0)] = rho;
            let a = PlantedFamily::Gaussian { mean: DVector::zeros(r), covariance: eye };
            let b = PlantedFamily::Gaussian { mean: DVector::zeros(r), covariance: coupled };
            (a, b)
        }
        TwoClassConfig::ThirdOrder { q } => {
            if r < 3 {
                return Err(Error::precondition("third-order contrast needs rank >= 3"));
            }
            // Inside a 5-sigma box the cubic term can overwhelm the
            // quadratic one; keep the coupling well below that point.
            if q.abs() >= 0.3 {
                return Err(Error::precondition(
                    "third-order coupling at or above 0.3 is not confined in the sampling box",
                ));
            }
            let build = |sign: f64| -> Result<PlantedFamily> {
                let mut qt = Tensor3::zeros(r);
                qt.set_sym(0, 1, 2, sign * q);
                let model = CubicModel::new(
                    DVector::zeros(r),
                    DMatrix::identity(r, r),
                    qt,
                    DVector::from_element(r, 5.0),
                )?;
                Ok(PlantedFamily::Cubic(model))
            };
            (build(1.0)?, build(-1.0)?)
        }
    };

    let model_a = PlantedModel {
        family: family_a,
        constraints: constraints.clone(),
        class_tag: ClassTag::A,
        subjects,
    };
    let mut subjects_b = subjects;
    subjects_b.first_subject = subjects.first_subject + subjects.n_subjects as u32;
    let model_b = PlantedModel {
        family: family_b,
        constraints,
        class_tag: ClassTag::B,
        subjects: subjects_b,
    };
    Ok((model_a, model_b))
}

/// Random orthonormal split of ambient space into `n_null` frozen directions
/// and the retained rest. Offsets are zero, so the null modes read as
/// homogeneous linear constraints.
fn random_embedding(dim: usize, n_null: usize, seed: u64) -> Result<ConstraintSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SEED_MIX.rotate_left(17));
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let q = qr.q();
    let mut null_basis = DMatrix::zeros(dim, n_null);
    for k in 0..n_null {
        null_basis.set_column(k, &q.column(k));
    }
    let r = dim - n_null;
    let mut retained_basis = DMatrix::zeros(r, dim);
    for k in 0..r {
        retained_basis.set_row(k, &q.column(n_null + k).transpose());
    }
    Ok(ConstraintSet {
        dim,
        null_basis,
        retained_basis,
        null_offsets: DVector::zeros(n_null),
        spectrum: Vec::new(),
        threshold: crate::linalg::DEFAULT_EIGEN_THRESHOLD,
        gap_warning: None,
        declared: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Landmark fixture

/// A complete synthetic landmark study: 8 landmarks, 6 declared constraints,
/// smooth spatially correlated displacements, and a 95-subject cohort with
/// 28 realizations each.
pub struct LandmarkFixture {
    pub model: PlantedModel,
    pub positions: Vec<[f64; 2]>,
}

pub const FIXTURE_SUBJECTS: usize = 95;
pub const FIXTURE_PER_SUBJECT: usize = 28;

/// Resting landmark positions, in units of facial height with the origin at
/// landmark 4.
fn fixture_positions() -> Vec<[f64; 2]> {
    vec![
        [-0.30, 0.28],
        [-0.12, 0.26],
        [0.12, 0.26],
        [-0.45, 0.05],
        [0.00, 0.00],
        [0.00, -0.22],
        [-0.18, -0.40],
        [0.45, 0.05],
    ]
}

fn fixture_constraints() -> Vec<LinearConstraint> {
    let n = 8;
    let make = |label: &str, terms: &[(usize, f64)]| {
        let mut coeffs = vec![0.0; 2 * n];
        for &(i, w) in terms {
            coeffs[i] = w;
        }
        LinearConstraint { coeffs, value: 0.0, label: label.into() }
    };
    let x = |i: usize| i;
    let y = |i: usize| n + i;
    vec![
        make("anchor-x4", &[(x(4), 1.0)]),
        make("tie-y4-y5", &[(y(4), 1.0), (y(5), -1.0)]),
        make("tie-y7-y3", &[(y(7), 1.0), (y(3), -1.0)]),
        make("tie-y0-y1", &[(y(0), 1.0), (y(1), -1.0)]),
        make("tie-y0-y2", &[(y(0), 1.0), (y(2), -1.0)]),
        make("brow-x-balance", &[(x(1), 1.0), (x(2), 1.0), (x(0), -2.0)]),
    ]
}

/// Exponential-decay spatial kernel between landmark rest positions; always
/// positive definite for distinct points.
fn fixture_ambient_covariance(positions: &[[f64; 2]]) -> DMatrix<f64> {
    let n = positions.len();
    let length_scale = 0.4;
    let xy_coupling = 0.3;
    let scale = 1.2e-3;
    let k = DMatrix::from_fn(n, n, |i, j| {
        let dx = positions[i][0] - positions[j][0];
        let dy = positions[i][1] - positions[j][1];
        (-(dx * dx + dy * dy).sqrt() / length_scale).exp()
    });
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&k);
    c.view_mut((n, n), (n, n)).copy_from(&k);
    c.view_mut((0, n), (n, n)).copy_from(&(&k * xy_coupling));
    c.view_mut((n, 0), (n, n)).copy_from(&(&k * xy_coupling));
    c * scale
}

pub fn landmark_fixture() -> Result<LandmarkFixture> {
    let positions = fixture_positions();
    let dim = 2 * positions.len();
    let constraints = ConstraintSet::from_declared(dim, fixture_constraints())?;
    let ambient = fixture_ambient_covariance(&positions);
    // Reducing through the orthonormal retained basis both projects out the
    // constrained directions and expresses the rest in non-redundant
    // coordinates, so the planted Gaussian respects every declared tie.
    let reduced_cov = &constraints.retained_basis * ambient * constraints.retained_basis.transpose();
    let r = constraints.rank();
    let model = PlantedModel {
        family: PlantedFamily::Gaussian { mean: DVector::zeros(r), covariance: reduced_cov },
        constraints,
        class_tag: ClassTag::Unlabeled,
        subjects: SubjectStructure::new(FIXTURE_SUBJECTS, FIXTURE_PER_SUBJECT)
            .with_offset_scale(0.010),
    };
    Ok(LandmarkFixture { model, positions })
}

impl LandmarkFixture {
    /// Generate the cohort and package it with landmark metadata.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        let vectors = generate(&self.model, seed)?;
        Ok(Dataset {
            vectors,
            n_landmarks: self.positions.len(),
            units: "facial-height".into(),
            landmark_means: Some(self.positions.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        compute_bare_moments, compute_intersubject_moments, detect_null_modes, BareMomentConfig,
        InterSubjectConfig, DEFAULT_NULL_THRESHOLD,
    };

    fn reduced(model: &PlantedModel, vectors: &[DisplacementVector]) -> Vec<DVector<f64>> {
        vectors.iter().map(|v| model.constraints.reduce(&v.values)).collect()
    }

    #[test]
    fn gaussian_cohort_matches_planted_moments() {
        let r = 3;
        let mut cov = DMatrix::identity(r, r);
        cov[(0, 1)] = 0.4;
        cov[(1, 0)] = 0.4;
        let model = PlantedModel {
            family: PlantedFamily::Gaussian {
                mean: DVector::from_vec(vec![0.5, -0.25, 0.0]),
                covariance: cov.clone(),
            },
            constraints: ConstraintSet::unconstrained(r),
            class_tag: ClassTag::Unlabeled,
            subjects: SubjectStructure::new(20, 400),
        };
        let vectors = generate(&model, 7).unwrap();
        assert_eq!(vectors.len(), 8000);
        let xs = reduced(&model, &vectors);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<DVector<f64>>() / n;
        assert!((mean[0] - 0.5).abs() < 0.05, "mean[0] = {}", mean[0]);
        assert!((mean[1] + 0.25).abs() < 0.05);
        let mut c = DMatrix::zeros(r, r);
        for x in &xs {
            let d = x - &mean;
            c += &d * d.transpose();
        }
        c /= n;
        assert!((&c - &cov).abs().max() < 0.06, "cov error {}", (&c - &cov).abs().max());
    }

    #[test]
    fn subject_offsets_create_inter_subject_variability() {
        let r = 2;
        let base = PlantedModel {
            family: PlantedFamily::Gaussian {
                mean: DVector::zeros(r),
                covariance: DMatrix::identity(r, r),
            },
            constraints: ConstraintSet::unconstrained(r),
            class_tag: ClassTag::Unlabeled,
            subjects: SubjectStructure::new(30, 40),
        };
        let mut shifted = base.clone();
        shifted.subjects.offset_scale = 2.0;

        let sigma_of = |model: &PlantedModel| {
            let vectors = generate(model, 3).unwrap();
            let stats = compute_intersubject_moments(
                &vectors,
                &InterSubjectConfig { n_realizations: 200, seed: 5 },
            )
            .unwrap();
            stats.sigma_corr2
        };
        let quiet = sigma_of(&base);
        let noisy = sigma_of(&shifted);
        // Subject offsets inflate the subject-to-subject scatter of second
        // moments; compare the largest diagonal uncertainty.
        let q = (0..r).map(|i| quiet[(i, i)]).fold(0.0f64, f64::max);
        let z = (0..r).map(|i| noisy[(i, i)]).fold(0.0f64, f64::max);
        assert!(
            z > 3.0 * q,
            "offsets should inflate inter-subject sigma: {z} vs {q}"
        );
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let fixture_model = PlantedModel {
            family: PlantedFamily::Gaussian {
                mean: DVector::zeros(2),
                covariance: DMatrix::identity(2, 2),
            },
            constraints: ConstraintSet::unconstrained(2),
            class_tag: ClassTag::Unlabeled,
            subjects: SubjectStructure::new(6, 5).with_offset_scale(0.3),
        };
        let a = generate(&fixture_model, 42).unwrap();
        let b = generate(&fixture_model, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.subject, y.subject);
            assert_eq!(x.within_index, y.within_index);
            assert_eq!(x.values, y.values);
        }
        let c = generate(&fixture_model, 43).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.values != y.values));
    }

    #[test]
    fn mean_contrast_shifts_class_b() {
        let (ma, mb) =
            make_two_class(TwoClassConfig::Mean { shift: 0.5 }, 6, 2, SubjectStructure::new(10, 300), 9)
                .unwrap();
        assert_eq!(ma.class_tag, ClassTag::A);
        assert_eq!(mb.class_tag, ClassTag::B);
        let va = generate(&ma, 100).unwrap();
        let vb = generate(&mb, 101).unwrap();
        // Subject ids stay disjoint between the cohorts.
        let max_a = va.iter().map(|v| v.subject).max().unwrap();
        let min_b = vb.iter().map(|v| v.subject).min().unwrap();
        assert!(min_b > max_a);
        let mean_of = |m: &PlantedModel, vs: &[DisplacementVector]| {
            let xs = reduced(m, vs);
            xs.iter().sum::<DVector<f64>>() / xs.len() as f64
        };
        let gap = mean_of(&mb, &vb) - mean_of(&ma, &va);
        assert!((gap.norm() - 0.5).abs() < 0.05, "mean gap {}", gap.norm());
    }

    #[test]
    fn third_order_contrast_flips_the_triple_moment_only() {
        let subjects = SubjectStructure::new(8, 1500);
        let (ma, mb) =
            make_two_class(TwoClassConfig::ThirdOrder { q: 0.25 }, 5, 1, subjects, 21).unwrap();
        let va = generate(&ma, 300).unwrap();
        let vb = generate(&mb, 301).unwrap();
        let stats = |m: &PlantedModel, vs: &[DisplacementVector]| {
            let xs = reduced(m, vs);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<DVector<f64>>() / n;
            let triple = xs.iter().map(|x| x[0] * x[1] * x[2]).sum::<f64>() / n;
            let var0 = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / n;
            (mean, triple, var0)
        };
        let (mean_a, triple_a, var_a) = stats(&ma, &va);
        let (mean_b, triple_b, var_b) = stats(&mb, &vb);
        // Energies at +q and -q are mirror images, so first and second
        // moments agree; the signed triple moment is what separates them.
        assert!(mean_a.amax() < 0.08 && mean_b.amax() < 0.08);
        assert!((var_a - var_b).abs() < 0.1);
        assert!(triple_a < -0.12, "class A triple moment {triple_a}");
        assert!(triple_b > 0.12, "class B triple moment {triple_b}");
    }

    #[test]
    fn overstrong_third_order_coupling_is_refused() {
        let err = make_two_class(
            TwoClassConfig::ThirdOrder { q: 0.35 },
            5,
            1,
            SubjectStructure::new(2, 10),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn unconfined_cubic_model_fails_the_pilot_run() {
        let r = 2;
        let mut q = Tensor3::zeros(r);
        q.set_sym(0, 0, 0, -3.0);
        let cubic = CubicModel {
            dim: r,
            h: DVector::zeros(r),
            j: DMatrix::identity(r, r),
            q,
            box_half_width: DVector::from_element(r, 8.0),
            log_norm: 0.0,
            coordinate_key: None,
        };
        let model = PlantedModel {
            family: PlantedFamily::Cubic(cubic),
            constraints: ConstraintSet::unconstrained(r),
            class_tag: ClassTag::Unlabeled,
            subjects: SubjectStructure::new(3, 50),
        };
        let err = generate(&model, 5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "got {err:?}");
    }

    #[test]
    fn landmark_fixture_has_the_advertised_shape() {
        let fixture = landmark_fixture().unwrap();
        assert_eq!(fixture.model.constraints.n_null(), 6);
        assert_eq!(fixture.model.constraints.rank(), 10);
        let dataset = fixture.generate(12).unwrap();
        assert_eq!(dataset.vectors.len(), FIXTURE_SUBJECTS * FIXTURE_PER_SUBJECT);
        assert_eq!(dataset.n_landmarks, 8);
        // Every declared constraint holds to numerical precision.
        fixture.model.constraints.verify_declared(&dataset.vectors, 1e-10).unwrap();
    }

    #[test]
    fn landmark_fixture_null_modes_are_rediscovered_from_data() {
        let fixture = landmark_fixture().unwrap();
        let dataset = fixture.generate(12).unwrap();
        let stats = compute_bare_moments(
            &dataset.vectors,
            &BareMomentConfig { order: 2, n_bootstrap: 0, seed: 0 },
        )
        .unwrap();
        let detected = detect_null_modes(&stats, DEFAULT_NULL_THRESHOLD).unwrap();
        assert_eq!(detected.n_null(), 6);
        assert_eq!(detected.rank(), 10);
        // The detected null space spans the declared one: projecting the
        // declared constraint rows onto it loses nothing.
        for c in &fixture.model.constraints.declared {
            let v = DVector::from_vec(c.coeffs.clone()).normalize();
            let p = detected.null_basis.transpose() * &v;
            assert!((p.norm() - 1.0).abs() < 1e-6, "constraint {} not in null span", c.label);
        }
    }
}
