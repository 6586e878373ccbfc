//! Two-class discrimination from fitted density models.
//!
//! The classification signal is always a log-likelihood ratio: with one
//! model fitted per class, a vector's score is `log p_A(x) - log p_B(x)`,
//! and discrimination quality is summarized by the area under the ROC curve.
//! Scores from other pipelines can be imported and pushed through the same
//! ROC machinery.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::cubic::CubicModel;
use crate::dataset::DisplacementVector;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::grbm::GrbmModel;
use crate::linalg::symmetric_spectrum;
use crate::stats::welch_t;

/// Class label in a two-class experiment. Class A is the "positive" class
/// of the ROC sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    A,
    B,
}

// ---------------------------------------------------------------------------
// Train/test splitting

#[derive(Debug, Clone)]
pub struct Split {
    pub train_a: Vec<DisplacementVector>,
    pub train_b: Vec<DisplacementVector>,
    pub test_a: Vec<DisplacementVector>,
    pub test_b: Vec<DisplacementVector>,
    pub train_subjects_a: Vec<u32>,
    pub train_subjects_b: Vec<u32>,
}

fn split_one_class(
    vectors: &[DisplacementVector],
    train_fraction: f64,
    rng: &mut ChaCha8Rng,
    label: &str,
) -> Result<(Vec<DisplacementVector>, Vec<DisplacementVector>, Vec<u32>)> {
    let mut groups: BTreeMap<u32, Vec<&DisplacementVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry(v.subject).or_default().push(v);
    }
    if groups.len() < 2 {
        return Err(Error::precondition(format!(
            "class {label} has {} subject(s); subject-level splitting needs at least 2",
            groups.len()
        )));
    }
    let mut subjects: Vec<u32> = groups.keys().cloned().collect();
    subjects.shuffle(rng);
    let n_train = ((train_fraction * subjects.len() as f64).round() as usize)
        .clamp(1, subjects.len() - 1);
    let train_ids: Vec<u32> = subjects[..n_train].to_vec();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (id, group) in &groups {
        let dst = if train_ids.contains(id) { &mut train } else { &mut test };
        dst.extend(group.iter().map(|v| (*v).clone()));
    }
    Ok((train, test, train_ids))
}

/// Split both classes into train and test sets at the subject level, so no
/// subject contributes vectors to both sides. The fraction applies to
/// subjects, not vectors, and at least one subject lands on each side.
pub fn split_by_subject(
    class_a: &[DisplacementVector],
    class_b: &[DisplacementVector],
    train_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::precondition(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1, \
             so both train and test stay populated"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_a, test_a, train_subjects_a) =
        split_one_class(class_a, train_fraction, &mut rng, "A")?;
    let (train_b, test_b, train_subjects_b) =
        split_one_class(class_b, train_fraction, &mut rng, "B")?;
    Ok(Split { train_a, train_b, test_a, test_b, train_subjects_a, train_subjects_b })
}

// ---------------------------------------------------------------------------
// Likelihood-ratio scoring

/// A fitted density model usable as one side of a likelihood ratio.
#[derive(Clone, Copy)]
pub enum ScoringModel<'a> {
    Gaussian(&'a GaussianModel),
    Cubic(&'a CubicModel),
    Grbm(&'a GrbmModel),
}

impl<'a> ScoringModel<'a> {
    pub fn family_tag(&self) -> &'static str {
        match self {
            ScoringModel::Gaussian(m) => m.variant.tag(),
            ScoringModel::Cubic(_) => "maxent3",
            ScoringModel::Grbm(_) => "grbm",
        }
    }

    pub fn coordinate_key(&self) -> Option<u64> {
        match self {
            ScoringModel::Gaussian(m) => m.coordinate_key,
            ScoringModel::Cubic(m) => m.coordinate_key,
            ScoringModel::Grbm(m) => m.coordinate_key,
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            ScoringModel::Gaussian(m) => m.log_density(x),
            ScoringModel::Cubic(m) => m.log_density(x),
            ScoringModel::Grbm(m) => m.log_density(x),
        }
    }
}

/// Log-likelihood-ratio scores `log p_A(x) - log p_B(x)`. The two models
/// must come from the same family and have been fitted in the same
/// coordinate system; a ratio across families or coordinate conventions is
/// meaningless and is refused.
pub fn score_vectors(
    model_a: &ScoringModel,
    model_b: &ScoringModel,
    xs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    if model_a.family_tag() != model_b.family_tag() {
        return Err(Error::precondition(format!(
            "cannot form a likelihood ratio across families {:?} and {:?}",
            model_a.family_tag(),
            model_b.family_tag()
        )));
    }
    match (model_a.coordinate_key(), model_b.coordinate_key()) {
        (Some(a), Some(b)) if a == b => {}
        (None, None) => {}
        _ => {
            return Err(Error::precondition(
                "models were fitted in different coordinate systems (coordinate keys disagree)",
            ))
        }
    }
    xs.iter()
        .map(|x| Ok(model_a.log_density(x)? - model_b.log_density(x)?))
        .collect()
}

// ---------------------------------------------------------------------------
// ROC curves

/// ROC curve from a threshold sweep. Tied scores move together, so the
/// curve contains one point per distinct score value plus the origin, and
/// its area equals the tie-adjusted pairwise ranking probability.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Decision threshold producing each point; the origin gets +infinity.
    pub thresholds: Vec<f64>,
    pub auroc: f64,
    /// Best achievable accuracy over all thresholds, including the trivial
    /// all-A and all-B classifiers.
    pub max_accuracy: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Sweep a decision threshold over the pooled scores, classifying as A when
/// `score >= threshold`.
pub fn roc_from_scores(scores_a: &[f64], scores_b: &[f64]) -> Result<RocCurve> {
    if scores_a.is_empty() || scores_b.is_empty() {
        return Err(Error::precondition("ROC needs scores from both classes"));
    }
    if scores_a.iter().chain(scores_b).any(|s| !s.is_finite()) {
        return Err(Error::numerical("non-finite score in ROC input"));
    }
    let n_a = scores_a.len();
    let n_b = scores_b.len();
    let mut pooled: Vec<(f64, bool)> = scores_a
        .iter()
        .map(|&s| (s, true))
        .chain(scores_b.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut cum_a, mut cum_b) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let v = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == v {
            if pooled[i].1 {
                cum_a += 1;
            } else {
                cum_b += 1;
            }
            i += 1;
        }
        points.push((cum_b as f64 / n_b as f64, cum_a as f64 / n_a as f64));
        thresholds.push(v);
    }

    // Trapezoid area with compensated summation; increments are tiny and
    // many, and the pairwise cross-check is held to 1e-12.
    let mut area = 0.0f64;
    let mut comp = 0.0f64;
    for w in points.windows(2) {
        let term = (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
        let t = area + term;
        comp += if area.abs() >= term.abs() { (area - t) + term } else { (term - t) + area };
        area = t;
    }
    let auroc = area + comp;

    let total = (n_a + n_b) as f64;
    let max_accuracy = points
        .iter()
        .map(|&(fpr, tpr)| (tpr * n_a as f64 + (1.0 - fpr) * n_b as f64) / total)
        .fold(f64::MIN, f64::max);

    Ok(RocCurve { points, thresholds, auroc, max_accuracy, n_a, n_b })
}

/// Direct pairwise ranking probability P(s_A > s_B) + P(s_A = s_B)/2,
/// counted over every (A, B) pair. Quadratic but exact; the sweep in
/// `roc_from_scores` must agree with this number.
pub fn pairwise_auroc(scores_a: &[f64], scores_b: &[f64]) -> Result<f64> {
    if scores_a.is_empty() || scores_b.is_empty() {
        return Err(Error::precondition("pairwise ranking needs both classes"));
    }
    let mut gt = 0u64;
    let mut eq = 0u64;
    for &a in scores_a {
        for &b in scores_b {
            if a > b {
                gt += 1;
            } else if a == b {
                eq += 1;
            }
        }
    }
    Ok((gt as f64 + 0.5 * eq as f64) / (scores_a.len() as f64 * scores_b.len() as f64))
}

/// Verify that strictly increasing score transforms leave the ROC curve
/// bit-identical, as they must for a rank-based construction.
pub fn check_monotone_invariance(scores_a: &[f64], scores_b: &[f64]) -> Result<bool> {
    let reference = roc_from_scores(scores_a, scores_b)?;
    let transforms: [fn(f64) -> f64; 2] = [|s| 2.0 * s + 1.0, |s| s / 4.0 - 3.0];
    for f in transforms {
        let ta: Vec<f64> = scores_a.iter().map(|&s| f(s)).collect();
        let tb: Vec<f64> = scores_b.iter().map(|&s| f(s)).collect();
        let got = roc_from_scores(&ta, &tb)?;
        if got.auroc.to_bits() != reference.auroc.to_bits()
            || got.points.len() != reference.points.len()
            || got
                .points
                .iter()
                .zip(&reference.points)
                .any(|(p, q)| p.0.to_bits() != q.0.to_bits() || p.1.to_bits() != q.1.to_bits())
        {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Principal-component t-test baseline

/// Reference classifier that does not fit a density: principal components
/// of the pooled training set, each weighted by the Welch t statistic of
/// the class separation along it.
#[derive(Debug, Clone)]
pub struct PcTtestBaseline {
    pub mean: DVector<f64>,
    /// Columns: retained principal directions.
    pub components: DMatrix<f64>,
    /// Welch t of A vs B along each retained component.
    pub weights: DVector<f64>,
    pub dropped: usize,
    pub notes: Vec<String>,
}

pub fn fit_pc_ttest(
    train_a: &[DVector<f64>],
    train_b: &[DVector<f64>],
    eigen_threshold: f64,
) -> Result<PcTtestBaseline> {
    if train_a.len() < 2 || train_b.len() < 2 {
        return Err(Error::precondition("baseline needs at least 2 training vectors per class"));
    }
    let dim = train_a[0].len();
    if train_a.iter().chain(train_b).any(|x| x.len() != dim) {
        return Err(Error::schema("training vectors have inconsistent dimension"));
    }
    let n = (train_a.len() + train_b.len()) as f64;
    let mut mean = DVector::zeros(dim);
    for x in train_a.iter().chain(train_b) {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in train_a.iter().chain(train_b) {
        let d = x - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= n;

    let spectrum = symmetric_spectrum(&cov)?;
    let retained = spectrum.retained_indices(eigen_threshold);
    let mut notes = Vec::new();
    let mut kept_cols: Vec<usize> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &k in &retained {
        let e = spectrum.vectors.column(k);
        let proj =
            |xs: &[DVector<f64>]| xs.iter().map(|x| e.dot(&(x - &mean))).collect::<Vec<f64>>();
        match welch_t(&proj(train_a), &proj(train_b)) {
            Ok(t) => {
                kept_cols.push(k);
                weights.push(t);
            }
            Err(_) => notes.push(format!(
                "component {k} dropped: degenerate within-class variance"
            )),
        }
    }
    let degenerate = dim - retained.len();
    if degenerate > 0 {
        notes.push(format!("{degenerate} component(s) below the eigenvalue threshold"));
    }
    if kept_cols.is_empty() {
        return Err(Error::numerical("no usable principal components"));
    }
    let mut components = DMatrix::zeros(dim, kept_cols.len());
    for (j, &k) in kept_cols.iter().enumerate() {
        components.set_column(j, &spectrum.vectors.column(k));
    }
    Ok(PcTtestBaseline {
        mean,
        components,
        weights: DVector::from_vec(weights),
        dropped: dim - kept_cols.len(),
        notes,
    })
}

impl PcTtestBaseline {
    /// Signed, t-weighted sum of component projections; higher means more
    /// A-like, matching the likelihood-ratio sign convention.
    pub fn score(&self, x: &DVector<f64>) -> f64 {
        let proj = self.components.transpose() * (x - &self.mean);
        self.weights.dot(&proj)
    }
}

// ---------------------------------------------------------------------------
// External score import

/// Parse scores produced by an outside pipeline. The file must be a CSV
/// with header `vector_id,score,true_class`, where `vector_id` is the
/// 0-based index of a test vector in export order and `true_class` is `A`
/// or `B`. Every test vector must appear exactly once.
pub fn import_external_scores(
    text: &str,
    expected: &[Class],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(format!("score file header: {e}")))?
        .clone();
    let expected_header = ["vector_id", "score", "true_class"];
    if headers.iter().collect::<Vec<_>>() != expected_header {
        return Err(Error::schema(format!(
            "score file header must be {:?}, got {:?}",
            expected_header.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut scores: Vec<Option<f64>> = vec![None; expected.len()];
    let mut n_rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::parse_at(row, format!("score file: {e}")))?;
        if record.len() != 3 {
            return Err(Error::parse_at(row, format!("expected 3 fields, got {}", record.len())));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| Error::parse_at(row, format!("bad vector_id {:?}", &record[0])))?;
        if id >= expected.len() {
            return Err(Error::parse_at(
                row,
                format!("unknown vector_id {id}; expected 0..{}", expected.len()),
            ));
        }
        if scores[id].is_some() {
            return Err(Error::parse_at(row, format!("duplicate vector_id {id}")));
        }
        let score: f64 = record[1]
            .parse()
            .map_err(|_| Error::parse_at(row, format!("bad score {:?}", &record[1])))?;
        if !score.is_finite() {
            return Err(Error::parse_at(row, format!("non-finite score {score}")));
        }
        let class = match &record[2] {
            "A" => Class::A,
            "B" => Class::B,
            other => {
                return Err(Error::parse_at(row, format!("true_class must be A or B, got {other:?}")))
            }
        };
        if class != expected[id] {
            return Err(Error::parse_at(
                row,
                format!("true_class for vector {id} disagrees with the dataset"),
            ));
        }
        scores[id] = Some(score);
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::schema("score file has no data rows"));
    }
    let missing = scores.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        return Err(Error::schema(format!("score file is missing {missing} vector(s)")));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (s, c) in scores.into_iter().zip(expected) {
        match c {
            Class::A => a.push(s.unwrap()),
            Class::B => b.push(s.unwrap()),
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DisplacementVector;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn labeled(subject: u32, k: u32, values: &[f64]) -> DisplacementVector {
        DisplacementVector::new(subject, k, values.to_vec())
    }

    #[test]
    fn split_keeps_subjects_on_one_side() {
        let a: Vec<_> = (0..10)
            .flat_map(|s| (0..4).map(move |k| labeled(s, k, &[s as f64, k as f64])))
            .collect();
        let b: Vec<_> = (100..105)
            .flat_map(|s| (0..4).map(move |k| labeled(s, k, &[s as f64, k as f64])))
            .collect();
        let split = split_by_subject(&a, &b, 0.2, 7).unwrap();
        assert_eq!(split.train_subjects_a.len(), 2);
        assert_eq!(split.train_subjects_b.len(), 1);
        assert_eq!(split.train_a.len(), 8);
        assert_eq!(split.test_a.len(), 32);
        for v in &split.train_a {
            assert!(split.train_subjects_a.contains(&v.subject));
            assert!(!split.test_a.iter().any(|t| t.subject == v.subject));
        }
        // Deterministic in the seed.
        let again = split_by_subject(&a, &b, 0.2, 7).unwrap();
        assert_eq!(again.train_subjects_a, split.train_subjects_a);
    }

    #[test]
    fn degenerate_splits_are_refused() {
        let a = vec![labeled(1, 0, &[0.0]), labeled(1, 1, &[1.0])];
        let b = vec![labeled(2, 0, &[0.0]), labeled(3, 0, &[1.0])];
        assert!(split_by_subject(&a, &b, 0.5, 0).is_err(), "single-subject class");
        let a2 = vec![labeled(1, 0, &[0.0]), labeled(4, 0, &[1.0])];
        assert!(split_by_subject(&a2, &b, 1.0, 0).is_err(), "empty test side");
        assert!(split_by_subject(&a2, &b, 0.0, 0).is_err(), "empty train side");
    }

    #[test]
    fn roc_matches_hand_computed_example() {
        let roc = roc_from_scores(&[2.0, 3.0], &[1.0, 2.5]).unwrap();
        assert!((roc.auroc - 0.75).abs() < 1e-15);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!((roc.max_accuracy - 0.75).abs() < 1e-15);
        assert_eq!(roc.thresholds[0], f64::INFINITY);
    }

    #[test]
    fn tied_scores_move_together() {
        let a = [1.0, 1.0, 2.0];
        let b = [1.0, 0.0];
        let roc = roc_from_scores(&a, &b).unwrap();
        let direct = pairwise_auroc(&a, &b).unwrap();
        assert!((roc.auroc - direct).abs() < 1e-15);
        assert!((direct - 5.0 / 6.0).abs() < 1e-15);
        // One point per distinct pooled value plus the origin.
        assert_eq!(roc.points.len(), 4);
    }

    #[test]
    fn monotone_transforms_leave_the_curve_bit_identical() {
        let a = [0.3, -1.2, 0.3, 4.0, 2.2];
        let b = [-0.5, 0.3, 1.0, -2.0];
        assert!(check_monotone_invariance(&a, &b).unwrap());
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        assert!(roc_from_scores(&[f64::NAN], &[0.0]).is_err());
        assert!(roc_from_scores(&[], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn sweep_equals_pairwise_probability(
            a in prop::collection::vec(-3i32..=3, 1..40),
            b in prop::collection::vec(-3i32..=3, 1..40),
        ) {
            // Integer-valued scores force heavy ties.
            let sa: Vec<f64> = a.iter().map(|&v| v as f64 / 2.0).collect();
            let sb: Vec<f64> = b.iter().map(|&v| v as f64 / 2.0).collect();
            let sweep = roc_from_scores(&sa, &sb).unwrap();
            let direct = pairwise_auroc(&sa, &sb).unwrap();
            prop_assert!((sweep.auroc - direct).abs() < 1e-12);
        }

        #[test]
        fn swapping_classes_mirrors_the_area(
            a in prop::collection::vec(-10.0f64..10.0, 1..30),
            b in prop::collection::vec(-10.0f64..10.0, 1..30),
        ) {
            let fwd = roc_from_scores(&a, &b).unwrap();
            let rev = roc_from_scores(&b, &a).unwrap();
            prop_assert!((fwd.auroc + rev.auroc - 1.0).abs() < 1e-12);
        }

        #[test]
        fn max_accuracy_dominates_the_class_prior(
            a in prop::collection::vec(-5.0f64..5.0, 1..30),
            b in prop::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let roc = roc_from_scores(&a, &b).unwrap();
            let prior = a.len().max(b.len()) as f64 / (a.len() + b.len()) as f64;
            prop_assert!(roc.max_accuracy >= prior - 1e-12);
        }
    }

    #[test]
    fn scoring_refuses_mismatched_models() {
        use crate::dataset::{compute_bare_moments, detect_null_modes, BareMomentConfig, DEFAULT_NULL_THRESHOLD};
        use crate::gaussian::{fit_gaussian, fit_variant, GaussianFitConfig, GaussianVariant};

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vectors: Vec<DisplacementVector> = (0..200)
            .map(|i| {
                let v: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                DisplacementVector::new(i, 0, v)
            })
            .collect();
        let stats = compute_bare_moments(
            &vectors,
            &BareMomentConfig { order: 2, n_bootstrap: 0, seed: 0 },
        )
        .unwrap();
        let cs = detect_null_modes(&stats, DEFAULT_NULL_THRESHOLD).unwrap();
        let cfg = GaussianFitConfig::default();
        let full = fit_gaussian(&stats, &cs, &cfg).unwrap();
        let diag = fit_variant(&stats, &cs, GaussianVariant::FieldsOnly, &cfg).unwrap();

        let xs: Vec<DVector<f64>> = vectors.iter().take(5).map(|v| v.values.clone()).collect();
        let err = score_vectors(&ScoringModel::Gaussian(&full), &ScoringModel::Gaussian(&diag), &xs)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));

        let _ = diag;
        // Same family but different coordinate fingerprints.
        let mut full_b = full.clone();
        full_b.coordinate_key = Some(1);
        let mut full_c = full.clone();
        full_c.coordinate_key = Some(2);
        let err = score_vectors(
            &ScoringModel::Gaussian(&full_b),
            &ScoringModel::Gaussian(&full_c),
            &xs,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));

        // A keyed model cannot be compared against an unkeyed one.
        assert!(score_vectors(
            &ScoringModel::Gaussian(&full_b),
            &ScoringModel::Gaussian(&full),
            &xs
        )
        .is_err());

        // Matching keys pass, and the self-ratio vanishes.
        full_c.coordinate_key = Some(1);
        score_vectors(&ScoringModel::Gaussian(&full_b), &ScoringModel::Gaussian(&full_c), &xs)
            .unwrap();
        let ok = score_vectors(&ScoringModel::Gaussian(&full), &ScoringModel::Gaussian(&full), &xs)
            .unwrap();
        assert!(ok.iter().all(|s| s.abs() < 1e-12), "self-ratio is zero");
    }

    #[test]
    fn pc_ttest_matches_the_gaussian_discriminant_on_isotropic_shift() {
        // Isotropic classes separated in the mean: the optimal rule projects
        // onto the mean difference, and the t-weighted component sum must
        // reconstruct it.
        let dim = 4;
        let n = 1500;
        let shift = DVector::from_vec(vec![0.8, -0.4, 0.2, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut draw = |mu: &DVector<f64>| -> Vec<DVector<f64>> {
            (0..n)
                .map(|_| {
                    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)) + mu
                })
                .collect()
        };
        let zero = DVector::zeros(dim);
        let train_a = draw(&shift);
        let train_b = draw(&zero);
        let test_a = draw(&shift);
        let test_b = draw(&zero);

        let baseline = fit_pc_ttest(&train_a, &train_b, 1e-10).unwrap();
        let sa: Vec<f64> = test_a.iter().map(|x| baseline.score(x)).collect();
        let sb: Vec<f64> = test_b.iter().map(|x| baseline.score(x)).collect();
        let got = roc_from_scores(&sa, &sb).unwrap().auroc;

        // Oracle: project onto the true mean difference.
        let da: Vec<f64> = test_a.iter().map(|x| shift.dot(x)).collect();
        let db: Vec<f64> = test_b.iter().map(|x| shift.dot(x)).collect();
        let oracle = roc_from_scores(&da, &db).unwrap().auroc;
        assert!((got - oracle).abs() < 0.02, "baseline {got} vs oracle {oracle}");
        assert!(got > 0.6);
    }

    #[test]
    fn external_scores_round_trip_and_validate() {
        let expected = [Class::A, Class::B, Class::A];
        let good = "vector_id,score,true_class\n0,1.5,A\n2,-0.25,A\n1,0.5,B\n";
        let (a, b) = import_external_scores(good, &expected).unwrap();
        assert_eq!(a, vec![1.5, -0.25]);
        assert_eq!(b, vec![0.5]);

        let unknown = "vector_id,score,true_class\n0,1.0,A\n7,2.0,B\n1,0.0,B\n2,0.0,A\n";
        let err = import_external_scores(unknown, &expected).unwrap_err();
        match err {
            Error::Parse { row: Some(3), msg } => assert!(msg.contains("unknown vector_id 7")),
            other => panic!("expected row-3 parse error, got {other:?}"),
        }

        let duplicate = "vector_id,score,true_class\n0,1.0,A\n0,2.0,A\n";
        let err = import_external_scores(duplicate, &expected).unwrap_err();
        assert!(matches!(err, Error::Parse { row: Some(3), .. }));

        let wrong_class = "vector_id,score,true_class\n0,1.0,B\n";
        let err = import_external_scores(wrong_class, &expected).unwrap_err();
        assert!(matches!(err, Error::Parse { row: Some(2), .. }));

        let missing = "vector_id,score,true_class\n0,1.0,A\n";
        assert!(import_external_scores(missing, &expected).is_err());

        let empty = "vector_id,score,true_class\n";
        assert!(import_external_scores(empty, &expected).is_err());
    }
}
