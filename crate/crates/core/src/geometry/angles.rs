//! Displacement-angle histograms and their consistency tests.
//!
//! The angle of a landmark's displacement is folded into (-pi/2, pi/2] by
//! default, treating opposite directions as the same axis; a full-circle
//! variant is available for callers that care about orientation. Model
//! histograms should be built from model draws of the same size as the data
//! so the two sides face identical sampling noise.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::stats::chi_squared_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMode {
    /// arctan(dy/dx) in (-pi/2, pi/2]; dx = 0 maps to exactly pi/2.
    FoldedArctan,
    /// atan2(dy, dx) in (-pi, pi].
    FullCircle,
}

impl AngleMode {
    pub fn range(&self) -> (f64, f64) {
        match self {
            AngleMode::FoldedArctan => {
                (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
            }
            AngleMode::FullCircle => (-std::f64::consts::PI, std::f64::consts::PI),
        }
    }

    fn angle(&self, dx: f64, dy: f64) -> f64 {
        match self {
            AngleMode::FoldedArctan => {
                if dx == 0.0 {
                    std::f64::consts::FRAC_PI_2
                } else {
                    let a = (dy / dx).atan();
                    // Huge |dy/dx| rounds atan to exactly -pi/2; that is the
                    // same axis as +pi/2, which is the half the fold keeps.
                    if a == -std::f64::consts::FRAC_PI_2 {
                        std::f64::consts::FRAC_PI_2
                    } else {
                        a
                    }
                }
            }
            AngleMode::FullCircle => dy.atan2(dx),
        }
    }
}

/// Displacement angles of one landmark across a set of stacked-layout
/// vectors (x_0..x_{n-1}, y_0..y_{n-1}).
pub fn displacement_angles(
    vectors: &[DVector<f64>],
    landmark: usize,
    n_landmarks: usize,
    mode: AngleMode,
) -> Result<Vec<f64>> {
    if landmark >= n_landmarks {
        return Err(Error::precondition(format!(
            "landmark {landmark} out of range for {n_landmarks} landmarks"
        )));
    }
    vectors
        .iter()
        .map(|v| {
            if v.len() != 2 * n_landmarks {
                return Err(Error::schema("vector dimension does not match landmark count"));
            }
            Ok(mode.angle(v[landmark], v[n_landmarks + landmark]))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AngleHistogram {
    pub mode: AngleMode,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// counts / n; sums to 1.
    pub mass: Vec<f64>,
    pub n: usize,
}

impl AngleHistogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.bin_width()
    }
}

/// Bin angles over the mode's full range. Angles outside the range (possible
/// only through caller error) are rejected rather than clipped.
pub fn angle_histogram(angles: &[f64], bins: usize, mode: AngleMode) -> Result<AngleHistogram> {
    if bins == 0 {
        return Err(Error::precondition("histogram needs at least one bin"));
    }
    if angles.is_empty() {
        return Err(Error::precondition("histogram needs at least one angle"));
    }
    let (lo, hi) = mode.range();
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &phi in angles {
        if !(phi > lo && phi <= hi) {
            return Err(Error::precondition(format!(
                "angle {phi} outside ({lo}, {hi}]"
            )));
        }
        let k = (((phi - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = angles.len();
    let mass = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(AngleHistogram { mode, lo, hi, counts, mass, n })
}

/// Outcome of a chi-squared comparison at the 95% level.
#[derive(Debug, Clone)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub dof: usize,
    pub critical_95: f64,
    pub consistent_95: bool,
}

/// Test a histogram against the uniform distribution on its range.
pub fn chi_squared_uniformity(hist: &AngleHistogram) -> Result<ChiSquaredTest> {
    let bins = hist.counts.len();
    if bins < 2 {
        return Err(Error::precondition("uniformity test needs at least 2 bins"));
    }
    let expected = hist.n as f64 / bins as f64;
    let statistic = hist
        .counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = bins - 1;
    let critical_95 = chi_squared_quantile(0.95, dof)?;
    Ok(ChiSquaredTest { statistic, dof, critical_95, consistent_95: statistic <= critical_95 })
}

/// Two-sample chi-squared test between histograms with identical binning,
/// e.g. data angles against model-sample angles. Bins empty on both sides
/// are skipped and do not count toward the degrees of freedom.
pub fn chi_squared_two_sample(
    a: &AngleHistogram,
    b: &AngleHistogram,
) -> Result<ChiSquaredTest> {
    if a.mode != b.mode || a.counts.len() != b.counts.len() {
        return Err(Error::precondition("histograms must share mode and binning"));
    }
    let (na, nb) = (a.n as f64, b.n as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut statistic = 0.0;
    let mut used = 0usize;
    for (&ca, &cb) in a.counts.iter().zip(&b.counts) {
        if ca == 0 && cb == 0 {
            continue;
        }
        let d = ka * ca as f64 - kb * cb as f64;
        statistic += d * d / (ca + cb) as f64;
        used += 1;
    }
    if used < 2 {
        return Err(Error::precondition("fewer than 2 populated bins"));
    }
    let dof = used - 1;
    let critical_95 = chi_squared_quantile(0.95, dof)?;
    Ok(ChiSquaredTest { statistic, dof, critical_95, consistent_95: statistic <= critical_95 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn isotropic_vectors(n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    #[test]
    fn angle_conventions_match_their_definitions() {
        let v = |x: f64, y: f64| DVector::from_vec(vec![x, y]);
        let folded = displacement_angles(
            &[v(0.0, -2.0), v(-1.0, 1.0), v(1.0, 1.0)],
            0,
            1,
            AngleMode::FoldedArctan,
        )
        .unwrap();
        // Vertical displacement lands exactly on pi/2 even pointing down.
        assert_eq!(folded[0], std::f64::consts::FRAC_PI_2);
        assert!((folded[1] + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((folded[2] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);

        // A near-vertical displacement whose ratio rounds atan to the open
        // -pi/2 boundary folds onto +pi/2 instead of escaping the range.
        let grazing =
            displacement_angles(&[v(-1e-17, 0.2)], 0, 1, AngleMode::FoldedArctan).unwrap();
        assert_eq!(grazing[0], std::f64::consts::FRAC_PI_2);

        let full = displacement_angles(&[v(-1.0, 0.0)], 0, 1, AngleMode::FullCircle).unwrap();
        assert!((full[0] - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn histogram_mass_is_normalized() {
        let angles =
            displacement_angles(&isotropic_vectors(997, 3), 0, 1, AngleMode::FoldedArctan)
                .unwrap();
        let hist = angle_histogram(&angles, 13, AngleMode::FoldedArctan).unwrap();
        let total: f64 = hist.mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(hist.counts.iter().sum::<u64>(), 997);
    }

    #[test]
    fn isotropic_angles_pass_the_uniformity_test() {
        let angles =
            displacement_angles(&isotropic_vectors(6000, 17), 0, 1, AngleMode::FoldedArctan)
                .unwrap();
        let hist = angle_histogram(&angles, 12, AngleMode::FoldedArctan).unwrap();
        let test = chi_squared_uniformity(&hist).unwrap();
        assert!(test.consistent_95, "chi2 {} vs {}", test.statistic, test.critical_95);
        // Same property holds on the full circle.
        let angles =
            displacement_angles(&isotropic_vectors(6000, 18), 0, 1, AngleMode::FullCircle)
                .unwrap();
        let hist = angle_histogram(&angles, 12, AngleMode::FullCircle).unwrap();
        assert!(chi_squared_uniformity(&hist).unwrap().consistent_95);
    }

    #[test]
    fn anisotropy_peaks_the_histogram_at_zero() {
        // x-variance 100 times the y-variance concentrates angles near 0.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vectors: Vec<DVector<f64>> = (0..4000)
            .map(|_| {
                let x: f64 = rng.sample::<f64, _>(StandardNormal);
                let y: f64 = rng.sample::<f64, _>(StandardNormal);
                DVector::from_vec(vec![10.0 * x, y])
            })
            .collect();
        let angles =
            displacement_angles(&vectors, 0, 1, AngleMode::FoldedArctan).unwrap();
        let hist = angle_histogram(&angles, 15, AngleMode::FoldedArctan).unwrap();
        let peak = hist.mass.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(hist.bin_center(peak).abs() < hist.bin_width());
        let test = chi_squared_uniformity(&hist).unwrap();
        assert!(!test.consistent_95, "anisotropic angles must fail uniformity");
    }

    #[test]
    fn self_comparison_is_consistent_at_95_percent() {
        // Two independent draws from the same law should agree.
        let a = displacement_angles(&isotropic_vectors(3000, 31), 0, 1, AngleMode::FoldedArctan)
            .unwrap();
        let b = displacement_angles(&isotropic_vectors(3000, 32), 0, 1, AngleMode::FoldedArctan)
            .unwrap();
        let ha = angle_histogram(&a, 10, AngleMode::FoldedArctan).unwrap();
        let hb = angle_histogram(&b, 10, AngleMode::FoldedArctan).unwrap();
        let test = chi_squared_two_sample(&ha, &hb).unwrap();
        assert!(test.consistent_95, "chi2 {} vs {}", test.statistic, test.critical_95);

        // A shifted law must be distinguishable at the same level.
        let shifted: Vec<DVector<f64>> = isotropic_vectors(3000, 33)
            .into_iter()
            .map(|v| {
                let x = v[0];
                let y = v[1];
                DVector::from_vec(vec![4.0 * x, y])
            })
            .collect();
        let c = displacement_angles(&shifted, 0, 1, AngleMode::FoldedArctan).unwrap();
        let hc = angle_histogram(&c, 10, AngleMode::FoldedArctan).unwrap();
        assert!(!chi_squared_two_sample(&ha, &hc).unwrap().consistent_95);
    }

    #[test]
    fn mismatched_histograms_are_rejected() {
        let a = angle_histogram(&[0.1, 0.2], 4, AngleMode::FoldedArctan).unwrap();
        let b = angle_histogram(&[0.1, 0.2], 5, AngleMode::FoldedArctan).unwrap();
        assert!(chi_squared_two_sample(&a, &b).is_err());
        // Out-of-range angle for the folded convention.
        assert!(angle_histogram(&[2.0], 4, AngleMode::FoldedArctan).is_err());
    }
}
