//! Geometric interpretation of fitted couplings.
//!
//! Landmark pairs define segment axes; expressing the covariance in a frame
//! aligned with a pair's axis splits its effective interaction into a
//! longitudinal part (along the segment) and a torsion part (across it).
//! Each pair is a separate inference in its own rotated basis. Significance
//! is judged against subject-level bootstrap refits, which propagate the
//! full nonlinearity of the pseudo-inverse instead of assuming error bars
//! transform linearly.

pub mod angles;
pub mod studies;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{DisplacementVector, MomentStatistics};
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::linalg::pseudo_inverse;
use crate::stats::spearman;

pub use angles::{
    angle_histogram, chi_squared_two_sample, chi_squared_uniformity, displacement_angles,
    AngleHistogram, AngleMode, ChiSquaredTest,
};
pub use studies::{
    enumerate_pairwise_binary, leave_one_out_study, proportion_check, BinaryEnumeration,
    DeletedInverse, LeaveOneOut, ProportionReport, ProportionRow, SignPattern,
};

/// Geometry of one landmark pair, taken from mean positions.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    pub i: usize,
    pub j: usize,
    /// Segment length between mean positions, in facial-height units.
    pub mean_distance: f64,
    /// Segment angle folded into (-pi/2, pi/2]; a vertical segment gets
    /// exactly pi/2.
    pub angle: f64,
    /// Unit vector at `angle`.
    pub unit: [f64; 2],
}

/// Pair geometries for all distinct landmark pairs i < j. Coincident mean
/// positions leave the segment angle undefined; such pairs are skipped and
/// reported in the notes.
pub fn pair_geometries(positions: &[[f64; 2]]) -> (Vec<PairGeometry>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut notes = Vec::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let dx = positions[j][0] - positions[i][0];
            let dy = positions[j][1] - positions[i][1];
            let dist = dx.hypot(dy);
            if dist == 0.0 {
                notes.push(format!("pair ({i},{j}) skipped: coincident mean positions"));
                continue;
            }
            let angle = if dx == 0.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                (dy / dx).atan()
            };
            pairs.push(PairGeometry {
                i,
                j,
                mean_distance: dist,
                angle,
                unit: [angle.cos(), angle.sin()],
            });
        }
    }
    (pairs, notes)
}

/// Rotate a stacked-layout (x_0..x_{n-1}, y_0..y_{n-1}) covariance by
/// `theta`, applying the same 2D rotation to every landmark.
fn rotate_stacked(c: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let n = c.nrows() / 2;
    let (s, co) = theta.sin_cos();
    if s == 0.0 && co == 1.0 {
        return c.clone();
    }
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        r[(k, k)] = co;
        r[(k, n + k)] = -s;
        r[(n + k, k)] = s;
        r[(n + k, n + k)] = co;
    }
    &r * c * r.transpose()
}

/// Longitudinal and torsion couplings for every valid landmark pair.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub n_landmarks: usize,
    pub pairs: Vec<PairGeometry>,
    /// Entrywise |J| along each pair's axis; zero where undefined.
    pub j_par: DMatrix<f64>,
    pub j_perp: DMatrix<f64>,
    pub j_par_signed: DMatrix<f64>,
    pub j_perp_signed: DMatrix<f64>,
    /// Rotated raw-correlation analogue of the longitudinal entry.
    pub c_par: DMatrix<f64>,
    pub notes: Vec<String>,
}

fn coupling_entries(
    corr2: &DMatrix<f64>,
    pair: &PairGeometry,
    eigen_threshold: f64,
) -> Result<(f64, f64, f64)> {
    let n = corr2.nrows() / 2;
    let rotated = rotate_stacked(corr2, -pair.angle);
    let j = pseudo_inverse(&rotated, eigen_threshold)?.matrix;
    Ok((
        j[(pair.i, pair.j)],
        j[(n + pair.i, n + pair.j)],
        rotated[(pair.i, pair.j)],
    ))
}

/// For each pair (i,j): rotate the full correlation matrix so the segment
/// axis becomes the x-axis, pseudo-invert, and read the longitudinal
/// coupling from the xx block and the torsion coupling from the yy block.
pub fn longitudinal_torsion(
    stats: &MomentStatistics,
    positions: &[[f64; 2]],
    eigen_threshold: f64,
) -> Result<CouplingReport> {
    let dim = stats.corr2.nrows();
    if dim % 2 != 0 || dim / 2 != positions.len() {
        return Err(Error::precondition(format!(
            "statistics dimension {dim} does not match {} landmark positions",
            positions.len()
        )));
    }
    let n = positions.len();
    let (pairs, notes) = pair_geometries(positions);
    let entries: Result<Vec<(f64, f64, f64)>> = pairs
        .par_iter()
        .map(|p| coupling_entries(&stats.corr2, p, eigen_threshold))
        .collect();
    let entries = entries?;
    let mut j_par_signed = DMatrix::zeros(n, n);
    let mut j_perp_signed = DMatrix::zeros(n, n);
    let mut c_par = DMatrix::zeros(n, n);
    for (p, &(par, perp, c)) in pairs.iter().zip(&entries) {
        j_par_signed[(p.i, p.j)] = par;
        j_par_signed[(p.j, p.i)] = par;
        j_perp_signed[(p.i, p.j)] = perp;
        j_perp_signed[(p.j, p.i)] = perp;
        c_par[(p.i, p.j)] = c;
        c_par[(p.j, p.i)] = c;
    }
    Ok(CouplingReport {
        n_landmarks: n,
        pairs,
        j_par: j_par_signed.abs(),
        j_perp: j_perp_signed.abs(),
        j_par_signed,
        j_perp_signed,
        c_par,
        notes,
    })
}

/// Elastic-constant reading of a coupling matrix: k_ij = -J_ij / 2, so an
/// attractive (negative) coupling maps to a positive spring constant.
pub fn elastic_constants(j_signed: &DMatrix<f64>) -> DMatrix<f64> {
    j_signed * -0.5
}

// ---------------------------------------------------------------------------
// Significance

/// t statistics for a matrix of estimates against bootstrap errors.
#[derive(Debug, Clone)]
pub struct TValues {
    pub t: DMatrix<f64>,
    /// Upper-triangle entries with t strictly above 1.
    pub significant: Vec<(usize, usize)>,
    /// Entries where sigma vanished but the estimate did not.
    pub infinite: Vec<(usize, usize)>,
}

pub fn t_values(estimate: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<TValues> {
    if estimate.shape() != sigma.shape() {
        return Err(Error::precondition("estimate and sigma shapes disagree"));
    }
    if sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::precondition("sigma entries must be finite and non-negative"));
    }
    let (rows, cols) = estimate.shape();
    let mut t = DMatrix::zeros(rows, cols);
    let mut infinite = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let a = estimate[(r, c)].abs();
            let s = sigma[(r, c)];
            t[(r, c)] = if s > 0.0 {
                a / s
            } else if a > 0.0 {
                infinite.push((r, c));
                f64::INFINITY
            } else {
                0.0
            };
        }
    }
    let mut significant = Vec::new();
    for r in 0..rows {
        for c in (r + 1)..cols {
            if t[(r, c)] > 1.0 {
                significant.push((r, c));
            }
        }
    }
    Ok(TValues { t, significant, infinite })
}

// ---------------------------------------------------------------------------
// Bootstrap refits

/// Subject-level bootstrap: each replicate resamples subjects with
/// replacement and takes one random vector per drawn subject, then
/// recomputes the centered second moment from scratch.
fn bootstrap_corr2_replicates(
    vectors: &[DisplacementVector],
    n_replicates: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let mut groups: BTreeMap<u32, Vec<&DisplacementVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry(v.subject).or_default().push(v);
    }
    let subjects: Vec<&Vec<&DisplacementVector>> = groups.values().collect();
    if subjects.len() < 2 {
        return Err(Error::precondition("bootstrap needs at least 2 subjects"));
    }
    if n_replicates < 2 {
        return Err(Error::precondition("bootstrap needs at least 2 replicates"));
    }
    let dim = vectors[0].values.len();
    Ok((0..n_replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let draws: Vec<&DisplacementVector> = (0..subjects.len())
                .map(|_| {
                    let g = subjects[rng.gen_range(0..subjects.len())];
                    g[rng.gen_range(0..g.len())]
                })
                .collect();
            let mut mean = DVector::zeros(dim);
            for v in &draws {
                mean += &v.values;
            }
            mean /= draws.len() as f64;
            let mut m = DMatrix::zeros(dim, dim);
            for v in &draws {
                let d = &v.values - &mean;
                m.ger(1.0, &d, &d, 1.0);
            }
            m / draws.len() as f64
        })
        .collect())
}

fn entrywise_std(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats.len() as f64;
    let (rows, cols) = mats[0].shape();
    let mut mean = DMatrix::zeros(rows, cols);
    for m in mats {
        mean += m;
    }
    mean /= n;
    let mut var = DMatrix::zeros(rows, cols);
    for m in mats {
        let d = m - &mean;
        var += d.component_mul(&d);
    }
    (var / n).map(f64::sqrt)
}

/// Bootstrap standard errors of the longitudinal and torsion couplings,
/// obtained by refitting the full rotated pseudo-inverse on every replicate.
#[derive(Debug, Clone)]
pub struct CouplingSigma {
    pub sigma_par: DMatrix<f64>,
    pub sigma_perp: DMatrix<f64>,
    pub n_replicates: usize,
}

pub fn bootstrap_couplings(
    vectors: &[DisplacementVector],
    positions: &[[f64; 2]],
    eigen_threshold: f64,
    n_replicates: usize,
    seed: u64,
) -> Result<CouplingSigma> {
    let n = positions.len();
    if vectors.is_empty() || vectors[0].values.len() != 2 * n {
        return Err(Error::precondition("vector dimension does not match landmark count"));
    }
    let (pairs, _) = pair_geometries(positions);
    let replicates = bootstrap_corr2_replicates(vectors, n_replicates, seed)?;
    let per_replicate: Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> = replicates
        .par_iter()
        .map(|corr2| {
            let mut par = DMatrix::zeros(n, n);
            let mut perp = DMatrix::zeros(n, n);
            for p in &pairs {
                let (a, b, _) = coupling_entries(corr2, p, eigen_threshold)?;
                par[(p.i, p.j)] = a;
                par[(p.j, p.i)] = a;
                perp[(p.i, p.j)] = b;
                perp[(p.j, p.i)] = b;
            }
            Ok((par, perp))
        })
        .collect();
    let per_replicate = per_replicate?;
    let pars: Vec<DMatrix<f64>> = per_replicate.iter().map(|(a, _)| a.clone()).collect();
    let perps: Vec<DMatrix<f64>> = per_replicate.iter().map(|(_, b)| b.clone()).collect();
    Ok(CouplingSigma {
        sigma_par: entrywise_std(&pars),
        sigma_perp: entrywise_std(&perps),
        n_replicates,
    })
}

/// Bootstrap standard errors of the plain (unrotated) pseudo-inverse.
pub fn bootstrap_pseudo_inverse_sigma(
    vectors: &[DisplacementVector],
    eigen_threshold: f64,
    n_replicates: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let replicates = bootstrap_corr2_replicates(vectors, n_replicates, seed)?;
    let inverses: Result<Vec<DMatrix<f64>>> = replicates
        .par_iter()
        .map(|c| Ok(pseudo_inverse(c, eigen_threshold)?.matrix))
        .collect();
    Ok(entrywise_std(&inverses?))
}

// ---------------------------------------------------------------------------
// C-vs-J block comparison

/// Side-by-side xx/xy/yy blocks of the raw correlations and the fitted
/// couplings, with t > 1 significance masks and discrepancy counts.
#[derive(Debug, Clone)]
pub struct BlockComparison {
    pub c_xx: DMatrix<f64>,
    pub c_xy: DMatrix<f64>,
    pub c_yy: DMatrix<f64>,
    pub j_xx: DMatrix<f64>,
    pub j_xy: DMatrix<f64>,
    pub j_yy: DMatrix<f64>,
    pub c_mask: DMatrix<bool>,
    pub j_mask: DMatrix<bool>,
    /// Off-diagonal entries significant in C but not in J.
    pub c_only: usize,
    /// Off-diagonal entries significant in J but not in C.
    pub j_only: usize,
}

pub fn compare_c_vs_j(
    stats: &MomentStatistics,
    model: &GaussianModel,
    sigma_j: &DMatrix<f64>,
) -> Result<BlockComparison> {
    let dim = stats.corr2.nrows();
    if dim % 2 != 0 {
        return Err(Error::precondition("block comparison needs the stacked x/y layout"));
    }
    if model.j.nrows() != dim || sigma_j.shape() != (dim, dim) {
        return Err(Error::precondition("model and sigma shapes must match the statistics"));
    }
    let n = dim / 2;
    let c_mask = {
        let mut m = DMatrix::from_element(dim, dim, false);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = stats.corr2[(r, c)].abs() > stats.sigma_corr2[(r, c)];
            }
        }
        m
    };
    let j_mask = {
        let mut m = DMatrix::from_element(dim, dim, false);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = model.j[(r, c)].abs() > sigma_j[(r, c)];
            }
        }
        m
    };
    let mut c_only = 0;
    let mut j_only = 0;
    for r in 0..dim {
        for c in 0..dim {
            if r == c {
                continue;
            }
            match (c_mask[(r, c)], j_mask[(r, c)]) {
                (true, false) => c_only += 1,
                (false, true) => j_only += 1,
                _ => {}
            }
        }
    }
    let block = |m: &DMatrix<f64>, ri: usize, ci: usize| m.view((ri, ci), (n, n)).into_owned();
    Ok(BlockComparison {
        c_xx: block(&stats.corr2, 0, 0),
        c_xy: block(&stats.corr2, 0, n),
        c_yy: block(&stats.corr2, n, n),
        j_xx: block(&model.j, 0, 0),
        j_xy: block(&model.j, 0, n),
        j_yy: block(&model.j, n, n),
        c_mask,
        j_mask,
        c_only,
        j_only,
    })
}

// ---------------------------------------------------------------------------
// Trends

#[derive(Debug, Clone)]
pub struct TrendRow {
    pub i: usize,
    pub j: usize,
    pub mean_distance: f64,
    pub angle: f64,
    pub j_par_abs: f64,
    pub j_par_signed: f64,
    pub t_par: f64,
    pub j_perp_abs: f64,
    pub j_perp_signed: f64,
    pub t_perp: f64,
}

/// Couplings tabulated against pair geometry, restricted to pairs that are
/// significant in at least one channel, with rank-correlation summaries per
/// channel (computed over that channel's significant pairs).
#[derive(Debug, Clone)]
pub struct TrendTable {
    pub rows: Vec<TrendRow>,
    pub spearman_par_distance: Option<f64>,
    pub spearman_par_angle: Option<f64>,
    pub spearman_perp_distance: Option<f64>,
    pub spearman_perp_angle: Option<f64>,
    pub notes: Vec<String>,
}

pub fn trend_export(report: &CouplingReport, t_par: &TValues, t_perp: &TValues) -> TrendTable {
    let mut rows = Vec::new();
    for p in &report.pairs {
        let tp = t_par.t[(p.i, p.j)];
        let tq = t_perp.t[(p.i, p.j)];
        if tp > 1.0 || tq > 1.0 {
            rows.push(TrendRow {
                i: p.i,
                j: p.j,
                mean_distance: p.mean_distance,
                angle: p.angle,
                j_par_abs: report.j_par[(p.i, p.j)],
                j_par_signed: report.j_par_signed[(p.i, p.j)],
                t_par: tp,
                j_perp_abs: report.j_perp[(p.i, p.j)],
                j_perp_signed: report.j_perp_signed[(p.i, p.j)],
                t_perp: tq,
            });
        }
    }
    let mut notes = Vec::new();
    if rows.is_empty() {
        notes.push("no pair is significant in either channel".into());
    }
    let rank = |keep: &dyn Fn(&TrendRow) -> bool,
                x: &dyn Fn(&TrendRow) -> f64,
                y: &dyn Fn(&TrendRow) -> f64,
                notes: &mut Vec<String>,
                label: &str| {
        let xs: Vec<f64> = rows.iter().filter(|r| keep(r)).map(|r| x(r)).collect();
        let ys: Vec<f64> = rows.iter().filter(|r| keep(r)).map(|r| y(r)).collect();
        match spearman(&xs, &ys) {
            Ok(rho) => Some(rho),
            Err(e) => {
                notes.push(format!("{label}: {e}"));
                None
            }
        }
    };
    let par = |r: &TrendRow| r.t_par > 1.0;
    let perp = |r: &TrendRow| r.t_perp > 1.0;
    let spearman_par_distance =
        rank(&par, &|r| r.mean_distance, &|r| r.j_par_abs, &mut notes, "J-par vs distance");
    let spearman_par_angle =
        rank(&par, &|r| r.angle, &|r| r.j_par_abs, &mut notes, "J-par vs angle");
    let spearman_perp_distance =
        rank(&perp, &|r| r.mean_distance, &|r| r.j_perp_abs, &mut notes, "J-perp vs distance");
    let spearman_perp_angle =
        rank(&perp, &|r| r.angle, &|r| r.j_perp_abs, &mut notes, "J-perp vs angle");
    TrendTable {
        rows,
        spearman_par_distance,
        spearman_par_angle,
        spearman_perp_distance,
        spearman_perp_angle,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_bare_moments, BareMomentConfig, MomentFlavor};
    use rand_distr::StandardNormal;

    fn stats_from_corr2(corr2: DMatrix<f64>) -> MomentStatistics {
        let dim = corr2.nrows();
        MomentStatistics {
            flavor: MomentFlavor::Bare,
            sample_count: 1000,
            n_subjects: 1,
            n_realizations: 0,
            mean: DVector::zeros(dim),
            corr2,
            sigma_corr2: DMatrix::zeros(dim, dim),
            corr3: None,
        }
    }

    /// Spring of stiffness `k` between landmarks `a` and `b` along their
    /// axis, plus isotropic pinning, as a stacked-coordinate precision
    /// matrix.
    fn spring_precision(
        positions: &[[f64; 2]],
        a: usize,
        b: usize,
        k: f64,
        pin: f64,
    ) -> DMatrix<f64> {
        let n = positions.len();
        let dx = positions[b][0] - positions[a][0];
        let dy = positions[b][1] - positions[a][1];
        let len = dx.hypot(dy);
        let (ex, ey) = (dx / len, dy / len);
        let mut u = DVector::zeros(2 * n);
        u[a] = -ex;
        u[b] = ex;
        u[n + a] = -ey;
        u[n + b] = ey;
        let mut j = DMatrix::identity(2 * n, 2 * n) * pin;
        j.ger(k, &u, &u, 1.0);
        j
    }

    #[test]
    fn horizontal_pair_reads_the_plain_xx_entry() {
        // Two landmarks on a horizontal line: zero rotation, so the
        // longitudinal coupling must equal the plain pseudo-inverse entry.
        let positions = [[0.0, 0.0], [0.7, 0.0]];
        let j_true = spring_precision(&positions, 0, 1, 2.5, 1.0);
        let corr2 = j_true.clone().try_inverse().unwrap();
        let stats = stats_from_corr2(corr2.clone());
        let report = longitudinal_torsion(&stats, &positions, 1e-10).unwrap();
        let plain = pseudo_inverse(&corr2, 1e-10).unwrap().matrix;
        assert!((report.j_par_signed[(0, 1)] - plain[(0, 1)]).abs() < 1e-12);
        assert!((report.j_perp_signed[(0, 1)] - plain[(2, 3)]).abs() < 1e-12);
        assert_eq!(report.pairs.len(), 1);
        assert_eq!(report.pairs[0].angle, 0.0);
    }

    #[test]
    fn rotation_invariant_covariance_gives_equal_channels() {
        // xx and yy blocks equal, xy zero: the covariance commutes with
        // every per-landmark rotation, so both channels must agree exactly.
        let positions = [[0.0, 0.0], [0.4, 0.3], [-0.2, 0.5]];
        let n = positions.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            let dx: f64 = positions[i][0] - positions[j][0];
            let dy: f64 = positions[i][1] - positions[j][1];
            (-(dx.hypot(dy)) / 0.5).exp()
        });
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&k);
        c.view_mut((n, n), (n, n)).copy_from(&k);
        let report = longitudinal_torsion(&stats_from_corr2(c), &positions, 1e-10).unwrap();
        let gap = (&report.j_par_signed - &report.j_perp_signed).abs().max();
        assert!(gap < 1e-9, "channel gap {gap}");
    }

    #[test]
    fn planted_spring_shows_up_longitudinally() {
        let positions = [[0.0, 0.0], [1.0, 0.5], [-0.3, 0.8]];
        let k = 4.0;
        let j_true = spring_precision(&positions, 0, 1, k, 1.0);
        let corr2 = j_true.try_inverse().unwrap();
        let report =
            longitudinal_torsion(&stats_from_corr2(corr2), &positions, 1e-10).unwrap();
        // In the pair's own frame the spring acts purely along x.
        assert!((report.j_par_signed[(0, 1)] + k).abs() < 1e-8);
        assert!(report.j_perp[(0, 1)] < 1e-10);
        for p in &report.pairs {
            if (p.i, p.j) != (0, 1) {
                assert!(report.j_par[(p.i, p.j)] < report.j_par[(0, 1)] / 10.0);
            }
        }
        // Attractive coupling reads as a positive elastic constant.
        let elastic = elastic_constants(&report.j_par_signed);
        assert!((elastic[(0, 1)] - k / 2.0).abs() < 1e-8);
    }

    #[test]
    fn t_values_handle_edges() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let all_one = t_values(&a, &a.abs()).unwrap();
        assert!(all_one.significant.is_empty());
        assert!((all_one.t[(0, 1)] - 1.0).abs() < 1e-15);

        let zero_sigma = DMatrix::zeros(2, 2);
        let flagged = t_values(&a, &zero_sigma).unwrap();
        assert_eq!(flagged.infinite, vec![(0, 1), (1, 0)]);
        assert!(flagged.t[(0, 1)].is_infinite());
        assert_eq!(flagged.t[(0, 0)], 0.0);

        assert!(t_values(&a, &DMatrix::zeros(3, 3)).is_err());
    }

    fn sample_cohort(
        j_true: &DMatrix<f64>,
        n_subjects: usize,
        per_subject: usize,
        seed: u64,
    ) -> Vec<DisplacementVector> {
        let c = j_true.clone().try_inverse().unwrap();
        let chol = nalgebra::Cholesky::new(c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = j_true.nrows();
        let mut out = Vec::new();
        for s in 0..n_subjects {
            for k in 0..per_subject {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                out.push(DisplacementVector {
                    subject: s as u32,
                    within_index: k as u32,
                    values: chol.l() * z,
                });
            }
        }
        out
    }

    #[test]
    fn bootstrap_t_flags_the_planted_coupling() {
        let positions = [[0.0, 0.0], [1.0, 0.5], [-0.3, 0.8]];
        let j_true = spring_precision(&positions, 0, 1, 4.0, 1.0);
        let vectors = sample_cohort(&j_true, 40, 30, 8);
        let stats = compute_bare_moments(
            &vectors,
            &BareMomentConfig { order: 2, n_bootstrap: 0, seed: 0 },
        )
        .unwrap();
        let report = longitudinal_torsion(&stats, &positions, 1e-10).unwrap();
        let sigma = bootstrap_couplings(&vectors, &positions, 1e-10, 200, 3).unwrap();
        let t = t_values(&report.j_par_signed, &sigma.sigma_par).unwrap();
        assert!(t.t[(0, 1)] > 2.0, "planted coupling t = {}", t.t[(0, 1)]);
        let max_other = [(0usize, 2usize), (1, 2)]
            .iter()
            .map(|&(i, j)| t.t[(i, j)])
            .fold(0.0f64, f64::max);
        assert!(t.t[(0, 1)] > max_other, "planted pair should dominate");
    }

    #[test]
    fn bootstrap_sigma_shrinks_with_subjects() {
        let positions = [[0.0, 0.0], [1.0, 0.5], [-0.3, 0.8]];
        let j_true = spring_precision(&positions, 0, 1, 4.0, 1.0);
        let small = sample_cohort(&j_true, 40, 10, 11);
        let large = sample_cohort(&j_true, 160, 10, 12);
        let s_small = bootstrap_couplings(&small, &positions, 1e-10, 300, 5).unwrap();
        let s_large = bootstrap_couplings(&large, &positions, 1e-10, 300, 5).unwrap();
        // Four times the subjects should roughly halve the error bar.
        let ratio = s_large.sigma_par[(0, 1)] / s_small.sigma_par[(0, 1)];
        assert!(ratio < 0.75, "sigma ratio {ratio}");
    }

    #[test]
    fn c_vs_j_comparison_counts_discrepancies() {
        use crate::dataset::{detect_null_modes, DEFAULT_NULL_THRESHOLD};
        use crate::gaussian::{fit_gaussian, GaussianFitConfig};

        // Nearest-neighbor chain couplings: J sparse, C dense.
        let n = 4;
        let dim = 2 * n;
        let mut j_true = DMatrix::identity(dim, dim) * 3.0;
        for i in 0..(n - 1) {
            for &(a, b) in &[(i, i + 1), (n + i, n + i + 1)] {
                j_true[(a, b)] = -1.0;
                j_true[(b, a)] = -1.0;
            }
        }
        let vectors = sample_cohort(&j_true, 60, 40, 21);
        let stats = compute_bare_moments(
            &vectors,
            &BareMomentConfig { order: 2, n_bootstrap: 400, seed: 2 },
        )
        .unwrap();
        let cs = detect_null_modes(&stats, DEFAULT_NULL_THRESHOLD).unwrap();
        let model = fit_gaussian(&stats, &cs, &GaussianFitConfig::default()).unwrap();
        let sigma_j = bootstrap_pseudo_inverse_sigma(&vectors, 1e-8, 400, 4).unwrap();
        let cmp = compare_c_vs_j(&stats, &model, &sigma_j).unwrap();
        // Chain correlations propagate beyond nearest neighbors, so C picks
        // up significant entries that J does not have.
        assert!(cmp.c_only > 0, "expected C-only significant entries");
        assert!(cmp.c_mask[(0, 1)] && cmp.j_mask[(0, 1)], "chain link significant in both");
        assert_eq!(cmp.c_xx.nrows(), n);
    }

    #[test]
    fn trends_recover_planted_distance_decay() {
        // Landmarks on a line, couplings decaying with distance.
        let positions = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let n = positions.len();
        let dim = 2 * n;
        let mut j_true = DMatrix::identity(dim, dim) * 4.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = positions[j][0] - positions[i][0];
                let c = -1.5 / d;
                j_true[(i, j)] = c;
                j_true[(j, i)] = c;
                j_true[(n + i, n + j)] = c;
                j_true[(n + j, n + i)] = c;
            }
        }
        let corr2 = j_true.try_inverse().unwrap();
        let report =
            longitudinal_torsion(&stats_from_corr2(corr2), &positions, 1e-10).unwrap();
        // Tight artificial errors make every pair significant.
        let sigma = report.j_par.map(|v| (v + 1e-6) / 10.0);
        let t_par = t_values(&report.j_par_signed, &sigma).unwrap();
        let t_perp = t_values(&report.j_perp_signed, &sigma).unwrap();
        let table = trend_export(&report, &t_par, &t_perp);
        assert_eq!(table.rows.len(), 3);
        let rho = table.spearman_par_distance.unwrap();
        assert!(rho < -0.9, "expected decreasing trend, got {rho}");

        // With huge errors nothing is significant and the table says so.
        let huge = DMatrix::from_element(n, n, 1e9);
        let t0 = t_values(&report.j_par_signed, &huge).unwrap();
        let empty = trend_export(&report, &t0, &t0);
        assert!(empty.rows.is_empty());
        assert!(!empty.notes.is_empty());
    }

    #[test]
    fn coincident_landmarks_are_skipped_with_a_note() {
        let positions = [[0.1, 0.2], [0.1, 0.2], [0.5, 0.5]];
        let (pairs, notes) = pair_geometries(&positions);
        assert_eq!(pairs.len(), 2);
        assert_eq!(notes.len(), 1);
        assert!(notes[0].contains("(0,1)"));
        // Vertical pair folds to exactly pi/2.
        let vertical = [[0.0, 0.0], [0.0, 1.0]];
        let (pairs, _) = pair_geometries(&vertical);
        assert_eq!(pairs[0].angle, std::f64::consts::FRAC_PI_2);
        let norm = pairs[0].unit[0].hypot(pairs[0].unit[1]);
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
