//! Small statistical helpers used across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by n).
pub fn std_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Upper quantile of the chi-squared distribution with `dof` degrees of
/// freedom, e.g. `p = 0.95` for the 95% acceptance cut.
pub fn chi_squared_quantile(p: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::precondition("chi-squared quantile needs dof >= 1"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::precondition(format!("quantile level {p} outside (0, 1)")));
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::numerical(format!("chi-squared setup: {e}")))?;
    Ok(dist.inverse_cdf(p))
}

/// Midranks: average rank (1-based) assigned to tied values.
fn midranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("rankable values"));
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut k2 = k;
        while k2 + 1 < n && xs[order[k2 + 1]] == xs[order[k]] {
            k2 += 1;
        }
        let avg = (k + k2) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=k2] {
            ranks[idx] = avg;
        }
        k = k2 + 1;
    }
    ranks
}

/// Spearman rank correlation with midrank tie handling.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::precondition("spearman: length mismatch"));
    }
    if xs.len() < 3 {
        return Err(Error::precondition("spearman: need at least 3 points"));
    }
    let rx = midranks(xs);
    let ry = midranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::numerical("spearman: a rank vector is constant"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Welch two-sample t statistic (unequal variances).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::precondition("welch_t: need at least 2 samples per group"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / (a.len() - 1) as f64;
    let vb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / (b.len() - 1) as f64;
    let denom = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::numerical("welch_t: zero pooled variance"));
    }
    Ok((ma - mb) / denom)
}
